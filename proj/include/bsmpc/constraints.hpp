#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "bsmpc/core.hpp"
#include "bsmpc/math_util.hpp"
#include "bsmpc/prediction.hpp"

namespace bsmpc {

struct ConstraintConfig {
  double phi = 0.5;            // beta = mu^phi
  double quantile = 0.9545;    // two-sided Gaussian mass for rectangle extents
  double slack_weight = 1e4;   // exact-penalty weight on constraint slack
  double slack_max = 10.0;     // hard slack bound
  double beta_cap = 1.0 - 1e-6;
  double mu_exclude = 1e-3;    // GMM components below this are ignored
  double cov_reg = 1e-9;
};

/// Confidence adaptation: more probable modes demand stronger guarantees.
inline double confidence_level(double mu, double phi) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("confidence_level: mu not in [0,1]");
  if (!(phi > 0.0 && phi <= 1.0))
    throw std::invalid_argument("confidence_level: phi not in (0,1]");
  return std::pow(mu, phi);
}

/// Inflated confidence ellipse. The constraint value is the signed quadratic
/// q = 1 - (z-c)' M (z-c): q <= 0 iff z is outside (or on) the ellipse.
struct ConfidenceEllipse {
  Vec2 center = Vec2::Zero();
  Mat2 M = Mat2::Identity();
  double semi_major = 0.0;  // inflated
  double semi_minor = 0.0;
  Vec2 axis_major = Vec2::UnitX();
};

/// beta-level set of the Gaussian position prediction at step k, with each
/// semi-axis extended by the combined ego+SV footprint support along the
/// axis direction.
inline ConfidenceEllipse build_ellipse(const PredictionMode& mode, int k, double beta,
                                       const VehicleParams& ego, const VehicleParams& sv,
                                       double cov_reg = 1e-9) {
  if (!(beta > 0.0)) throw std::invalid_argument("build_ellipse: beta must be positive");
  if (beta >= 1.0)
    throw std::invalid_argument("build_ellipse: beta = 1 gives an unbounded quantile; cap it");
  const Mat2 S = mode.cov.at(k) + cov_reg * Mat2::Identity();
  Eigen::SelfAdjointEigenSolver<Mat2> eig(S);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("build_ellipse: covariance not PD");

  const double r2 = chi2_quantile_2d(beta);
  ConfidenceEllipse out;
  out.center = mode.pos(k);

  Vec2 semi;
  Mat2 axes = eig.eigenvectors();  // columns, ascending eigenvalues
  for (int i = 0; i < 2; ++i) {
    const Vec2 u = axes.col(i);
    const double support = (ego.half_length() + sv.half_length()) * std::abs(u(0)) +
                           (ego.half_width() + sv.half_width()) * std::abs(u(1));
    semi(i) = std::sqrt(r2 * eig.eigenvalues()(i)) + support;
  }
  out.M = axes * Vec2(1.0 / (semi(0) * semi(0)), 1.0 / (semi(1) * semi(1))).asDiagonal() *
          axes.transpose();
  out.semi_minor = std::min(semi(0), semi(1));
  out.semi_major = std::max(semi(0), semi(1));
  out.axis_major = semi(1) >= semi(0) ? Vec2(axes.col(1)) : Vec2(axes.col(0));
  return out;
}

inline double ellipse_constraint_value(const ConfidenceEllipse& e, const Vec2& z) {
  const Vec2 d = z - e.center;
  return 1.0 - d.dot(e.M * d);
}

inline Vec2 ellipse_constraint_gradient(const ConfidenceEllipse& e, const Vec2& z) {
  return -2.0 * (e.M * (z - e.center));
}

enum class ActiveSide { Rear, Front, Right, Left };

/// Axis-aligned occupancy rectangle with one active linear boundary.
/// The linear constraint normal'z + offset <= 0 keeps the ego outside the
/// rectangle on the active side.
struct RectOccupancy {
  double s_min = 0.0, s_max = 0.0;
  double d_min = 0.0, d_max = 0.0;
  ActiveSide side = ActiveSide::Rear;
  Vec2 normal = Vec2::UnitX();
  double offset = 0.0;

  double value(const Vec2& z) const { return normal.dot(z) + offset; }
  bool contains(const Vec2& z) const {
    return z(0) > s_min && z(0) < s_max && z(1) > d_min && z(1) < d_max;
  }
};

/// Quantile box of the SV's GMM position marginal at step k: per-mode boxes
/// at the per-axis Gaussian quantile (modes below mu_exclude skipped),
/// unioned and inflated by the combined footprints. The active boundary
/// follows the ego's planned maneuver: same-lane following keeps the ego
/// behind (or ahead of) the rectangle, adjacent-lane passing bounds it
/// laterally.
inline RectOccupancy rect_occupancy(const MultiModalPrediction& pred, int k, double quantile,
                                    const Maneuver& ego_maneuver, const Road& road,
                                    const Vec2& ego_position, const VehicleParams& ego,
                                    const VehicleParams& sv, double mu_exclude = 1e-3) {
  if (!(quantile > 0.0 && quantile < 1.0))
    throw std::invalid_argument("rect_occupancy: quantile must be in (0,1)");
  const double zq = normal_quantile(0.5 * (1.0 + quantile));

  RectOccupancy box;
  bool first = true;
  for (const auto& m : pred.modes) {
    if (m.mu < mu_exclude && pred.modes.size() > 1) continue;
    const Vec2 c = m.pos(k);
    const Mat2& S = m.cov.at(k);
    const double hs = zq * std::sqrt(std::max(0.0, S(0, 0)));
    const double hd = zq * std::sqrt(std::max(0.0, S(1, 1)));
    if (first) {
      box.s_min = c(0) - hs;
      box.s_max = c(0) + hs;
      box.d_min = c(1) - hd;
      box.d_max = c(1) + hd;
      first = false;
    } else {
      box.s_min = std::min(box.s_min, c(0) - hs);
      box.s_max = std::max(box.s_max, c(0) + hs);
      box.d_min = std::min(box.d_min, c(1) - hd);
      box.d_max = std::max(box.d_max, c(1) + hd);
    }
  }
  if (first) throw std::invalid_argument("rect_occupancy: no mode above the exclusion floor");

  box.s_min -= ego.half_length() + sv.half_length();
  box.s_max += ego.half_length() + sv.half_length();
  box.d_min -= ego.half_width() + sv.half_width();
  box.d_max += ego.half_width() + sv.half_width();

  const double ego_target_d = road.lane(ego_maneuver.lane).center_y + ego_maneuver.d_ref;
  if (ego_target_d > box.d_max) {
    box.side = ActiveSide::Left;  // pass on the left: d >= d_max
    box.normal = Vec2(0.0, -1.0);
    box.offset = box.d_max;
  } else if (ego_target_d < box.d_min) {
    box.side = ActiveSide::Right;  // pass on the right: d <= d_min
    box.normal = Vec2(0.0, 1.0);
    box.offset = -box.d_min;
  } else if (ego_position(0) <= 0.5 * (box.s_min + box.s_max)) {
    box.side = ActiveSide::Rear;  // follow: s <= s_min
    box.normal = Vec2(1.0, 0.0);
    box.offset = -box.s_min;
  } else {
    box.side = ActiveSide::Front;  // lead: s >= s_max
    box.normal = Vec2(-1.0, 0.0);
    box.offset = box.s_max;
  }
  return box;
}

}  // namespace bsmpc
