#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "bsmpc/constraints.hpp"
#include "oracles.hpp"

using namespace bsmpc;

namespace {

PredictionMode point_mode(const Vec2& pos, const Mat2& cov, double mu = 1.0, int n = 2) {
  PredictionMode m;
  m.mu = mu;
  for (int k = 0; k < n; ++k) {
    PointMassState x;
    x.s = pos(0);
    x.d = pos(1);
    m.states.push_back(x);
    m.cov.push_back(cov);
  }
  return m;
}

const VehicleParams kVp;  // 4.5 x 1.8

double lon_inflation() { return 2.0 * kVp.half_length(); }
double lat_inflation() { return 2.0 * kVp.half_width(); }

}  // namespace

TEST_CASE("confidence level") {
  CHECK(confidence_level(1.0, 0.3) == doctest::Approx(1.0));
  CHECK(confidence_level(0.37, 1.0) == doctest::Approx(0.37));
  CHECK(confidence_level(0.25, 0.5) == doctest::Approx(0.5));
  CHECK_THROWS_AS(confidence_level(1.5, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(confidence_level(0.5, 0.0), std::invalid_argument);
  // monotone in mu
  for (double phi : {0.3, 0.7, 1.0})
    for (double mu = 0.05; mu < 0.949; mu += 0.05)
      CHECK(confidence_level(mu + 0.05, phi) > confidence_level(mu, phi));
}

TEST_CASE("chi-square(2) quantile against a series oracle") {
  for (double beta : {0.5, 0.8, 0.9, 0.95, 0.99}) {
    CHECK(chi2_quantile_2d(beta) ==
          doctest::Approx(oracle::chi2_quantile_2d_bisect(beta)).epsilon(1e-9));
  }
  CHECK(chi2_quantile_2d(0.95) == doctest::Approx(5.991464547).epsilon(1e-8));
}

TEST_CASE("ellipse geometry") {
  SUBCASE("identity covariance, beta=0.95: semi-axes sqrt(5.991) + inflation") {
    const auto m = point_mode(Vec2(10, 0), Mat2::Identity());
    const auto e = build_ellipse(m, 1, 0.95, kVp, kVp);
    const double expect_lat = std::sqrt(5.991464547) + lat_inflation();
    const double expect_lon = std::sqrt(5.991464547) + lon_inflation();
    CHECK(e.semi_minor == doctest::Approx(expect_lat).epsilon(1e-6));
    CHECK(e.semi_major == doctest::Approx(expect_lon).epsilon(1e-6));
  }

  SUBCASE("beta -> 0 shrinks toward the footprint-inflated point") {
    const auto m = point_mode(Vec2(0, 0), 0.04 * Mat2::Identity());
    const auto e = build_ellipse(m, 1, 1e-12, kVp, kVp);
    CHECK(e.semi_major == doctest::Approx(lon_inflation()).epsilon(1e-4));
    CHECK(e.semi_minor == doctest::Approx(lat_inflation()).epsilon(1e-4));
  }

  SUBCASE("diag(4,1): major axis along x, pre-inflation ratio 2") {
    Mat2 S = Mat2::Zero();
    S(0, 0) = 4.0;
    S(1, 1) = 1.0;
    const auto m = point_mode(Vec2(0, 0), S);
    const auto e = build_ellipse(m, 1, 0.9, kVp, kVp);
    CHECK(std::abs(e.axis_major(0)) == doctest::Approx(1.0));
    const double r = std::sqrt(chi2_quantile_2d(0.9));
    CHECK((e.semi_major - lon_inflation()) / (e.semi_minor - lat_inflation()) ==
          doctest::Approx(2.0).epsilon(1e-9));
    CHECK(e.semi_major == doctest::Approx(2.0 * r + lon_inflation()).epsilon(1e-9));
  }

  SUBCASE("beta = 1 is rejected") {
    const auto m = point_mode(Vec2(0, 0), Mat2::Identity());
    CHECK_THROWS_AS(build_ellipse(m, 1, 1.0, kVp, kVp), std::invalid_argument);
  }

  SUBCASE("monotone nesting in beta") {
    const auto m = point_mode(Vec2(3, -1), (Mat2() << 0.8, 0.2, 0.2, 0.5).finished());
    double prev_major = 0.0, prev_minor = 0.0;
    for (double beta : {0.3, 0.5, 0.8, 0.95, 0.99}) {
      const auto e = build_ellipse(m, 1, beta, kVp, kVp);
      CHECK(e.semi_major > prev_major);
      CHECK(e.semi_minor > prev_minor);
      prev_major = e.semi_major;
      prev_minor = e.semi_minor;
    }
  }
}

TEST_CASE("ellipse constraint value and gradient") {
  const auto m = point_mode(Vec2(5, 2), (Mat2() << 1.0, 0.3, 0.3, 0.6).finished());
  const auto e = build_ellipse(m, 1, 0.9, kVp, kVp);

  SUBCASE("center, boundary, far") {
    CHECK(ellipse_constraint_value(e, e.center) == doctest::Approx(1.0));
    const Vec2 boundary = e.center + e.semi_major * e.axis_major;
    CHECK(ellipse_constraint_value(e, boundary) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(ellipse_constraint_value(e, e.center + Vec2(100, 100)) < 0.0);
  }

  SUBCASE("analytic gradient matches central differences") {
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int i = 0; i < 100; ++i) {
      const Vec2 z(u(rng), u(rng));
      const Vec2 g = ellipse_constraint_gradient(e, z);
      Eigen::VectorXd zz(2);
      zz << z(0), z(1);
      const Eigen::VectorXd fd = oracle::central_diff(
          [&](const Eigen::VectorXd& p) {
            return ellipse_constraint_value(e, Vec2(p(0), p(1)));
          },
          zz, 1e-6);
      const double scale = std::max(1.0, g.norm());
      CHECK(std::abs(g(0) - fd(0)) / scale < 1e-6);
      CHECK(std::abs(g(1) - fd(1)) / scale < 1e-6);
    }
  }
}

TEST_CASE("empirical chance level of the pre-inflation ellipse") {
  // Smaller sample in the unit suite; the acceptance suite runs 1e5 at 1e-2.
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n01(0.0, 1.0);
  const Mat2 S = (Mat2() << 0.9, 0.25, 0.25, 0.4).finished();
  const Eigen::LLT<Mat2> llt(S);
  const Mat2 L = llt.matrixL();
  for (double beta : {0.8, 0.95}) {
    const double r2 = chi2_quantile_2d(beta);
    int outside = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const Vec2 z = L * Vec2(n01(rng), n01(rng));
      if (z.dot(S.inverse() * z) > r2) ++outside;
    }
    CHECK(std::abs(static_cast<double>(outside) / n - (1.0 - beta)) < 0.02);
  }
}

TEST_CASE("rectangular occupancy") {
  const Road road({LaneGeometry{0, 0.0, 3.5, 36.1}, LaneGeometry{1, 3.5, 3.5, 36.1}});

  SUBCASE("zero covariance: footprint-inflated nominal box") {
    MultiModalPrediction p;
    p.sv_id = 1;
    p.modes = {point_mode(Vec2(50, 0), Mat2::Zero())};
    const auto box = rect_occupancy(p, 1, 0.9545, Maneuver{0, 30, 0}, road, Vec2(0, 0), kVp, kVp);
    CHECK(box.s_min == doctest::Approx(50 - lon_inflation()));
    CHECK(box.s_max == doctest::Approx(50 + lon_inflation()));
    CHECK(box.d_min == doctest::Approx(0 - lat_inflation()));
    CHECK(box.d_max == doctest::Approx(0 + lat_inflation()));
    CHECK(box.side == ActiveSide::Rear);
  }

  SUBCASE("unit sigma at quantile 0.9545 adds two sigma per axis") {
    MultiModalPrediction p;
    p.sv_id = 1;
    p.modes = {point_mode(Vec2(50, 0), Mat2::Identity())};
    const auto box = rect_occupancy(p, 1, 0.9545, Maneuver{0, 30, 0}, road, Vec2(0, 0), kVp, kVp);
    CHECK(box.s_max == doctest::Approx(50 + 2.0 + lon_inflation()).epsilon(1e-4));
    CHECK(box.d_max == doctest::Approx(0 + 2.0 + lat_inflation()).epsilon(1e-4));
  }

  SUBCASE("two modes 10 m apart: union box spans both") {
    MultiModalPrediction p;
    p.sv_id = 1;
    p.modes = {point_mode(Vec2(50, 0), Mat2::Zero(), 0.5), point_mode(Vec2(60, 0), Mat2::Zero(), 0.5)};
    const auto box = rect_occupancy(p, 1, 0.9545, Maneuver{0, 30, 0}, road, Vec2(0, 0), kVp, kVp);
    CHECK(box.s_min == doctest::Approx(50 - lon_inflation()));
    CHECK(box.s_max == doctest::Approx(60 + lon_inflation()));
  }

  SUBCASE("negligible modes are excluded from the union") {
    MultiModalPrediction p;
    p.sv_id = 1;
    p.modes = {point_mode(Vec2(50, 0), Mat2::Zero(), 0.9995),
               point_mode(Vec2(500, 0), Mat2::Zero(), 0.0005)};
    const auto box = rect_occupancy(p, 1, 0.9545, Maneuver{0, 30, 0}, road, Vec2(0, 0), kVp, kVp);
    CHECK(box.s_max < 100.0);
  }

  SUBCASE("active side follows the planned maneuver") {
    MultiModalPrediction p;
    p.sv_id = 1;
    p.modes = {point_mode(Vec2(50, 0), Mat2::Zero())};
    // overtaking via the left lane: lateral boundary
    const auto left =
        rect_occupancy(p, 1, 0.9545, Maneuver{1, 36, 0}, road, Vec2(0, 0), kVp, kVp);
    CHECK(left.side == ActiveSide::Left);
    // following in the same lane from behind: rear boundary
    const auto rear =
        rect_occupancy(p, 1, 0.9545, Maneuver{0, 30, 0}, road, Vec2(0, 0), kVp, kVp);
    CHECK(rear.side == ActiveSide::Rear);
    // ahead of the SV in the same lane: front boundary
    const auto front =
        rect_occupancy(p, 1, 0.9545, Maneuver{0, 30, 0}, road, Vec2(100, 0), kVp, kVp);
    CHECK(front.side == ActiveSide::Front);
  }

  SUBCASE("linear boundary soundness: satisfying the boundary puts the ego outside") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      MultiModalPrediction p;
      p.sv_id = 1;
      p.modes = {point_mode(Vec2(40 + 20 * u(rng), 1.75 * u(rng)),
                            (0.5 + 0.4 * u(rng)) * Mat2::Identity(), 0.6),
                 point_mode(Vec2(40 + 20 * u(rng), 1.75 * u(rng)),
                            (0.5 + 0.4 * u(rng)) * Mat2::Identity(), 0.4)};
      const Maneuver mv{u(rng) > 0 ? 1 : 0, 30.0, 0.0};
      const auto box = rect_occupancy(p, 1, 0.9, mv, road, Vec2(30 * u(rng), 0), kVp, kVp);
      for (int i = 0; i < 40; ++i) {
        const Vec2 z(box.s_min - 30 + 100 * std::abs(u(rng)), 8 * u(rng));
        if (box.value(z) <= 0.0) CHECK_FALSE(box.contains(z));
      }
    }
  }
}
