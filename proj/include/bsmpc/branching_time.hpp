#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "bsmpc/clustering.hpp"
#include "bsmpc/prediction.hpp"

namespace bsmpc {

struct BranchingConfig {
  double dtw_threshold = 3.0;  // accumulated Mahalanobis divergence
  int k_min = 1;
  int k_max = -1;              // -1: resolved to N-5 at use
  double cov_reg = 1e-6;       // added to averaged covariances before inversion
  bool msof_early_termination = false;

  int resolved_k_max(int N) const { return k_max < 0 ? std::max(1, N - 5) : k_max; }
};

/// Mahalanobis distance between two position predictions under the averaged
/// covariance.
inline double mahalanobis_local_cost(const Vec2& xa, const Mat2& Sa, const Vec2& xb,
                                     const Mat2& Sb) {
  const Mat2 S = 0.5 * (Sa + Sb);
  const double det = S.determinant();
  if (!(det > 0.0) || !S.allFinite())
    throw std::invalid_argument("mahalanobis_local_cost: averaged covariance not PD");
  const Vec2 e = xa - xb;
  const double m2 = e.dot(S.inverse() * e);
  return std::sqrt(std::max(0.0, m2));
}

namespace detail {

inline Eigen::MatrixXd dtw_local_costs(const PredictionMode& a, const PredictionMode& b,
                                       double cov_reg) {
  if (a.states.size() != b.states.size())
    throw std::invalid_argument("dtw: prediction modes must have equal length");
  const int n = static_cast<int>(a.states.size());
  Eigen::MatrixXd local(n, n);
  const Mat2 reg = cov_reg * Mat2::Identity();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      local(i, j) =
          mahalanobis_local_cost(a.pos(i), Mat2(a.cov[i] + reg), b.pos(j), Mat2(b.cov[j] + reg));
  return local;
}

}  // namespace detail

/// Accumulated-cost DTW table, D(i,j) = c(i,j) + min of the three neighbors,
/// with edge accumulation along the first row/column and D(0,0) = c(0,0).
inline Eigen::MatrixXd dtw_table(const PredictionMode& a, const PredictionMode& b,
                                 double cov_reg = 1e-6) {
  const Eigen::MatrixXd local = detail::dtw_local_costs(a, b, cov_reg);
  const int n = static_cast<int>(local.rows());
  Eigen::MatrixXd D(n, n);
  D(0, 0) = local(0, 0);
  for (int i = 1; i < n; ++i) D(i, 0) = D(i - 1, 0) + local(i, 0);
  for (int j = 1; j < n; ++j) D(0, j) = D(0, j - 1) + local(0, j);
  for (int i = 1; i < n; ++i)
    for (int j = 1; j < n; ++j)
      D(i, j) = local(i, j) + std::min({D(i - 1, j), D(i, j - 1), D(i - 1, j - 1)});
  return D;
}

/// Diagonal D(k,k) for k in [1, N].
inline std::vector<double> dtw_diagonal(const PredictionMode& a, const PredictionMode& b,
                                        double cov_reg = 1e-6) {
  const Eigen::MatrixXd D = dtw_table(a, b, cov_reg);
  std::vector<double> diag;
  for (int k = 1; k < D.rows(); ++k) diag.push_back(D(k, k));
  return diag;
}

/// First step index whose accumulated divergence crosses the threshold;
/// N when the threshold is never crossed (modes never diverge enough,
/// so the plan stays non-anticipatory over the full horizon).
inline int pairwise_branching_time(const std::vector<double>& diag, double threshold, int N) {
  if (static_cast<int>(diag.size()) != N)
    throw std::invalid_argument("pairwise_branching_time: diagonal length must be N");
  for (int k = 1; k <= N; ++k)
    if (diag[k - 1] >= threshold) return k;
  return N;
}

/// Threshold crossing computed by growing the DP table frontier one index at
/// a time and stopping at the first diagonal crossing. Identical arithmetic
/// to the full table, evaluated in the same order, so results are
/// bit-identical; it just skips the part of the matrix beyond the crossing.
inline int dtw_first_crossing_msof(const PredictionMode& a, const PredictionMode& b,
                                   double threshold, int N, double cov_reg) {
  const Mat2 reg = cov_reg * Mat2::Identity();
  auto local = [&](int i, int j) {
    return mahalanobis_local_cost(a.pos(i), Mat2(a.cov[i] + reg), b.pos(j), Mat2(b.cov[j] + reg));
  };
  Eigen::MatrixXd D(N + 1, N + 1);
  D(0, 0) = local(0, 0);
  for (int k = 1; k <= N; ++k) {
    // extend the L-shaped frontier: row k up to column k, column k up to row k
    D(k, 0) = D(k - 1, 0) + local(k, 0);
    D(0, k) = D(0, k - 1) + local(0, k);
    for (int j = 1; j < k; ++j)
      D(k, j) = local(k, j) + std::min({D(k - 1, j), D(k, j - 1), D(k - 1, j - 1)});
    for (int i = 1; i < k; ++i)
      D(i, k) = local(i, k) + std::min({D(i - 1, k), D(i, k - 1), D(i - 1, k - 1)});
    D(k, k) = local(k, k) + std::min({D(k - 1, k), D(k, k - 1), D(k - 1, k - 1)});
    if (D(k, k) >= threshold) return k;
  }
  return N;
}

struct BranchingTimeResult {
  int k_branch = 0;
  bool degenerate = false;  // no cross-branch mode pair was available
};

/// Maximum pairwise branching time over all cross-branch mode pairs of every
/// critical SV, then over critical SVs; clamped to [k_min, k_max].
inline BranchingTimeResult overall_branching_time(const BranchingStructure& structure,
                                                  const CriticalitySplit& split,
                                                  const std::vector<MultiModalPrediction>& preds,
                                                  const BranchingConfig& cfg, int N) {
  const int k_max = cfg.resolved_k_max(N);
  BranchingTimeResult out;
  if (structure.branches.size() < 2) {
    out.k_branch = N;  // single branch: non-anticipation is vacuous
    out.degenerate = true;
    return out;
  }

  int best = -1;
  for (int sv_id : split.critical) {
    const MultiModalPrediction* pred = nullptr;
    for (const auto& p : preds)
      if (p.sv_id == sv_id) pred = &p;
    if (pred == nullptr) continue;

    int sv_time = -1;
    for (size_t bi = 0; bi < structure.branches.size(); ++bi) {
      for (size_t bj = bi + 1; bj < structure.branches.size(); ++bj) {
        const auto& mi = structure.branches[bi].assigned_modes;
        const auto& mj = structure.branches[bj].assigned_modes;
        const auto ii = mi.find(sv_id);
        const auto jj = mj.find(sv_id);
        if (ii == mi.end() || jj == mj.end()) continue;
        for (int m : ii->second) {
          for (int n : jj->second) {
            int k;
            if (m == n) {
              k = N;  // identical mode never diverges from itself
            } else if (cfg.msof_early_termination) {
              k = dtw_first_crossing_msof(pred->mode_by_id(m), pred->mode_by_id(n),
                                          cfg.dtw_threshold, N, cfg.cov_reg);
            } else {
              k = pairwise_branching_time(
                  dtw_diagonal(pred->mode_by_id(m), pred->mode_by_id(n), cfg.cov_reg),
                  cfg.dtw_threshold, N);
            }
            sv_time = std::max(sv_time, k);
          }
        }
      }
    }
    best = std::max(best, sv_time);
  }

  if (best < 0) {
    out.k_branch = k_max;
    out.degenerate = true;
    return out;
  }
  out.k_branch = std::clamp(best, cfg.k_min, k_max);
  return out;
}

}  // namespace bsmpc
