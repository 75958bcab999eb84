#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <limits>
#include <vector>

namespace bsmpc {

/// Convex QP:  min 1/2 x'Px + q'x  s.t.  l <= Ax <= u.
/// Equality rows are encoded as l_i == u_i.
struct QPProblem {
  Eigen::SparseMatrix<double> P;  // n x n, upper data may be full symmetric
  Eigen::VectorXd q;
  Eigen::SparseMatrix<double> A;  // m x n
  Eigen::VectorXd l, u;

  int n() const { return static_cast<int>(q.size()); }
  int m() const { return static_cast<int>(l.size()); }
};

struct QPSettings {
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  int max_iter = 4000;
  int check_interval = 25;
  bool scaling = true;
  int scaling_iters = 10;
  double rho_eq_scale = 1e3;
  bool adaptive_rho = true;
  bool polish = true;
  double polish_delta = 1e-7;
};

enum class QPStatus { Solved, MaxIterations };

struct QPResult {
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // multipliers for l <= Ax <= u
  QPStatus status = QPStatus::MaxIterations;
  int iterations = 0;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  bool polished = false;
};

namespace qp_detail {

inline Eigen::VectorXd col_inf_norms(const Eigen::SparseMatrix<double>& M) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(M.cols());
  for (int k = 0; k < M.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(M, k); it; ++it)
      out(it.col()) = std::max(out(it.col()), std::abs(it.value()));
  return out;
}

inline Eigen::VectorXd row_inf_norms(const Eigen::SparseMatrix<double>& M) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(M.rows());
  for (int k = 0; k < M.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(M, k); it; ++it)
      out(it.row()) = std::max(out(it.row()), std::abs(it.value()));
  return out;
}

struct Scaling {
  Eigen::VectorXd D, E;  // x = D x_scaled, rows scaled by E
  double c = 1.0;        // cost scaling
};

/// Modified Ruiz equilibration of [[P, A'], [A, 0]].
inline Scaling ruiz_equilibrate(Eigen::SparseMatrix<double>& P, Eigen::VectorXd& q,
                                Eigen::SparseMatrix<double>& A, Eigen::VectorXd& l,
                                Eigen::VectorXd& u, int iters) {
  const int n = static_cast<int>(q.size());
  const int m = static_cast<int>(l.size());
  Scaling s;
  s.D = Eigen::VectorXd::Ones(n);
  s.E = Eigen::VectorXd::Ones(m);

  for (int it = 0; it < iters; ++it) {
    const Eigen::VectorXd pc = col_inf_norms(P);
    const Eigen::VectorXd ac = col_inf_norms(A);
    const Eigen::VectorXd ar = row_inf_norms(A);
    Eigen::VectorXd d(n), e(m);
    for (int j = 0; j < n; ++j) {
      const double v = std::max(pc(j), ac(j));
      d(j) = v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0;
    }
    for (int i = 0; i < m; ++i) e(i) = ar(i) > 1e-12 ? 1.0 / std::sqrt(ar(i)) : 1.0;

    P = d.asDiagonal() * P * d.asDiagonal();
    q = d.cwiseProduct(q);
    A = e.asDiagonal() * A * d.asDiagonal();
    l = e.cwiseProduct(l);
    u = e.cwiseProduct(u);
    s.D = s.D.cwiseProduct(d);
    s.E = s.E.cwiseProduct(e);

    // cost scaling toward unit gradient magnitude
    const Eigen::VectorXd pc2 = col_inf_norms(P);
    const double mean_pc = pc2.size() > 0 ? pc2.mean() : 0.0;
    const double denom = std::max(mean_pc, q.lpNorm<Eigen::Infinity>());
    const double gamma = denom > 1e-12 ? 1.0 / denom : 1.0;
    P *= gamma;
    q *= gamma;
    s.c *= gamma;
  }
  return s;
}

}  // namespace qp_detail

/// ADMM solver in the OSQP formulation with sparse quasi-definite KKT
/// factorization, optional Ruiz scaling, adaptive rho and an active-set
/// polish step. Deterministic: no randomness, fixed iteration order.
class QPSolver {
 public:
  explicit QPSolver(const QPSettings& settings = {}) : cfg_(settings) {}

  QPResult solve(const QPProblem& prob, const Eigen::VectorXd* x_warm = nullptr,
                 const Eigen::VectorXd* y_warm = nullptr) const {
    const int n = prob.n();
    const int m = prob.m();

    Eigen::SparseMatrix<double> P = prob.P;
    Eigen::SparseMatrix<double> A = prob.A;
    Eigen::VectorXd q = prob.q, l = prob.l, u = prob.u;

    qp_detail::Scaling sc;
    sc.D = Eigen::VectorXd::Ones(n);
    sc.E = Eigen::VectorXd::Ones(m);
    if (cfg_.scaling) sc = qp_detail::ruiz_equilibrate(P, q, A, l, u, cfg_.scaling_iters);

    Eigen::VectorXd rho(m);
    const auto assign_rho = [&](double base) {
      for (int i = 0; i < m; ++i) {
        const bool eq = (prob.u(i) - prob.l(i)) < 1e-12;
        const bool loose = prob.l(i) < -1e19 && prob.u(i) > 1e19;
        rho(i) = eq ? base * cfg_.rho_eq_scale : (loose ? base * 1e-6 : base);
      }
    };
    double rho_base = cfg_.rho;
    assign_rho(rho_base);

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> kkt;
    const auto factor = [&]() {
      Eigen::SparseMatrix<double> K(n + m, n + m);
      std::vector<Eigen::Triplet<double>> trips;
      trips.reserve(P.nonZeros() + 2 * A.nonZeros() + n + m);
      for (int k = 0; k < P.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(P, k); it; ++it)
          trips.emplace_back(it.row(), it.col(), it.value());
      for (int j = 0; j < n; ++j) trips.emplace_back(j, j, cfg_.sigma);
      for (int k = 0; k < A.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
          trips.emplace_back(n + it.row(), it.col(), it.value());
          trips.emplace_back(it.col(), n + it.row(), it.value());
        }
      for (int i = 0; i < m; ++i) trips.emplace_back(n + i, n + i, -1.0 / rho(i));
      K.setFromTriplets(trips.begin(), trips.end());
      kkt.compute(K);
    };
    factor();

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    if (x_warm && x_warm->size() == n) x = sc.D.cwiseInverse().cwiseProduct(*x_warm);
    if (y_warm && y_warm->size() == m) y = sc.c * sc.E.cwiseInverse().cwiseProduct(*y_warm);
    Eigen::VectorXd z = A * x;
    z = z.cwiseMax(l).cwiseMin(u);

    QPResult res;
    Eigen::VectorXd rhs(n + m), sol(n + m);
    int it = 0;
    for (it = 1; it <= cfg_.max_iter; ++it) {
      rhs.head(n) = cfg_.sigma * x - q;
      rhs.tail(m) = z - y.cwiseQuotient(rho);
      sol = kkt.solve(rhs);
      const Eigen::VectorXd x_tilde = sol.head(n);
      const Eigen::VectorXd nu = sol.tail(m);
      const Eigen::VectorXd z_tilde = z + (nu - y).cwiseQuotient(rho);

      const Eigen::VectorXd x_next = cfg_.alpha * x_tilde + (1.0 - cfg_.alpha) * x;
      const Eigen::VectorXd z_mix = cfg_.alpha * z_tilde + (1.0 - cfg_.alpha) * z;
      const Eigen::VectorXd z_next = (z_mix + y.cwiseQuotient(rho)).cwiseMax(l).cwiseMin(u);
      y = y + rho.cwiseProduct(z_mix - z_next);
      x = x_next;
      z = z_next;

      if (it % cfg_.check_interval == 0 || it == cfg_.max_iter) {
        // unscaled residuals
        const Eigen::VectorXd Ax = A * x;
        const Eigen::VectorXd rp = sc.E.cwiseInverse().cwiseProduct(Ax - z);
        const Eigen::VectorXd Px = P * x;
        const Eigen::VectorXd Aty = A.transpose() * y;
        const Eigen::VectorXd rd =
            sc.D.cwiseInverse().cwiseProduct(Px + q + Aty) / sc.c;
        const double rp_norm = m > 0 ? rp.lpNorm<Eigen::Infinity>() : 0.0;
        const double rd_norm = rd.lpNorm<Eigen::Infinity>();

        const double p_scale = std::max(
            {m > 0 ? sc.E.cwiseInverse().cwiseProduct(Ax).lpNorm<Eigen::Infinity>() : 0.0,
             m > 0 ? sc.E.cwiseInverse().cwiseProduct(z).lpNorm<Eigen::Infinity>() : 0.0, 1e-6});
        const double d_scale =
            std::max({sc.D.cwiseInverse().cwiseProduct(Px).lpNorm<Eigen::Infinity>() / sc.c,
                      sc.D.cwiseInverse().cwiseProduct(Aty).lpNorm<Eigen::Infinity>() / sc.c,
                      sc.D.cwiseInverse().cwiseProduct(q).lpNorm<Eigen::Infinity>() / sc.c, 1e-6});

        res.primal_residual = rp_norm;
        res.dual_residual = rd_norm;
        if (rp_norm <= cfg_.eps_abs + cfg_.eps_rel * p_scale &&
            rd_norm <= cfg_.eps_abs + cfg_.eps_rel * d_scale) {
          res.status = QPStatus::Solved;
          break;
        }

        if (cfg_.adaptive_rho && it % (10 * cfg_.check_interval) == 0 && it < cfg_.max_iter) {
          const double ratio =
              std::sqrt((rp_norm / p_scale) / std::max(rd_norm / d_scale, 1e-12));
          if (ratio > 5.0 || ratio < 0.2) {
            rho_base = std::clamp(rho_base * ratio, 1e-6, 1e6);
            assign_rho(rho_base);
            factor();
          }
        }
      }
    }
    res.iterations = std::min(it, cfg_.max_iter);

    // unscale
    res.x = sc.D.cwiseProduct(x);
    res.y = sc.E.cwiseProduct(y) / sc.c;

    if (cfg_.polish && res.status == QPStatus::Solved && m > 0)
      polish(prob, res);
    return res;
  }

 private:
  QPSettings cfg_;

  /// Solve the KKT system restricted to the detected active set, with a tiny
  /// regularization and iterative refinement against the unregularized
  /// system. Accepted only if it does not worsen the residuals.
  void polish(const QPProblem& prob, QPResult& res) const {
    const int n = prob.n();
    const int m = prob.m();
    const Eigen::VectorXd Ax0 = prob.A * res.x;
    std::vector<int> active;
    std::vector<double> bound;
    for (int i = 0; i < m; ++i) {
      const bool eq = (prob.u(i) - prob.l(i)) < 1e-12;
      const double tol = 1e-6 * (1.0 + std::abs(prob.u(i)) + std::abs(prob.l(i)));
      const bool low = !eq && (res.y(i) < -1e-9 || Ax0(i) - prob.l(i) < tol);
      const bool up = !eq && (res.y(i) > 1e-9 || prob.u(i) - Ax0(i) < tol);
      if (eq) {
        active.push_back(i);
        bound.push_back(prob.l(i));
      } else if (low && (!up || res.y(i) < 0.0)) {
        active.push_back(i);
        bound.push_back(prob.l(i));
      } else if (up) {
        active.push_back(i);
        bound.push_back(prob.u(i));
      }
    }
    const int ma = static_cast<int>(active.size());

    Eigen::SparseMatrix<double> K(n + ma, n + ma);
    std::vector<Eigen::Triplet<double>> trips;
    for (int k = 0; k < prob.P.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(prob.P, k); it; ++it)
        trips.emplace_back(it.row(), it.col(), it.value());
    for (int j = 0; j < n; ++j) trips.emplace_back(j, j, cfg_.polish_delta);
    const Eigen::SparseMatrix<double, Eigen::RowMajor> Ar = prob.A;
    for (int a = 0; a < ma; ++a) {
      const int i = active[a];
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Ar, i); it; ++it) {
        trips.emplace_back(n + a, it.col(), it.value());
        trips.emplace_back(it.col(), n + a, it.value());
      }
      trips.emplace_back(n + a, n + a, -cfg_.polish_delta);
    }
    K.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    ldlt.compute(K);
    if (ldlt.info() != Eigen::Success) return;

    Eigen::VectorXd rhs(n + ma);
    rhs.head(n) = -prob.q;
    for (int a = 0; a < ma; ++a) rhs(n + a) = bound[a];

    Eigen::VectorXd sol = ldlt.solve(rhs);
    for (int refine = 0; refine < 3; ++refine) {
      // residual of the unregularized KKT system
      Eigen::VectorXd resid(n + ma);
      Eigen::VectorXd Px = prob.P * sol.head(n);
      Eigen::VectorXd At_ya = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd Ax_a(ma);
      for (int a = 0; a < ma; ++a) {
        const int i = active[a];
        double dot = 0.0;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Ar, i); it; ++it) {
          dot += it.value() * sol(it.col());
          At_ya(it.col()) += it.value() * sol(n + a);
        }
        Ax_a(a) = dot;
      }
      resid.head(n) = -prob.q - Px - At_ya;
      for (int a = 0; a < ma; ++a) resid(n + a) = bound[a] - Ax_a(a);
      sol += ldlt.solve(resid);
    }

    // evaluate candidate
    Eigen::VectorXd x_new = sol.head(n);
    Eigen::VectorXd y_new = Eigen::VectorXd::Zero(m);
    for (int a = 0; a < ma; ++a) y_new(active[a]) = sol(n + a);

    const Eigen::VectorXd Ax = prob.A * x_new;
    const Eigen::VectorXd rp =
        (Ax - Ax.cwiseMax(prob.l).cwiseMin(prob.u));
    const Eigen::VectorXd rd = prob.P * x_new + prob.q + prob.A.transpose() * y_new;
    const double rp_new = rp.lpNorm<Eigen::Infinity>();
    const double rd_new = rd.lpNorm<Eigen::Infinity>();
    if (rp_new <= std::max(res.primal_residual, 1e-10) &&
        rd_new <= std::max(res.dual_residual, 1e-10)) {
      res.x = x_new;
      res.y = y_new;
      res.primal_residual = rp_new;
      res.dual_residual = rd_new;
      res.polished = true;
    }
  }
};

}  // namespace bsmpc
