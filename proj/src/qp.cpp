#include "vrp/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace vrp {

namespace {

using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

double inf_norm(const VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// Largest step in [0, cap] keeping v + alpha dv >= 0.
double max_step(const VectorXd& v, const VectorXd& dv, double cap) {
  double alpha = cap;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
  }
  return alpha;
}

std::uint64_t fnv1a(const int* data, std::ptrdiff_t count,
                    std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(data[i]));
    h *= 0x100000001b3ull;
  }
  return h;
}

struct Residuals {
  VectorXd dual, eq, ineq;
  double mu = 0.0;
};

Residuals compute_residuals(const QpProblem& qp, const VectorXd& x,
                            const VectorXd& y, const VectorXd& z,
                            const VectorXd& s) {
  Residuals r;
  r.dual = qp.H * x + qp.g;
  if (qp.num_eq() > 0) r.dual += qp.A.transpose() * y;
  if (qp.num_ineq() > 0) {
    r.dual += qp.C.transpose() * z;
    r.ineq = qp.C * x + s - qp.d;
    r.mu = s.dot(z) / qp.num_ineq();
  }
  if (qp.num_eq() > 0) r.eq = qp.A * x - qp.b;
  return r;
}

}  // namespace

void QpProblem::validate() const {
  const int n = num_vars();
  if (n < 1) fail(ErrorCode::invalid_argument, "qp has no variables");
  if (H.rows() != n || H.cols() != n) {
    fail(ErrorCode::invalid_argument, "qp hessian shape mismatch");
  }
  if (A.rows() != num_eq() || (num_eq() > 0 && A.cols() != n)) {
    fail(ErrorCode::invalid_argument, "qp equality shape mismatch");
  }
  if (C.rows() != num_ineq() || (num_ineq() > 0 && C.cols() != n)) {
    fail(ErrorCode::invalid_argument, "qp inequality shape mismatch");
  }
}

QpSolution QpSolver::solve(const QpProblem& qp, const QpOptions& options) {
  qp.validate();
  const int n = qp.num_vars();
  const int me = qp.num_eq();
  const int mi = qp.num_ineq();
  const int dim = n + me + mi;
  const double delta = options.regularization;

  // Lower-triangle KKT template. Values in the H/A/C blocks are fixed for
  // this solve; only the trailing inequality diagonal moves per iteration.
  {
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(qp.H.nonZeros() + qp.A.nonZeros() +
                                           qp.C.nonZeros() + dim));
    for (int col = 0; col < qp.H.outerSize(); ++col) {
      for (SpMat::InnerIterator it(qp.H, col); it; ++it) {
        if (it.row() >= col) {
          trips.emplace_back(static_cast<int>(it.row()), col, it.value());
        }
      }
    }
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, delta);
    for (int col = 0; col < qp.A.outerSize(); ++col) {
      for (SpMat::InnerIterator it(qp.A, col); it; ++it) {
        trips.emplace_back(n + static_cast<int>(it.row()), col, it.value());
      }
    }
    for (int i = 0; i < me; ++i) trips.emplace_back(n + i, n + i, -delta);
    for (int col = 0; col < qp.C.outerSize(); ++col) {
      for (SpMat::InnerIterator it(qp.C, col); it; ++it) {
        trips.emplace_back(n + me + static_cast<int>(it.row()), col,
                           it.value());
      }
    }
    for (int i = 0; i < mi; ++i) {
      trips.emplace_back(n + me + i, n + me + i, -1.0 - delta);
    }
    kkt_.resize(dim, dim);
    kkt_.setFromTriplets(trips.begin(), trips.end());
    kkt_.makeCompressed();
  }

  // In the lower triangle nothing sits below the trailing block, so each of
  // its columns holds exactly the diagonal entry.
  ineq_diag_slots_.resize(static_cast<std::size_t>(mi));
  for (int i = 0; i < mi; ++i) {
    ineq_diag_slots_[static_cast<std::size_t>(i)] =
        kkt_.outerIndexPtr()[n + me + i];
  }

  // The cached analysis is only valid for a bit-identical pattern.
  std::uint64_t pattern_hash =
      fnv1a(kkt_.outerIndexPtr(), dim + 1, 0xcbf29ce484222325ull);
  pattern_hash = fnv1a(kkt_.innerIndexPtr(), kkt_.nonZeros(), pattern_hash);
  if (!analyzed_ || pattern_hash != pattern_hash_ || dim != pattern_dim_) {
    ldlt_.analyzePattern(kkt_);
    analyzed_ = true;
    pattern_hash_ = pattern_hash;
    pattern_dim_ = dim;
  }

  VectorXd x = VectorXd::Zero(n);
  VectorXd y = VectorXd::Zero(me);
  VectorXd s(mi), z(mi);

  // Starting point in the style of Mehrotra's least-squares heuristic: one
  // solve of the KKT system with unit complementarity scaling (the template
  // trailing diagonal is already -1) yields iterates matched to the scale of
  // g, b and d, and shifting them into the positive orthant keeps the first
  // Newton steps from exploding off a badly centered start.
  {
    ldlt_.factorize(kkt_);
    bool ok = ldlt_.info() == Eigen::Success;
    if (ok) {
      VectorXd rhs(dim);
      rhs.head(n) = -qp.g;
      if (me > 0) rhs.segment(n, me) = qp.b;
      if (mi > 0) rhs.tail(mi) = qp.d;
      const VectorXd sol = ldlt_.solve(rhs);
      ok = sol.allFinite();
      if (ok) {
        x = sol.head(n);
        y = sol.segment(n, me);
        if (mi > 0) {
          VectorXd st = qp.d - qp.C * x;
          VectorXd zt = sol.tail(mi);
          st.array() += std::max(-1.5 * st.minCoeff(), 0.0);
          zt.array() += std::max(-1.5 * zt.minCoeff(), 0.0);
          const double dot = st.dot(zt);
          const double se = st.sum();
          const double ze = zt.sum();
          s = (st.array() + (ze > 0.0 ? 0.5 * dot / ze : 1.0)).matrix();
          z = (zt.array() + (se > 0.0 ? 0.5 * dot / se : 1.0)).matrix();
          ok = s.allFinite() && z.allFinite() && s.minCoeff() > 0.0 &&
               z.minCoeff() > 0.0;
        }
      }
    }
    if (!ok) {
      x.setZero();
      y.setZero();
      if (mi > 0) {
        const VectorXd gap = qp.d;
        for (int i = 0; i < mi; ++i) s(i) = std::max(1.0, gap(i));
        z.setOnes();
      }
    }
  }

  // Applies the unregularized KKT operator, for refinement residuals.
  const auto apply_kkt = [&](const VectorXd& sol, VectorXd& out) {
    out.resize(dim);
    VectorXd top = qp.H * sol.head(n);
    if (me > 0) top += qp.A.transpose() * sol.segment(n, me);
    if (mi > 0) top += qp.C.transpose() * sol.tail(mi);
    out.head(n) = top;
    if (me > 0) out.segment(n, me) = qp.A * sol.head(n);
    if (mi > 0) {
      out.tail(mi) = qp.C * sol.head(n);
      out.tail(mi).array() -= (s.array() / z.array()) * sol.tail(mi).array();
    }
  };
  const auto solve_kkt = [&](const VectorXd& rhs, VectorXd& sol) {
    sol = ldlt_.solve(rhs);
    // One refinement pass against the unregularized operator recovers most
    // of the accuracy lost to the static regularization.
    VectorXd ks;
    apply_kkt(sol, ks);
    sol += ldlt_.solve(rhs - ks);
  };

  QpSolution best;
  double best_score = std::numeric_limits<double>::infinity();
  const auto record = [&](const Residuals& r, int iter) {
    const double rd = inf_norm(r.dual) / (1.0 + inf_norm(qp.g));
    const double re = me > 0 ? inf_norm(r.eq) / (1.0 + inf_norm(qp.b)) : 0.0;
    const double ri =
        mi > 0 ? inf_norm(r.ineq) / (1.0 + inf_norm(qp.d)) : 0.0;
    const double score = std::max({rd, re, ri, r.mu});
    if (score < best_score) {
      best_score = score;
      best.x = x;
      best.eq_dual = y;
      best.ineq_dual = z;
      best.iterations = iter;
      best.dual_residual = inf_norm(r.dual);
      best.primal_residual = std::max(me > 0 ? inf_norm(r.eq) : 0.0,
                                      mi > 0 ? inf_norm(r.ineq) : 0.0);
      best.complementarity = r.mu;
    }
    return score;
  };
  const auto finish = [&](QpStatus status) {
    best.status = status;
    best.slack = mi > 0 ? VectorXd(qp.d - qp.C * best.x) : VectorXd();
    return best;
  };

  int iter = 0;
  bool diverged = false;
  for (; iter <= options.max_iterations; ++iter) {
    const Residuals r = compute_residuals(qp, x, y, z, s);
    const double score = record(r, iter);
    if (score <= options.tolerance) return finish(QpStatus::optimal);
    if (iter == options.max_iterations) break;
    if (!std::isfinite(score) || inf_norm(z) > 1e14 || inf_norm(x) > 1e14) {
      diverged = true;
      break;
    }

    for (int i = 0; i < mi; ++i) {
      kkt_.valuePtr()[ineq_diag_slots_[static_cast<std::size_t>(i)]] =
          -s(i) / z(i) - delta;
    }
    ldlt_.factorize(kkt_);
    if (ldlt_.info() != Eigen::Success) {
      diverged = true;
      break;
    }

    VectorXd rhs(dim), step(dim);
    rhs.head(n) = -r.dual;
    if (me > 0) rhs.segment(n, me) = -r.eq;
    VectorXd ds_aff, dz_aff, rc;
    if (mi > 0) {
      // Affine predictor.
      rhs.tail(mi) = -r.ineq + s;
      solve_kkt(rhs, step);
      dz_aff = step.tail(mi);
      ds_aff = (-s.array() - (s.array() / z.array()) * dz_aff.array()).matrix();
      const double ap = max_step(s, ds_aff, 1.0);
      const double ad = max_step(z, dz_aff, 1.0);
      const double mu_aff = (s + ap * ds_aff).dot(z + ad * dz_aff) / mi;
      const double sigma =
          std::clamp(std::pow(mu_aff / std::max(r.mu, 1e-300), 3.0), 0.0, 1.0);

      // Corrector with centering.
      rc = (z.array() * s.array() + ds_aff.array() * dz_aff.array() -
            sigma * r.mu)
               .matrix();
      rhs.tail(mi) = -r.ineq + (rc.array() / z.array()).matrix();
      solve_kkt(rhs, step);
    } else {
      solve_kkt(rhs, step);
    }

    double ap = 1.0, ad = 1.0;
    VectorXd dz, ds;
    if (mi > 0) {
      dz = step.tail(mi);
      ds = -((rc.array() + s.array() * dz.array()) / z.array()).matrix();
      ap = std::min(1.0, 0.995 * max_step(s, ds, 1.0 / 0.995));
      ad = std::min(1.0, 0.995 * max_step(z, dz, 1.0 / 0.995));
      // A step may not blow up complementarity: unequal primal and dual
      // lengths can let mu grow without bound when the direction is long.
      const double mu_cap = 10.0 * std::max(r.mu, options.tolerance);
      const auto mu_after = [&](double p, double dd) {
        return (s + p * ds).dot(z + dd * dz) / mi;
      };
      if (mu_after(ap, ad) > mu_cap) {
        ap = ad = std::min(ap, ad);
        for (int guard = 0; guard < 40 && mu_after(ap, ad) > mu_cap;
             ++guard) {
          ap *= 0.5;
          ad *= 0.5;
        }
      }
    }
    x += ap * step.head(n);
    y += ad * step.segment(n, me);
    if (mi > 0) {
      s += ap * ds;
      z += ad * dz;
    }
  }

  if (iter > options.max_iterations) iter = options.max_iterations;
  const Residuals r = compute_residuals(qp, x, y, z, s);
  record(r, iter);

  // Decide between a plain iteration cap and infeasibility, judged at the
  // best iterate seen.
  double eq_viol = 0.0, ineq_viol = 0.0;
  if (me > 0) {
    eq_viol = inf_norm(qp.A * best.x - qp.b) / (1.0 + inf_norm(qp.b));
  }
  if (mi > 0) {
    const VectorXd gap = qp.C * best.x - qp.d;
    ineq_viol = gap.cwiseMax(0.0).maxCoeff() / (1.0 + inf_norm(qp.d));
  }
  return finish(diverged || std::max(eq_viol, ineq_viol) > 1e-5
                    ? QpStatus::infeasible
                    : QpStatus::max_iterations);
}

}  // namespace vrp
