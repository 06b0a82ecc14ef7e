#pragma once

// Approximate maximization of <A, M> over ST_mu.
//
// Projected gradient ascent on the linear objective. Each projection onto
// ST_mu is computed by Dykstra's alternating projections over five sets whose
// Euclidean projections are exact:
//
//   psd cone        eigenvalue clipping of the symmetric part
//   box             entrywise clamp to [-1, 1]
//   weighted trace  halfspace sum_i mu_i M_ii <= 1
//   weighted frob   axis-aligned ellipsoid sum_ij mu_i mu_j M_ij^2 <= 1
//   row sup         per-row magnitude caps c_i with sum_i mu_i c_i^2 <= 1
//
// Dykstra runs in the space of all n x n matrices, where the row-sup set is
// separable by rows; the intersection with the symmetric psd cone is exactly
// ST_mu. Every returned matrix is made strictly feasible by psd clipping
// followed by gauge rescaling, so feasibility never depends on convergence.

#include "robustkit/dualnorm.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string_view>

namespace robustkit {

struct StepSchedule {
  /// Step applied to the Frobenius-normalized objective, in units of n.
  double initial = 1.0;
  /// step_t = initial / (1 + decay * t).
  double decay = 0.0;
};

struct SolverConfig {
  int max_iters = 40;
  StepSchedule step_schedule;
  int dykstra_iters = 25;
  /// Stop once the best value improves by less than this fraction over
  /// `patience` consecutive iterations.
  double rel_gap_target = 1e-4;
  int patience = 3;
  /// Seeded random sign-pattern rank-one candidates for the warm start.
  int random_candidates = 4;
  std::uint64_t seed = 0;

  void validate() const {
    require(max_iters > 0, "solver max_iters must be positive");
    require(dykstra_iters > 0, "solver dykstra_iters must be positive");
    require(step_schedule.initial > 0.0 && step_schedule.decay >= 0.0, "solver step schedule invalid");
    require(rel_gap_target >= 0.0 && rel_gap_target < 1.0, "solver rel_gap_target must be in [0,1)");
    require(patience > 0 && random_candidates >= 0, "solver patience/random_candidates invalid");
  }
};

enum class CertificateConstraint { psd, box, weighted_trace, weighted_frobenius, row_sup };

inline std::string_view to_string(CertificateConstraint c) {
  switch (c) {
    case CertificateConstraint::psd: return "psd";
    case CertificateConstraint::box: return "box";
    case CertificateConstraint::weighted_trace: return "weighted_trace";
    case CertificateConstraint::weighted_frobenius: return "weighted_frobenius";
    case CertificateConstraint::row_sup: return "row_sup";
  }
  return "unknown";
}

/// A violated constraint with a separating hyperplane: every X in ST_mu has
/// <normal, X> <= offset while the tested matrix has <normal, M> > offset.
struct Violation {
  CertificateConstraint constraint;
  Matrix normal;
  double offset = 0.0;
};

/// Returns std::nullopt when M is in ST_mu (within tolerances), otherwise the
/// first violated constraint in the order psd, box, trace, frobenius, row-sup.
inline std::optional<Violation> separation_oracle(const Matrix& m, const ProductDistribution& mu) {
  require(m.rows() == m.cols() && m.rows() == mu.dim(), "separation_oracle: dimension mismatch");
  require(m.allFinite(), "separation_oracle: non-finite input");
  require(is_symmetric(m), "separation_oracle: matrix is not symmetric");
  const Eigen::Index n = m.rows();
  const Vector& w = mu.means();
  if (n == 0) return std::nullopt;

  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.eigenvalues()[0] < -kPsdTolerance) {
    const Vector v = es.eigenvectors().col(0);
    return Violation{CertificateConstraint::psd, -v * v.transpose(), 0.0};
  }

  Eigen::Index bi = 0, bj = 0;
  const double big = m.cwiseAbs().maxCoeff(&bi, &bj);
  if (big > 1.0 + kCertificateTolerance) {
    Matrix h = Matrix::Zero(n, n);
    const double s = m(bi, bj) > 0 ? 1.0 : -1.0;
    h(bi, bj) += 0.5 * s;
    h(bj, bi) += 0.5 * s;
    return Violation{CertificateConstraint::box, h, 1.0};
  }

  if (weighted_trace(m, w) > 1.0 + kCertificateTolerance) {
    return Violation{CertificateConstraint::weighted_trace, Matrix(w.asDiagonal()), 1.0};
  }

  // Convex constraints f(M) <= 1 are cut by their linearization at M:
  // <g, X> <= 1 - f(M) + <g, M>.
  const double frob = weighted_frobenius_sq(m, w);
  if (frob > 1.0 + kCertificateTolerance) {
    const Matrix g = 2.0 * (w * w.transpose()).cwiseProduct(m);
    return Violation{CertificateConstraint::weighted_frobenius, g, 1.0 - frob + (g.cwiseProduct(m)).sum()};
  }

  const double rs = row_sup(m, w);
  if (rs > 1.0 + kCertificateTolerance) {
    Matrix g = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index j = 0;
      m.row(i).cwiseAbs().maxCoeff(&j);
      g(i, j) += 2.0 * w[i] * m(i, j);
    }
    const Matrix h = 0.5 * (g + g.transpose());
    return Violation{CertificateConstraint::row_sup, h, 1.0 - rs + (h.cwiseProduct(m)).sum()};
  }
  return std::nullopt;
}

namespace detail {

inline Matrix project_psd(const Matrix& y) {
  const Matrix s = 0.5 * (y + y.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  const Vector clipped = es.eigenvalues().cwiseMax(0.0);
  Matrix out = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

inline Matrix project_box(const Matrix& y) { return y.cwiseMax(-1.0).cwiseMin(1.0); }

inline Matrix project_weighted_trace(const Matrix& y, const Vector& mu) {
  const double norm_sq = mu.squaredNorm();
  const double excess = weighted_trace(y, mu) - 1.0;
  if (excess <= 0.0 || norm_sq == 0.0) return y;
  Matrix out = y;
  out.diagonal() -= (excess / norm_sq) * mu;
  return out;
}

/// Finds lambda >= 0 with f(lambda) = 1 for a continuous nonincreasing f
/// with f(0) > 1 and f -> something <= 1.
template <class F>
double solve_decreasing(F&& f) {
  double lo = 0.0, hi = 1.0;
  int guard = 0;
  while (f(hi) > 1.0 && guard++ < 200) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (f(mid) > 1.0) lo = mid;
    else hi = mid;
  }
  return hi;
}

inline Matrix project_weighted_frobenius(const Matrix& y, const Vector& mu) {
  const Matrix w = mu * mu.transpose();
  const Matrix y2 = y.cwiseAbs2();
  if ((w.cwiseProduct(y2)).sum() <= 1.0) return y;
  const double lambda = solve_decreasing([&](double l) {
    return (w.cwiseProduct(y2).array() / (1.0 + l * w.array()).square()).sum();
  });
  return (y.array() / (1.0 + lambda * w.array())).matrix();
}

/// Euclidean projection onto { X : sum_i mu_i max_j X_ij^2 <= 1 }.
inline Matrix project_row_sup(const Matrix& y, const Vector& mu) {
  const Eigen::Index n = y.rows();
  const Eigen::Index cols = y.cols();
  if (row_sup(y, mu) <= 1.0) return y;

  // Per row: magnitudes sorted descending and their prefix sums.
  std::vector<std::vector<double>> sorted(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> prefix(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& a = sorted[static_cast<std::size_t>(i)];
    a.resize(static_cast<std::size_t>(cols));
    for (Eigen::Index j = 0; j < cols; ++j) a[static_cast<std::size_t>(j)] = std::abs(y(i, j));
    std::sort(a.begin(), a.end(), std::greater<>());
    auto& p = prefix[static_cast<std::size_t>(i)];
    p.resize(a.size() + 1, 0.0);
    for (std::size_t j = 0; j < a.size(); ++j) p[j + 1] = p[j] + a[j];
  }

  // argmin_c sum_j (a_j - c)_+^2 + kappa c^2: c = P_m / (m + kappa) for the
  // first m with c >= a_{m+1}.
  auto cap = [&](Eigen::Index i, double kappa) {
    const auto& a = sorted[static_cast<std::size_t>(i)];
    const auto& p = prefix[static_cast<std::size_t>(i)];
    for (std::size_t m = 1; m <= a.size(); ++m) {
      const double c = p[m] / (static_cast<double>(m) + kappa);
      const double next = m < a.size() ? a[m] : 0.0;
      if (c >= next) return c;
    }
    return 0.0;
  };
  auto caps = [&](double lambda) {
    Vector c(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      c[i] = mu[i] > 0.0 ? cap(i, lambda * mu[i]) : sorted[static_cast<std::size_t>(i)].front();
    }
    return c;
  };
  const double lambda = solve_decreasing([&](double l) { return mu.dot(caps(l).cwiseAbs2()); });
  const Vector c = caps(lambda);
  Matrix out = y;
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = y.row(i).cwiseMax(-c[i]).cwiseMin(c[i]);
  return out;
}

/// Dykstra's alternating projections onto ST_mu starting at z.
inline Matrix dykstra_project(const Matrix& z, const Vector& mu, int iters) {
  const Eigen::Index n = z.rows();
  Matrix x = z;
  std::array<Matrix, 5> increments;
  for (auto& p : increments) p = Matrix::Zero(n, n);
  for (int it = 0; it < iters; ++it) {
    const Matrix before = x;
    for (std::size_t s = 0; s < increments.size(); ++s) {
      const Matrix y = x + increments[s];
      switch (s) {
        case 0: x = project_psd(y); break;
        case 1: x = project_box(y); break;
        case 2: x = project_weighted_trace(y, mu); break;
        case 3: x = project_weighted_frobenius(y, mu); break;
        default: x = project_row_sup(y, mu); break;
      }
      increments[s] = y - x;
    }
    if ((x - before).norm() <= 1e-10 * std::max(1.0, x.norm())) break;
  }
  return x;
}

/// Nearest-direction feasible point: symmetrize, clip to psd, rescale by the
/// gauge so every constraint holds.
inline Matrix make_feasible(const Matrix& x, const ProductDistribution& mu) {
  Matrix r = project_psd(x);
  const double g = measure_certificate(r, mu).gauge();
  if (g > 1.0) r /= g * (1.0 + 1e-12);
  return r;
}

}  // namespace detail

struct CertificateResult {
  /// Feasible point of ST_mu.
  Matrix certificate;
  /// <A, certificate>.
  double value = 0.0;
  /// Value of the best rank-one warm-start candidate.
  double warm_start_value = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Best feasible value after each ascent iteration (non-decreasing).
  std::vector<double> history;
};

/// Approximately maximizes <A, M> over M in ST_mu. Never returns an
/// infeasible matrix; `converged` is false when the iteration budget ran out
/// before the improvement criterion was met.
inline CertificateResult maximize_certificate(const Matrix& a, const ProductDistribution& mu,
                                              const SolverConfig& cfg = {}) {
  cfg.validate();
  require(a.rows() == a.cols() && a.rows() == mu.dim(), "maximize_certificate: dimension mismatch");
  require(a.allFinite(), "maximize_certificate: non-finite objective");
  require(is_symmetric(a, 1e-9), "maximize_certificate: objective is not symmetric");
  const Eigen::Index n = a.rows();
  const Matrix obj = 0.5 * (a + a.transpose());

  CertificateResult out;
  out.certificate = Matrix::Zero(n, n);
  const double scale = obj.norm();
  if (n == 0 || scale == 0.0) {
    out.converged = true;
    return out;
  }

  // Rank-one warm starts y y^T with y a dual-norm witness; all are in ST_mu.
  auto consider = [&](const Matrix& candidate) {
    const double v = obj.cwiseProduct(candidate).sum();
    if (v > out.value) {
      out.value = v;
      out.certificate = candidate;
    }
  };
  auto rank_one = [&](const Vector& direction) {
    const Vector y = vector_dual_norm(direction, mu).witness;
    consider(y * y.transpose());
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    Matrix e = Matrix::Zero(n, n);
    e(i, i) = 1.0;
    consider(e);
    rank_one(obj.row(i).transpose());
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(obj);
  rank_one(es.eigenvectors().col(n - 1));
  Rng rng(cfg.seed);
  for (int r = 0; r < cfg.random_candidates; ++r) {
    Vector s(n);
    for (Eigen::Index i = 0; i < n; ++i) s[i] = rng.bernoulli(0.5) ? 1.0 : -1.0;
    rank_one(s);
  }
  out.warm_start_value = out.value;

  const Matrix direction = obj / scale;
  Matrix iterate = out.certificate;
  int calm = 0;
  for (int t = 0; t < cfg.max_iters; ++t) {
    const double step = cfg.step_schedule.initial * static_cast<double>(n) /
                        (1.0 + cfg.step_schedule.decay * static_cast<double>(t));
    iterate = detail::dykstra_project(iterate + step * direction, mu.means(), cfg.dykstra_iters);
    const Matrix feasible = detail::make_feasible(iterate, mu);
    const double previous = out.value;
    consider(feasible);
    out.history.push_back(out.value);
    out.iterations = t + 1;
    const double gain = out.value - previous;
    if (gain <= cfg.rel_gap_target * std::abs(out.value)) {
      if (++calm >= cfg.patience) {
        out.converged = true;
        break;
      }
    } else {
      calm = 0;
    }
  }
  return out;
}

}  // namespace robustkit
