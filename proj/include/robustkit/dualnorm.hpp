#pragma once

// Geometry of the test-vector set
//
//   T_mu  = { y : |y_i| <= 1,  sum_i mu_i y_i^2 <= 1 }
//
// and of its PSD relaxation
//
//   ST_mu = { M psd : |M_ij| <= 1,  sum_i mu_i M_ii <= 1,
//             sum_ij mu_i mu_j M_ij^2 <= 1,  sum_i mu_i max_j M_ij^2 <= 1 },
//
// together with the closeness measures between binary product distributions
// that these sets certify.

#include "robustkit/core.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace robustkit {

/// Minimum eigenvalue accepted as PSD by the certificate validator.
inline constexpr double kPsdTolerance = 1e-8;
/// Slack on the linear and quadratic certificate constraints.
inline constexpr double kCertificateTolerance = 1e-9;
/// Slack on the test-vector constraints.
inline constexpr double kTestVectorTolerance = 1e-12;

/// Mean vector of a binary product distribution over {0,1}^n.
class ProductDistribution {
 public:
  ProductDistribution() = default;

  explicit ProductDistribution(Vector means) : means_(std::move(means)) {
    for (Eigen::Index i = 0; i < means_.size(); ++i) {
      const double m = means_[i];
      require(std::isfinite(m) && m >= 0.0 && m <= 1.0,
              "product distribution mean " + std::to_string(i) + " outside [0,1]");
    }
  }

  const Vector& means() const { return means_; }
  Eigen::Index dim() const { return means_.size(); }
  double operator[](Eigen::Index i) const { return means_[i]; }

  /// Largest mean; the certificate sets are defined for max_mean() <= 2/3.
  double max_mean() const { return means_.size() ? means_.maxCoeff() : 0.0; }

 private:
  Vector means_;
};

inline bool is_test_vector(const Vector& y, const ProductDistribution& mu,
                           double tol = kTestVectorTolerance) {
  if (y.size() != mu.dim() || !y.allFinite()) return false;
  if (y.size() && y.cwiseAbs().maxCoeff() > 1.0 + tol) return false;
  return mu.means().dot(y.cwiseAbs2()) <= 1.0 + tol;
}

/// The left-hand sides of every ST_mu constraint for a symmetric matrix.
struct CertificateMeasures {
  double min_eigenvalue = 0.0;
  double max_abs_entry = 0.0;
  double weighted_trace = 0.0;         // sum_i mu_i M_ii
  double weighted_frobenius_sq = 0.0;  // sum_ij mu_i mu_j M_ij^2
  double row_sup = 0.0;                // sum_i mu_i max_j M_ij^2

  /// Smallest s >= 0 with M / s satisfying the four gauge constraints
  /// (PSD is not a gauge and is ignored here).
  double gauge() const {
    return std::max({max_abs_entry, weighted_trace, std::sqrt(weighted_frobenius_sq),
                     std::sqrt(row_sup)});
  }
};

inline double weighted_trace(const Matrix& m, const Vector& mu) { return mu.dot(m.diagonal()); }

inline double weighted_frobenius_sq(const Matrix& m, const Vector& mu) {
  return (mu.transpose() * m.cwiseAbs2() * mu)(0, 0);
}

inline double row_sup(const Matrix& m, const Vector& mu) {
  if (m.size() == 0) return 0.0;
  return mu.dot(m.cwiseAbs2().rowwise().maxCoeff());
}

inline double min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

inline CertificateMeasures measure_certificate(const Matrix& m, const ProductDistribution& mu) {
  require(m.rows() == m.cols() && m.rows() == mu.dim(), "certificate dimension mismatch");
  CertificateMeasures out;
  out.min_eigenvalue = min_eigenvalue(m);
  out.max_abs_entry = m.size() ? m.cwiseAbs().maxCoeff() : 0.0;
  out.weighted_trace = weighted_trace(m, mu.means());
  out.weighted_frobenius_sq = weighted_frobenius_sq(m, mu.means());
  out.row_sup = row_sup(m, mu.means());
  return out;
}

inline bool is_symmetric(const Matrix& m, double tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.size() ? m.cwiseAbs().maxCoeff() : 0.0);
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

/// Membership test for ST_mu.
inline bool is_certificate(const Matrix& m, const ProductDistribution& mu) {
  if (m.rows() != mu.dim() || !is_symmetric(m) || !m.allFinite()) return false;
  const auto c = measure_certificate(m, mu);
  return c.min_eigenvalue >= -kPsdTolerance && c.max_abs_entry <= 1.0 + kCertificateTolerance &&
         c.weighted_trace <= 1.0 + kCertificateTolerance &&
         c.weighted_frobenius_sq <= 1.0 + kCertificateTolerance &&
         c.row_sup <= 1.0 + kCertificateTolerance;
}

// ---------------------------------------------------------------------------
// ||x||_mu = sup_{y in T_mu} <y, x>

struct DualNormResult {
  double value = 0.0;
  Vector witness;
};

/// Exact water-filling for ||x||_mu.
///
/// The Lagrangian maximizer is y_i(lambda) = sign(x_i) min(1, |x_i| / (2 lambda mu_i)).
/// Coordinate i is clipped exactly when lambda <= |x_i| / (2 mu_i), so after
/// sorting these breakpoints the active constraint sum_i mu_i y_i^2 = 1 is
/// solved in closed form on each segment. Coordinates with mu_i = 0 take
/// y_i = sign(x_i) and never enter the quadratic constraint.
inline DualNormResult vector_dual_norm(const Vector& x, const ProductDistribution& mu) {
  require(x.size() == mu.dim(), "vector_dual_norm: dimension mismatch");
  require(x.allFinite(), "vector_dual_norm: non-finite input");
  const Eigen::Index n = x.size();
  const Vector& m = mu.means();

  DualNormResult out;
  out.witness = Vector::Zero(n);

  std::vector<Eigen::Index> weighted;
  double weighted_mass = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x[i] == 0.0) continue;
    if (m[i] == 0.0) {
      out.witness[i] = x[i] > 0 ? 1.0 : -1.0;
    } else {
      weighted.push_back(i);
      weighted_mass += m[i];
    }
  }

  auto sign = [](double v) { return v > 0 ? 1.0 : -1.0; };

  if (weighted_mass <= 1.0) {
    for (auto i : weighted) out.witness[i] = sign(x[i]);
  } else {
    // Breakpoints in decreasing order; the first j are clipped on segment j.
    auto breakpoint = [&](Eigen::Index i) { return std::abs(x[i]) / (2.0 * m[i]); };
    std::stable_sort(weighted.begin(), weighted.end(), [&](Eigen::Index a, Eigen::Index b) {
      return breakpoint(a) > breakpoint(b);
    });
    const std::size_t k = weighted.size();
    std::vector<double> suffix_chi(k + 1, 0.0);  // sum over free coords of x^2/mu
    for (std::size_t j = k; j-- > 0;) {
      const auto i = weighted[j];
      suffix_chi[j] = suffix_chi[j + 1] + x[i] * x[i] / m[i];
    }

    double clipped_mass = 0.0;
    double lambda = 0.0;
    double best_violation = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      if (clipped_mass >= 1.0) break;
      const double candidate = std::sqrt(suffix_chi[j] / (4.0 * (1.0 - clipped_mass)));
      const double upper = j == 0 ? std::numeric_limits<double>::infinity() : breakpoint(weighted[j - 1]);
      const double lower = breakpoint(weighted[j]);
      const double violation = std::max({0.0, candidate - upper, lower - candidate});
      if (violation < best_violation) {
        best_violation = violation;
        lambda = candidate;
      }
      if (violation == 0.0) break;
      clipped_mass += m[weighted[j]];
    }
    for (auto i : weighted) {
      out.witness[i] = sign(x[i]) * std::min(1.0, std::abs(x[i]) / (2.0 * lambda * m[i]));
    }
    // Absorb rounding so the witness is feasible, never infeasible by an ulp.
    const double q = m.dot(out.witness.cwiseAbs2());
    if (q > 1.0) out.witness /= std::sqrt(q);
  }
  out.value = out.witness.dot(x);
  return out;
}

// ---------------------------------------------------------------------------
// Distances between binary product distributions

/// Squared Hellinger distance between Bern(a) and Bern(b), with the
/// convention H^2 = sum (sqrt p - sqrt q)^2 (no factor 1/2), so TV <= sqrt(2) H.
inline double hellinger_sq_bernoulli(double a, double b) {
  require(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0, "hellinger_sq_bernoulli: mean outside [0,1]");
  const double d1 = std::sqrt(a) - std::sqrt(b);
  const double d0 = std::sqrt(1.0 - a) - std::sqrt(1.0 - b);
  return d1 * d1 + d0 * d0;
}

/// Exact total variation by enumerating all 2^n atoms.
inline double tv_exact(const ProductDistribution& p, const ProductDistribution& q) {
  require(p.dim() == q.dim(), "tv_exact: dimension mismatch");
  require(p.dim() <= 20, "tv_exact: n > 20 is too large to enumerate");
  const auto n = static_cast<int>(p.dim());
  std::vector<double> pa{1.0}, qa{1.0};
  pa.reserve(std::size_t{1} << n);
  qa.reserve(std::size_t{1} << n);
  for (int i = 0; i < n; ++i) {
    const std::size_t half = pa.size();
    pa.resize(2 * half);
    qa.resize(2 * half);
    for (std::size_t a = 0; a < half; ++a) {
      pa[half + a] = pa[a] * p[i];
      pa[a] *= 1.0 - p[i];
      qa[half + a] = qa[a] * q[i];
      qa[a] *= 1.0 - q[i];
    }
  }
  double sum = 0.0;
  for (std::size_t a = 0; a < pa.size(); ++a) sum += std::abs(pa[a] - qa[a]);
  return std::min(1.0, 0.5 * sum);
}

/// min(1, sqrt(2) * sqrt(sum_i H^2(p_i, q_i))): a certified TV upper bound at any n.
inline double tv_upper_bound_product(const ProductDistribution& p, const ProductDistribution& q) {
  require(p.dim() == q.dim(), "tv_upper_bound_product: dimension mismatch");
  double h2 = 0.0;
  for (Eigen::Index i = 0; i < p.dim(); ++i) h2 += hellinger_sq_bernoulli(p[i], q[i]);
  return std::min(1.0, std::sqrt(2.0 * h2));
}

/// max( sum_{i<=k} |d_i| , sqrt(sum_{i>k} d_i^2 / p_i) ) with d = p - q,
/// coordinates ordered by |d_i|/p_i descending (ties by index) and k the
/// longest prefix with sum_{i<=k} p_i <= 1. Requires p_i <= 2/3.
inline double tv_characterization(const ProductDistribution& p, const ProductDistribution& q) {
  require(p.dim() == q.dim(), "tv_characterization: dimension mismatch");
  require(p.max_mean() <= 2.0 / 3.0 + 1e-12, "tv_characterization: base means must be <= 2/3");
  const Eigen::Index n = p.dim();
  const Vector delta = p.means() - q.means();

  auto ratio = [&](Eigen::Index i) {
    const double d = std::abs(delta[i]);
    if (d == 0.0) return 0.0;
    return p[i] == 0.0 ? std::numeric_limits<double>::infinity() : d / p[i];
  };
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return ratio(a) > ratio(b); });

  double prefix_mass = 0.0;
  double l1_head = 0.0;
  double chi_tail = 0.0;
  bool in_head = true;
  for (auto i : order) {
    if (in_head && prefix_mass + p[i] <= 1.0) {
      prefix_mass += p[i];
      l1_head += std::abs(delta[i]);
    } else {
      in_head = false;
      if (delta[i] != 0.0) chi_tail += delta[i] * delta[i] / p[i];
    }
  }
  return std::max(l1_head, std::sqrt(chi_tail));
}

}  // namespace robustkit
