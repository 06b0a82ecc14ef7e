#pragma once

// Brute-force references for tests and benchmarks. Nothing in the library
// proper includes this header, and nothing here calls the routine it checks:
//
//   grid_test_vector_max        vs  vector_dual_norm      (dual function minimization)
//   matrix_sup_bruteforce       vs  maximize_certificate  (random search over psd factors)
//   dense_fidelity              vs  fidelity_qubit        (explicit 2x2 eigendecompositions)
//   naive_mean_estimator        baseline for the filter

#include "robustkit/dualnorm.hpp"

#include <Eigen/Eigenvalues>

#include <complex>

namespace robustkit::oracles {

/// Coordinatewise empirical mean.
inline ProductDistribution naive_mean_estimator(const BinaryMatrix& samples) {
  require(samples.rows() > 0, "naive_mean_estimator: empty input");
  Vector m = Vector::Zero(samples.cols());
  for (Eigen::Index r = 0; r < samples.rows(); ++r)
    for (Eigen::Index c = 0; c < samples.cols(); ++c) m[c] += samples(r, c);
  m /= static_cast<double>(samples.rows());
  return ProductDistribution(m.cwiseMax(0.0).cwiseMin(1.0));
}

/// sup_{y in T_mu} <y, x> by minimizing the convex dual function
///   D(l) = l + sum_i max_{|y_i| <= 1} (y_i |x_i| - l mu_i y_i^2)
/// over a uniform grid of `resolution` points, refined by golden-section
/// search. D(l) >= the supremum for every l, so the result never undershoots.
inline double grid_test_vector_max(const Vector& x, const Vector& mu, int resolution = 2000) {
  require(x.size() == mu.size(), "grid_test_vector_max: dimension mismatch");
  require(x.size() <= 6, "grid_test_vector_max: n > 6");
  require(resolution >= 3, "grid_test_vector_max: resolution too small");
  auto dual = [&](double l) {
    double d = l;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double a = std::abs(x[i]);
      const double q = l * mu[i];
      if (q <= 0.0 || a >= 2.0 * q) d += a - q;  // unconstrained optimum clipped at |y| = 1
      else d += a * a / (4.0 * q);
    }
    return d;
  };
  double top = 1.0;
  double chi = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (mu[i] > 0.0) {
      top = std::max(top, std::abs(x[i]) / (2.0 * mu[i]));
      chi += x[i] * x[i] / mu[i];
    }
  }
  top = 2.0 * std::max(top, std::sqrt(chi));

  int best = 0;
  double best_value = dual(0.0);
  for (int g = 1; g < resolution; ++g) {
    const double v = dual(top * g / (resolution - 1));
    if (v < best_value) {
      best_value = v;
      best = g;
    }
  }
  double lo = top * std::max(0, best - 1) / (resolution - 1);
  double hi = top * std::min(resolution - 1, best + 1) / (resolution - 1);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = hi - phi * (hi - lo), d = lo + phi * (hi - lo);
  double fc = dual(c), fd = dual(d);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - phi * (hi - lo);
      fc = dual(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + phi * (hi - lo);
      fd = dual(d);
    }
  }
  return std::min({best_value, fc, fd});
}

namespace detail {

/// Smallest s with M / s satisfying the box, trace, weighted Frobenius and
/// row-sup constraints (computed here without the library helpers).
inline double gauge(const Matrix& m, const Vector& mu) {
  const Eigen::Index n = m.rows();
  double box = 0.0, trace = 0.0, frob = 0.0, rows = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    trace += mu[i] * m(i, i);
    double row_max = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      box = std::max(box, std::abs(m(i, j)));
      frob += mu[i] * mu[j] * m(i, j) * m(i, j);
      row_max = std::max(row_max, m(i, j) * m(i, j));
    }
    rows += mu[i] * row_max;
  }
  return std::max({box, trace, std::sqrt(frob), std::sqrt(rows)});
}

inline double ratio(const Matrix& a, const Matrix& factor, const Vector& mu) {
  const Matrix m = factor * factor.transpose();
  const double g = gauge(m, mu);
  if (g <= 0.0) return 0.0;
  return std::max(0.0, (a.cwiseProduct(m)).sum()) / g;
}

}  // namespace detail

/// sup_{M in ST_mu} <A, M> for n <= 4. Every psd M is L L^T; since all
/// non-psd constraints are gauges, the best feasible multiple of L L^T
/// scores <A, L L^T> / gauge(L L^T). Random factors of every rank are
/// screened and the best few are polished by adaptive random-perturbation
/// hill climbing. Returns a value attained by a feasible matrix (a lower
/// bound on the supremum that is tight in practice).
inline double matrix_sup_bruteforce(const Matrix& a, const Vector& mu, std::uint64_t seed = 7,
                                    int screen = 3000, int polish_iters = 8000) {
  require(a.rows() == a.cols() && a.rows() == mu.size(), "matrix_sup_bruteforce: dimension mismatch");
  require(a.rows() <= 4, "matrix_sup_bruteforce: n > 4");
  const Eigen::Index n = a.rows();
  if (n == 0 || a.isZero(0.0)) return 0.0;
  Rng rng(seed);

  struct Candidate {
    Matrix factor;
    double value;
  };
  std::vector<Candidate> pool;
  for (int s = 0; s < screen; ++s) {
    const auto rank = static_cast<Eigen::Index>(1 + rng.below(static_cast<std::uint64_t>(n)));
    Matrix l = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < rank; ++j) l(i, j) = rng.normal();
    pool.push_back({l, detail::ratio(a, l, mu)});
  }
  std::partial_sort(pool.begin(), pool.begin() + 8, pool.end(),
                    [](const Candidate& x, const Candidate& y) { return x.value > y.value; });

  double best = pool.front().value;
  for (int c = 0; c < 8; ++c) {
    Matrix l = pool[static_cast<std::size_t>(c)].factor;
    double value = pool[static_cast<std::size_t>(c)].value;
    double sigma = 0.3 * std::max(1e-12, l.norm());
    int stale = 0;
    for (int it = 0; it < polish_iters && sigma > 1e-10 * std::max(1.0, l.norm()); ++it) {
      Matrix trial = l;
      // Perturb either one entry or the whole factor.
      if (rng.bernoulli(0.5)) {
        trial(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))),
              static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)))) += sigma * rng.normal();
      } else {
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < n; ++j) trial(i, j) += sigma * rng.normal() / static_cast<double>(n);
      }
      const double v = detail::ratio(a, trial, mu);
      if (v > value) {
        value = v;
        l = trial;
        stale = 0;
        sigma *= 1.2;
      } else if (++stale >= 60) {
        sigma *= 0.5;
        stale = 0;
      }
    }
    best = std::max(best, value);
  }
  return best;
}

/// ||A||_mu = sup_{M in ST_mu} |<A, M>| for n <= 4.
inline double matrix_dual_norm_bruteforce(const Matrix& a, const Vector& mu, std::uint64_t seed = 7) {
  return std::max(matrix_sup_bruteforce(a, mu, seed), matrix_sup_bruteforce(-a, mu, seed + 1));
}

using Matrix2c = Eigen::Matrix2cd;

inline void require_density(const Matrix2c& rho, const char* what) {
  require(rho.allFinite(), std::string(what) + ": non-finite entries");
  require((rho - rho.adjoint()).cwiseAbs().maxCoeff() <= 1e-10, std::string(what) + ": not Hermitian");
  require(std::abs(rho.trace() - 1.0) <= 1e-10, std::string(what) + ": trace is not 1");
  Eigen::SelfAdjointEigenSolver<Matrix2c> es(rho);
  require(es.eigenvalues().minCoeff() >= -1e-10, std::string(what) + ": not positive semidefinite");
}

/// F(rho, sigma) = (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 via explicit
/// eigendecompositions.
inline double dense_fidelity(const Matrix2c& rho, const Matrix2c& sigma) {
  require_density(rho, "dense_fidelity rho");
  require_density(sigma, "dense_fidelity sigma");
  Eigen::SelfAdjointEigenSolver<Matrix2c> er(rho);
  const Eigen::Vector2d root = er.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Matrix2c sqrt_rho = er.eigenvectors() * root.cast<std::complex<double>>().asDiagonal() *
                            er.eigenvectors().adjoint();
  Matrix2c inner = sqrt_rho * sigma * sqrt_rho;
  inner = 0.5 * (inner + inner.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix2c> ei(inner);
  const double tr = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return std::min(1.0, tr * tr);
}

/// 2x2 density matrix of Bloch vector c: (I + c . sigma) / 2.
inline Matrix2c density_from_bloch(const Eigen::Vector3d& c) {
  using cd = std::complex<double>;
  Matrix2c rho;
  rho << cd(1.0 + c.z(), 0.0), cd(c.x(), -c.y()), cd(c.x(), c.y()), cd(1.0 - c.z(), 0.0);
  return 0.5 * rho;
}

}  // namespace robustkit::oracles
