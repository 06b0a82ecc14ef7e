#pragma once

// Weighted filter for robust learning of binary product distributions.
//
// Pipeline: preprocess (drop near-constant coordinates, flip coordinates with
// empirical mean >= 1/2), then repeatedly find a certificate A in ST_{mu(S)}
// approximately maximizing <A, poff(Sigma(w))>, score every active sample by
// (X_i - mu(w))^T A (X_i - mu(w)) and down-weight the top-scoring 2*eps mass
// proportionally to score, until the certificate value drops below
// C * eps * log^2(1/eps).

#include "robustkit/convexopt.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

namespace robustkit {

struct WeightedSampleSet {
  /// N x n outcomes stored as 0.0 / 1.0.
  Matrix samples;
  /// Nonnegative weights, sum <= 1.
  Vector weights;

  Eigen::Index size() const { return samples.rows(); }
  Eigen::Index dim() const { return samples.cols(); }

  Eigen::Index nnz() const { return (weights.array() > 0.0).count(); }

  static WeightedSampleSet uniform(const BinaryMatrix& raw) {
    require(raw.rows() > 0, "sample set is empty");
    WeightedSampleSet s;
    s.samples = raw.cast<double>();
    s.weights = Vector::Constant(raw.rows(), 1.0 / static_cast<double>(raw.rows()));
    return s;
  }
};

/// w in Gamma_N: nonnegative with total mass at most 1.
inline bool in_gamma(const Vector& w, double tol = 1e-12) {
  return (w.array() >= 0.0).all() && w.sum() <= 1.0 + tol;
}

struct PreprocessReport {
  std::vector<Eigen::Index> dropped_low;
  std::vector<Eigen::Index> dropped_high;
  std::vector<Eigen::Index> flipped;
  /// Original indices of the surviving coordinates, in column order.
  std::vector<Eigen::Index> kept;
  Eigen::Index original_dim = 0;
  double epsilon_inflation = 1.2;

  /// Maps means over the kept coordinates back to the original frame.
  Vector map_back(const Vector& kept_means) const {
    require(kept_means.size() == static_cast<Eigen::Index>(kept.size()), "map_back: dimension mismatch");
    Vector full = Vector::Zero(original_dim);
    for (auto i : dropped_high) full[i] = 1.0;
    for (std::size_t c = 0; c < kept.size(); ++c) full[kept[c]] = kept_means[static_cast<Eigen::Index>(c)];
    for (auto i : flipped) full[i] = 1.0 - full[i];
    return full;
  }
};

struct FilterConfig {
  SolverConfig solver;
  /// Stopping constant C; the loop stops once the certificate value is at
  /// most 2 * C * eps' * log^2(1/eps') (the factor 2 absorbs the solver's
  /// approximation), with eps' = epsilon_inflation * eps.
  double stop_constant = 0.25;
  double max_epsilon = 0.05;
  double epsilon_inflation = 1.2;
  /// Weights below this are snapped to zero so nnz decreases bitwise.
  double weight_floor = 1e-15;
  /// Removing more than budget_factor * eps total mass ends the run.
  double budget_factor = 3.0;
  Eigen::Index min_samples = 2;

  double stop_threshold(double eps) const {
    const double e = epsilon_inflation * eps;
    const double l = std::log(1.0 / e);
    return 2.0 * stop_constant * e * l * l;
  }
};

inline Vector column_means(const Matrix& x) {
  return x.colwise().mean().transpose();
}

inline Vector column_means(const BinaryMatrix& raw) {
  Vector counts = Vector::Zero(raw.cols());
  for (Eigen::Index r = 0; r < raw.rows(); ++r)
    for (Eigen::Index c = 0; c < raw.cols(); ++c) counts[c] += raw(r, c);
  return counts / static_cast<double>(raw.rows());
}

/// Drops coordinates with empirical mean < eps/n or > 1 - eps/n and flips
/// coordinates with mean >= 1/2. The result carries uniform weights 1/N.
inline std::pair<WeightedSampleSet, PreprocessReport> preprocess(const BinaryMatrix& raw, double eps,
                                                                  const FilterConfig& cfg = {}) {
  require(raw.rows() >= std::max<Eigen::Index>(2, cfg.min_samples), "preprocess: need at least 2 samples");
  require(eps > 0.0 && eps <= cfg.max_epsilon, "preprocess: eps outside (0, max_epsilon]");
  const Eigen::Index n = raw.cols();
  const Vector means = column_means(raw);

  PreprocessReport report;
  report.original_dim = n;
  report.epsilon_inflation = cfg.epsilon_inflation;
  const double edge = eps / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (means[i] < edge) {
      report.dropped_low.push_back(i);
    } else if (means[i] > 1.0 - edge) {
      report.dropped_high.push_back(i);
    } else {
      report.kept.push_back(i);
      if (means[i] >= 0.5) report.flipped.push_back(i);
    }
  }

  WeightedSampleSet out;
  const auto kept = static_cast<Eigen::Index>(report.kept.size());
  std::vector<bool> flip(static_cast<std::size_t>(n), false);
  for (auto i : report.flipped) flip[static_cast<std::size_t>(i)] = true;
  out.samples.resize(raw.rows(), kept);
  for (Eigen::Index c = 0; c < kept; ++c) {
    const auto i = report.kept[static_cast<std::size_t>(c)];
    const bool f = flip[static_cast<std::size_t>(i)];
    for (Eigen::Index r = 0; r < raw.rows(); ++r) out.samples(r, c) = f ? 1.0 - raw(r, i) : raw(r, i);
  }
  out.weights = Vector::Constant(raw.rows(), 1.0 / static_cast<double>(raw.rows()));
  return {std::move(out), std::move(report)};
}

/// Row block size for the O(N n^2) passes.
inline constexpr Eigen::Index kRowBlock = 1 << 13;

/// mu(w) = sum_i (w_i / ||w||_1) X_i.
inline Vector weighted_mean(const WeightedSampleSet& s) {
  const double total = s.weights.sum();
  if (!(total > 0.0)) throw NumericalError("weighted_mean: zero total weight");
  return (s.samples.transpose() * s.weights) / total;
}

/// poff(Sigma(w)) with Sigma(w) = sum_i w_i (X_i - mu(w))(X_i - mu(w))^T,
/// using the raw (unnormalized) weights.
inline Matrix weighted_cov_offdiag(const WeightedSampleSet& s) {
  const double total = s.weights.sum();
  if (!(total > 0.0)) throw NumericalError("weighted_cov_offdiag: zero total weight");
  const Vector mu = weighted_mean(s);
  // sum_i w_i X_i X_i^T - ||w||_1 mu mu^T, accumulated over fixed row blocks.
  Matrix sigma = Matrix::Zero(s.dim(), s.dim());
  for (Eigen::Index start = 0; start < s.size(); start += kRowBlock) {
    const Eigen::Index len = std::min(kRowBlock, s.size() - start);
    const auto rows = s.samples.middleRows(start, len);
    sigma.noalias() += rows.transpose() * (s.weights.segment(start, len).asDiagonal() * rows);
  }
  sigma.noalias() -= total * mu * mu.transpose();
  sigma = 0.5 * (sigma + sigma.transpose());
  sigma.diagonal().setZero();
  return sigma;
}

/// tau_i = (X_i - center)^T A (X_i - center) for every row.
inline Vector certificate_scores(const Matrix& samples, const Vector& center, const Matrix& a) {
  Vector out(samples.rows());
  for (Eigen::Index start = 0; start < samples.rows(); start += kRowBlock) {
    const Eigen::Index len = std::min(kRowBlock, samples.rows() - start);
    const Matrix centered = samples.middleRows(start, len).rowwise() - center.transpose();
    out.segment(start, len) = (centered * a).cwiseProduct(centered).rowwise().sum();
  }
  return out;
}

struct FilterStepResult {
  double removed_mass = 0.0;
  double max_score = 0.0;
  /// Rows zeroed by this step.
  Eigen::Index deactivated = 0;
};

inline FilterStepResult filter_step_with_scores(WeightedSampleSet& s, const Vector& scores,
                                                std::vector<Eigen::Index> active, double eps,
                                                double weight_floor = 1e-15) {
  // Scores of a PSD certificate are nonnegative; clamp rounding noise.
  auto score = [&](Eigen::Index i) { return std::max(0.0, scores[i]); };
  std::stable_sort(active.begin(), active.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return score(a) > score(b); });
  const double tau_max = score(active.front());
  if (!(tau_max > 0.0)) throw NumericalError("filter_step: all scores are zero");

  FilterStepResult out;
  out.max_score = tau_max;
  double prefix = 0.0;
  for (auto i : active) {
    prefix += s.weights[i];
    const double before = s.weights[i];
    double after = (1.0 - score(i) / tau_max) * before;
    if (after < weight_floor) after = 0.0;
    s.weights[i] = after;
    out.removed_mass += before - after;
    if (after == 0.0) ++out.deactivated;
    if (prefix > 2.0 * eps) break;
  }
  return out;
}

/// One down-weighting step: sort active points by score, take the shortest
/// prefix whose weight exceeds 2*eps, and set w_i <- (1 - tau_i/tau_max) w_i on
/// that prefix. Throws NumericalError if every active score is zero.
inline FilterStepResult filter_step(WeightedSampleSet& s, const Matrix& a, double eps,
                                    double weight_floor = 1e-15) {
  require(a.rows() == s.dim() && a.cols() == s.dim(), "filter_step: certificate dimension mismatch");
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s.weights[i] > 0.0) active.push_back(i);
  if (active.empty()) throw NumericalError("filter_step: no active samples");

  const Vector mu = weighted_mean(s);
  const Vector scores = certificate_scores(s.samples, mu, a);
  return filter_step_with_scores(s, scores, active, eps, weight_floor);
}

struct FilterIteration {
  /// Certificate value <A, poff(Sigma(w))> at the start of the iteration.
  double certificate_value = 0.0;
  /// Cumulative mass removed after this iteration.
  double removed_total = 0.0;
  /// Active samples after this iteration.
  Eigen::Index nnz = 0;
  double max_score = 0.0;
  /// Mass removed this iteration from rows labelled clean / corrupted
  /// (only filled when labels are supplied).
  double removed_good = 0.0;
  double removed_bad = 0.0;
};

struct FilterTrace {
  std::vector<FilterIteration> iterations;
  /// Certificate value of the final weights (the termination certificate).
  double final_certificate_value = 0.0;
  double stop_threshold = 0.0;
  bool budget_exhausted = false;
};

struct LearnResult {
  ProductDistribution estimate;
  FilterTrace trace;
  PreprocessReport report;
  /// Final weights over the input rows.
  Vector weights;
  /// Constraint base mu(S) after preprocessing (kept coordinates only).
  Vector base_means;
};

/// Robust estimate of the mean vector from an eps-corrupted sample matrix.
/// `corrupted_rows`, when supplied, labels rows for the good/bad removal audit.
/// eps == 0 means no corruption: the empirical mean is returned with zero
/// filter iterations.
inline LearnResult robust_learn(const BinaryMatrix& raw, double eps, const FilterConfig& cfg = {},
                                const std::vector<bool>* corrupted_rows = nullptr) {
  cfg.solver.validate();
  require(eps >= 0.0 && eps <= cfg.max_epsilon, "robust_learn: eps outside [0, max_epsilon]");
  require(raw.rows() >= std::max<Eigen::Index>({2, cfg.min_samples, raw.cols() + 1}),
          "robust_learn: need N >= max(n + 1, min_samples)");
  require(!corrupted_rows || corrupted_rows->size() == static_cast<std::size_t>(raw.rows()),
          "robust_learn: label vector size mismatch");

  LearnResult out;
  if (eps == 0.0) {
    const Vector m = column_means(raw);
    out.estimate = ProductDistribution(m.cwiseMax(0.0).cwiseMin(1.0));
    out.report.original_dim = raw.cols();
    for (Eigen::Index i = 0; i < raw.cols(); ++i) out.report.kept.push_back(i);
    out.weights = Vector::Constant(raw.rows(), 1.0 / static_cast<double>(raw.rows()));
    out.base_means = m;
    return out;
  }

  auto [s, report] = preprocess(raw, eps, cfg);
  out.report = std::move(report);
  out.trace.stop_threshold = cfg.stop_threshold(eps);
  const Eigen::Index n = s.dim();
  const double initial_mass = s.weights.sum();

  if (n > 0) {
    out.base_means = column_means(s.samples);
    const ProductDistribution base(out.base_means);
    SolverConfig solver = cfg.solver;
    const double step_eps = cfg.epsilon_inflation * eps;

    for (Eigen::Index t = 0; t <= s.size(); ++t) {
      const Matrix cov = weighted_cov_offdiag(s);
      solver.seed = derive_seed(cfg.solver.seed, static_cast<std::uint64_t>(t));
      const CertificateResult cert = maximize_certificate(cov, base, solver);
      out.trace.final_certificate_value = cert.value;
      if (cert.value <= out.trace.stop_threshold) break;
      if (initial_mass - s.weights.sum() > cfg.budget_factor * eps) {
        out.trace.budget_exhausted = true;
        break;
      }

      std::vector<Eigen::Index> active;
      for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s.weights[i] > 0.0) active.push_back(i);
      const Vector mu = weighted_mean(s);
      const Vector scores = certificate_scores(s.samples, mu, cert.certificate);
      const Vector before = s.weights;
      FilterStepResult step;
      try {
        step = filter_step_with_scores(s, scores, std::move(active), step_eps, cfg.weight_floor);
      } catch (const NumericalError&) {
        break;  // all active scores zero: nothing left to certify against
      }

      FilterIteration rec;
      rec.certificate_value = cert.value;
      rec.removed_total = initial_mass - s.weights.sum();
      rec.nnz = s.nnz();
      rec.max_score = step.max_score;
      if (corrupted_rows) {
        for (Eigen::Index i = 0; i < s.size(); ++i) {
          const double d = before[i] - s.weights[i];
          if ((*corrupted_rows)[static_cast<std::size_t>(i)]) rec.removed_bad += d;
          else rec.removed_good += d;
        }
      }
      out.trace.iterations.push_back(rec);
      if (s.nnz() == 0) throw NumericalError("robust_learn: every sample was filtered out");
    }
  }

  const Vector kept = n > 0 ? weighted_mean(s) : Vector();
  out.estimate = ProductDistribution(out.report.map_back(kept).cwiseMax(0.0).cwiseMin(1.0));
  out.weights = std::move(s.weights);
  return out;
}

}  // namespace robustkit
