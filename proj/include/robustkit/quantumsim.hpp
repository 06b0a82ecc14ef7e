#pragma once

// Classical simulation of contaminated product mixed states measured one
// qubit at a time, outcome-level adversaries, and the two-round agnostic
// tomography pipeline built on robust_learn.
//
// Outcome encoding: measuring qubit j along Bloch axis u gives +1 with
// probability (1 + <u, c_j>) / 2. Bit 1 records outcome -1, so the bit mean
// is (1 - <u, c_j>) / 2; in a state's own eigenbasis that is its smaller
// eigenvalue.

#include "robustkit/filter.hpp"

#include <complex>
#include <fstream>
#include <sstream>
#include <string_view>

namespace robustkit {

inline constexpr double kBlochSlack = 1e-12;
inline constexpr double kAxisTolerance = 1e-6;

struct QubitState {
  Eigen::Vector3d bloch = Eigen::Vector3d::Zero();

  bool valid() const { return bloch.allFinite() && bloch.norm() <= 1.0 + kBlochSlack; }
  /// Eigenvalues (1 +- |c|) / 2; this is the smaller one.
  double min_eigenvalue() const { return 0.5 * (1.0 - bloch.norm()); }
};

/// n single-qubit states, one Bloch vector per row.
struct ProductMixedState {
  Eigen::Matrix<double, Eigen::Dynamic, 3> bloch;

  ProductMixedState() = default;
  explicit ProductMixedState(Eigen::Matrix<double, Eigen::Dynamic, 3> b) : bloch(std::move(b)) {
    for (Eigen::Index j = 0; j < bloch.rows(); ++j) {
      require(bloch.row(j).allFinite() && bloch.row(j).norm() <= 1.0 + kBlochSlack,
              "qubit " + std::to_string(j) + ": Bloch vector outside the unit ball");
    }
  }

  Eigen::Index size() const { return bloch.rows(); }
  QubitState qubit(Eigen::Index j) const { return {bloch.row(j).transpose()}; }
};

/// (1 - eps) * clean + eps * sum_m alpha_m * junk_m.
struct ContaminatedState {
  ProductMixedState clean;
  double eps = 0.0;
  std::vector<ProductMixedState> junk;
  std::vector<double> junk_weights;

  void validate() const {
    require(eps >= 0.0 && eps <= 1.0, "contamination eps outside [0,1]");
    require(junk.size() == junk_weights.size(), "junk components and weights differ in count");
    if (eps > 0.0) require(!junk.empty(), "eps > 0 needs at least one junk component");
    double total = 0.0;
    for (std::size_t m = 0; m < junk.size(); ++m) {
      require(junk_weights[m] >= 0.0, "junk weight is negative");
      require(junk[m].size() == clean.size(), "junk component has the wrong qubit count");
      total += junk_weights[m];
    }
    if (!junk.empty()) require(std::abs(total - 1.0) <= 1e-12, "junk weights do not sum to 1");
  }
};

enum class Pauli { X, Y, Z };

inline Eigen::Vector3d pauli_axis(Pauli p) {
  switch (p) {
    case Pauli::X: return Eigen::Vector3d::UnitX();
    case Pauli::Y: return Eigen::Vector3d::UnitY();
    case Pauli::Z: return Eigen::Vector3d::UnitZ();
  }
  return Eigen::Vector3d::UnitZ();
}

/// One unit Bloch axis per qubit.
struct MeasurementBasis {
  Eigen::Matrix<double, Eigen::Dynamic, 3> axes;

  static MeasurementBasis pauli(Eigen::Index n, Pauli p) {
    MeasurementBasis b;
    b.axes.resize(n, 3);
    b.axes.rowwise() = pauli_axis(p).transpose();
    return b;
  }

  static MeasurementBasis from_axes(Eigen::Matrix<double, Eigen::Dynamic, 3> axes) {
    for (Eigen::Index j = 0; j < axes.rows(); ++j) {
      require(axes.row(j).allFinite() && std::abs(axes.row(j).norm() - 1.0) <= 1e-12,
              "measurement axis " + std::to_string(j) + " is not unit norm");
    }
    return {std::move(axes)};
  }

  Eigen::Index size() const { return axes.rows(); }
};

/// Probability of bit 1 (outcome -1) per qubit and mixture component;
/// row 0 is the clean state, row m + 1 is junk component m.
inline Matrix bit_probabilities(const ContaminatedState& state, const MeasurementBasis& basis) {
  state.validate();
  const Eigen::Index n = state.clean.size();
  require(basis.size() == n, "measurement basis has the wrong qubit count");
  Matrix p(static_cast<Eigen::Index>(1 + state.junk.size()), n);
  auto fill = [&](Eigen::Index row, const ProductMixedState& s) {
    for (Eigen::Index j = 0; j < n; ++j)
      p(row, j) = std::clamp(0.5 * (1.0 - basis.axes.row(j).dot(s.bloch.row(j))), 0.0, 1.0);
  };
  fill(0, state.clean);
  for (std::size_t m = 0; m < state.junk.size(); ++m) fill(static_cast<Eigen::Index>(m + 1), state.junk[m]);
  return p;
}

/// Exact bit means of the contaminated outcome law.
inline Vector exact_bit_means(const ContaminatedState& state, const MeasurementBasis& basis) {
  const Matrix p = bit_probabilities(state, basis);
  Vector out = (1.0 - state.eps) * p.row(0).transpose();
  for (std::size_t m = 0; m < state.junk.size(); ++m)
    out += state.eps * state.junk_weights[m] * p.row(static_cast<Eigen::Index>(m + 1)).transpose();
  return out;
}

inline constexpr Eigen::Index kShardRows = 1 << 14;

/// Draws `count` single-copy outcomes. Rows are produced in shards of
/// kShardRows; shard s uses derive_seed(seed, s), so output is independent
/// of how shards are scheduled.
inline BinaryMatrix measure_samples(const ContaminatedState& state, const MeasurementBasis& basis,
                                    Eigen::Index count, std::uint64_t seed) {
  require(count >= 1, "measure_samples: count must be positive");
  const Matrix p = bit_probabilities(state, basis);
  const Eigen::Index n = state.clean.size();
  std::vector<double> mix{1.0 - state.eps};
  for (double a : state.junk_weights) mix.push_back(state.eps * a);

  BinaryMatrix out(count, n);
  for (Eigen::Index start = 0, shard = 0; start < count; start += kShardRows, ++shard) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(shard)));
    const Eigen::Index stop = std::min(count, start + kShardRows);
    for (Eigen::Index r = start; r < stop; ++r) {
      const auto comp = static_cast<Eigen::Index>(mix.size() == 1 ? 0 : rng.categorical(mix));
      for (Eigen::Index j = 0; j < n; ++j) out(r, j) = rng.uniform() < p(comp, j) ? 1 : 0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adversaries on outcome bits

enum class AdversaryStrategy { none, mean_shift, rare_inflate };

inline std::string_view to_string(AdversaryStrategy s) {
  switch (s) {
    case AdversaryStrategy::none: return "none";
    case AdversaryStrategy::mean_shift: return "mean_shift";
    case AdversaryStrategy::rare_inflate: return "rare_inflate";
  }
  return "none";
}

inline AdversaryStrategy parse_adversary(std::string_view name) {
  if (name == "none") return AdversaryStrategy::none;
  if (name == "mean_shift") return AdversaryStrategy::mean_shift;
  if (name == "rare_inflate") return AdversaryStrategy::rare_inflate;
  throw InvalidArgument("unknown adversary strategy '" + std::string(name) + "'");
}

struct AdversaryOptions {
  /// Coordinates set to 1 by rare_inflate; 0 means ceil(width_budget / eps),
  /// capped at n.
  Eigen::Index rare_count = 0;
  double width_budget = 0.25;
  /// Clean means used to rank coordinates; empirical means when empty.
  Vector reference_means;
};

inline Eigen::Index rare_inflate_width(double eps, Eigen::Index n, const AdversaryOptions& opt) {
  if (opt.rare_count > 0) return std::min(opt.rare_count, n);
  if (eps <= 0.0) return 0;
  return std::min<Eigen::Index>(n, static_cast<Eigen::Index>(std::ceil(opt.width_budget / eps - 1e-9)));
}

/// Replaces floor(eps * N) seeded rows in place and returns the mask of
/// replaced rows. mean_shift writes the single row that moves every
/// coordinate's mean furthest (1 where the mean is below 1/2, else 0);
/// rare_inflate sets the rarest coordinates to 1 and leaves the rest of the
/// replaced row as drawn.
inline std::vector<bool> adversary_corrupt(BinaryMatrix& samples, double eps, AdversaryStrategy strategy,
                                           std::uint64_t seed, const AdversaryOptions& opt = {}) {
  require(eps >= 0.0 && eps < 1.0, "adversary_corrupt: eps outside [0,1)");
  const Eigen::Index rows = samples.rows(), n = samples.cols();
  std::vector<bool> mask(static_cast<std::size_t>(rows), false);
  const auto budget = static_cast<Eigen::Index>(std::floor(eps * static_cast<double>(rows) + 1e-9));
  if (strategy == AdversaryStrategy::none || budget == 0 || n == 0) return mask;

  Vector means = opt.reference_means;
  if (means.size() == 0) means = samples.cast<double>().colwise().mean().transpose();
  require(means.size() == n, "adversary_corrupt: reference means have the wrong length");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(rows));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  for (Eigen::Index i = 0; i < budget; ++i) {
    const auto j = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(rows - i)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }

  if (strategy == AdversaryStrategy::mean_shift) {
    Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic> row(n);
    for (Eigen::Index c = 0; c < n; ++c) row[c] = means[c] < 0.5 ? 1 : 0;
    for (Eigen::Index i = 0; i < budget; ++i) {
      samples.row(order[static_cast<std::size_t>(i)]) = row;
      mask[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;
    }
    return mask;
  }

  std::vector<Eigen::Index> coords(static_cast<std::size_t>(n));
  std::iota(coords.begin(), coords.end(), Eigen::Index{0});
  std::stable_sort(coords.begin(), coords.end(), [&](Eigen::Index a, Eigen::Index b) { return means[a] < means[b]; });
  coords.resize(static_cast<std::size_t>(rare_inflate_width(eps, n, opt)));
  for (Eigen::Index i = 0; i < budget; ++i) {
    const auto r = order[static_cast<std::size_t>(i)];
    for (auto c : coords) samples(r, c) = 1;
    mask[static_cast<std::size_t>(r)] = true;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Two-round tomography

struct TomographyConfig {
  Eigen::Index n1 = 100000;
  Eigen::Index n2 = 100000;
  /// Corruption level handed to the learner.
  double eps = 0.0;
  AdversaryStrategy adversary = AdversaryStrategy::none;
  AdversaryOptions adversary_options;
  FilterConfig filter;
  /// Feed exact outcome means to the estimator instead of samples.
  bool stub_exact = false;
};

inline Vector learned_bit_means(const ContaminatedState& state, const MeasurementBasis& basis,
                                Eigen::Index count, const TomographyConfig& cfg, std::uint64_t seed) {
  if (cfg.stub_exact) return exact_bit_means(state, basis);
  BinaryMatrix bits = measure_samples(state, basis, count, derive_seed(seed, 0));
  adversary_corrupt(bits, cfg.eps, cfg.adversary, derive_seed(seed, 1), cfg.adversary_options);
  FilterConfig fc = cfg.filter;
  fc.solver.seed = derive_seed(seed, 2);
  return robust_learn(bits, cfg.eps, fc).estimate.means();
}

/// Round one: robust bit means in the X, Y and Z bases, mapped to Bloch
/// coordinates c = 1 - 2 * mean, each row clipped to the unit ball.
inline Eigen::Matrix<double, Eigen::Dynamic, 3> round_one_bloch_estimate(const ContaminatedState& state,
                                                                         const TomographyConfig& cfg,
                                                                         std::uint64_t seed) {
  const Eigen::Index n = state.clean.size();
  Eigen::Matrix<double, Eigen::Dynamic, 3> c(n, 3);
  const Pauli bases[] = {Pauli::X, Pauli::Y, Pauli::Z};
  for (int b = 0; b < 3; ++b) {
    const Vector m = learned_bit_means(state, MeasurementBasis::pauli(n, bases[b]), cfg.n1, cfg,
                                       derive_seed(seed, static_cast<std::uint64_t>(b)));
    c.col(b) = (1.0 - 2.0 * m.array()).matrix();
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const double r = c.row(j).norm();
    if (r > 1.0) c.row(j) /= r;
  }
  return c;
}

/// Unit axis along c_hat, or Z when |c_hat| < kAxisTolerance.
inline Eigen::Vector3d eigenbasis_from_bloch(const Eigen::Vector3d& c_hat) {
  const double r = c_hat.norm();
  if (!(r >= kAxisTolerance)) return Eigen::Vector3d::UnitZ();
  return c_hat / r;
}

struct TomographyResult {
  ProductMixedState estimate;
  Eigen::Matrix<double, Eigen::Dynamic, 3> round_one;
  MeasurementBasis axes;
  /// Learned smaller eigenvalue per qubit, in [0, 1/2].
  Vector lambda;
};

/// Round one fixes each qubit's eigenbasis; round two measures in that basis
/// and learns the smaller eigenvalue. Qubit j of the estimate has Bloch
/// vector (1 - 2 lambda_j) u_j.
inline TomographyResult agnostic_tomography(const ContaminatedState& state, const TomographyConfig& cfg,
                                            std::uint64_t seed) {
  state.validate();
  require(cfg.eps >= 0.0 && cfg.eps <= cfg.filter.max_epsilon, "agnostic_tomography: eps outside [0, max_epsilon]");
  const Eigen::Index n = state.clean.size();
  TomographyResult out;
  out.round_one = round_one_bloch_estimate(state, cfg, derive_seed(seed, 1));
  Eigen::Matrix<double, Eigen::Dynamic, 3> axes(n, 3);
  for (Eigen::Index j = 0; j < n; ++j) axes.row(j) = eigenbasis_from_bloch(out.round_one.row(j).transpose()).transpose();
  out.axes = MeasurementBasis::from_axes(axes);
  out.lambda = learned_bit_means(state, out.axes, cfg.n2, cfg, derive_seed(seed, 2)).cwiseMax(0.0).cwiseMin(0.5);
  Eigen::Matrix<double, Eigen::Dynamic, 3> est(n, 3);
  for (Eigen::Index j = 0; j < n; ++j) est.row(j) = (1.0 - 2.0 * out.lambda[j]) * axes.row(j);
  out.estimate = ProductMixedState(est);
  return out;
}

// ---------------------------------------------------------------------------
// Distances

/// Fidelity of two qubit states from their Bloch vectors:
/// tr(rho sigma) + 2 sqrt(det rho det sigma).
inline double fidelity_qubit(const QubitState& a, const QubitState& b) {
  require(a.valid() && b.valid(), "fidelity_qubit: invalid qubit state");
  const double da = std::max(0.0, 1.0 - a.bloch.squaredNorm());
  const double db = std::max(0.0, 1.0 - b.bloch.squaredNorm());
  return std::clamp(0.5 * (1.0 + a.bloch.dot(b.bloch) + std::sqrt(da * db)), 0.0, 1.0);
}

/// Product of per-qubit fidelities (fidelity is multiplicative on tensor products).
inline double fidelity_product(const ProductMixedState& a, const ProductMixedState& b) {
  require(a.size() == b.size(), "fidelity_product: qubit count mismatch");
  double f = 1.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) f *= fidelity_qubit(a.qubit(j), b.qubit(j));
  return f;
}

/// sqrt(1 - F), an upper bound on the trace distance.
inline double trace_distance_fidelity_bound(const ProductMixedState& a, const ProductMixedState& b) {
  return std::sqrt(std::max(0.0, 1.0 - fidelity_product(a, b)));
}

using ComplexMatrix = Eigen::MatrixXcd;

inline ComplexMatrix qubit_density(const Eigen::Vector3d& c) {
  using cd = std::complex<double>;
  ComplexMatrix rho(2, 2);
  rho << cd(1.0 + c.z(), 0.0), cd(c.x(), -c.y()), cd(c.x(), c.y()), cd(1.0 - c.z(), 0.0);
  return 0.5 * rho;
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline ComplexMatrix density_matrix(const ProductMixedState& s) {
  ComplexMatrix rho = ComplexMatrix::Ones(1, 1);
  for (Eigen::Index j = 0; j < s.size(); ++j) rho = kron(rho, qubit_density(s.bloch.row(j).transpose()));
  return rho;
}

inline ComplexMatrix density_matrix(const ContaminatedState& s) {
  s.validate();
  ComplexMatrix rho = (1.0 - s.eps) * density_matrix(s.clean);
  for (std::size_t m = 0; m < s.junk.size(); ++m) rho += s.eps * s.junk_weights[m] * density_matrix(s.junk[m]);
  return rho;
}

inline double trace_distance_dense(const ComplexMatrix& a, const ComplexMatrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "trace_distance: dimension mismatch");
  ComplexMatrix d = a - b;
  d = 0.5 * (d + d.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(d, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

/// 1/2 ||rho_a - rho_b||_1 from 2^n x 2^n density matrices.
template <class A, class B>
double trace_distance_exact(const A& a, const B& b, Eigen::Index nmax = 10) {
  auto qubits = [](const auto& s) {
    if constexpr (std::is_same_v<std::decay_t<decltype(s)>, ContaminatedState>) return s.clean.size();
    else return s.size();
  };
  require(qubits(a) == qubits(b), "trace_distance_exact: qubit count mismatch");
  require(qubits(a) <= nmax, "trace_distance_exact: n exceeds nmax");
  return trace_distance_dense(density_matrix(a), density_matrix(b));
}

// ---------------------------------------------------------------------------
// State description files
//
//   # comment
//   cX cY cZ          one line per clean qubit
//   EPS 0.02
//   JUNK 0.5          followed by n Bloch lines for this component

inline ContaminatedState parse_state(std::istream& in) {
  ContaminatedState s;
  std::vector<Eigen::Vector3d> clean;
  std::vector<std::vector<Eigen::Vector3d>> junk;
  bool eps_seen = false;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw InvalidArgument("state file line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head)) continue;
    std::string extra;
    if (head == "EPS") {
      if (!(ls >> s.eps) || (ls >> extra)) fail("expected 'EPS <value>'");
      eps_seen = true;
    } else if (head == "JUNK") {
      double w = 0.0;
      if (!(ls >> w) || (ls >> extra)) fail("expected 'JUNK <weight>'");
      s.junk_weights.push_back(w);
      junk.emplace_back();
    } else {
      Eigen::Vector3d c;
      std::istringstream vs(line);
      if (!(vs >> c.x() >> c.y() >> c.z()) || (vs >> extra)) fail("expected three Bloch coordinates");
      (junk.empty() ? clean : junk.back()).push_back(c);
    }
  }
  if (clean.empty()) throw InvalidArgument("state file: no qubits");
  if (junk.size() && !eps_seen) throw InvalidArgument("state file: JUNK block without EPS");
  auto to_state = [](const std::vector<Eigen::Vector3d>& rows) {
    Eigen::Matrix<double, Eigen::Dynamic, 3> b(static_cast<Eigen::Index>(rows.size()), 3);
    for (std::size_t j = 0; j < rows.size(); ++j) b.row(static_cast<Eigen::Index>(j)) = rows[j].transpose();
    return ProductMixedState(b);
  };
  s.clean = to_state(clean);
  for (const auto& j : junk) {
    if (j.size() != clean.size()) throw InvalidArgument("state file: junk component has the wrong qubit count");
    s.junk.push_back(to_state(j));
  }
  s.validate();
  return s;
}

inline ContaminatedState load_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open state file " + path);
  return parse_state(in);
}

}  // namespace robustkit
