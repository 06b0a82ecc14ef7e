#pragma once

// Moment-matched bias distributions, the hard pair of n-qubit states built
// from them, and exact / Monte-Carlo distances between the outcome laws of
// non-adaptive single-qubit measurements on that pair.
//
// Conditioned on a shared bias t, qubit i of state l is
// (1 - t)|u_i><u_i| + t|u_i^perp><u_i^perp|, i.e. Bloch vector (1 - 2t) u_i,
// with t ~ p_l. Measuring along axis v_i and recording bit 1 for outcome -1,
//   Pr[F_i = 1 | t] = (1 - c_i)/2 (1 - t) + (1 + c_i)/2 t,   c_i = <v_i, u_i>.

#include "robustkit/core.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <numeric>
#include <optional>

namespace robustkit {

/// Finite distribution on the real line.
struct DiscreteDistribution {
  std::vector<double> atoms;
  std::vector<double> probs;

  double moment(int r) const {
    double s = 0.0;
    for (std::size_t a = 0; a < atoms.size(); ++a) s += probs[a] * std::pow(atoms[a], r);
    return s;
  }
  double total() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }
};

struct MomentMatchedPair {
  DiscreteDistribution p1;
  DiscreteDistribution p2;
  Eigen::Index m = 0;
  Eigen::Index n = 0;
  int k = 0;
  double eps_mix = 0.0;
  /// ||D1 - D2||_1 of the matching signed measure (at most 2).
  double signed_l1 = 0.0;

  /// max_{0 <= r <= k} |E_p1[t^r] - E_p2[t^r]| in the frame t * n / m, where
  /// every moment is O(2^r); raw moments of t are smaller by (m/n)^r.
  double scaled_moment_residual() const {
    const double s = static_cast<double>(n) / static_cast<double>(m);
    double worst = 0.0;
    for (int r = 0; r <= k; ++r) {
      double a = 0.0, b = 0.0;
      for (std::size_t i = 0; i < p1.atoms.size(); ++i) a += p1.probs[i] * std::pow(p1.atoms[i] * s, r);
      for (std::size_t i = 0; i < p2.atoms.size(); ++i) b += p2.probs[i] * std::pow(p2.atoms[i] * s, r);
      worst = std::max(worst, std::abs(a - b));
    }
    return worst;
  }

  double moment_residual() const {
    double worst = 0.0;
    for (int r = 0; r <= k; ++r) worst = std::max(worst, std::abs(p1.moment(r) - p2.moment(r)));
    return worst;
  }
};

namespace detail {

/// min c^T x subject to A x = b, x >= 0 (two-phase tableau simplex with
/// Bland's rule). Returns nullopt when infeasible. Sized for a handful of
/// rows and a few hundred columns.
inline std::optional<Vector> simplex_min(const Matrix& a_in, const Vector& b_in, const Vector& c) {
  const Eigen::Index rows = a_in.rows(), cols = a_in.cols();
  Matrix a = a_in;
  Vector b = b_in;
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (b[r] < 0) {
      a.row(r) *= -1.0;
      b[r] *= -1.0;
    }
  }
  // Tableau columns: [x (cols) | artificials (rows) | rhs].
  const Eigen::Index width = cols + rows;
  Matrix t = Matrix::Zero(rows, width + 1);
  t.leftCols(cols) = a;
  t.block(0, cols, rows, rows).setIdentity();
  t.col(width) = b;
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(rows));
  std::iota(basis.begin(), basis.end(), cols);
  const double tol = 1e-12;

  auto run = [&](const Vector& cost, Eigen::Index allowed) {
    for (int guard = 0; guard < 100000; ++guard) {
      // Reduced costs over allowed columns.
      Eigen::Index enter = -1;
      for (Eigen::Index j = 0; j < allowed; ++j) {
        double rc = cost[j];
        for (Eigen::Index r = 0; r < rows; ++r) rc -= cost[basis[static_cast<std::size_t>(r)]] * t(r, j);
        if (rc < -tol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      Eigen::Index leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (t(r, enter) > tol) {
          const double ratio = t(r, width) / t(r, enter);
          if (ratio < best - tol ||
              (ratio <= best + tol && leave >= 0 && basis[static_cast<std::size_t>(r)] < basis[static_cast<std::size_t>(leave)])) {
            best = ratio;
            leave = r;
          }
        }
      }
      if (leave < 0) return false;  // unbounded
      t.row(leave) /= t(leave, enter);
      for (Eigen::Index r = 0; r < rows; ++r)
        if (r != leave && t(r, enter) != 0.0) t.row(r) -= t(r, enter) * t.row(leave);
      basis[static_cast<std::size_t>(leave)] = enter;
    }
    throw NumericalError("simplex: iteration limit reached");
  };

  Vector phase1 = Vector::Zero(width);
  phase1.tail(rows).setOnes();
  run(phase1, width);
  double infeas = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r)
    if (basis[static_cast<std::size_t>(r)] >= cols) infeas += t(r, width);
  if (infeas > 1e-9 * std::max(1.0, b.cwiseAbs().maxCoeff())) return std::nullopt;
  // Drive zero-level artificials out of the basis where possible.
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (basis[static_cast<std::size_t>(r)] < cols) continue;
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (std::abs(t(r, j)) > 1e-9) {
        t.row(r) /= t(r, j);
        for (Eigen::Index q = 0; q < rows; ++q)
          if (q != r && t(q, j) != 0.0) t.row(q) -= t(q, j) * t.row(r);
        basis[static_cast<std::size_t>(r)] = j;
        break;
      }
    }
  }
  Vector phase2 = Vector::Zero(width);
  phase2.head(cols) = c;
  phase2.tail(rows).setConstant(1e6);  // redundant rows keep a zero artificial
  if (!run(phase2, cols)) throw NumericalError("simplex: unbounded objective");

  Vector x = Vector::Zero(cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    if (basis[static_cast<std::size_t>(r)] < cols) x[basis[static_cast<std::size_t>(r)]] = t(r, width);
  return x;
}

}  // namespace detail

/// Builds p1 = (1-eps) delta_{m/n} + eps D1 and p2 = (1-eps) delta_{(m+sqrt m)/n} + eps D2
/// with matching moments 0..k and D1, D2 supported on [0, 2m/n].
///
/// In the frame z = (t - m/n) / (m/n) in [-1, 1] the signed measure p = D1 - D2
/// must satisfy sum_g p_g z_g^r = ((1-eps)/eps) m^{-r/2} for r = 1..k and
/// sum_g p_g = 0. The l1-minimal such p on a uniform grid is found by LP, its
/// support re-solved exactly, and D_l = p^{+/-} + (1 - ||p||_1/2) delta_0.
inline MomentMatchedPair build_moment_matched(Eigen::Index m, Eigen::Index n, int k, double eps_mix,
                                              int grid_size) {
  require(m >= 4, "build_moment_matched: m must be at least 4");
  require(n >= 2 * m, "build_moment_matched: need n >= 2m so the support fits in [0,1]");
  require(k >= 0, "build_moment_matched: k must be nonnegative");
  require(eps_mix > 0.0 && eps_mix < 0.5, "build_moment_matched: eps_mix outside (0, 1/2)");
  require(grid_size >= 2 * k + 2, "build_moment_matched: grid_size < 2k + 2");

  MomentMatchedPair out;
  out.m = m;
  out.n = n;
  out.k = k;
  out.eps_mix = eps_mix;
  const double scale = static_cast<double>(m) / static_cast<double>(n);
  const double sm = std::sqrt(static_cast<double>(m));

  Vector z(grid_size);
  for (int g = 0; g < grid_size; ++g) z[g] = -1.0 + 2.0 * g / (grid_size - 1);
  Vector pm = Vector::Zero(grid_size);

  if (k > 0) {
    const Eigen::Index rows = k + 1;
    Matrix vander(rows, grid_size);
    for (int g = 0; g < grid_size; ++g)
      for (int r = 0; r <= k; ++r) vander(r, g) = std::pow(z[g], r);
    Vector rhs(rows);
    rhs[0] = 0.0;
    for (int r = 1; r <= k; ++r) rhs[r] = (1.0 - eps_mix) / eps_mix * std::pow(sm, -r);

    Matrix a(rows, 2 * grid_size);
    a << vander, -vander;
    const auto x = detail::simplex_min(a, rhs, Vector::Ones(2 * grid_size));
    if (!x) throw NumericalError("build_moment_matched: moment system infeasible on this grid");
    pm = x->head(grid_size) - x->tail(grid_size);

    // Re-solve on the support for full precision.
    std::vector<int> support;
    for (int g = 0; g < grid_size; ++g)
      if (std::abs(pm[g]) > 1e-14) support.push_back(g);
    if (!support.empty()) {
      Matrix sub(rows, static_cast<Eigen::Index>(support.size()));
      for (std::size_t s = 0; s < support.size(); ++s) sub.col(static_cast<Eigen::Index>(s)) = vander.col(support[s]);
      const Vector refined = sub.fullPivLu().solve(rhs);
      if ((sub * refined - rhs).cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, rhs.cwiseAbs().maxCoeff())) {
        bool same_sign = true;
        for (std::size_t s = 0; s < support.size(); ++s)
          same_sign = same_sign && refined[static_cast<Eigen::Index>(s)] * pm[support[s]] > 0.0;
        if (same_sign) {
          pm.setZero();
          for (std::size_t s = 0; s < support.size(); ++s) pm[support[s]] = refined[static_cast<Eigen::Index>(s)];
        }
      }
    }
  }

  out.signed_l1 = pm.cwiseAbs().sum();
  if (out.signed_l1 > 2.0 + 1e-12) {
    throw NumericalError("build_moment_matched: l1 mass " + std::to_string(out.signed_l1) +
                         " > 2; increase m or grid_size");
  }
  const double common = std::max(0.0, 1.0 - 0.5 * out.signed_l1);

  auto assemble = [&](double atom, int sign) {
    DiscreteDistribution d;
    d.atoms.push_back(atom);
    d.probs.push_back(1.0 - eps_mix);
    for (int g = 0; g < grid_size; ++g) {
      double w = std::max(0.0, sign * pm[g]);
      if (w <= 0.0) continue;
      d.atoms.push_back(scale * (1.0 + z[g]));
      d.probs.push_back(eps_mix * w);
    }
    // The common part sits at the translation origin.
    if (common > 0.0) {
      d.atoms.push_back(scale);
      d.probs.push_back(eps_mix * common);
    }
    return d;
  };
  out.p1 = assemble(scale, +1);
  out.p2 = assemble(scale + sm / static_cast<double>(n), -1);

  for (const auto* d : {&out.p1, &out.p2}) {
    if (std::abs(d->total() - 1.0) > 1e-12) throw NumericalError("build_moment_matched: probabilities do not sum to 1");
    for (double t : d->atoms)
      if (t < -1e-15 || t > 2.0 * scale + 1e-15) throw NumericalError("build_moment_matched: atom outside [0, 2m/n]");
  }
  if (out.moment_residual() > 1e-9 || out.scaled_moment_residual() > 1e-9)
    throw NumericalError("build_moment_matched: moment residual above 1e-9");
  return out;
}

// ---------------------------------------------------------------------------
// Binomial distances

inline double log_binomial_pmf(Eigen::Index n, Eigen::Index s, double t) {
  if (t <= 0.0) return s == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (t >= 1.0) return s == n ? 0.0 : -std::numeric_limits<double>::infinity();
  const double dn = static_cast<double>(n), ds = static_cast<double>(s);
  return std::lgamma(dn + 1.0) - std::lgamma(ds + 1.0) - std::lgamma(dn - ds + 1.0) + ds * std::log(t) +
         (dn - ds) * std::log1p(-t);
}

/// 1/2 sum_s |Bin(n, t1)(s) - Bin(n, t2)(s)|.
inline double binomial_tv(Eigen::Index n, double t1, double t2) {
  require(n >= 0, "binomial_tv: n must be nonnegative");
  require(t1 >= 0.0 && t1 <= 1.0 && t2 >= 0.0 && t2 <= 1.0, "binomial_tv: parameters outside [0,1]");
  double s = 0.0;
  for (Eigen::Index i = 0; i <= n; ++i) s += std::abs(std::exp(log_binomial_pmf(n, i, t1)) - std::exp(log_binomial_pmf(n, i, t2)));
  return 0.5 * s;
}

/// TV between the laws of n i.i.d. Bern(t) bits with t ~ p1 versus t ~ p2;
/// the Hamming weight is sufficient, so this is a TV of binomial mixtures.
/// For the hard pair this equals the trace distance of the two states.
inline double binomial_mixture_tv(Eigen::Index n, const DiscreteDistribution& p1, const DiscreteDistribution& p2) {
  double s = 0.0;
  for (Eigen::Index i = 0; i <= n; ++i) {
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < p1.atoms.size(); ++j) a += p1.probs[j] * std::exp(log_binomial_pmf(n, i, p1.atoms[j]));
    for (std::size_t j = 0; j < p2.atoms.size(); ++j) b += p2.probs[j] * std::exp(log_binomial_pmf(n, i, p2.atoms[j]));
    s += std::abs(a - b);
  }
  return 0.5 * s;
}

/// The separation guaranteed for the hard pair:
/// (1 - eps) TV(Bin(n, m/n), Bin(n, (m + sqrt m)/n)) - eps.
inline double hard_pair_trace_distance_lower_bound(const MomentMatchedPair& pair) {
  const double n = static_cast<double>(pair.n), m = static_cast<double>(pair.m);
  return (1.0 - pair.eps_mix) * binomial_tv(pair.n, m / n, (m + std::sqrt(m)) / n) - pair.eps_mix;
}

// ---------------------------------------------------------------------------
// Hard state pair and outcome likelihoods

struct HardStatePair {
  /// Hidden eigenbasis axis of each qubit.
  Eigen::Matrix<double, Eigen::Dynamic, 3> axes;
  MomentMatchedPair pair;

  Eigen::Index size() const { return axes.rows(); }

  const DiscreteDistribution& law(int which) const {
    require(which == 1 || which == 2, "hard state index must be 1 or 2");
    return which == 1 ? pair.p1 : pair.p2;
  }
};

/// Uniform (Haar-induced) random axes for every qubit.
inline HardStatePair make_hard_pair(MomentMatchedPair pair, std::uint64_t seed) {
  HardStatePair h;
  h.axes.resize(pair.n, 3);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < pair.n; ++i) h.axes.row(i) = rng.unit_vector3().transpose();
  h.pair = std::move(pair);
  return h;
}

/// c_i = <v_i, u_i> between measurement and hidden axes.
inline Vector axis_overlaps(const HardStatePair& h, const Eigen::Matrix<double, Eigen::Dynamic, 3>& meas) {
  require(meas.rows() == h.size(), "measurement axes have the wrong qubit count");
  return (meas.cwiseProduct(h.axes)).rowwise().sum().cwiseMax(-1.0).cwiseMin(1.0);
}

/// log of sum_a exp(v_a), stable.
inline double log_sum_exp(const std::vector<double>& v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

/// log P_l(F) = log E_{t ~ p_l} prod_i Pr[F_i | t].
inline double outcome_log_likelihood_from_overlaps(const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>& f,
                                                   const Vector& overlaps, const DiscreteDistribution& law) {
  require(f.size() == overlaps.size(), "outcome row has the wrong length");
  std::vector<double> terms;
  terms.reserve(law.atoms.size());
  for (std::size_t a = 0; a < law.atoms.size(); ++a) {
    if (law.probs[a] <= 0.0) continue;
    const double t = law.atoms[a];
    double s = std::log(law.probs[a]);
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      const double one = 0.5 * (1.0 - overlaps[i]) * (1.0 - t) + 0.5 * (1.0 + overlaps[i]) * t;
      s += f[i] ? std::log(one) : std::log1p(-one);
    }
    terms.push_back(s);
  }
  return log_sum_exp(terms);
}

inline double outcome_log_likelihood(const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>& f,
                                     const Eigen::Matrix<double, Eigen::Dynamic, 3>& meas, const HardStatePair& h,
                                     int which) {
  return outcome_log_likelihood_from_overlaps(f, axis_overlaps(h, meas), h.law(which));
}

inline double outcome_likelihood(const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>& f,
                                 const Eigen::Matrix<double, Eigen::Dynamic, 3>& meas, const HardStatePair& h,
                                 int which) {
  return std::exp(outcome_log_likelihood(f, meas, h, which));
}

struct TvEstimate {
  /// E_{F ~ P2}[max(0, 1 - P1(F)/P2(F))].
  double estimate = 0.0;
  double std_error = 0.0;
  /// E_{F ~ P2}[|1 - P1(F)/P2(F)|] / 2.
  double symmetric_estimate = 0.0;
  double symmetric_std_error = 0.0;
};

inline constexpr Eigen::Index kMonteCarloShard = 256;

/// Monte-Carlo TV between the outcome laws of state 1 and state 2 measured
/// along `meas`, sampling outcomes from state 2. Shard s of kMonteCarloShard
/// draws uses derive_seed(seed, s).
inline TvEstimate tv_between_outcome_laws(const HardStatePair& h, const Eigen::Matrix<double, Eigen::Dynamic, 3>& meas,
                                          Eigen::Index mc_samples, std::uint64_t seed) {
  require(mc_samples >= 1000, "tv_between_outcome_laws: need at least 1000 Monte-Carlo samples");
  const Vector c = axis_overlaps(h, meas);
  const auto& law2 = h.pair.p2;
  const Eigen::Index n = h.size();
  double s1 = 0.0, s2 = 0.0, a1 = 0.0, a2 = 0.0;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1> f(n);
  for (Eigen::Index start = 0, shard = 0; start < mc_samples; start += kMonteCarloShard, ++shard) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(shard)));
    const Eigen::Index stop = std::min(mc_samples, start + kMonteCarloShard);
    for (Eigen::Index draw = start; draw < stop; ++draw) {
      const double t = law2.atoms[rng.categorical(law2.probs)];
      for (Eigen::Index i = 0; i < n; ++i) {
        const double one = 0.5 * (1.0 - c[i]) * (1.0 - t) + 0.5 * (1.0 + c[i]) * t;
        f[i] = rng.uniform() < one ? 1 : 0;
      }
      const double ratio = std::exp(outcome_log_likelihood_from_overlaps(f, c, h.pair.p1) -
                                    outcome_log_likelihood_from_overlaps(f, c, law2));
      const double one_sided = std::max(0.0, 1.0 - ratio);
      const double sym = 0.5 * std::abs(1.0 - ratio);
      s1 += one_sided;
      s2 += one_sided * one_sided;
      a1 += sym;
      a2 += sym * sym;
    }
  }
  const double count = static_cast<double>(mc_samples);
  auto finish = [&](double sum, double sq, double& mean, double& se) {
    mean = sum / count;
    const double var = std::max(0.0, sq / count - mean * mean);
    se = std::sqrt(var / std::max(1.0, count - 1.0));
  };
  TvEstimate out;
  finish(s1, s2, out.estimate, out.std_error);
  finish(a1, a2, out.symmetric_estimate, out.symmetric_std_error);
  return out;
}

}  // namespace robustkit
