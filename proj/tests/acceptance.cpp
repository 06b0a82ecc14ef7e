// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance            run all ten
//   acceptance 4 7        run a subset
//
// Exit status is nonzero when any selected criterion fails.

#include "robustkit/harness.hpp"

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <set>

using namespace robustkit;
using namespace robustkit::harness;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string strf(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
std::string strf(const char* fmt, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

Vector uniform_means(Rng& rng, Eigen::Index n, double lo, double hi) {
  Vector m(n);
  for (Eigen::Index i = 0; i < n; ++i) m[i] = rng.uniform(lo, hi);
  return m;
}

// 1. tv_exact <= C min(1, tv_characterization), C = 8.
Outcome tv_characterization_soundness() {
  constexpr double C = 8.0;
  Rng rng(derive_seed(2024, 1));
  int violations = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(12));
    const Vector p = uniform_means(rng, n, 0.0, 2.0 / 3.0);
    Vector q;
    if (trial % 2 == 0) {
      q = uniform_means(rng, n, 0.0, 1.0);
    } else {
      // Nearby pairs across scales.
      const double scale = std::pow(10.0, rng.uniform(-4.0, 0.0));
      q = (p.array() + scale * (2.0 * uniform_means(rng, n, 0.0, 1.0).array() - 1.0)).cwiseMax(0.0).cwiseMin(1.0);
    }
    const ProductDistribution pp(p), qq(q);
    const double exact = tv_exact(pp, qq), bound = std::min(1.0, tv_characterization(pp, qq));
    if (exact > C * bound + 1e-12) ++violations;
    if (bound > 0.0) worst = std::max(worst, exact / bound);
  }
  return {violations == 0, strf("10000 pairs, C=%.0f, %d violations, max tv_exact/min(1,char)=%.3f", C, violations, worst)};
}

// 2. Water-filling dual norm against the grid oracle.
Outcome dual_norm_exactness() {
  Rng rng(derive_seed(2024, 2));
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(6));
    const Vector mu = uniform_means(rng, n, 0.01, 2.0 / 3.0);
    Vector x(n);
    const double scale = std::pow(10.0, rng.uniform(-3.0, 1.0));
    for (Eigen::Index i = 0; i < n; ++i) x[i] = scale * rng.normal();
    const double v = vector_dual_norm(x, ProductDistribution(mu)).value;
    const double g = oracles::grid_test_vector_max(x, mu);
    worst = std::max(worst, std::abs(v - g) / std::max(std::abs(g), 1e-300));
  }
  return {worst <= 1e-6, strf("1000 instances n<=6, max relative gap %.2e (tol 1e-6)", worst)};
}

// 3. Certificate solver vs brute force on 3x3.
Outcome certificate_quality() {
  Rng rng(derive_seed(2024, 3));
  double worst = 1e300;
  int infeasible = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Vector mu = uniform_means(rng, 3, 0.02, 2.0 / 3.0);
    Matrix a(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng.normal();
    SolverConfig cfg;
    cfg.seed = derive_seed(2024, 1000 + static_cast<std::uint64_t>(trial));
    const auto r = maximize_certificate(a, ProductDistribution(mu), cfg);
    if (separation_oracle(r.certificate, ProductDistribution(mu))) ++infeasible;
    const double brute = oracles::matrix_sup_bruteforce(a, mu, derive_seed(2024, 5000 + static_cast<std::uint64_t>(trial)));
    if (brute > 1e-12) worst = std::min(worst, r.value / brute);
  }
  return {worst >= 0.9 && infeasible == 0,
          strf("200 instances, min solver/brute ratio %.4f (need >= 0.9), %d infeasible outputs", worst, infeasible)};
}

// 4. Key invariant and termination certificate.
Outcome filter_invariants() {
  const Eigen::Index n = 50, N = 200000;
  const double eps = 0.02;
  const Vector truth = harness::detail::log_spaced_means(n, 0.02, 0.5);
  FilterConfig fc;
  int invariant_violations = 0, cert_violations = 0, exhausted = 0, iterations = 0;
  double worst_ratio = 0.0, worst_cert = 0.0;
  for (int run = 0; run < 100; ++run) {
    const auto strategy = run % 2 == 0 ? AdversaryStrategy::rare_inflate : AdversaryStrategy::mean_shift;
    const std::uint64_t seed = derive_seed(2024, 40000 + static_cast<std::uint64_t>(run));
    BinaryMatrix raw = harness::detail::draw_product_samples(truth, N, derive_seed(seed, 0));
    AdversaryOptions opt;
    opt.reference_means = truth;
    const auto mask = adversary_corrupt(raw, eps, strategy, derive_seed(seed, 1), opt);
    fc.solver.seed = derive_seed(seed, 2);
    const auto r = robust_learn(raw, eps, fc, &mask);
    double good = 0.0, bad = 0.0;
    for (const auto& it : r.trace.iterations) {
      good += it.removed_good;
      bad += it.removed_bad;
      if (good > bad) ++invariant_violations;
      if (bad > 0.0) worst_ratio = std::max(worst_ratio, good / bad);
    }
    iterations += static_cast<int>(r.trace.iterations.size());
    if (r.trace.budget_exhausted) ++exhausted;
    if (r.trace.final_certificate_value > r.trace.stop_threshold) ++cert_violations;
    worst_cert = std::max(worst_cert, r.trace.final_certificate_value / r.trace.stop_threshold);
  }
  const bool pass = invariant_violations == 0 && cert_violations == 0 && exhausted == 0 && iterations > 0;
  return {pass, strf("100 runs (50 per adversary), %d iterations, invariant violations %d, max good/bad %.3f, "
                     "final cert/threshold max %.3f (threshold %.4f = 2*%.2f*eps'*log^2(1/eps')), budget exhausted %d",
                     iterations, invariant_violations, worst_ratio, worst_cert, fc.stop_threshold(eps),
                     fc.stop_constant, exhausted)};
}

// 5. Exponent gap under rare_inflate.
Outcome robust_vs_naive() {
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::robust_classical;
  cfg.n = 50;
  cfg.samples = 1000;
  cfg.sample_rule = SampleRule::inverse_square;
  cfg.eps_grid = {0.005, 0.01, 0.02, 0.04};
  cfg.adversary = AdversaryStrategy::rare_inflate;
  cfg.trials = 20;
  cfg.seed = derive_seed(2024, 5);
  const auto out = run_experiment(cfg);
  const auto filter = mean_by_eps(out.table, "filter", "tv_char");
  const auto naive = mean_by_eps(out.table, "naive", "tv_char");
  std::vector<double> xe, yf, yn;
  for (std::size_t i = 0; i < filter.size(); ++i) {
    xe.push_back(filter[i].first);
    yf.push_back(filter[i].second);
    yn.push_back(naive[i].second);
  }
  const double sf = loglog_slope(xe, yf), sn = loglog_slope(xe, yn);
  std::string means;
  for (std::size_t i = 0; i < xe.size(); ++i) means += strf(" eps=%g:%.4f/%.4f", xe[i], yf[i], yn[i]);
  return {sf >= 0.8 && sn <= 0.6,
          strf("20 trials/eps, N=ceil(n/eps^2); filter exponent %.3f (need >= 0.8), naive exponent %.3f (need <= 0.6);"
               " mean tv_char filter/naive%s",
               sf, sn, means.c_str())};
}

// 6. Tomography end to end.
Outcome tomography_end_to_end() {
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::tomography;
  cfg.n = 8;
  cfg.near_pure = 2;
  cfg.near_pure_max_lambda = 0.01;
  cfg.n1 = cfg.n2 = 100000;
  cfg.adversary = AdversaryStrategy::none;
  cfg.eps_grid = {0.0, 0.02};
  cfg.trials = 50;
  cfg.seed = derive_seed(2024, 6);
  const auto out = run_experiment(cfg);
  std::vector<double> clean, dirty;
  for (const auto& r : out.table.rows) {
    if (r[8] != "trd_exact") continue;
    (std::stod(r[3]) == 0.0 ? clean : dirty).push_back(std::stod(r[9]));
  }
  const double eps = 0.02, bound = 15.0 * eps * std::log(1.0 / eps);
  const auto within = std::count_if(dirty.begin(), dirty.end(), [&](double d) { return d <= bound; });
  std::sort(clean.begin(), clean.end());
  std::sort(dirty.begin(), dirty.end());
  const double median_clean = 0.5 * (clean[24] + clean[25]);
  const double frac = static_cast<double>(within) / static_cast<double>(dirty.size());
  return {frac >= 0.9 && median_clean <= 0.01,
          strf("50 trials, n=8, N1=N2=1e5; eps=0.02: %.0f%% within %.3f (max %.4f, median %.4f); eps=0 median %.4f "
               "(need <= 0.01)",
               100.0 * frac, bound, dirty.back(), 0.5 * (dirty[24] + dirty[25]), median_clean)};
}

// 7. Fidelity of a qubit state against its diagonal part.
Outcome fidelity_grid() {
  int checked = 0, violations = 0, skipped = 0;
  double worst = 1e300;
  for (int s = 0; s <= 8; ++s) {
    const double s1 = 0.55 + 0.05 * s;
    for (int i = 1; i <= 30; ++i) {
      const double t = 0.01 * i;
      if (t * t > s1 * (1.0 - s1)) {
        ++skipped;  // not positive semidefinite
        continue;
      }
      oracles::Matrix2c rho, diag;
      rho << s1, t, t, 1.0 - s1;
      diag << s1, 0.0, 0.0, 1.0 - s1;
      const double f = oracles::dense_fidelity(rho, diag);
      ++checked;
      worst = std::min(worst, f - (1.0 - 2.0 * t * t));
      if (f < 1.0 - 2.0 * t * t) ++violations;
    }
  }
  return {violations == 0 && checked > 0,
          strf("%d grid points (%d non-states skipped), %d violations, min F-(1-2t^2)=%.3e", checked, skipped,
               violations, worst)};
}

// 8. Lower-bound kit.
Outcome lowerbound_kit() {
  double worst_residual = 0.0;
  for (int k = 1; k <= 6; ++k) {
    const auto p = build_moment_matched(400, 1000000, k, 0.2, 201);
    worst_residual = std::max(worst_residual, p.scaled_moment_residual());
  }
  const double m = 400.0, n = 1e6;
  const double btv = binomial_tv(1000000, m / n, (m + std::sqrt(m)) / n);

  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::lowerbound;
  cfg.m = 32;
  cfg.k = 4;
  cfg.eps_mix = 0.3;
  cfg.grid_size = 201;
  cfg.n_grid = {64, 4096};
  cfg.mc_samples = 2000;
  cfg.seed = derive_seed(2024, 8);
  const auto out = run_experiment(cfg);
  double random_small = 0, random_large = 0, aligned_min = 1e300;
  for (const auto& r : out.table.rows) {
    const double tv = std::stod(r[5]);
    if (r[4] == "aligned") aligned_min = std::min(aligned_min, tv);
    else if (r[2] == "64") random_small = tv;
    else random_large = tv;
  }
  const double drop = random_small / std::max(random_large, 1e-300);
  const bool pass = worst_residual <= 1e-9 && std::abs(btv - 0.3829) <= 0.02 && drop >= 10.0 && aligned_min >= 0.2;
  return {pass, strf("moment residual k<=6 max %.2e; binomial_tv=%.4f (target 0.3829+-0.02); random-axes TV %.4f -> "
                     "%.5f (drop %.0fx, need >= 10x); aligned control min %.3f (need >= 0.2)",
                     worst_residual, btv, random_small, random_large, drop, aligned_min)};
}

// 9. Clean empirical mean deviation in the dual norm.
Outcome goodness_audit() {
  constexpr double C = 0.25;
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::regularity_audit;
  cfg.n = 30;
  cfg.samples = 1000000;
  cfg.eps_grid = {0.02};
  cfg.trials = 20;
  cfg.seed = derive_seed(2024, 9);
  const auto out = run_experiment(cfg);
  double worst = 0.0;
  int count = 0;
  for (const auto& r : out.table.rows) {
    if (r[8] != "mean_dual_norm_ratio") continue;
    worst = std::max(worst, std::stod(r[9]));
    ++count;
  }
  return {count == 20 && worst <= C,
          strf("20 seeds, N=1e6, n=30: max ||mu(T)-mu|| / (eps log(1/eps)) = %.4f (C=%.2f)", worst, C)};
}

// 10. Byte-identical reruns for every experiment kind, across thread counts.
Outcome determinism() {
  std::vector<ExperimentConfig> cfgs(4);
  cfgs[0].kind = ExperimentKind::robust_classical;
  cfgs[0].n = 20;
  cfgs[0].samples = 20000;
  cfgs[0].eps_grid = {0.01, 0.04};
  cfgs[0].trials = 2;
  cfgs[1].kind = ExperimentKind::tomography;
  cfgs[1].n = 4;
  cfgs[1].n1 = cfgs[1].n2 = 5000;
  cfgs[1].adversary = AdversaryStrategy::none;
  cfgs[1].eps_grid = {0.0, 0.02};
  cfgs[1].trials = 2;
  cfgs[2].kind = ExperimentKind::lowerbound;
  cfgs[2].m = 16;
  cfgs[2].k = 2;
  cfgs[2].grid_size = 41;
  cfgs[2].n_grid = {64, 256};
  cfgs[2].mc_samples = 1000;
  cfgs[3].kind = ExperimentKind::regularity_audit;
  cfgs[3].n = 20;
  cfgs[3].samples = 20000;
  cfgs[3].trials = 3;
  std::string mismatched;
  for (auto& c : cfgs) {
    c.seed = 77;
    const std::string first = to_csv(run_experiment(c).table);
    c.threads = 2;
    const std::string second = to_csv(run_experiment(c).table);
    if (first != second) mismatched += " " + to_string(c.kind);
  }
  return {mismatched.empty(), mismatched.empty() ? std::string("4 experiment kinds, identical CSV bytes across reruns "
                                                               "and thread counts")
                                                 : "mismatch in" + mismatched};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"TV characterization soundness", tv_characterization_soundness},
      {"dual-norm exactness", dual_norm_exactness},
      {"certificate solver quality", certificate_quality},
      {"filter invariants", filter_invariants},
      {"robust vs naive separation", robust_vs_naive},
      {"tomography end-to-end", tomography_end_to_end},
      {"fidelity vs diagonal part", fidelity_grid},
      {"lower-bound kit", lowerbound_kit},
      {"eps-goodness audit", goodness_audit},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %d. %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
