#pragma once

// Experiment orchestration: config parsing, seeded sweeps, CSV output and
// SVG plots.
//
// Config is plain text, `key = value` lines under `[section]` headers,
// '#' or ';' starting a comment. Keys are addressed as section.key.

#include "robustkit/lowerbound.hpp"
#include "robustkit/oracles.hpp"
#include "robustkit/quantumsim.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace robustkit::harness {

inline constexpr const char* kResultSchema = "robustkit-results-v1";
inline constexpr const char* kLowerBoundSchema = "robustkit-lowerbound-v1";

inline const std::vector<std::string>& result_header() {
  static const std::vector<std::string> h{"schema", "experiment", "trial", "eps",       "n",     "samples",
                                          "adversary", "estimator", "metric", "value", "stderr"};
  return h;
}

inline const std::vector<std::string>& lowerbound_header() {
  static const std::vector<std::string> h{"schema", "trial", "n", "k", "axes", "tv_estimate", "stderr",
                                          "trace_distance_lower_bound"};
  return h;
}

/// Invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class ExperimentKind { robust_classical, tomography, lowerbound, regularity_audit };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::robust_classical: return "robust_classical";
    case ExperimentKind::tomography: return "tomography";
    case ExperimentKind::lowerbound: return "lowerbound";
    case ExperimentKind::regularity_audit: return "regularity_audit";
  }
  return "?";
}

inline ExperimentKind parse_kind(const std::string& s) {
  for (auto k : {ExperimentKind::robust_classical, ExperimentKind::tomography, ExperimentKind::lowerbound,
                 ExperimentKind::regularity_audit})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown experiment '" + s +
                    "'; expected robust_classical, tomography, lowerbound or regularity_audit");
}

enum class SampleRule { fixed, inverse_square };

// ---------------------------------------------------------------------------
// Key/value text

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace detail

inline KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + "missing key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (kv.count(full)) throw ConfigError(where + "duplicate key '" + full + "'");
    kv[full] = detail::trim(line.substr(eq + 1));
  }
  return kv;
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::robust_classical;
  int trials = 1;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string output_dir = ".";

  // Classical data and corruption; n is the qubit count for tomography.
  Eigen::Index n = 50;
  Eigen::Index samples = 200000;
  SampleRule sample_rule = SampleRule::fixed;
  double sample_scale = 1.0;
  std::vector<double> eps_grid{0.02};
  AdversaryStrategy adversary = AdversaryStrategy::rare_inflate;
  double width_budget = 0.25;
  double mean_min = 0.02;
  double mean_max = 0.5;

  FilterConfig filter;

  Eigen::Index n1 = 100000;
  Eigen::Index n2 = 100000;
  bool stub_exact = false;
  int near_pure = 2;
  double near_pure_max_lambda = 0.01;
  int junk_components = 2;

  Eigen::Index m = 32;
  int k = 4;
  std::vector<Eigen::Index> n_grid{64, 256, 1024, 4096};
  double eps_mix = 0.3;
  Eigen::Index mc_samples = 2000;
  int grid_size = 201;

  /// Sample count used at corruption level eps.
  Eigen::Index samples_at(double eps) const {
    if (sample_rule == SampleRule::fixed || eps <= 0.0) return samples;
    return std::max<Eigen::Index>(
        samples, static_cast<Eigen::Index>(std::ceil(sample_scale * static_cast<double>(n) / (eps * eps) - 1e-9)));
  }

  void validate() const {
    auto check = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    check(trials >= 1, "experiment.trials must be >= 1");
    check(threads >= 1, "experiment.threads must be >= 1");
    check(!output_dir.empty(), "experiment.output must name a directory");
    try {
      filter.solver.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("[solver] ") + e.what());
    }
    check(filter.stop_constant > 0.0, "filter.stop_constant must be positive");
    check(filter.epsilon_inflation >= 1.0, "filter.epsilon_inflation must be >= 1");
    if (kind == ExperimentKind::lowerbound) {
      check(m >= 4, "lowerbound.m must be >= 4");
      check(k >= 0, "lowerbound.k must be >= 0");
      check(eps_mix > 0.0 && eps_mix < 0.5, "lowerbound.eps_mix must lie in (0, 0.5)");
      check(mc_samples >= 1000, "lowerbound.mc_samples must be >= 1000");
      check(grid_size >= 2 * k + 2, "lowerbound.grid_size must be >= 2k + 2");
      check(!n_grid.empty(), "lowerbound.n_grid must list at least one n");
      for (auto v : n_grid) check(v >= 2 * m, "lowerbound.n_grid entries must be >= 2m (got " + std::to_string(v) + ")");
      return;
    }
    check(n >= 1, "data.n must be >= 1");
    check(!eps_grid.empty(), "data.eps must list at least one value");
    for (double e : eps_grid)
      check(e >= 0.0 && e <= filter.max_epsilon,
            "data.eps value " + std::to_string(e) + " outside [0, filter.max_epsilon]");
    check(mean_min > 0.0 && mean_min <= mean_max && mean_max <= 2.0 / 3.0,
          "data.mean_min / data.mean_max must satisfy 0 < min <= max <= 2/3");
    check(width_budget > 0.0, "data.width_budget must be positive");
    check(sample_scale > 0.0, "data.sample_scale must be positive");
    if (kind == ExperimentKind::tomography) {
      check(n1 >= 2 && n2 >= 2, "tomography.n1 and tomography.n2 must be >= 2");
      check(near_pure >= 0 && near_pure <= n, "tomography.near_pure must lie in [0, n]");
      check(near_pure_max_lambda >= 0.0 && near_pure_max_lambda < 0.05,
            "tomography.near_pure_max_lambda must lie in [0, 0.05)");
      check(junk_components >= 1, "tomography.junk_components must be >= 1");
    } else {
      check(samples >= std::max<Eigen::Index>(2, n + 1), "data.samples must be >= n + 1");
    }
  }
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  std::string rest;
  if (in.fail() || (in >> rest)) throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a number");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  for (const auto& item : split(v, ',')) {
    if (item.empty()) throw ConfigError("config key '" + key + "': empty list entry");
    out.push_back(parse_number<T>(key, item));
  }
  return out;
}

}  // namespace detail

/// Applies recognised keys on top of `cfg`; unknown keys are errors.
inline void apply_key_values(ExperimentConfig& cfg, const KeyValues& kv) {
  using detail::parse_number;
  std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters{
      {"experiment.kind", [&](auto&, auto& v) { cfg.kind = parse_kind(v); }},
      {"experiment.trials", [&](auto& k, auto& v) { cfg.trials = parse_number<int>(k, v); }},
      {"experiment.seed", [&](auto& k, auto& v) { cfg.seed = parse_number<std::uint64_t>(k, v); }},
      {"experiment.threads", [&](auto& k, auto& v) { cfg.threads = parse_number<int>(k, v); }},
      {"experiment.output", [&](auto&, auto& v) { cfg.output_dir = v; }},
      {"data.n", [&](auto& k, auto& v) { cfg.n = parse_number<Eigen::Index>(k, v); }},
      {"data.samples", [&](auto& k, auto& v) { cfg.samples = parse_number<Eigen::Index>(k, v); }},
      {"data.sample_rule",
       [&](auto& k, auto& v) {
         if (v == "fixed") cfg.sample_rule = SampleRule::fixed;
         else if (v == "inverse_square") cfg.sample_rule = SampleRule::inverse_square;
         else throw ConfigError("config key '" + k + "': expected fixed or inverse_square");
       }},
      {"data.sample_scale", [&](auto& k, auto& v) { cfg.sample_scale = parse_number<double>(k, v); }},
      {"data.eps", [&](auto& k, auto& v) { cfg.eps_grid = detail::parse_list<double>(k, v); }},
      {"data.adversary",
       [&](auto& k, auto& v) {
         try {
           cfg.adversary = parse_adversary(v);
         } catch (const InvalidArgument& e) {
           throw ConfigError("config key '" + k + "': " + e.what());
         }
       }},
      {"data.width_budget", [&](auto& k, auto& v) { cfg.width_budget = parse_number<double>(k, v); }},
      {"data.mean_min", [&](auto& k, auto& v) { cfg.mean_min = parse_number<double>(k, v); }},
      {"data.mean_max", [&](auto& k, auto& v) { cfg.mean_max = parse_number<double>(k, v); }},
      {"solver.max_iters", [&](auto& k, auto& v) { cfg.filter.solver.max_iters = parse_number<int>(k, v); }},
      {"solver.dykstra_iters", [&](auto& k, auto& v) { cfg.filter.solver.dykstra_iters = parse_number<int>(k, v); }},
      {"solver.rel_gap_target",
       [&](auto& k, auto& v) { cfg.filter.solver.rel_gap_target = parse_number<double>(k, v); }},
      {"solver.patience", [&](auto& k, auto& v) { cfg.filter.solver.patience = parse_number<int>(k, v); }},
      {"solver.random_candidates",
       [&](auto& k, auto& v) { cfg.filter.solver.random_candidates = parse_number<int>(k, v); }},
      {"filter.stop_constant", [&](auto& k, auto& v) { cfg.filter.stop_constant = parse_number<double>(k, v); }},
      {"filter.epsilon_inflation",
       [&](auto& k, auto& v) { cfg.filter.epsilon_inflation = parse_number<double>(k, v); }},
      {"filter.max_epsilon", [&](auto& k, auto& v) { cfg.filter.max_epsilon = parse_number<double>(k, v); }},
      {"tomography.n1", [&](auto& k, auto& v) { cfg.n1 = parse_number<Eigen::Index>(k, v); }},
      {"tomography.n2", [&](auto& k, auto& v) { cfg.n2 = parse_number<Eigen::Index>(k, v); }},
      {"tomography.stub_exact", [&](auto& k, auto& v) { cfg.stub_exact = detail::parse_bool(k, v); }},
      {"tomography.near_pure", [&](auto& k, auto& v) { cfg.near_pure = parse_number<int>(k, v); }},
      {"tomography.near_pure_max_lambda",
       [&](auto& k, auto& v) { cfg.near_pure_max_lambda = parse_number<double>(k, v); }},
      {"tomography.junk_components", [&](auto& k, auto& v) { cfg.junk_components = parse_number<int>(k, v); }},
      {"lowerbound.m", [&](auto& k, auto& v) { cfg.m = parse_number<Eigen::Index>(k, v); }},
      {"lowerbound.k", [&](auto& k, auto& v) { cfg.k = parse_number<int>(k, v); }},
      {"lowerbound.n_grid", [&](auto& k, auto& v) { cfg.n_grid = detail::parse_list<Eigen::Index>(k, v); }},
      {"lowerbound.eps_mix", [&](auto& k, auto& v) { cfg.eps_mix = parse_number<double>(k, v); }},
      {"lowerbound.mc_samples", [&](auto& k, auto& v) { cfg.mc_samples = parse_number<Eigen::Index>(k, v); }},
      {"lowerbound.grid_size", [&](auto& k, auto& v) { cfg.grid_size = parse_number<int>(k, v); }},
  };
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) {
      std::string known;
      for (const auto& [name, _] : setters) known += (known.empty() ? "" : ", ") + name;
      throw ConfigError("unknown config key '" + key + "'; known keys: " + known);
    }
    it->second(key, value);
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  ExperimentConfig cfg;
  apply_key_values(cfg, parse_key_values(in));
  return cfg;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string to_csv(const CsvTable& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += fields[i];
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

inline CsvTable parse_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) throw InvalidArgument("CSV is empty");
  t.header = detail::split(detail::trim(line), ',');
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split(detail::trim(line), ',');
    if (fields.size() != t.header.size())
      throw InvalidArgument("CSV line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                            " fields, got " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  return t;
}

/// Result of one run: the CSV and the file name it is written under.
struct ExperimentOutput {
  std::string file_name;
  CsvTable table;
};

// ---------------------------------------------------------------------------
// Experiments

namespace detail {

/// Runs task(i) for i in [0, count) on `threads` workers. Results land in
/// caller-owned slots, so output order never depends on scheduling. The
/// first exception (by task index) is rethrown.
template <class Task>
void run_tasks(std::size_t count, int threads, Task task) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, count); ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline Vector log_spaced_means(Eigen::Index n, double lo, double hi) {
  Vector m(n);
  for (Eigen::Index i = 0; i < n; ++i)
    m[i] = n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
  return m;
}

inline BinaryMatrix draw_product_samples(const Vector& means, Eigen::Index count, std::uint64_t seed) {
  BinaryMatrix out(count, means.size());
  Rng rng(seed);
  for (Eigen::Index r = 0; r < count; ++r)
    for (Eigen::Index c = 0; c < means.size(); ++c) out(r, c) = rng.uniform() < means[c] ? 1 : 0;
  return out;
}

inline std::uint64_t task_seed(std::uint64_t master, int trial, std::size_t point) {
  return derive_seed(derive_seed(master, static_cast<std::uint64_t>(trial)), point);
}

struct RowSink {
  const ExperimentConfig* cfg = nullptr;
  int trial = 0;
  double eps = 0.0;
  Eigen::Index samples = 0;
  std::string adversary;
  std::vector<std::vector<std::string>> rows;

  void add(const std::string& estimator, const std::string& metric, double value, double std_error = 0.0) {
    if (!std::isfinite(value)) throw NumericalError("non-finite " + metric + " for " + estimator);
    rows.push_back({kResultSchema, to_string(cfg->kind), std::to_string(trial), format_number(eps),
                    std::to_string(cfg->n), std::to_string(samples), adversary, estimator, metric, format_number(value),
                    format_number(std_error)});
  }
};

inline void robust_classical_point(const ExperimentConfig& cfg, RowSink& sink, std::uint64_t seed) {
  const Vector truth = log_spaced_means(cfg.n, cfg.mean_min, cfg.mean_max);
  const ProductDistribution p(truth);
  BinaryMatrix raw = draw_product_samples(truth, sink.samples, derive_seed(seed, 0));
  AdversaryOptions opt;
  opt.width_budget = cfg.width_budget;
  opt.reference_means = truth;
  const auto mask = adversary_corrupt(raw, sink.eps, cfg.adversary, derive_seed(seed, 1), opt);

  FilterConfig fc = cfg.filter;
  fc.solver.seed = derive_seed(seed, 2);
  const auto res = robust_learn(raw, sink.eps, fc, &mask);
  sink.add("filter", "tv_char", tv_characterization(p, res.estimate));
  sink.add("filter", "l2", (res.estimate.means() - truth).norm());
  sink.add("filter", "certificate_value", res.trace.final_certificate_value);
  sink.add("filter", "iterations", static_cast<double>(res.trace.iterations.size()));
  double good = 0.0, bad = 0.0;
  int violations = 0;
  for (const auto& it : res.trace.iterations) {
    good += it.removed_good;
    bad += it.removed_bad;
    if (good > bad) ++violations;
  }
  sink.add("filter", "invariant_violations", violations);

  const auto naive = oracles::naive_mean_estimator(raw);
  sink.add("naive", "tv_char", tv_characterization(p, naive));
  sink.add("naive", "l2", (naive.means() - truth).norm());
}

inline void regularity_point(const ExperimentConfig& cfg, RowSink& sink, std::uint64_t seed) {
  const Vector truth = log_spaced_means(cfg.n, cfg.mean_min, cfg.mean_max);
  const BinaryMatrix raw = draw_product_samples(truth, sink.samples, derive_seed(seed, 0));
  const auto emp = oracles::naive_mean_estimator(raw);
  const double dev = vector_dual_norm(emp.means() - truth, ProductDistribution(truth)).value;
  sink.add("empirical", "mean_dual_norm", dev);
  if (sink.eps > 0.0) sink.add("empirical", "mean_dual_norm_ratio", dev / (sink.eps * std::log(1.0 / sink.eps)));
  sink.add("empirical", "tv_char", tv_characterization(ProductDistribution(truth), emp));
}

using BlochRows = Eigen::Matrix<double, Eigen::Dynamic, 3>;

/// Random clean state: the first `near_pure` qubits have smaller eigenvalue
/// in [0, near_pure_max_lambda], the rest in [0.05, 0.45]; axes uniform.
inline ProductMixedState random_tomography_state(const ExperimentConfig& cfg, Rng& rng) {
  BlochRows b(cfg.n, 3);
  for (Eigen::Index j = 0; j < cfg.n; ++j) {
    const double lambda = j < cfg.near_pure ? rng.uniform(0.0, cfg.near_pure_max_lambda) : rng.uniform(0.05, 0.45);
    b.row(j) = (1.0 - 2.0 * lambda) * rng.unit_vector3().transpose();
  }
  return ProductMixedState(b);
}

inline ProductMixedState random_junk_state(Eigen::Index n, Rng& rng) {
  BlochRows b(n, 3);
  for (Eigen::Index j = 0; j < n; ++j) b.row(j) = rng.uniform() * rng.unit_vector3().transpose();
  return ProductMixedState(b);
}

inline void tomography_point(const ExperimentConfig& cfg, RowSink& sink, std::uint64_t seed) {
  // The clean state depends on the trial only, so every eps sees the same target.
  Rng state_rng(derive_seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(sink.trial)), 0xC1EA));
  ContaminatedState s;
  s.clean = random_tomography_state(cfg, state_rng);
  s.eps = sink.eps;
  for (int c = 0; c < cfg.junk_components; ++c) {
    s.junk.push_back(random_junk_state(cfg.n, state_rng));
    s.junk_weights.push_back(1.0 / cfg.junk_components);
  }
  TomographyConfig tc;
  tc.n1 = cfg.n1;
  tc.n2 = cfg.n2;
  tc.eps = sink.eps;
  tc.adversary = cfg.adversary;
  tc.adversary_options.width_budget = cfg.width_budget;
  tc.filter = cfg.filter;
  tc.stub_exact = cfg.stub_exact;
  const auto r = agnostic_tomography(s, tc, seed);
  if (cfg.n <= 8) sink.add("agnostic", "trd_exact", trace_distance_exact(r.estimate, s.clean, 8));
  sink.add("agnostic", "trd_bound", trace_distance_fidelity_bound(r.estimate, s.clean));
  sink.add("agnostic", "infidelity", 1.0 - fidelity_product(r.estimate, s.clean));
}

inline ExperimentOutput run_lowerbound(const ExperimentConfig& cfg) {
  struct Point {
    int trial;
    std::size_t index;
  };
  std::vector<Point> points;
  for (int t = 0; t < cfg.trials; ++t)
    for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) points.push_back({t, i});
  std::vector<std::vector<std::vector<std::string>>> slots(points.size());
  run_tasks(points.size(), cfg.threads, [&](std::size_t p) {
    const auto [trial, index] = points[p];
    const Eigen::Index n = cfg.n_grid[index];
    const std::uint64_t seed = task_seed(cfg.seed, trial, index);
    const auto pair = build_moment_matched(cfg.m, n, cfg.k, cfg.eps_mix, cfg.grid_size);
    const auto h = make_hard_pair(pair, derive_seed(seed, 0));
    const double exact = binomial_mixture_tv(n, pair.p1, pair.p2);
    BlochRows random_axes(n, 3);
    Rng rng(derive_seed(seed, 1));
    for (Eigen::Index i = 0; i < n; ++i) random_axes.row(i) = rng.unit_vector3().transpose();
    for (const char* mode : {"random", "aligned"}) {
      const bool aligned = std::string(mode) == "aligned";
      const auto tv = tv_between_outcome_laws(h, aligned ? h.axes : random_axes, cfg.mc_samples,
                                              derive_seed(seed, aligned ? 3 : 2));
      slots[p].push_back({kLowerBoundSchema, std::to_string(trial), std::to_string(n), std::to_string(cfg.k), mode,
                          format_number(tv.estimate), format_number(tv.std_error), format_number(exact)});
    }
  });
  ExperimentOutput out{"lowerbound.csv", {lowerbound_header(), {}}};
  for (auto& s : slots)
    for (auto& r : s) out.table.rows.push_back(std::move(r));
  return out;
}

}  // namespace detail

/// Runs the configured sweep. Rows are ordered by (trial, eps) regardless
/// of thread count, and every random draw derives from cfg.seed.
inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.kind == ExperimentKind::lowerbound) return detail::run_lowerbound(cfg);

  const std::size_t points = static_cast<std::size_t>(cfg.trials) * cfg.eps_grid.size();
  std::vector<detail::RowSink> sinks;
  sinks.reserve(points);
  for (int t = 0; t < cfg.trials; ++t) {
    for (double eps : cfg.eps_grid) {
      const Eigen::Index samples =
          cfg.kind == ExperimentKind::tomography ? cfg.n1 : cfg.samples_at(eps);
      const bool corrupted = cfg.kind == ExperimentKind::robust_classical || cfg.kind == ExperimentKind::tomography;
      detail::RowSink sink;
      sink.cfg = &cfg;
      sink.trial = t;
      sink.eps = eps;
      sink.samples = samples;
      sink.adversary = corrupted ? robustkit::to_string(cfg.adversary) : std::string("none");
      sinks.push_back(std::move(sink));
    }
  }
  detail::run_tasks(points, cfg.threads, [&](std::size_t p) {
    auto& sink = sinks[p];
    const std::size_t eps_index = p % cfg.eps_grid.size();
    const std::uint64_t seed = detail::task_seed(cfg.seed, sink.trial, eps_index);
    switch (cfg.kind) {
      case ExperimentKind::robust_classical: detail::robust_classical_point(cfg, sink, seed); break;
      case ExperimentKind::regularity_audit: detail::regularity_point(cfg, sink, seed); break;
      case ExperimentKind::tomography: detail::tomography_point(cfg, sink, seed); break;
      case ExperimentKind::lowerbound: break;
    }
  });
  ExperimentOutput out{to_string(cfg.kind) + ".csv", {result_header(), {}}};
  for (auto& s : sinks)
    for (auto& r : s.rows) out.table.rows.push_back(std::move(r));
  return out;
}

/// Writes the CSV under cfg.output_dir and returns its path.
inline std::string write_output(const ExperimentOutput& out, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto path = (std::filesystem::path(dir) / out.file_name).string();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot write '" + path + "'");
  f << to_csv(out.table);
  if (!f) throw InvalidArgument("write failed for '" + path + "'");
  return path;
}

// ---------------------------------------------------------------------------
// Summaries

/// Least-squares slope of log(y) on log(x); points with x or y <= 0 are skipped.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), "loglog_slope: size mismatch");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0.0 || y[i] <= 0.0) continue;
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++count;
  }
  require(count >= 2, "loglog_slope: need two positive points");
  const double denom = count * sxx - sx * sx;
  require(denom > 0.0, "loglog_slope: x values coincide");
  return (count * sxy - sx * sy) / denom;
}

/// Mean of `metric` for `estimator` at each eps, in grid order.
inline std::vector<std::pair<double, double>> mean_by_eps(const CsvTable& t, const std::string& estimator,
                                                          const std::string& metric) {
  require(t.header == result_header(), "mean_by_eps: not a results CSV");
  std::map<double, std::pair<double, int>> acc;
  for (const auto& r : t.rows) {
    if (r[7] != estimator || r[8] != metric) continue;
    auto& a = acc[std::stod(r[3])];
    a.first += std::stod(r[9]);
    ++a.second;
  }
  std::vector<std::pair<double, double>> out;
  for (const auto& [eps, a] : acc) out.emplace_back(eps, a.first / a.second);
  return out;
}

// ---------------------------------------------------------------------------
// Plots

namespace detail {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;  // sorted by x, positive
};

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  return colors[i % 7];
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

/// Log-log line plot with decade ticks and a legend.
inline std::string loglog_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<Series>& series) {
  const double width = 640, height = 420, left = 70, right = 190, top = 40, bottom = 55;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, std::log10(x));
      xmax = std::max(xmax, std::log10(x));
      ymin = std::min(ymin, std::log10(y));
      ymax = std::max(ymax, std::log10(y));
    }
  // Pad degenerate ranges to a decade.
  if (xmax - xmin < 1e-9) { xmin -= 0.5; xmax += 0.5; }
  if (ymax - ymin < 1e-9) { ymin -= 0.5; ymax += 0.5; }
  xmin = std::floor(xmin * 4) / 4; xmax = std::ceil(xmax * 4) / 4;
  ymin = std::floor(ymin * 4) / 4; ymax = std::ceil(ymax * 4) / 4;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (std::log10(x) - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (ymax - std::log10(y)) / (ymax - ymin) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) + "\" height=\"" + fmt(height) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text class=\"title\" x=\"" + fmt(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         xml_escape(title) + "</text>\n";
  svg += "<rect x=\"" + fmt(left) + "\" y=\"" + fmt(top) + "\" width=\"" + fmt(pw) + "\" height=\"" + fmt(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int d = static_cast<int>(std::ceil(xmin)); d <= static_cast<int>(std::floor(xmax)); ++d) {
    const double x = px(std::pow(10.0, d));
    svg += "<line class=\"tick\" x1=\"" + fmt(x) + "\" y1=\"" + fmt(top + ph) + "\" x2=\"" + fmt(x) + "\" y2=\"" +
           fmt(top + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(top + ph + 18) + "\" text-anchor=\"middle\">1e" +
           std::to_string(d) + "</text>\n";
  }
  for (int d = static_cast<int>(std::ceil(ymin)); d <= static_cast<int>(std::floor(ymax)); ++d) {
    const double y = py(std::pow(10.0, d));
    svg += "<line class=\"tick\" x1=\"" + fmt(left - 5) + "\" y1=\"" + fmt(y) + "\" x2=\"" + fmt(left) + "\" y2=\"" +
           fmt(y) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt(left - 8) + "\" y=\"" + fmt(y + 4) + "\" text-anchor=\"end\">1e" + std::to_string(d) +
           "</text>\n";
  }
  svg += "<text x=\"" + fmt(left + pw / 2) + "\" y=\"" + fmt(height - 12) + "\" text-anchor=\"middle\">" +
         xml_escape(xlabel) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + fmt(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         fmt(top + ph / 2) + ")\">" + xml_escape(ylabel) + "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    std::string pts;
    for (const auto& [x, y] : s.points) pts += (pts.empty() ? "" : " ") + fmt(px(x)) + "," + fmt(py(y));
    svg += "<g class=\"series\" data-label=\"" + xml_escape(s.label) + "\">\n";
    if (s.points.size() > 1)
      svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + palette(i) + "\" stroke-width=\"2\"/>\n";
    for (const auto& [x, y] : s.points)
      svg += "<circle cx=\"" + fmt(px(x)) + "\" cy=\"" + fmt(py(y)) + "\" r=\"3.5\" fill=\"" + palette(i) + "\"/>\n";
    svg += "</g>\n";
  }
  svg += "<g class=\"legend\">\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = top + 10 + 20.0 * static_cast<double>(i);
    svg += "<rect x=\"" + fmt(width - right + 15) + "\" y=\"" + fmt(y - 8) + "\" width=\"12\" height=\"12\" fill=\"" +
           palette(i) + "\"/>\n";
    svg += "<text x=\"" + fmt(width - right + 33) + "\" y=\"" + fmt(y + 2) + "\">" + xml_escape(series[i].label) +
           "</text>\n";
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

inline double parse_field(const std::string& v, const std::string& column) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InvalidArgument("CSV column '" + column + "': '" + v + "' is not a number");
  }
}

}  // namespace detail

/// Builds plots from a results or lower-bound CSV. Returns written paths.
/// Results CSVs give one log-log plot per (experiment, metric) against eps,
/// one series per estimator/adversary pair averaged over trials; lower-bound
/// CSVs give the TV-vs-n decay plot with one series per (axes, k).
inline std::vector<std::string> emit_plots(const std::string& csv_path, const std::string& out_dir) {
  std::ifstream in(csv_path);
  if (!in) throw InvalidArgument("cannot open CSV '" + csv_path + "'");
  const CsvTable t = parse_csv(in);
  if (t.rows.empty()) throw InvalidArgument("CSV '" + csv_path + "' has no data rows");

  struct Plot {
    std::string file, title, xlabel, ylabel;
    std::map<std::string, std::map<double, std::pair<double, int>>> series;
  };
  std::map<std::string, Plot> plots;

  if (t.header == result_header()) {
    for (const auto& r : t.rows) {
      if (r[0] != kResultSchema) throw InvalidArgument("CSV row has schema '" + r[0] + "'");
      const double eps = detail::parse_field(r[3], "eps"), value = detail::parse_field(r[9], "value");
      const std::string key = r[1] + "_" + r[8];
      auto& p = plots[key];
      p.file = key + "_vs_eps.svg";
      p.title = r[1] + ": " + r[8];
      p.xlabel = "eps";
      p.ylabel = r[8];
      if (eps <= 0.0 || value <= 0.0) continue;
      auto& acc = p.series[r[7] + " / " + r[6]][eps];
      acc.first += value;
      ++acc.second;
    }
  } else if (t.header == lowerbound_header()) {
    for (const auto& r : t.rows) {
      if (r[0] != kLowerBoundSchema) throw InvalidArgument("CSV row has schema '" + r[0] + "'");
      const double n = detail::parse_field(r[2], "n"), tv = detail::parse_field(r[5], "tv_estimate");
      auto& p = plots["lowerbound"];
      p.file = "lowerbound_tv_vs_n.svg";
      p.title = "outcome-law TV vs n";
      p.xlabel = "n";
      p.ylabel = "tv_estimate";
      if (tv <= 0.0) continue;
      auto& acc = p.series[r[4] + " axes, k=" + r[3]][n];
      acc.first += tv;
      ++acc.second;
    }
  } else {
    throw InvalidArgument("CSV '" + csv_path + "' has an unrecognised header");
  }

  std::vector<std::pair<std::string, std::string>> rendered;
  for (const auto& [key, p] : plots) {
    std::vector<detail::Series> series;
    for (const auto& [label, points] : p.series) {
      detail::Series s{label, {}};
      for (const auto& [x, acc] : points) s.points.emplace_back(x, acc.first / acc.second);
      series.push_back(std::move(s));
    }
    if (series.empty()) continue;
    rendered.emplace_back(p.file, detail::loglog_svg(p.title, p.xlabel, p.ylabel, series));
  }
  if (rendered.empty()) throw InvalidArgument("CSV '" + csv_path + "' has no positive values to plot on log axes");

  std::filesystem::create_directories(out_dir);
  std::vector<std::string> paths;
  for (const auto& [file, svg] : rendered) {
    const auto path = (std::filesystem::path(out_dir) / file).string();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidArgument("cannot write '" + path + "'");
    f << svg;
    paths.push_back(path);
  }
  return paths;
}

}  // namespace robustkit::harness
