// robustkit command-line driver.
//
//   robustkit <experiment> [--config PATH] [--seed S] [--out DIR] [overrides]
//   robustkit plot --csv PATH [--out DIR]
//   robustkit generate --n N --samples COUNT [--eps E --adversary A] --out FILE [--packed]
//   robustkit learn --in FILE --eps E [--out FILE]
//
// Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.

#include "robustkit/harness.hpp"
#include "robustkit/sample_io.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace robustkit;
using harness::ExperimentConfig;
using harness::ExperimentKind;

struct Overrides {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  Eigen::Index n = 0;
  std::vector<double> eps;
  Eigen::Index samples = 0;
  int trials = 0;
  std::string adversary;
  Eigen::Index n1 = 0, n2 = 0;
  bool stub_exact = false;
  Eigen::Index m = 0;
  int k = -1;
  std::vector<Eigen::Index> n_grid;
  double eps_mix = 0.0;
  Eigen::Index mc_samples = 0;
  int threads = 0;
};

void add_experiment(CLI::App& app, ExperimentKind kind, Overrides& o, ExperimentKind& chosen) {
  auto* sub = app.add_subcommand(harness::to_string(kind), "run the " + harness::to_string(kind) + " experiment");
  sub->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "master seed");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--trials", o.trials, "trial count");
  sub->add_option("--threads", o.threads, "worker threads");
  if (kind == ExperimentKind::lowerbound) {
    sub->add_option("--m", o.m, "moment scale m");
    sub->add_option("--k", o.k, "matched moments k");
    sub->add_option("--n-grid", o.n_grid, "qubit counts")->delimiter(',');
    sub->add_option("--eps-mix", o.eps_mix, "mixing weight of the bias laws");
    sub->add_option("--mc-samples", o.mc_samples, "Monte-Carlo outcomes per estimate");
  } else {
    sub->add_option("--n", o.n, "dimension (qubits for tomography)");
    sub->add_option("--eps", o.eps, "corruption levels")->delimiter(',');
    if (kind != ExperimentKind::regularity_audit)
      sub->add_option("--adversary", o.adversary, "none, mean_shift or rare_inflate");
    if (kind == ExperimentKind::tomography) {
      sub->add_option("--n1", o.n1, "round-one copies per basis");
      sub->add_option("--n2", o.n2, "round-two copies");
      sub->add_flag("--stub-exact", o.stub_exact, "use exact outcome means");
    } else {
      sub->add_option("--samples", o.samples, "samples per run");
    }
  }
  sub->callback([&chosen, kind] { chosen = kind; });
}

ExperimentConfig build_config(ExperimentKind kind, const Overrides& o) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw harness::ConfigError("cannot open config file '" + o.config + "'");
    const auto kv = harness::parse_key_values(in);
    harness::apply_key_values(cfg, kv);
    if (kv.count("experiment.kind") && cfg.kind != kind)
      throw harness::ConfigError("config '" + o.config + "' is for experiment '" + harness::to_string(cfg.kind) +
                                 "', not '" + harness::to_string(kind) + "'");
  }
  cfg.kind = kind;
  if (o.seed) cfg.seed = o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.trials) cfg.trials = o.trials;
  if (o.threads) cfg.threads = o.threads;
  if (o.n) cfg.n = o.n;
  if (!o.eps.empty()) cfg.eps_grid = o.eps;
  if (o.samples) cfg.samples = o.samples;
  if (!o.adversary.empty()) {
    try {
      cfg.adversary = parse_adversary(o.adversary);
    } catch (const InvalidArgument& e) {
      throw harness::ConfigError(std::string("--adversary: ") + e.what());
    }
  }
  if (o.n1) cfg.n1 = o.n1;
  if (o.n2) cfg.n2 = o.n2;
  if (o.stub_exact) cfg.stub_exact = true;
  if (o.m) cfg.m = o.m;
  if (o.k >= 0) cfg.k = o.k;
  if (!o.n_grid.empty()) cfg.n_grid = o.n_grid;
  if (o.eps_mix > 0.0) cfg.eps_mix = o.eps_mix;
  if (o.mc_samples) cfg.mc_samples = o.mc_samples;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust learning of binary product distributions and product-state tomography"};
  app.require_subcommand(1);

  Overrides o;
  ExperimentKind chosen = ExperimentKind::robust_classical;
  bool experiment = false;
  for (auto kind : {ExperimentKind::robust_classical, ExperimentKind::tomography, ExperimentKind::lowerbound,
                    ExperimentKind::regularity_audit})
    add_experiment(app, kind, o, chosen);

  std::string plot_csv, plot_out = ".";
  auto* plot = app.add_subcommand("plot", "render SVG plots from a result CSV");
  plot->add_option("--csv", plot_csv, "result CSV")->required();
  plot->add_option("--out", plot_out, "output directory");

  Eigen::Index gen_n = 10, gen_samples = 1000;
  double gen_eps = 0.0, gen_min = 0.02, gen_max = 0.5;
  std::string gen_adv = "none", gen_out;
  std::uint64_t gen_seed = 1;
  bool gen_packed = false;
  auto* gen = app.add_subcommand("generate", "write a seeded (optionally corrupted) sample file");
  gen->add_option("--n", gen_n, "dimension");
  gen->add_option("--samples", gen_samples, "rows");
  gen->add_option("--eps", gen_eps, "corrupted fraction");
  gen->add_option("--adversary", gen_adv, "none, mean_shift or rare_inflate");
  gen->add_option("--mean-min", gen_min, "smallest coordinate mean");
  gen->add_option("--mean-max", gen_max, "largest coordinate mean");
  gen->add_option("--seed", gen_seed, "seed");
  gen->add_option("--out", gen_out, "sample file")->required();
  gen->add_flag("--packed", gen_packed, "write the BPD1 packed format");

  std::string learn_in, learn_out;
  double learn_eps = 0.0;
  auto* learn = app.add_subcommand("learn", "robustly estimate the means of a sample file");
  learn->add_option("--in", learn_in, "sample file (text or packed)")->required()->check(CLI::ExistingFile);
  learn->add_option("--eps", learn_eps, "corruption level")->required();
  learn->add_option("--out", learn_out, "CSV of coordinate means (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  for (auto* sub : app.get_subcommands())
    if (sub != plot && sub != gen && sub != learn) experiment = true;

  try {
    if (experiment) {
      const ExperimentConfig cfg = build_config(chosen, o);
      const auto out = harness::run_experiment(cfg);
      std::cout << harness::write_output(out, cfg.output_dir) << '\n';
    } else if (plot->parsed()) {
      for (const auto& p : harness::emit_plots(plot_csv, plot_out)) std::cout << p << '\n';
    } else if (gen->parsed()) {
      require(gen_n >= 1 && gen_samples >= 1, "generate: --n and --samples must be positive");
      require(gen_min > 0.0 && gen_min <= gen_max && gen_max <= 1.0, "generate: need 0 < mean-min <= mean-max <= 1");
      const Vector truth = harness::detail::log_spaced_means(gen_n, gen_min, gen_max);
      BinaryMatrix s = harness::detail::draw_product_samples(truth, gen_samples, derive_seed(gen_seed, 0));
      AdversaryOptions opt;
      opt.reference_means = truth;
      adversary_corrupt(s, gen_eps, parse_adversary(gen_adv), derive_seed(gen_seed, 1), opt);
      save_samples(gen_out, s, gen_packed);
      std::cout << gen_out << '\n';
    } else if (learn->parsed()) {
      const BinaryMatrix s = load_samples(learn_in);
      const auto r = robust_learn(s, learn_eps);
      std::string csv = "coordinate,mean\n";
      for (Eigen::Index i = 0; i < r.estimate.dim(); ++i)
        csv += std::to_string(i) + "," + harness::format_number(r.estimate[i]) + "\n";
      if (learn_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream f(learn_out);
        require(static_cast<bool>(f << csv), "cannot write '" + learn_out + "'");
      }
      std::cerr << "filter iterations: " << r.trace.iterations.size()
                << ", final certificate " << r.trace.final_certificate_value << '\n';
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
