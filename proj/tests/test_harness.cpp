#include "robustkit/harness.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace robustkit;
using namespace robustkit::harness;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("robustkit_harness_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

ExperimentConfig small_classical() {
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::robust_classical;
  cfg.n = 8;
  cfg.samples = 4000;
  cfg.eps_grid = {0.02, 0.04};
  cfg.trials = 2;
  cfg.seed = 11;
  return cfg;
}

std::string write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p.string();
}

}  // namespace

TEST(Config, ParsesSectionsAndComments) {
  std::istringstream in(
      "# sweep\n[experiment]\nkind = tomography ; inline\ntrials=3\n\n[data]\neps = 0.01, 0.02\nn = 4\n"
      "[tomography]\nstub_exact = true\n");
  const auto kv = parse_key_values(in);
  EXPECT_EQ(kv.at("experiment.kind"), "tomography");
  ExperimentConfig cfg;
  apply_key_values(cfg, kv);
  EXPECT_EQ(cfg.kind, ExperimentKind::tomography);
  EXPECT_EQ(cfg.trials, 3);
  EXPECT_EQ(cfg.eps_grid, (std::vector<double>{0.01, 0.02}));
  EXPECT_TRUE(cfg.stub_exact);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, ActionableErrors) {
  auto fails_with = [](const std::string& text, const std::string& fragment) {
    std::istringstream in(text);
    ExperimentConfig cfg;
    try {
      apply_key_values(cfg, parse_key_values(in));
      cfg.validate();
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
      return;
    }
    ADD_FAILURE() << "no error for: " << text;
  };
  fails_with("[data]\nepsilon = 0.1\n", "unknown config key 'data.epsilon'");
  fails_with("[data]\neps = 0.2\n", "outside [0, filter.max_epsilon]");
  fails_with("[data]\neps = 0.01,\n", "empty list entry");
  fails_with("[experiment]\ntrials = 0\n", "trials must be >= 1");
  fails_with("[experiment]\ntrials = two\n", "cannot parse 'two'");
  fails_with("[experiment]\nkind = bogus\n", "unknown experiment 'bogus'");
  fails_with("[data]\nadversary = loud\n", "data.adversary");
  fails_with("[data\n", "unterminated section");
  fails_with("x = 1\nx = 2\n", "duplicate key");
  fails_with("[experiment]\nkind = lowerbound\n[lowerbound]\nn_grid = 10\n", "n_grid entries must be >= 2m");
  EXPECT_THROW(load_config("/nonexistent/robustkit.cfg"), ConfigError);
}

TEST(Config, InverseSquareRule) {
  ExperimentConfig cfg;
  cfg.n = 50;
  cfg.samples = 1000;
  cfg.sample_rule = SampleRule::inverse_square;
  EXPECT_EQ(cfg.samples_at(0.01), 500000);
  EXPECT_EQ(cfg.samples_at(0.0), 1000);
  cfg.sample_rule = SampleRule::fixed;
  EXPECT_EQ(cfg.samples_at(0.01), 1000);
}

TEST(Csv, HeaderIsPinned) {
  EXPECT_EQ(to_csv({result_header(), {}}),
            "schema,experiment,trial,eps,n,samples,adversary,estimator,metric,value,stderr\n");
  EXPECT_EQ(to_csv({lowerbound_header(), {}}),
            "schema,trial,n,k,axes,tv_estimate,stderr,trace_distance_lower_bound\n");
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(format_number(2e-7), "2e-07");
}

TEST(RunExperiment, DeterministicAndOrdered) {
  auto cfg = small_classical();
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  EXPECT_EQ(to_csv(a.table), to_csv(b.table));
  cfg.threads = 3;
  EXPECT_EQ(to_csv(run_experiment(cfg).table), to_csv(a.table));
  cfg.seed = 12;
  EXPECT_NE(to_csv(run_experiment(cfg).table), to_csv(a.table));

  EXPECT_EQ(a.file_name, "robust_classical.csv");
  ASSERT_EQ(a.table.rows.size(), 2u * 2u * 7u);
  EXPECT_EQ(a.table.rows.front()[2], "0");
  EXPECT_EQ(a.table.rows.front()[3], "0.02");
  EXPECT_EQ(a.table.rows.back()[2], "1");
  EXPECT_EQ(a.table.rows.back()[3], "0.04");
  for (const auto& r : a.table.rows) {
    EXPECT_EQ(r[0], kResultSchema);
    EXPECT_TRUE(std::isfinite(std::stod(r[9])));
    if (r[8] == "invariant_violations") {
      EXPECT_EQ(r[9], "0");
    }
  }
}

TEST(RunExperiment, CleanTrialMatchesSamplingBaseline) {
  auto cfg = small_classical();
  cfg.eps_grid = {0.0};
  cfg.trials = 1;
  const auto out = run_experiment(cfg);
  double filter_l2 = -1, naive_l2 = -2;
  for (const auto& r : out.table.rows) {
    if (r[8] != "l2") continue;
    (r[7] == "filter" ? filter_l2 : naive_l2) = std::stod(r[9]);
  }
  EXPECT_DOUBLE_EQ(filter_l2, naive_l2);
  EXPECT_LT(naive_l2, 4.0 * std::sqrt(8.0 * 0.25 / 4000.0));
}

TEST(RunExperiment, TomographyEmitsExactDistance) {
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::tomography;
  cfg.n = 3;
  cfg.near_pure = 1;
  cfg.eps_grid = {0.0};
  cfg.stub_exact = true;
  const auto out = run_experiment(cfg);
  ASSERT_EQ(out.table.rows.size(), 3u);
  EXPECT_EQ(out.table.rows[0][8], "trd_exact");
  EXPECT_LT(std::stod(out.table.rows[0][9]), 1e-9);
  cfg.n = 9;
  cfg.near_pure = 2;
  for (const auto& r : run_experiment(cfg).table.rows) EXPECT_NE(r[8], "trd_exact");
}

TEST(RunExperiment, RegularityAudit) {
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::regularity_audit;
  cfg.n = 10;
  cfg.samples = 20000;
  const auto out = run_experiment(cfg);
  ASSERT_EQ(out.table.rows.size(), 3u);
  EXPECT_EQ(out.table.rows[0][8], "mean_dual_norm");
  EXPECT_EQ(out.table.rows[0][6], "none");
  EXPECT_GT(std::stod(out.table.rows[0][9]), 0.0);
}

TEST(RunExperiment, LowerBoundSchema) {
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::lowerbound;
  cfg.m = 16;
  cfg.k = 2;
  cfg.n_grid = {64, 128};
  cfg.mc_samples = 1000;
  cfg.grid_size = 41;
  const auto out = run_experiment(cfg);
  EXPECT_EQ(out.file_name, "lowerbound.csv");
  ASSERT_EQ(out.table.rows.size(), 4u);
  EXPECT_EQ(out.table.rows[0][4], "random");
  EXPECT_EQ(out.table.rows[1][4], "aligned");
  EXPECT_EQ(out.table.rows[0][7], out.table.rows[1][7]);
  EXPECT_EQ(to_csv(out.table), to_csv(run_experiment(cfg).table));
}

TEST(Summaries, LogLogSlope) {
  EXPECT_NEAR(loglog_slope({1, 2, 4}, {3, 6, 12}), 1.0, 1e-12);
  EXPECT_NEAR(loglog_slope({0.01, 0.04}, {0.1, 0.2}), 0.5, 1e-12);
  EXPECT_THROW(loglog_slope({1}, {1}), InvalidArgument);
}

TEST(Plots, EmptyCsvIsAnError) {
  const auto dir = scratch("empty");
  const auto csv = write_file(dir / "e.csv", "");
  EXPECT_THROW(emit_plots(csv, (dir / "out").string()), InvalidArgument);
  const auto header_only = write_file(dir / "h.csv", to_csv({result_header(), {}}));
  EXPECT_THROW(emit_plots(header_only, (dir / "out").string()), InvalidArgument);
  EXPECT_FALSE(std::filesystem::exists(dir / "out"));
}

TEST(Plots, MalformedCsv) {
  const auto dir = scratch("malformed");
  EXPECT_THROW(emit_plots(write_file(dir / "a.csv", "a,b\n1,2\n"), dir.string()), InvalidArgument);
  auto bad_value = to_csv({result_header(), {}}) + std::string(kResultSchema) +
                   ",robust_classical,0,0.01,5,100,none,filter,l2,abc,0\n";
  EXPECT_THROW(emit_plots(write_file(dir / "b.csv", bad_value), dir.string()), InvalidArgument);
  auto short_row = to_csv({result_header(), {}}) + "x,y\n";
  EXPECT_THROW(emit_plots(write_file(dir / "c.csv", short_row), dir.string()), InvalidArgument);
}

TEST(Plots, SingleRowGivesOnePoint) {
  const auto dir = scratch("single");
  const auto csv = write_file(dir / "s.csv", to_csv({result_header(), {}}) + std::string(kResultSchema) +
                                                 ",robust_classical,0,0.01,5,100,rare_inflate,filter,tv_char,0.05,0\n");
  const auto paths = emit_plots(csv, (dir / "out").string());
  ASSERT_EQ(paths.size(), 1u);
  EXPECT_EQ(std::filesystem::path(paths[0]).filename(), "robust_classical_tv_char_vs_eps.svg");
  std::ifstream f(paths[0]);
  const std::string svg((std::istreambuf_iterator<char>(f)), {});
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n') > 0, true);
  size_t circles = 0;
  for (size_t pos = 0; (pos = svg.find("<circle", pos)) != std::string::npos; ++pos) ++circles;
  EXPECT_EQ(circles, 1u);
  EXPECT_EQ(svg.find("<polyline"), std::string::npos);
}

TEST(Plots, FullSweepStructure) {
  const auto dir = scratch("sweep");
  auto cfg = small_classical();
  cfg.eps_grid = {0.01, 0.02, 0.04};
  cfg.trials = 1;
  const auto csv = write_output(run_experiment(cfg), dir.string());
  const auto paths = emit_plots(csv, (dir / "plots").string());
  std::vector<std::string> names;
  for (const auto& p : paths) names.push_back(std::filesystem::path(p).filename().string());
  EXPECT_NE(std::find(names.begin(), names.end(), "robust_classical_tv_char_vs_eps.svg"), names.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "robust_classical_l2_vs_eps.svg"), names.end());
  std::ifstream f(dir / "plots" / "robust_classical_tv_char_vs_eps.svg");
  const std::string svg((std::istreambuf_iterator<char>(f)), {});
  EXPECT_NE(svg.find("<g class=\"legend\">"), std::string::npos);
  EXPECT_NE(svg.find("filter / rare_inflate"), std::string::npos);
  EXPECT_NE(svg.find("naive / rare_inflate"), std::string::npos);
  EXPECT_EQ(emit_plots(csv, (dir / "plots").string()), paths);

  ExperimentConfig lb;
  lb.kind = ExperimentKind::lowerbound;
  lb.m = 16;
  lb.k = 2;
  lb.n_grid = {64, 256};
  lb.mc_samples = 1000;
  lb.grid_size = 41;
  const auto lb_csv = write_output(run_experiment(lb), dir.string());
  const auto lb_paths = emit_plots(lb_csv, (dir / "plots").string());
  ASSERT_EQ(lb_paths.size(), 1u);
  EXPECT_EQ(std::filesystem::path(lb_paths[0]).filename(), "lowerbound_tv_vs_n.svg");
}
