#include "fedtrust/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <iostream>

#include "fedtrust/aggregate.hpp"
#include "fedtrust/attack.hpp"
#include "fedtrust/harness.hpp"
#include "fedtrust/shapley.hpp"

namespace fedtrust {

namespace {

// Small synthetic scenario shared by shapley-check: train n honest clients
// for one round, optionally sign-flip the last one.
struct ShapleyScenario {
  ParameterSet base;
  std::vector<GradientUpdate> updates;
  LabeledDataset val;
};

ShapleyScenario make_shapley_scenario(int n, uint64_t seed, bool with_attacker) {
  RngStream master = RngStream::from_seed(seed);
  LabeledDataset ds = make_synthetic(3, 6, 60 * n + 600, 4.f,
                                     master.child("data").next_u64());
  SplitIndices split =
      stratified_split(ds, {0.70, 0.15, 0.15}, master.child("split").next_u64());
  LabeledDataset train = subset(ds, split.train);
  ShapleyScenario sc;
  sc.val = subset(ds, split.val);
  sc.base = build_model<float>(ModelKind::Logreg, 6, {}, 3,
                               master.child("init"));
  PartitionPlan plan = partition(train, PartitionSpec{}, n,
                                 master.child("partition").next_u64());
  AdamConfig adam;
  adam.lr = 0.05f;
  for (int k = 0; k < n; ++k) {
    LabeledDataset cd = subset(train, plan.assignments[k]);
    LocalTrainResult lt =
        local_train_prox(sc.base, sc.base, cd.features, cd.labels, 1, 0.f,
                         adam, 32, master.child("local", (uint64_t)k), k, 1);
    sc.updates.push_back(std::move(lt.update));
  }
  if (with_attacker && n > 1) {
    AttackSpec spec;
    spec.kind = AttackKind::SignFlip;
    sc.updates.back() = apply_gradient_attack(spec, sc.updates.back());
  }
  return sc;
}

int cmd_shapley_check(int n, int m, uint64_t seed) {
  if (n > 12) {
    std::cerr << "shapley-check needs n <= 12 for the exact oracle\n";
    return 2;
  }
  ShapleyScenario sc = make_shapley_scenario(n, seed, true);
  ShapleyEstimate exact = exact_shapley(sc.base, sc.updates, sc.val);
  ShapleyEstimate mc = mc_shapley(sc.base, sc.updates, sc.val, m,
                                  RngStream::from_seed(seed).child("mc"));
  double range = exact.phi.maxCoeff() - exact.phi.minCoeff();
  double worst = 0;
  std::printf("client %14s %14s %14s\n", "exact", "monte_carlo", "abs_dev");
  for (int k = 0; k < n; ++k) {
    double dev = std::abs(mc.phi[k] - exact.phi[k]);
    worst = std::max(worst, dev);
    std::printf("%6d %14.6g %14.6g %14.6g\n", k, exact.phi[k], mc.phi[k], dev);
  }
  double bound = 0.05 * range;
  std::printf("max_deviation %.6g bound %.6g (%s)\n", worst, bound,
              worst < bound ? "ok" : "FAIL");
  return worst < bound ? 0 : 2;
}

// Central finite differences on a 64-bit shadow model. Batches are re-drawn
// until every relu input clears the probe step, since finite differences are
// meaningless across the kink.
double gradcheck_max_rel_err(ModelKind kind, const std::vector<int>& hidden,
                             uint64_t seed) {
  RngStream master = RngStream::from_seed(seed);
  int dim = 5, classes = 3, batch = 16;
  auto p = build_model<double>(kind, dim, hidden, classes, master.child("init"));

  Matd x;
  std::vector<int> y;
  ForwardCacheT<double> cache;
  for (uint64_t retry = 0; retry < 32; ++retry) {
    LabeledDataset ds = make_synthetic(
        classes, dim, batch, 2.f, master.child("data", retry).next_u64());
    x = ds.features.cast<double>();
    y = ds.labels;
    auto q = p;
    forward_train(q, x, y, cache);
    double margin = 1e9;
    for (size_t l = 0; l < p.layout.layers.size(); ++l)
      if (p.layout.layers[l].relu_after)
        margin = std::min(margin, cache.z[l].cwiseAbs().minCoeff());
    if (margin > 5e-3) break;
  }
  forward_train(p, x, y, cache);
  Vecd analytic = backward(p, cache);

  const double h = 1e-3;
  double worst = 0;
  for (int i = 0; i < p.layout.param_count; ++i) {
    auto probe = [&](double delta) {
      auto q = p;
      q.values[i] += delta;
      ForwardCacheT<double> c;
      return double(forward_train(q, x, y, c));
    };
    double fd = (probe(h) - probe(-h)) / (2 * h);
    double rel = std::abs(fd - analytic[i]) /
                 std::max({1.0, std::abs(fd), std::abs(analytic[i])});
    worst = std::max(worst, rel);
  }
  return worst;
}

int cmd_gradcheck(int seeds) {
  double worst = 0;
  for (int s = 1; s <= seeds; ++s) {
    worst = std::max(worst, gradcheck_max_rel_err(ModelKind::Logreg, {}, s));
    worst = std::max(worst, gradcheck_max_rel_err(ModelKind::MlpBn, {8}, s));
  }
  std::printf("gradcheck max relative error over %d seeds: %.3g (%s)\n", seeds,
              worst, worst < 1e-4 ? "ok" : "FAIL");
  return worst < 1e-4 ? 0 : 2;
}

int cmd_run(const std::string& config_path, const std::string& preset,
            const std::string& out_dir, int64_t seed_override) {
  ExperimentConfig cfg =
      config_path.empty() ? make_preset(preset) : load_config(config_path);
  if (seed_override >= 0) cfg.seed = (uint64_t)seed_override;
  ExperimentResult res = run_experiment(cfg);
  write_outputs(res, out_dir);
  std::cout << summary_text(res);
  return 0;
}

int cmd_grid(const std::string& config_dir, const std::string& out_dir,
             int jobs) {
  std::vector<std::pair<std::string, ExperimentConfig>> cfgs;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(config_dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files)
    cfgs.push_back({f.stem().string(), load_config(f.string())});

  GridSummary g = run_grid(cfgs, jobs);
  std::filesystem::create_directories(out_dir);
  std::ofstream(out_dir + "/grid_summary.csv", std::ios::binary) << g.csv;
  std::ofstream(out_dir + "/grid_matrix.csv", std::ios::binary) << g.table_text;
  std::cout << g.table_text;
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"deterministic federated-learning simulator with a "
               "trust-weighted byzantine defense"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run one experiment");
  std::string run_config, run_preset = "desk-synthetic", run_out = "out";
  int64_t run_seed = -1;
  run->add_option("--config", run_config, "config json path");
  run->add_option("--preset", run_preset, "preset name when no config given")
      ->check(CLI::IsMember(preset_names()));
  run->add_option("--out", run_out, "output directory")->required();
  run->add_option("--seed", run_seed, "override the config seed");

  auto* grid = app.add_subcommand("grid", "run every config in a directory");
  std::string grid_dir, grid_out = "out";
  int grid_jobs = 1;
  grid->add_option("--configs", grid_dir, "directory of config json files")
      ->required();
  grid->add_option("--out", grid_out, "output directory (default out/)");
  grid->add_option("--jobs", grid_jobs, "parallel experiments");

  auto* shap = app.add_subcommand("shapley-check",
                                  "monte-carlo vs exact contribution table");
  int shap_n = 6, shap_m = 2000;
  uint64_t shap_seed = 1;
  shap->add_option("--n", shap_n, "clients (<= 12)");
  shap->add_option("--m", shap_m, "permutation samples");
  shap->add_option("--seed", shap_seed, "scenario seed");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  int gc_seeds = 10;
  gc->add_option("--seeds", gc_seeds, "number of seeds");

  auto* rep = app.add_subcommand("report", "recompute a run summary from csv");
  std::string rep_in;
  rep->add_option("--in", rep_in, "directory with rounds.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (run->parsed()) return cmd_run(run_config, run_preset, run_out, run_seed);
    if (grid->parsed()) return cmd_grid(grid_dir, grid_out, grid_jobs);
    if (shap->parsed()) return cmd_shapley_check(shap_n, shap_m, shap_seed);
    if (gc->parsed()) return cmd_gradcheck(gc_seeds);
    if (rep->parsed()) {
      std::cout << report_from_dir(rep_in);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace fedtrust
