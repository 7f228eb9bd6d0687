#pragma once

#include <string>
#include <vector>

#include "fedtrust/config.hpp"
#include "fedtrust/fingerprint.hpp"
#include "fedtrust/model.hpp"

namespace fedtrust {

struct ClientRoundRecord {
  int client = 0;
  AttackKind tag = AttackKind::None;
  FingerprintVector fingerprint;
  int action = 5;
  float bin = 1.f;
  float anomaly = 0.f;
  double weight = 0.0;
};

// Everything logged per round. Wall time stays out of the serialized outputs
// so repeated runs are byte-identical.
struct RoundRecord {
  int round = 0;
  double test_accuracy = 0;
  double val_loss = 0;
  double val_accuracy = 0;
  double delta_acc = 0;
  double reward = 0;
  int tp = 0, fp = 0, tn = 0, fn = 0;
  bool fpr_defined = true, fnr_defined = true;
  int shapley_samples = 0;
  std::vector<ClientRoundRecord> clients;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RoundRecord> rounds;
  ParameterSet final_model;

  double final_test_accuracy() const {
    return rounds.empty() ? 0.0 : rounds.back().test_accuracy;
  }
};

// Runs the full round loop: broadcast, proximal local training, attacks,
// optional quantization, reference gradient, fingerprints, Shapley smoothing,
// attention + RL trust weighting, aggregation, evaluation, scheduled
// VAE/DQN/attention updates. Deterministic per (config, seed).
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// mnist helpers shared by the harness and the CLI
std::string resolve_data_dir(const DatasetConfig& ds);
bool mnist_available(const std::string& data_dir);

// Fixed-schema text outputs (6 significant digits, '\n' endings).
std::string rounds_csv(const ExperimentResult& r);
std::string clients_csv(const ExperimentResult& r);
std::string summary_json(const ExperimentResult& r);
std::string summary_text(const ExperimentResult& r);
void write_outputs(const ExperimentResult& r, const std::string& out_dir);

// Summary recomputed from previously written CSV files; matches the
// summary_text of the run that produced them.
std::string report_from_dir(const std::string& dir);

struct GridRow {
  std::string name;
  std::string aggregator;
  std::string attack;
  double final_accuracy = 0;
};

struct GridSummary {
  std::vector<GridRow> rows;
  std::string table_text;  // methods x attacks accuracy matrix + averages
  std::string csv;
};

// Runs each named config (optionally on several threads; experiments are
// fully isolated) and tabulates aggregator x attack final accuracies.
GridSummary run_grid(
    const std::vector<std::pair<std::string, ExperimentConfig>>& configs,
    int jobs = 1);

}  // namespace fedtrust
