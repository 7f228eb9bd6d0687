#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "fedtrust/attention.hpp"
#include "fedtrust/types.hpp"

namespace fedtrust {

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | mnist
  int classes = 3;
  int dim = 8;
  int samples = 3000;
  double separation = 6.0;
  std::string data_dir;  // mnist idx files; empty -> $FEDTRUST_DATA_DIR or ./data
};

struct ModelConfig {
  std::string kind = "logreg";  // logreg | mlp_bn
  std::vector<int> hidden;
};

struct PartitionConfig {
  std::string scheme = "iid";  // iid | dirichlet | label_skew | quantity_skew
  double alpha = 0.5;
  double ratio = 0.7;
  double sigma = 0.5;
};

struct AttackConfig {
  std::string kind = "none";
  double fraction = 0.3;
  double lambda = 10.0;
  double partial_lambda = 5.0;
  double mask_fraction = 0.5;
  double sigma = 10.0;
  double flip_prob = 0.5;
  bool allow_overcap = false;
};

struct AggregatorConfig {
  std::string kind = "fedbnp";
  double mu = 0.01;  // client-side proximal pull for fedprox / fedbnp
  int krum_f = -1;
  int weiszfeld_max_iters = 100;
  double weiszfeld_tol = 1e-6;
};

struct DefenseConfig {
  bool fingerprint = true;
  bool vae = true;
  bool shapley = true;
  bool rl = true;
  bool quantize = false;
  int shapley_samples = 100;
  bool adaptive_shapley = false;
  int quantize_bits = 8;
};

struct VaeDims {
  int input_dim = 256;  // -1: full gradient dimension (identity projection)
  std::vector<int> encoder{128, 64};
  int latent = 16;
};

struct RlDims {
  std::vector<int> hidden{64, 32};
  double dropout = 0.0;
};

// One experiment, round-trippable through a versioned JSON document.
// Unknown keys are rejected so configs stay lossless.
struct ExperimentConfig {
  int version = 1;
  uint64_t seed = 1;
  int rounds = 15;
  int clients = 10;
  int local_epochs = 3;
  int batch_size = 64;
  double learning_rate = 1e-4;
  bool cosine_decay = true;
  double weight_decay = 5e-5;
  double participation = 1.0;
  bool normalize_per_client = true;
  DatasetConfig dataset;
  ModelConfig model;
  PartitionConfig partition;
  AttackConfig attack;
  AggregatorConfig aggregator;
  DefenseConfig defense;
  VaeDims vae;
  RlDims rl;
  AttentionConfig attention{64, 2, 32, 16};

  void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// Named starting points: "desk-synthetic", "desk-mnist", "full-mnist".
ExperimentConfig make_preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace fedtrust
