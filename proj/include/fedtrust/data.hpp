#pragma once

#include <array>
#include <string>
#include <vector>

#include "fedtrust/rng.hpp"
#include "fedtrust/types.hpp"

namespace fedtrust {

struct LabeledDataset {
  Matf features;  // one row per sample
  std::vector<int> labels;
  int class_count = 0;

  int size() const { return (int)features.rows(); }
  int dim() const { return (int)features.cols(); }
  std::vector<int> class_histogram() const;
};

// Gaussian mixture with class c centered at separation * u_c for fixed unit
// directions u_c (equally spaced on the first-two-coordinate circle).
// Classes are balanced to within one sample.
LabeledDataset make_synthetic(int classes, int dim, int samples,
                              float separation, uint64_t seed);

// Big-endian IDX files (magic 0x803 images / 0x801 labels), pixels scaled
// to [0,1]. Throws IdxParseError with a distinct code per failure.
LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path);

enum class PartitionScheme { Iid, Dirichlet, LabelSkew, QuantitySkew };

struct PartitionSpec {
  PartitionScheme scheme = PartitionScheme::Iid;
  double alpha = 0.5;       // dirichlet concentration
  double skew_ratio = 0.7;  // dominant-class fraction for label skew
  double sigma = 0.5;       // log-normal spread for quantity skew
};

struct PartitionPlan {
  PartitionSpec spec;
  int client_count = 0;
  uint64_t seed = 0;
  std::vector<std::vector<int>> assignments;

  void validate(int dataset_size) const;  // disjoint, in-range, non-empty
};

PartitionPlan partition(const LabeledDataset& ds, const PartitionSpec& spec,
                        int clients, uint64_t seed);

struct SplitIndices {
  std::vector<int> train, val, test;
};

// Per-class proportional allocation with largest-remainder rounding;
// remainder ties prefer the split furthest below its global target so the
// overall sizes match the fractions exactly.
SplitIndices stratified_split(const LabeledDataset& ds,
                              std::array<double, 3> fractions, uint64_t seed);

LabeledDataset subset(const LabeledDataset& ds, const std::vector<int>& idx);

// Stratified sample of about n points (per-class largest remainder). Returns
// the whole dataset when n >= size.
LabeledDataset stratified_subsample(const LabeledDataset& ds, int n,
                                    uint64_t seed);

}  // namespace fedtrust
