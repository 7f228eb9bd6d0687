#pragma once

#include <string>
#include <vector>

#include "fedtrust/model.hpp"

namespace fedtrust {

enum class AggregatorKind {
  FedAvg,
  FedProx,
  FedBn,
  FedBnp,
  Krum,
  CoordMedian,
  GeoMedian,
  FltrustLike,
};

const char* aggregator_kind_name(AggregatorKind k);
AggregatorKind aggregator_kind_from_name(const std::string& name);

struct AggregatorSpec {
  AggregatorKind kind = AggregatorKind::FedAvg;
  double mu = 0.0;   // client-side proximal coefficient (fedprox / fedbnp)
  int krum_f = -1;   // assumed Byzantine count; -1 = floor(0.3 N)
  int weiszfeld_max_iters = 100;
  double weiszfeld_tol = 1e-6;
};

// Applies one aggregation step: returns global plus the combined update.
// Updates carry zeros on bn-local coordinates, so those slices of the global
// are never touched. `weights` are data-size weights for the mean-style kinds
// and trust weights for fedbnp (normalized internally, 64-bit accumulation);
// krum and the medians ignore them. fltrust_like needs `reference`.
ParameterSet aggregate(const AggregatorSpec& spec, const ParameterSet& global,
                       const std::vector<GradientUpdate>& updates,
                       const std::vector<double>& weights,
                       const Vecf* reference = nullptr);

// Exposed for tests: index of the update Krum selects.
int krum_select(const std::vector<GradientUpdate>& updates, int f);

// Weiszfeld iteration over the update vectors (64-bit), with the
// coincident-point guard.
Vecd geometric_median(const std::vector<GradientUpdate>& updates,
                      int max_iters, double tol);

}  // namespace fedtrust
