#pragma once

#include <vector>

#include "fedtrust/data.hpp"
#include "fedtrust/model.hpp"
#include "fedtrust/vae.hpp"

namespace fedtrust {

// Six-feature characterization of one client update:
//   f1 reconstruction error, f2 reference cosine, f3 mean peer cosine,
//   f4 L2 norm, f5 sign consistency, f6 smoothed contribution score.
struct FingerprintVector {
  double f1 = 0, f2 = 0, f3 = 0, f4 = 0, f5 = 0, f6 = 0;
  bool f1_untrained = false;  // f1 measured against the zero-decoder baseline
  bool degenerate = false;    // a cosine saw a zero vector

  Eigen::Matrix<double, 6, 1> as_vec() const {
    Eigen::Matrix<double, 6, 1> v;
    v << f1, f2, f3, f4, f5, f6;
    return v;
  }
};

struct ReferenceGradient {
  Vecf vector;  // same layout as GradientUpdate deltas
  int round = 0;
};

// Cosine in 64-bit; returns 0 and sets the flag when either vector is zero.
double safe_cosine(const Vecf& a, const Vecf& b, bool* degenerate = nullptr);

double f2_reference_cosine(const Vecf& g, const ReferenceGradient& ref,
                           bool* degenerate = nullptr);
double f3_peer_cosine(const Vecf& g, const std::vector<const Vecf*>& peers,
                      bool* degenerate = nullptr);
double f4_l2(const Vecf& g);

// Fraction of coordinates with matching sign, over coordinates where the
// reference is nonzero; 0.5 (neutral) when the reference is all zero.
double f5_sign_consistency(const Vecf& g, const ReferenceGradient& ref);

// One plain Adam epoch on the server validation set starting from the global
// model; the reference is the resulting update on aggregatable slices.
ReferenceGradient compute_reference(const ParameterSet& global,
                                    const LabeledDataset& server_val,
                                    const AdamConfig& adam, int batch_size,
                                    int round, RngStream stream);

}  // namespace fedtrust
