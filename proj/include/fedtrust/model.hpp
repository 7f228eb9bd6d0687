#pragma once

#include <cmath>
#include <vector>

#include "fedtrust/nn.hpp"
#include "fedtrust/rng.hpp"
#include "fedtrust/types.hpp"

namespace fedtrust {

enum class ModelKind { Logreg, MlpBn };
enum class LayerKind { Dense, BatchNorm };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int in = 0;
  int out = 0;
  bool relu_after = false;
};

struct Slice {
  int begin = 0;
  int size = 0;
  int end() const { return begin + size; }
};

// Index ranges into the flat value vector for one layer. Dense layers use
// weights/bias; batch-norm layers use gamma/beta (flagged bn-local, never
// aggregated). Unused slices have size 0.
struct LayerSlices {
  Slice weights, bias, gamma, beta;
};

struct ParameterLayout {
  ModelKind model = ModelKind::Logreg;
  int input_dim = 0;
  int num_classes = 0;
  int param_count = 0;
  int bn_stat_count = 0;
  std::vector<LayerSpec> layers;
  std::vector<LayerSlices> slices;
  std::vector<Slice> bn_mean;  // into bn_stats, one per batch-norm layer
  std::vector<Slice> bn_var;

  static ParameterLayout make(ModelKind kind, int input_dim,
                              const std::vector<int>& hidden, int classes);

  std::vector<Slice> bn_local_slices() const {
    std::vector<Slice> out;
    for (size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].kind == LayerKind::BatchNorm) {
        out.push_back(slices[l].gamma);
        out.push_back(slices[l].beta);
      }
    }
    return out;
  }

  template <class S>
  void zero_bn_local(VecX<S>& v) const {
    for (const Slice& s : bn_local_slices()) v.segment(s.begin, s.size).setZero();
  }

  int aggregatable_count() const {
    int n = param_count;
    for (const Slice& s : bn_local_slices()) n -= s.size;
    return n;
  }

  // Slice ranges must be disjoint and cover [0, param_count) exactly.
  void validate() const;

  bool operator==(const ParameterLayout&) const = default;
};

template <class S>
struct ParameterSetT {
  ParameterLayout layout;
  VecX<S> values;
  VecX<S> bn_stats;  // [mean, var] per batch-norm layer, never aggregated

  template <class T>
  ParameterSetT<T> cast() const {
    ParameterSetT<T> out;
    out.layout = layout;
    out.values = values.template cast<T>();
    out.bn_stats = bn_stats.template cast<T>();
    return out;
  }
};

using ParameterSet = ParameterSetT<float>;

// One client's per-round update over aggregatable parameters (bn-local
// coordinates are structurally zero). The tag is ground truth for metrics
// only; detection code receives the bare vector.
struct GradientUpdate {
  Vecf delta;
  int client_id = -1;
  int round = 0;
  AttackKind tag = AttackKind::None;
};

inline constexpr float kBnMomentum = 0.9f;
inline constexpr float kBnEps = 1e-5f;

template <class S>
ParameterSetT<S> build_model(ModelKind kind, int input_dim,
                             const std::vector<int>& hidden, int classes,
                             RngStream stream);

enum class ForwardMode { Train, Eval };

template <class S>
struct ForwardCacheT {
  bool valid = false;
  MatX<S> input;
  std::vector<int> labels;
  std::vector<MatX<S>> layer_in;
  std::vector<MatX<S>> z;  // layer output before the optional relu
  std::vector<MatX<S>> bn_xhat;
  std::vector<VecX<S>> bn_inv_std;
  MatX<S> probs;
};

// Mean cross-entropy. Train mode normalizes with batch statistics and
// updates running stats; eval mode uses running stats and never mutates.
template <class S>
S forward_train(ParameterSetT<S>& p, const MatX<S>& x,
                const std::vector<int>& y, ForwardCacheT<S>& cache,
                MatX<S>* logits = nullptr);

template <class S>
S forward_eval(const ParameterSetT<S>& p, const MatX<S>& x,
               const std::vector<int>& y, MatX<S>* logits = nullptr);

template <class S>
S forward_loss(ParameterSetT<S>& p, const MatX<S>& x, const std::vector<int>& y,
               ForwardMode mode, ForwardCacheT<S>* cache = nullptr,
               MatX<S>* logits = nullptr) {
  if (mode == ForwardMode::Train) {
    if (!cache) throw UsageError("train-mode forward requires a cache");
    return forward_train(p, x, y, *cache, logits);
  }
  return forward_eval(p, x, y, logits);
}

// Exact analytic gradient of the mean train-mode loss wrt all values
// (including bn gamma/beta). Requires a cache from forward_train.
template <class S>
VecX<S> backward(const ParameterSetT<S>& p, const ForwardCacheT<S>& cache);

struct EvalMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalMetrics evaluate(const ParameterSet& p, const Matf& x,
                     const std::vector<int>& y);

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.f;
};

struct LocalTrainResult {
  ParameterSet theta;     // trained local parameters incl. bn state
  GradientUpdate update;  // theta - global on aggregatable slices
};

// Proximal local training (Adam over shuffled mini-batches). Starts from the
// global values but restores the client's persisted bn gamma/beta and running
// stats first; the proximal pull mu/2 * ||theta - anchor||^2 acts on
// aggregatable coordinates only.
LocalTrainResult local_train_prox(const ParameterSet& global,
                                  const ParameterSet& persisted,
                                  const Matf& x, const std::vector<int>& y,
                                  int epochs, float mu, const AdamConfig& adam,
                                  int batch_size, RngStream stream,
                                  int client_id = -1, int round = 0);

// Plain Adam epoch loop shared by local training and the reference-gradient
// computation. anchor may be null (no proximal term).
template <class S>
void train_epochs(ParameterSetT<S>& p, const MatX<S>& x,
                  const std::vector<int>& y, int epochs, S mu,
                  const VecX<S>* anchor, const AdamConfig& adam,
                  int batch_size, RngStream stream);

template <class S>
ParameterSetT<S> with_delta(const ParameterSetT<S>& base, const Vecd& delta) {
  ParameterSetT<S> out = base;
  out.values =
      (base.values.template cast<double>() + delta).template cast<S>();
  return out;
}

// ---------------------------------------------------------------------------
// Implementation (header-only so tests can instantiate a double shadow).

inline void ParameterLayout::validate() const {
  std::vector<char> seen(param_count, 0);
  auto mark = [&](const Slice& s) {
    for (int i = s.begin; i < s.end(); ++i) {
      if (i < 0 || i >= param_count || seen[i])
        throw ConfigError("layout slices overlap or escape the value vector");
      seen[i] = 1;
    }
  };
  for (const LayerSlices& ls : slices) {
    mark(ls.weights);
    mark(ls.bias);
    mark(ls.gamma);
    mark(ls.beta);
  }
  for (char c : seen)
    if (!c) throw ConfigError("layout slices do not cover the value vector");
}

inline ParameterLayout ParameterLayout::make(ModelKind kind, int input_dim,
                                             const std::vector<int>& hidden,
                                             int classes) {
  if (input_dim < 1 || classes < 2)
    throw ConfigError("model dims must satisfy input_dim >= 1, classes >= 2");
  for (int h : hidden)
    if (h < 1) throw ConfigError("hidden dims must be >= 1");
  if (kind == ModelKind::Logreg && !hidden.empty())
    throw ConfigError("logreg takes no hidden layers");
  if (kind == ModelKind::MlpBn && hidden.empty())
    throw ConfigError("mlp_bn needs at least one hidden layer");

  ParameterLayout lt;
  lt.model = kind;
  lt.input_dim = input_dim;
  lt.num_classes = classes;
  int off = 0, stat_off = 0;
  auto add_dense = [&](int in, int out, bool relu) {
    LayerSpec spec{LayerKind::Dense, in, out, relu};
    LayerSlices ls;
    ls.weights = {off, in * out};
    off += in * out;
    ls.bias = {off, out};
    off += out;
    lt.layers.push_back(spec);
    lt.slices.push_back(ls);
  };
  auto add_bn = [&](int dim, bool relu) {
    LayerSpec spec{LayerKind::BatchNorm, dim, dim, relu};
    LayerSlices ls;
    ls.gamma = {off, dim};
    off += dim;
    ls.beta = {off, dim};
    off += dim;
    lt.layers.push_back(spec);
    lt.slices.push_back(ls);
    lt.bn_mean.push_back({stat_off, dim});
    stat_off += dim;
    lt.bn_var.push_back({stat_off, dim});
    stat_off += dim;
  };

  if (kind == ModelKind::Logreg) {
    add_dense(input_dim, classes, false);
  } else {
    int prev = input_dim;
    for (size_t i = 0; i < hidden.size(); ++i) {
      add_dense(prev, hidden[i], i != 0);  // first hidden gets relu after bn
      if (i == 0) add_bn(hidden[i], true);
      prev = hidden[i];
    }
    add_dense(prev, classes, false);
  }
  lt.param_count = off;
  lt.bn_stat_count = stat_off;
  lt.validate();
  return lt;
}

template <class S>
ParameterSetT<S> build_model(ModelKind kind, int input_dim,
                             const std::vector<int>& hidden, int classes,
                             RngStream stream) {
  ParameterSetT<S> p;
  p.layout = ParameterLayout::make(kind, input_dim, hidden, classes);
  p.values = VecX<S>::Zero(p.layout.param_count);
  p.bn_stats = VecX<S>::Zero(p.layout.bn_stat_count);
  int bn_idx = 0;
  for (size_t l = 0; l < p.layout.layers.size(); ++l) {
    const LayerSpec& spec = p.layout.layers[l];
    const LayerSlices& ls = p.layout.slices[l];
    if (spec.kind == LayerKind::Dense) {
      RngStream s = stream.child("layer", (uint64_t)l);
      double limit = std::sqrt(6.0 / double(spec.in));
      for (int i = 0; i < ls.weights.size; ++i)
        p.values[ls.weights.begin + i] = S(limit * (2.0 * s.u01() - 1.0));
      // biases stay zero
    } else {
      p.values.segment(ls.gamma.begin, ls.gamma.size).setOnes();
      // beta stays zero; running mean 0, running var 1
      p.bn_stats.segment(p.layout.bn_var[bn_idx].begin,
                         p.layout.bn_var[bn_idx].size)
          .setOnes();
      ++bn_idx;
    }
  }
  return p;
}

namespace detail {

template <class S>
Eigen::Map<const RowMajorMat<S>> weight_map(const VecX<S>& values,
                                            const LayerSlices& ls,
                                            const LayerSpec& spec) {
  return {values.data() + ls.weights.begin, spec.out, spec.in};
}

// Stable log-softmax cross-entropy; loss accumulated in double.
template <class S>
S softmax_ce(const MatX<S>& logits, const std::vector<int>& y, MatX<S>& probs) {
  const Eigen::Index b = logits.rows();
  probs.resize(b, logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    S mx = logits.row(i).maxCoeff();
    VecX<S> e = (logits.row(i).array() - mx).exp().transpose();
    S sum = e.sum();
    probs.row(i) = (e / sum).transpose();
    total += double(mx) + std::log(double(sum)) - double(logits(i, y[i]));
  }
  return S(total / double(b));
}

}  // namespace detail

template <class S>
S forward_impl(const ParameterSetT<S>& cp, ParameterSetT<S>* mut,
               const MatX<S>& x, const std::vector<int>& y, bool train,
               ForwardCacheT<S>* cache, MatX<S>* logits_out) {
  const ParameterLayout& lt = cp.layout;
  if (x.rows() == 0) throw ShapeError("empty batch");
  if ((int)x.cols() != lt.input_dim)
    throw ShapeError("feature dim does not match model input dim");
  if ((int)y.size() != (int)x.rows())
    throw ShapeError("label count does not match batch size");
  for (int c : y)
    if (c < 0 || c >= lt.num_classes) throw ShapeError("label out of range");

  if (cache) {
    cache->valid = false;
    cache->input = x;
    cache->labels = y;
    cache->layer_in.assign(lt.layers.size(), {});
    cache->z.assign(lt.layers.size(), {});
    cache->bn_xhat.assign(lt.layers.size(), {});
    cache->bn_inv_std.assign(lt.layers.size(), {});
  }

  const Eigen::Index b = x.rows();
  MatX<S> a = x;
  int bn_idx = 0;
  for (size_t l = 0; l < lt.layers.size(); ++l) {
    const LayerSpec& spec = lt.layers[l];
    const LayerSlices& ls = lt.slices[l];
    if (cache) cache->layer_in[l] = a;
    MatX<S> z;
    if (spec.kind == LayerKind::Dense) {
      auto w = detail::weight_map(cp.values, ls, spec);
      z = a * w.transpose();
      z.rowwise() +=
          cp.values.segment(ls.bias.begin, ls.bias.size).transpose();
    } else {
      auto gamma = cp.values.segment(ls.gamma.begin, ls.gamma.size);
      auto beta = cp.values.segment(ls.beta.begin, ls.beta.size);
      const Slice& ms = lt.bn_mean[bn_idx];
      const Slice& vs = lt.bn_var[bn_idx];
      VecX<S> mean, var;
      if (train) {
        mean = a.colwise().mean().transpose();
        MatX<S> centered = a.rowwise() - mean.transpose();
        var = centered.array().square().colwise().mean().transpose();
        if (mut) {
          mut->bn_stats.segment(ms.begin, ms.size) =
              S(kBnMomentum) * mut->bn_stats.segment(ms.begin, ms.size) +
              (S(1) - S(kBnMomentum)) * mean;
          mut->bn_stats.segment(vs.begin, vs.size) =
              S(kBnMomentum) * mut->bn_stats.segment(vs.begin, vs.size) +
              (S(1) - S(kBnMomentum)) * var;
        }
      } else {
        mean = cp.bn_stats.segment(ms.begin, ms.size);
        var = cp.bn_stats.segment(vs.begin, vs.size);
      }
      VecX<S> inv_std = (var.array() + S(kBnEps)).rsqrt();
      MatX<S> xhat = (a.rowwise() - mean.transpose()).array().rowwise() *
                     inv_std.transpose().array();
      z = (xhat.array().rowwise() * gamma.transpose().array()).matrix();
      z.rowwise() += beta.transpose();
      if (cache) {
        cache->bn_xhat[l] = xhat;
        cache->bn_inv_std[l] = inv_std;
      }
      ++bn_idx;
    }
    if (cache) cache->z[l] = z;
    a = spec.relu_after ? z.cwiseMax(S(0)).eval() : z;
  }

  if (logits_out) *logits_out = a;
  MatX<S> probs;
  S loss = detail::softmax_ce(a, y, probs);
  if (cache) {
    cache->probs = probs;
    cache->valid = train;
  }
  return loss;
}

template <class S>
S forward_train(ParameterSetT<S>& p, const MatX<S>& x,
                const std::vector<int>& y, ForwardCacheT<S>& cache,
                MatX<S>* logits) {
  return forward_impl<S>(p, &p, x, y, true, &cache, logits);
}

template <class S>
S forward_eval(const ParameterSetT<S>& p, const MatX<S>& x,
               const std::vector<int>& y, MatX<S>* logits) {
  return forward_impl<S>(p, nullptr, x, y, false, nullptr, logits);
}

template <class S>
VecX<S> backward(const ParameterSetT<S>& p, const ForwardCacheT<S>& cache) {
  const ParameterLayout& lt = p.layout;
  if (!cache.valid)
    throw UsageError("backward needs a cache from a train-mode forward");
  if (cache.input.cols() != lt.input_dim ||
      cache.probs.cols() != lt.num_classes)
    throw UsageError("cache does not match these parameters");

  const Eigen::Index b = cache.input.rows();
  VecX<S> grad = VecX<S>::Zero(lt.param_count);
  MatX<S> da = cache.probs;
  for (Eigen::Index i = 0; i < b; ++i) da(i, cache.labels[i]) -= S(1);
  da /= S(b);

  for (int l = (int)lt.layers.size() - 1; l >= 0; --l) {
    const LayerSpec& spec = lt.layers[l];
    const LayerSlices& ls = lt.slices[l];
    MatX<S> dz = spec.relu_after
                     ? da.cwiseProduct((cache.z[l].array() > S(0))
                                           .template cast<S>()
                                           .matrix())
                           .eval()
                     : da;
    if (spec.kind == LayerKind::Dense) {
      const MatX<S>& in = cache.layer_in[l];
      Eigen::Map<RowMajorMat<S>> gw(grad.data() + ls.weights.begin, spec.out,
                                    spec.in);
      gw = dz.transpose() * in;
      grad.segment(ls.bias.begin, ls.bias.size) =
          dz.colwise().sum().transpose();
      if (l > 0) da = dz * detail::weight_map(p.values, ls, spec);
    } else {
      const MatX<S>& xhat = cache.bn_xhat[l];
      const VecX<S>& inv_std = cache.bn_inv_std[l];
      auto gamma = p.values.segment(ls.gamma.begin, ls.gamma.size);
      grad.segment(ls.gamma.begin, ls.gamma.size) =
          dz.cwiseProduct(xhat).colwise().sum().transpose();
      grad.segment(ls.beta.begin, ls.beta.size) =
          dz.colwise().sum().transpose();
      MatX<S> dxhat =
          (dz.array().rowwise() * gamma.transpose().array()).matrix();
      VecX<S> sum_dx = dxhat.colwise().sum().transpose();
      VecX<S> sum_dx_xhat =
          dxhat.cwiseProduct(xhat).colwise().sum().transpose();
      MatX<S> tmp = S(b) * dxhat;
      tmp.rowwise() -= sum_dx.transpose();
      tmp -= (xhat.array().rowwise() * sum_dx_xhat.transpose().array())
                 .matrix();
      da = (tmp.array().rowwise() *
            (inv_std.transpose().array() / S(b)))
               .matrix();
    }
  }
  return grad;
}

template <class S>
void train_epochs(ParameterSetT<S>& p, const MatX<S>& x,
                  const std::vector<int>& y, int epochs, S mu,
                  const VecX<S>* anchor, const AdamConfig& adam,
                  int batch_size, RngStream stream) {
  const int n = (int)x.rows();
  AdamT<S> opt;
  opt.lr = S(adam.lr);
  opt.beta1 = S(adam.beta1);
  opt.beta2 = S(adam.beta2);
  opt.eps = S(adam.eps);
  opt.weight_decay = S(adam.weight_decay);
  opt.init(p.layout.param_count);

  ForwardCacheT<S> cache;
  for (int e = 0; e < epochs; ++e) {
    std::vector<int> order = stream.child("epoch", (uint64_t)e).permutation(n);
    for (int start = 0; start < n; start += batch_size) {
      int bs = std::min(batch_size, n - start);
      MatX<S> bx(bs, x.cols());
      std::vector<int> by(bs);
      for (int i = 0; i < bs; ++i) {
        bx.row(i) = x.row(order[start + i]);
        by[i] = y[order[start + i]];
      }
      forward_train(p, bx, by, cache);
      VecX<S> grad = backward(p, cache);
      if (mu != S(0) && anchor) {
        VecX<S> pull = mu * (p.values - *anchor);
        p.layout.zero_bn_local(pull);
        grad += pull;
      }
      opt.update(p.values, grad);
    }
  }
}

}  // namespace fedtrust
