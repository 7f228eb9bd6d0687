#pragma once

#include <cmath>
#include <vector>

#include "fedtrust/rng.hpp"
#include "fedtrust/types.hpp"

namespace fedtrust {

// Adam on a flat parameter vector. Classic variant: weight decay is added to
// the gradient (L2 style), bias correction applied every step.
template <class S>
struct AdamT {
  VecX<S> m, v;
  long step = 0;
  S lr = S(1e-3);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
  S weight_decay = S(0);

  void init(Eigen::Index n) {
    m = VecX<S>::Zero(n);
    v = VecX<S>::Zero(n);
    step = 0;
  }

  void update(VecX<S>& params, const VecX<S>& grad) {
    VecX<S> g = grad;
    if (weight_decay != S(0)) g += weight_decay * params;
    ++step;
    m = beta1 * m + (S(1) - beta1) * g;
    v = (beta2 * v.array() + (S(1) - beta2) * g.array().square()).matrix();
    S bc1 = S(1) - S(std::pow(double(beta1), double(step)));
    S bc2 = S(1) - S(std::pow(double(beta2), double(step)));
    params.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  }
};

using Adamf = AdamT<float>;

enum class Act { Identity, Relu };

// Plain fully connected stack over a flat parameter vector, layout
// [W0 (out x in, row-major), b0, W1, b1, ...]. Batches are row-per-sample.
template <class S>
struct DenseNetT {
  std::vector<int> dims;  // {in, h1, ..., out}
  std::vector<Act> acts;  // one per layer
  VecX<S> params;

  int layer_count() const { return (int)dims.size() - 1; }

  int weight_offset(int layer) const {
    int off = 0;
    for (int l = 0; l < layer; ++l)
      off += dims[l] * dims[l + 1] + dims[l + 1];
    return off;
  }
  int bias_offset(int layer) const {
    return weight_offset(layer) + dims[layer] * dims[layer + 1];
  }
  int param_count() const { return weight_offset(layer_count()); }

  Eigen::Map<const RowMajorMat<S>> weight(int layer) const {
    return {params.data() + weight_offset(layer), dims[layer + 1], dims[layer]};
  }
  Eigen::Map<const VecX<S>> bias(int layer) const {
    return {params.data() + bias_offset(layer), dims[layer + 1]};
  }
  Eigen::Map<RowMajorMat<S>> weight(int layer) {
    return {params.data() + weight_offset(layer), dims[layer + 1], dims[layer]};
  }
  Eigen::Map<VecX<S>> bias(int layer) {
    return {params.data() + bias_offset(layer), dims[layer + 1]};
  }

  template <class T>
  DenseNetT<T> cast() const {
    DenseNetT<T> out;
    out.dims = dims;
    out.acts = acts;
    out.params = params.template cast<T>();
    return out;
  }
};

// He-style scaled uniform init, biases zero. Values are drawn in double and
// cast so float and double instantiations share the same numbers.
template <class S>
DenseNetT<S> make_dense_net(std::vector<int> dims, std::vector<Act> acts,
                            RngStream stream) {
  DenseNetT<S> net;
  net.dims = std::move(dims);
  net.acts = std::move(acts);
  net.params = VecX<S>::Zero(net.param_count());
  for (int l = 0; l < net.layer_count(); ++l) {
    RngStream ls = stream.child("layer", (uint64_t)l);
    double limit = std::sqrt(6.0 / double(net.dims[l]));
    auto w = net.weight(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        w(r, c) = S(limit * (2.0 * ls.u01() - 1.0));
  }
  return net;
}

template <class S>
struct DenseCacheT {
  MatX<S> input;
  std::vector<MatX<S>> pre;   // pre-activation per layer
  std::vector<MatX<S>> post;  // post-activation per layer
  std::vector<MatX<S>> drop;  // inverted-dropout masks (empty when unused)
};

// Optional inverted dropout on hidden layers during training passes.
struct DropoutSpec {
  double rate = 0.0;
  RngStream* stream = nullptr;

  bool active() const { return rate > 0.0 && stream; }
};

template <class S>
MatX<S> dense_net_forward(const DenseNetT<S>& net, const MatX<S>& x,
                          DenseCacheT<S>* cache = nullptr,
                          DropoutSpec dropout = {}) {
  MatX<S> a = x;
  if (cache) {
    cache->input = x;
    cache->pre.clear();
    cache->post.clear();
    cache->drop.clear();
  }
  for (int l = 0; l < net.layer_count(); ++l) {
    MatX<S> z = a * net.weight(l).transpose();
    z.rowwise() += net.bias(l).transpose();
    if (net.acts[l] == Act::Relu)
      a = z.cwiseMax(S(0));
    else
      a = z;
    if (cache) {
      cache->pre.push_back(z);
      cache->post.push_back(a);
    }
    if (dropout.active() && l + 1 < net.layer_count()) {
      S keep = S(1) - S(dropout.rate);
      MatX<S> mask(a.rows(), a.cols());
      for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
          mask(i, j) = dropout.stream->u01() < dropout.rate ? S(0) : S(1) / keep;
      a = a.cwiseProduct(mask);
      if (cache) {
        cache->post.back() = a;
        cache->drop.push_back(mask);
      }
    } else if (cache && dropout.active()) {
      cache->drop.push_back({});
    }
  }
  return a;
}

// Gradient of a scalar loss wrt params given d(loss)/d(output); optionally
// also returns d(loss)/d(input).
template <class S>
VecX<S> dense_net_backward(const DenseNetT<S>& net, const DenseCacheT<S>& cache,
                           const MatX<S>& dout, MatX<S>* dinput = nullptr) {
  VecX<S> grad = VecX<S>::Zero(net.param_count());
  MatX<S> da = dout;
  for (int l = net.layer_count() - 1; l >= 0; --l) {
    if (l < (int)cache.drop.size() && cache.drop[l].size() > 0)
      da = da.cwiseProduct(cache.drop[l]);
    MatX<S> dz = da;
    if (net.acts[l] == Act::Relu)
      dz = da.cwiseProduct(
          (cache.pre[l].array() > S(0)).template cast<S>().matrix());
    const MatX<S>& in = (l == 0) ? cache.input : cache.post[l - 1];
    Eigen::Map<RowMajorMat<S>> gw(grad.data() + net.weight_offset(l),
                                  net.dims[l + 1], net.dims[l]);
    Eigen::Map<VecX<S>> gb(grad.data() + net.bias_offset(l), net.dims[l + 1]);
    gw = dz.transpose() * in;
    gb = dz.colwise().sum().transpose();
    if (l > 0 || dinput) da = dz * net.weight(l);
  }
  if (dinput) *dinput = da;
  return grad;
}

}  // namespace fedtrust
