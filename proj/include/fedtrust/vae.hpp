#pragma once

#include <vector>

#include "fedtrust/nn.hpp"
#include "fedtrust/rng.hpp"
#include "fedtrust/types.hpp"

namespace fedtrust {

struct VaeConfig {
  int input_dim = 256;  // projected gradient dimension (== grad dim: identity)
  std::vector<int> encoder_dims{128, 64};
  int latent_dim = 16;
  double kl_weight = 1e-3;
  double lr = 1e-3;
  int epochs = 50;
  int batch_size = 64;
  int train_interval = 20;  // rounds between training passes
  int min_buffer = 64;
  int buffer_capacity = 512;
};

// Gradient VAE for distributional anomaly scoring. Gradients pass through a
// frozen seeded random projection; the encoder emits mean and log-variance,
// sampling happens only during training (scoring uses the posterior mean so
// reconstruction error is deterministic).
template <class S>
struct VaeT {
  VaeConfig cfg;
  int grad_dim = 0;
  bool identity_projection = false;
  Matf projection;  // input_dim x grad_dim, frozen after construction
  DenseNetT<S> enc;    // input -> encoder_dims (relu)
  DenseNetT<S> heads;  // enc_out -> 2*latent (mu | logvar)
  DenseNetT<S> dec;    // latent -> reversed encoder_dims -> input
  std::vector<VecX<S>> buffer;  // ring of projected benign gradients
  int buffer_next = 0;
  bool trained = false;
  int last_trained_round = -1;
};

using Vae = VaeT<float>;

template <class S>
VaeT<S> make_vae(const VaeConfig& cfg, int grad_dim, RngStream stream) {
  if (cfg.input_dim < 1 || cfg.latent_dim < 1 || cfg.encoder_dims.empty())
    throw ConfigError("vae dims must be >= 1");
  VaeT<S> v;
  v.cfg = cfg;
  v.grad_dim = grad_dim;
  v.identity_projection = (cfg.input_dim == grad_dim);
  if (!v.identity_projection) {
    v.projection.resize(cfg.input_dim, grad_dim);
    RngStream ps = stream.child("projection");
    float scale = 1.f / std::sqrt(float(cfg.input_dim));
    for (Eigen::Index r = 0; r < v.projection.rows(); ++r)
      for (Eigen::Index c = 0; c < v.projection.cols(); ++c)
        v.projection(r, c) = float(ps.normal()) * scale;
  }
  std::vector<int> enc_dims{cfg.input_dim};
  enc_dims.insert(enc_dims.end(), cfg.encoder_dims.begin(),
                  cfg.encoder_dims.end());
  v.enc = make_dense_net<S>(enc_dims,
                            std::vector<Act>(cfg.encoder_dims.size(), Act::Relu),
                            stream.child("enc"));
  v.heads = make_dense_net<S>({cfg.encoder_dims.back(), 2 * cfg.latent_dim},
                              {Act::Identity}, stream.child("heads"));
  std::vector<int> dec_dims{cfg.latent_dim};
  dec_dims.insert(dec_dims.end(), cfg.encoder_dims.rbegin(),
                  cfg.encoder_dims.rend());
  dec_dims.push_back(cfg.input_dim);
  std::vector<Act> dec_acts(dec_dims.size() - 1, Act::Relu);
  dec_acts.back() = Act::Identity;
  v.dec = make_dense_net<S>(dec_dims, dec_acts, stream.child("dec"));
  return v;
}

template <class S>
int vae_param_count(const VaeT<S>& v) {
  return v.enc.param_count() + v.heads.param_count() + v.dec.param_count();
}

template <class S>
VecX<S> vae_params(const VaeT<S>& v) {
  VecX<S> p(vae_param_count(v));
  p << v.enc.params, v.heads.params, v.dec.params;
  return p;
}

template <class S>
void vae_set_params(VaeT<S>& v, const VecX<S>& p) {
  int a = v.enc.param_count(), b = v.heads.param_count();
  v.enc.params = p.segment(0, a);
  v.heads.params = p.segment(a, b);
  v.dec.params = p.segment(a + b, v.dec.param_count());
}

template <class S>
VecX<S> vae_project(const VaeT<S>& v, const Vecf& g) {
  if ((int)g.size() != v.grad_dim)
    throw ShapeError("gradient dim does not match vae projection");
  if (v.identity_projection) return g.template cast<S>();
  Vecf p = v.projection * g;
  return p.template cast<S>();
}

template <class S>
void vae_push_benign(VaeT<S>& v, const Vecf& g) {
  VecX<S> p = vae_project(v, g);
  if ((int)v.buffer.size() < v.cfg.buffer_capacity) {
    v.buffer.push_back(std::move(p));
  } else {
    v.buffer[v.buffer_next] = std::move(p);
    v.buffer_next = (v.buffer_next + 1) % v.cfg.buffer_capacity;
  }
}

// MSE reconstruction + weighted KL over one batch (rows = samples), with the
// reparameterization noise supplied by the caller. Returns the loss; fills
// the flat gradient [enc | heads | dec] when requested.
template <class S>
S vae_loss_grad(const VaeT<S>& v, const MatX<S>& batch, const MatX<S>& eps,
                VecX<S>* grad_out) {
  const Eigen::Index bsz = batch.rows();
  const int latent = v.cfg.latent_dim;
  DenseCacheT<S> enc_cache, heads_cache, dec_cache;
  MatX<S> h = dense_net_forward(v.enc, batch, &enc_cache);
  MatX<S> mulv = dense_net_forward(v.heads, h, &heads_cache);
  MatX<S> mu = mulv.leftCols(latent);
  MatX<S> logvar = mulv.rightCols(latent);
  MatX<S> std_ = (S(0.5) * logvar).array().exp();
  MatX<S> z = mu + std_.cwiseProduct(eps);
  MatX<S> rec = dense_net_forward(v.dec, z, &dec_cache);

  MatX<S> diff = rec - batch;
  double recon = diff.template cast<double>().squaredNorm() / double(bsz);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < bsz; ++i)
    for (int j = 0; j < latent; ++j) {
      double m = double(mu(i, j)), lv = double(logvar(i, j));
      kl += -0.5 * (1.0 + lv - m * m - std::exp(lv));
    }
  kl /= double(bsz);
  S loss = S(recon + v.cfg.kl_weight * kl);
  if (!grad_out) return loss;

  const S klw = S(v.cfg.kl_weight);
  MatX<S> drec = S(2) / S(bsz) * diff;
  MatX<S> dz;
  VecX<S> gdec = dense_net_backward(v.dec, dec_cache, drec, &dz);
  MatX<S> dmu = dz + (klw / S(bsz)) * mu;
  MatX<S> dlogvar = S(0.5) * dz.cwiseProduct(eps).cwiseProduct(std_) +
                    (klw / S(bsz)) * S(0.5) *
                        (logvar.array().exp() - S(1)).matrix();
  MatX<S> dmulv(bsz, 2 * latent);
  dmulv << dmu, dlogvar;
  MatX<S> dh;
  VecX<S> gheads = dense_net_backward(v.heads, heads_cache, dmulv, &dh);
  VecX<S> genc = dense_net_backward(v.enc, enc_cache, dh, static_cast<MatX<S>*>(nullptr));
  grad_out->resize(vae_param_count(v));
  *grad_out << genc, gheads, gdec;
  return loss;
}

// Scheduled training pass: fires when round is a multiple of the interval
// and the buffer has enough entries; otherwise a no-op. Returns whether it
// fired.
template <class S>
bool vae_train(VaeT<S>& v, int round, RngStream stream) {
  if (round <= 0 || round % v.cfg.train_interval != 0) return false;
  if ((int)v.buffer.size() < v.cfg.min_buffer) return false;

  const int n = (int)v.buffer.size();
  AdamT<S> opt;
  opt.lr = S(v.cfg.lr);
  opt.init(vae_param_count(v));
  VecX<S> params = vae_params(v);
  for (int e = 0; e < v.cfg.epochs; ++e) {
    RngStream es = stream.child("epoch", (uint64_t)e);
    std::vector<int> order = es.permutation(n);
    for (int start = 0; start < n; start += v.cfg.batch_size) {
      int bs = std::min(v.cfg.batch_size, n - start);
      MatX<S> batch(bs, v.cfg.input_dim);
      for (int i = 0; i < bs; ++i)
        batch.row(i) = v.buffer[order[start + i]].transpose();
      MatX<S> eps(bs, v.cfg.latent_dim);
      for (Eigen::Index i = 0; i < eps.rows(); ++i)
        for (Eigen::Index j = 0; j < eps.cols(); ++j)
          eps(i, j) = S(es.normal());
      VecX<S> grad;
      vae_loss_grad(v, batch, eps, &grad);
      opt.update(params, grad);
      vae_set_params(v, params);
    }
  }
  v.trained = true;
  v.last_trained_round = round;
  return true;
}

// Deterministic reconstruction error ||p - dec(enc_mean(p))||^2. Before the
// first training pass this scores against a zero decoder and sets the flag.
template <class S>
double vae_recon_error(const VaeT<S>& v, const Vecf& g,
                       bool* untrained = nullptr) {
  VecX<S> p = vae_project(v, g);
  if (untrained) *untrained = !v.trained;
  if (!v.trained) return p.template cast<double>().squaredNorm();
  MatX<S> batch = p.transpose();
  MatX<S> h = dense_net_forward(v.enc, batch);
  MatX<S> mulv = dense_net_forward(v.heads, h);
  MatX<S> mu = mulv.leftCols(v.cfg.latent_dim);
  MatX<S> rec = dense_net_forward(v.dec, mu);
  return (rec - batch).template cast<double>().squaredNorm();
}

}  // namespace fedtrust
