#pragma once

#include <cmath>
#include <vector>

#include "fedtrust/nn.hpp"
#include "fedtrust/rng.hpp"
#include "fedtrust/types.hpp"

namespace fedtrust {

struct AttentionConfig {
  int chunks = 64;     // P contiguous gradient chunks
  int heads = 2;       // full-scale preset uses 8
  int model_dim = 32;  // full-scale preset uses 256
  int fused_dim = 16;
  // Desk realization embeds each chunk's summary stats directly; the local
  // stage applies attention over sub-segment tokens inside every chunk
  // first (shares the token embedding and Q/K/V projections).
  bool local_attention = false;

  void validate() const {
    if (chunks < 1 || heads < 1 || model_dim < 1 || fused_dim < 1)
      throw ConfigError("attention dims must be >= 1");
    if (model_dim % heads != 0)
      throw ConfigError("attention model_dim must be divisible by heads");
  }
};

// All trainable tensors of the dual-attention trust scorer live in one flat
// vector: chunk-token embedding, Q/K/V projections, feature softmax, feature
// embedding, fusion maps, and the anomaly head.
template <class S>
struct AttentionParamsT {
  AttentionConfig cfg;
  VecX<S> params;

  int m() const { return cfg.model_dim; }
  int fd() const { return cfg.fused_dim; }

  int w_tok() const { return 0; }
  int b_tok() const { return w_tok() + m() * 4; }
  int w_q() const { return b_tok() + m(); }
  int w_k() const { return w_q() + m() * m(); }
  int w_v() const { return w_k() + m() * m(); }
  int w_f() const { return w_v() + m() * m(); }
  int b_f() const { return w_f() + 36; }
  int w_fe() const { return b_f() + 6; }
  int b_fe() const { return w_fe() + fd() * 6; }
  int w_g() const { return b_fe() + fd(); }
  int w_h() const { return w_g() + fd() * m(); }
  int b_fuse() const { return w_h() + fd() * fd(); }
  int w_head() const { return b_fuse() + fd(); }
  int b_head() const { return w_head() + fd(); }
  int param_count() const { return b_head() + 1; }

  Eigen::Map<const RowMajorMat<S>> mat(int off, int rows, int cols) const {
    return {params.data() + off, rows, cols};
  }
  Eigen::Map<const VecX<S>> vec(int off, int n) const {
    return {params.data() + off, n};
  }

  template <class T>
  AttentionParamsT<T> cast() const {
    AttentionParamsT<T> out;
    out.cfg = cfg;
    out.params = params.template cast<T>();
    return out;
  }
};

using AttentionParams = AttentionParamsT<float>;

template <class S>
AttentionParamsT<S> make_attention(const AttentionConfig& cfg,
                                   RngStream stream) {
  cfg.validate();
  AttentionParamsT<S> p;
  p.cfg = cfg;
  p.params = VecX<S>::Zero(p.param_count());
  auto fill = [&](int off, int rows, int cols, RngStream s) {
    double limit = std::sqrt(6.0 / double(cols));
    for (int i = 0; i < rows * cols; ++i)
      p.params[off + i] = S(limit * (2.0 * s.u01() - 1.0));
  };
  int m = cfg.model_dim, fd = cfg.fused_dim;
  fill(p.w_tok(), m, 4, stream.child("w_tok"));
  fill(p.w_q(), m, m, stream.child("w_q"));
  fill(p.w_k(), m, m, stream.child("w_k"));
  fill(p.w_v(), m, m, stream.child("w_v"));
  fill(p.w_f(), 6, 6, stream.child("w_f"));
  fill(p.w_fe(), fd, 6, stream.child("w_fe"));
  fill(p.w_g(), fd, m, stream.child("w_g"));
  fill(p.w_h(), fd, fd, stream.child("w_h"));
  fill(p.w_head(), 1, fd, stream.child("w_head"));
  return p;
}

// Per-chunk summary statistics [mean, std, max|.|, L2], 64-bit accumulation.
// Invariant to permutations of coordinates within one chunk.
Matd chunk_stats(const Vecf& g, int chunks);

// Summary stats of a contiguous slice split into up to `pieces` sub-segments
// (used by the local attention stage).
Matd segment_stats(const Vecf& g, int begin, int len, int pieces);

template <class S>
struct MhaCacheT {
  MatX<S> x;                           // tokens in
  std::vector<MatX<S>> q, k, v, a;     // per head
  MatX<S> ocat;                        // tokens out
};

template <class S>
struct GradAttnCacheT {
  MatX<S> tokens;                   // P x 4 (stats path)
  std::vector<MatX<S>> sub_tokens;  // per chunk, local path
  std::vector<MhaCacheT<S>> local;  // per chunk, local path
  MhaCacheT<S> global;
};

template <class S>
struct FeatAttnCacheT {
  VecX<S> f, alpha, u;
};

template <class S>
struct FuseCacheT {
  VecX<S> g_emb, f_emb, pre, h;
  S anomaly{};
};

namespace detail {

template <class S>
MatX<S> softmax_rows(const MatX<S>& z) {
  MatX<S> out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    S mx = z.row(i).maxCoeff();
    VecX<S> e = (z.row(i).array() - mx).exp().transpose();
    out.row(i) = (e / e.sum()).transpose();
  }
  return out;
}

// d(loss)/d(logits) given softmax output a and d(loss)/d(a), row-wise.
template <class S>
MatX<S> softmax_rows_backward(const MatX<S>& a, const MatX<S>& da) {
  MatX<S> out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    S dot = a.row(i).dot(da.row(i));
    out.row(i) = a.row(i).cwiseProduct((da.row(i).array() - dot).matrix());
  }
  return out;
}

}  // namespace detail

namespace detail {

// Multi-head scaled dot-product self-attention over a token matrix.
template <class S>
MatX<S> mha_forward(const MatX<S>& x, const AttentionParamsT<S>& p,
                    MhaCacheT<S>& c) {
  const int m = p.cfg.model_dim;
  const int heads = p.cfg.heads;
  const int dh = m / heads;
  const S scale = S(1) / S(std::sqrt(double(dh)));
  auto wq = p.mat(p.w_q(), m, m);
  auto wk = p.mat(p.w_k(), m, m);
  auto wv = p.mat(p.w_v(), m, m);
  c.x = x;
  c.q.resize(heads);
  c.k.resize(heads);
  c.v.resize(heads);
  c.a.resize(heads);
  c.ocat.resize(x.rows(), m);
  for (int h = 0; h < heads; ++h) {
    c.q[h] = x * wq.middleRows(h * dh, dh).transpose();
    c.k[h] = x * wk.middleRows(h * dh, dh).transpose();
    c.v[h] = x * wv.middleRows(h * dh, dh).transpose();
    MatX<S> scores = scale * (c.q[h] * c.k[h].transpose());
    c.a[h] = softmax_rows(scores);
    c.ocat.middleCols(h * dh, dh) = c.a[h] * c.v[h];
  }
  return c.ocat;
}

// Accumulates parameter gradients into `grad` and returns d(loss)/d(tokens).
template <class S>
MatX<S> mha_backward(const MatX<S>& docat, const AttentionParamsT<S>& p,
                     const MhaCacheT<S>& c, VecX<S>& grad) {
  const int m = p.cfg.model_dim;
  const int heads = p.cfg.heads;
  const int dh = m / heads;
  const S scale = S(1) / S(std::sqrt(double(dh)));
  auto wq = p.mat(p.w_q(), m, m);
  auto wk = p.mat(p.w_k(), m, m);
  auto wv = p.mat(p.w_v(), m, m);
  Eigen::Map<RowMajorMat<S>> gwq(grad.data() + p.w_q(), m, m);
  Eigen::Map<RowMajorMat<S>> gwk(grad.data() + p.w_k(), m, m);
  Eigen::Map<RowMajorMat<S>> gwv(grad.data() + p.w_v(), m, m);
  MatX<S> dx = MatX<S>::Zero(c.x.rows(), m);
  for (int h = 0; h < heads; ++h) {
    MatX<S> do_h = docat.middleCols(h * dh, dh);
    MatX<S> da = do_h * c.v[h].transpose();
    MatX<S> dv = c.a[h].transpose() * do_h;
    MatX<S> ds = softmax_rows_backward(c.a[h], da);
    MatX<S> dq = scale * (ds * c.k[h]);
    MatX<S> dk = scale * (ds.transpose() * c.q[h]);
    gwq.middleRows(h * dh, dh) += dq.transpose() * c.x;
    gwk.middleRows(h * dh, dh) += dk.transpose() * c.x;
    gwv.middleRows(h * dh, dh) += dv.transpose() * c.x;
    dx += dq * wq.middleRows(h * dh, dh);
    dx += dk * wk.middleRows(h * dh, dh);
    dx += dv * wv.middleRows(h * dh, dh);
  }
  return dx;
}

inline constexpr int kLocalPieces = 4;

}  // namespace detail

// Two-stage gradient stream. Stage 1 turns each contiguous chunk into one
// token: either a linear embedding of its summary stats (desk default) or,
// with local_attention, attention over sub-segment tokens inside the chunk,
// mean-pooled. Stage 2 applies multi-head attention over the P tokens and
// mean-pools to a single embedding.
template <class S>
VecX<S> gradient_attention(const Vecf& g, const AttentionParamsT<S>& p,
                           GradAttnCacheT<S>* cache = nullptr) {
  const int m = p.cfg.model_dim;
  const int P = p.cfg.chunks;
  const int d = (int)g.size();
  if (d < P) throw ShapeError("gradient dimension is smaller than the chunk count");

  GradAttnCacheT<S> local_cache;
  GradAttnCacheT<S>& c = cache ? *cache : local_cache;
  auto w_tok = p.mat(p.w_tok(), m, 4);
  auto b_tok = p.vec(p.b_tok(), m);

  MatX<S> x(P, m);
  if (!p.cfg.local_attention) {
    c.tokens = chunk_stats(g, P).cast<S>();
    x = c.tokens * w_tok.transpose();
    x.rowwise() += b_tok.transpose();
  } else {
    c.sub_tokens.resize(P);
    c.local.resize(P);
    const int base = d / P, rem = d % P;
    int pos = 0;
    for (int ch = 0; ch < P; ++ch) {
      int len = base + (ch < rem ? 1 : 0);
      MatX<S> sub = segment_stats(g, pos, len, detail::kLocalPieces).cast<S>();
      c.sub_tokens[ch] = sub;
      MatX<S> emb = sub * w_tok.transpose();
      emb.rowwise() += b_tok.transpose();
      MatX<S> out = detail::mha_forward(emb, p, c.local[ch]);
      x.row(ch) = out.colwise().mean();
      pos += len;
    }
  }
  detail::mha_forward(x, p, c.global);
  return c.global.ocat.colwise().mean().transpose();
}

// Feature stream: learned softmax over the six fingerprint features and a
// linear embedding of the re-weighted vector.
template <class S>
VecX<S> feature_attention(const Eigen::Matrix<double, 6, 1>& f,
                          const AttentionParamsT<S>& p,
                          FeatAttnCacheT<S>* cache = nullptr,
                          VecX<S>* alpha_out = nullptr) {
  FeatAttnCacheT<S> local;
  FeatAttnCacheT<S>& c = cache ? *cache : local;
  c.f = f.cast<S>();
  VecX<S> logits = p.mat(p.w_f(), 6, 6) * c.f + p.vec(p.b_f(), 6);
  MatX<S> row = logits.transpose();
  c.alpha = detail::softmax_rows(row).transpose();
  c.u = c.f.cwiseProduct(c.alpha);
  if (alpha_out) *alpha_out = c.alpha;
  return p.mat(p.w_fe(), p.fd(), 6) * c.u + p.vec(p.b_fe(), p.fd());
}

// Fusion h = relu(Wg g_emb + Wh f_emb + b) plus the logistic anomaly head.
template <class S>
VecX<S> fuse(const VecX<S>& g_emb, const VecX<S>& f_emb,
             const AttentionParamsT<S>& p, S* anomaly,
             FuseCacheT<S>* cache = nullptr) {
  FuseCacheT<S> local;
  FuseCacheT<S>& c = cache ? *cache : local;
  c.g_emb = g_emb;
  c.f_emb = f_emb;
  c.pre = p.mat(p.w_g(), p.fd(), p.m()) * g_emb +
          p.mat(p.w_h(), p.fd(), p.fd()) * f_emb + p.vec(p.b_fuse(), p.fd());
  c.h = c.pre.cwiseMax(S(0));
  S z = p.vec(p.w_head(), p.fd()).dot(c.h) + p.params[p.b_head()];
  c.anomaly = S(1) / (S(1) + std::exp(double(-z)));
  if (anomaly) *anomaly = c.anomaly;
  return c.h;
}

template <class S>
struct TrustScore {
  VecX<S> h;
  S anomaly{};
};

template <class S>
TrustScore<S> trust_forward(const Vecf& g, const Eigen::Matrix<double, 6, 1>& f,
                            const AttentionParamsT<S>& p) {
  TrustScore<S> out;
  VecX<S> g_emb = gradient_attention(g, p);
  VecX<S> f_emb = feature_attention(f, p);
  out.h = fuse(g_emb, f_emb, p, &out.anomaly);
  return out;
}

// Mean binary cross-entropy of the anomaly head over one round's clients,
// with the full manual backward through fusion and both streams.
template <class S>
S attention_loss_grad(const AttentionParamsT<S>& p,
                      const std::vector<const Vecf*>& grads,
                      const std::vector<Eigen::Matrix<double, 6, 1>>& feats,
                      const std::vector<int>& labels, VecX<S>* grad_out);

// One SGD step on the anomaly pseudo-labels; returns the pre-step loss.
double train_attention_step(AttentionParams& p,
                            const std::vector<const Vecf*>& grads,
                            const std::vector<Eigen::Matrix<double, 6, 1>>& feats,
                            const std::vector<int>& labels, double lr);

// ---------------------------------------------------------------------------

template <class S>
S attention_loss_grad(const AttentionParamsT<S>& p,
                      const std::vector<const Vecf*>& grads,
                      const std::vector<Eigen::Matrix<double, 6, 1>>& feats,
                      const std::vector<int>& labels, VecX<S>* grad_out) {
  const int n = (int)grads.size();
  if (n == 0 || (int)feats.size() != n || (int)labels.size() != n)
    throw UsageError("attention training batch is inconsistent");
  const int m = p.cfg.model_dim;

  VecX<S> grad;
  if (grad_out) grad = VecX<S>::Zero(p.param_count());
  double total = 0;

  for (int i = 0; i < n; ++i) {
    GradAttnCacheT<S> gc;
    FeatAttnCacheT<S> fc;
    FuseCacheT<S> uc;
    VecX<S> g_emb = gradient_attention(*grads[i], p, &gc);
    VecX<S> f_emb = feature_attention(feats[i], p, &fc);
    S anomaly;
    fuse(g_emb, f_emb, p, &anomaly, &uc);

    double a = double(anomaly);
    double y = labels[i] ? 1.0 : 0.0;
    constexpr double kClip = 1e-12;
    total += -(y * std::log(std::max(a, kClip)) +
               (1.0 - y) * std::log(std::max(1.0 - a, kClip)));
    if (!grad_out) continue;

    const int P = (int)gc.global.x.rows();
    S dz = S((a - y) / double(n));
    // head
    for (int j = 0; j < p.fd(); ++j) {
      grad[p.w_head() + j] += dz * uc.h[j];
    }
    grad[p.b_head()] += dz;
    VecX<S> dh_vec = dz * p.vec(p.w_head(), p.fd());
    VecX<S> dpre = dh_vec.cwiseProduct(
        (uc.pre.array() > S(0)).template cast<S>().matrix());
    // fusion
    Eigen::Map<RowMajorMat<S>> gwg(grad.data() + p.w_g(), p.fd(), m);
    gwg += dpre * g_emb.transpose();
    Eigen::Map<RowMajorMat<S>> gwh(grad.data() + p.w_h(), p.fd(), p.fd());
    gwh += dpre * f_emb.transpose();
    Eigen::Map<VecX<S>> gbf(grad.data() + p.b_fuse(), p.fd());
    gbf += dpre;
    VecX<S> dg_emb = p.mat(p.w_g(), p.fd(), m).transpose() * dpre;
    VecX<S> df_emb = p.mat(p.w_h(), p.fd(), p.fd()).transpose() * dpre;

    // feature stream
    Eigen::Map<RowMajorMat<S>> gwfe(grad.data() + p.w_fe(), p.fd(), 6);
    gwfe += df_emb * fc.u.transpose();
    Eigen::Map<VecX<S>> gbfe(grad.data() + p.b_fe(), p.fd());
    gbfe += df_emb;
    VecX<S> du = p.mat(p.w_fe(), p.fd(), 6).transpose() * df_emb;
    VecX<S> dalpha = fc.f.cwiseProduct(du);
    MatX<S> dlogits_row = detail::softmax_rows_backward(
        MatX<S>(fc.alpha.transpose()), MatX<S>(dalpha.transpose()));
    VecX<S> dlogits = dlogits_row.transpose();
    Eigen::Map<RowMajorMat<S>> gwf(grad.data() + p.w_f(), 6, 6);
    gwf += dlogits * fc.f.transpose();
    Eigen::Map<VecX<S>> gbfl(grad.data() + p.b_f(), 6);
    gbfl += dlogits;

    // gradient stream: mean pool back through the global stage
    MatX<S> docat = (dg_emb / S(P)).transpose().replicate(P, 1);
    MatX<S> dx = detail::mha_backward(docat, p, gc.global, grad);
    Eigen::Map<RowMajorMat<S>> gwt(grad.data() + p.w_tok(), m, 4);
    Eigen::Map<VecX<S>> gbt(grad.data() + p.b_tok(), m);
    if (!p.cfg.local_attention) {
      gwt += dx.transpose() * gc.tokens;
      gbt += dx.colwise().sum().transpose();
    } else {
      for (int ch = 0; ch < P; ++ch) {
        const Eigen::Index rows = gc.local[ch].x.rows();
        MatX<S> d_out =
            (dx.row(ch) / S(rows)).replicate(rows, 1);
        MatX<S> d_emb = detail::mha_backward(d_out, p, gc.local[ch], grad);
        gwt += d_emb.transpose() * gc.sub_tokens[ch];
        gbt += d_emb.colwise().sum().transpose();
      }
    }
  }

  if (grad_out) *grad_out = grad;
  return S(total / double(n));
}

}  // namespace fedtrust
