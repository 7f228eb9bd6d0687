#include "fedtrust/shapley.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace fedtrust {

namespace {

double val_loss(const ParameterSet& p, const LabeledDataset& val) {
  return double(forward_eval(p, val.features, val.labels));
}

double val_loss_with(const ParameterSet& base, const Vecd& delta,
                     const LabeledDataset& val) {
  ParameterSet p = with_delta(base, delta);
  return val_loss(p, val);
}

}  // namespace

double coalition_value(const ParameterSet& base,
                       const std::vector<const GradientUpdate*>& coalition,
                       const LabeledDataset& val, int cohort_size) {
  if (val.size() == 0) throw DataError("coalition value needs validation data");
  if (cohort_size < (int)coalition.size() || cohort_size < 1)
    throw UsageError("cohort size must cover the coalition");
  if (coalition.empty()) return 0.0;
  Vecd step = Vecd::Zero(base.values.size());
  for (const GradientUpdate* u : coalition)
    step += u->delta.cast<double>() / double(cohort_size);
  return val_loss(base, val) - val_loss_with(base, step, val);
}

ShapleyEstimate mc_shapley(const ParameterSet& base,
                           const std::vector<GradientUpdate>& updates,
                           const LabeledDataset& val, int samples,
                           RngStream stream, int threads) {
  if (samples < 1) throw ConfigError("mc_shapley needs M >= 1");
  const int n = (int)updates.size();
  const double base_loss = val_loss(base, val);

  Matd contrib = Matd::Zero(samples, n);
  auto walk = [&](int m) {
    std::vector<int> perm = stream.child("perm", (uint64_t)m).permutation(n);
    Vecd step = Vecd::Zero(base.values.size());
    double prev = base_loss;
    for (int j = 0; j < n; ++j) {
      int k = perm[j];
      step += updates[k].delta.cast<double>() / double(n);
      double cur = val_loss_with(base, step, val);
      contrib(m, k) = prev - cur;
      prev = cur;
    }
  };

  if (threads <= 0)
    threads = std::max(1u, std::min(4u, std::thread::hardware_concurrency()));
  threads = std::min(threads, samples);
  if (threads <= 1) {
    for (int m = 0; m < samples; ++m) walk(m);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (int m = t; m < samples; m += threads) walk(m);
      });
    for (auto& th : pool) th.join();
  }

  ShapleyEstimate est;
  est.mode = ShapleyEstimate::Mode::MonteCarlo;
  est.samples_used = samples;
  est.phi = Vecd::Zero(n);
  for (int m = 0; m < samples; ++m)  // fixed order, 64-bit accumulation
    est.phi += contrib.row(m).transpose();
  est.phi /= double(samples);
  Vecd full = Vecd::Zero(base.values.size());
  for (const GradientUpdate& u : updates)
    full += u.delta.cast<double>() / double(n);
  est.value_full = base_loss - val_loss_with(base, full, val);
  return est;
}

ShapleyEstimate exact_shapley(const ParameterSet& base,
                              const std::vector<GradientUpdate>& updates,
                              const LabeledDataset& val) {
  const int n = (int)updates.size();
  if (n > 12) throw SizeError("exact shapley limited to N <= 12 clients");
  const double base_loss = val_loss(base, val);

  const int masks = 1 << n;
  std::vector<double> value(masks, 0.0);
  for (int mask = 1; mask < masks; ++mask) {
    Vecd step = Vecd::Zero(base.values.size());
    for (int k = 0; k < n; ++k)
      if (mask & (1 << k)) step += updates[k].delta.cast<double>();
    step /= double(n);
    value[mask] = base_loss - val_loss_with(base, step, val);
  }

  std::vector<double> fact(n + 1, 1.0);
  for (int i = 1; i <= n; ++i) fact[i] = fact[i - 1] * i;

  ShapleyEstimate est;
  est.mode = ShapleyEstimate::Mode::Exact;
  est.samples_used = masks;
  est.phi = Vecd::Zero(n);
  for (int k = 0; k < n; ++k) {
    double phi = 0;
    for (int mask = 0; mask < masks; ++mask) {
      if (mask & (1 << k)) continue;
      int s = __builtin_popcount((unsigned)mask);
      double w = fact[s] * fact[n - s - 1] / fact[n];
      phi += w * (value[mask | (1 << k)] - value[mask]);
    }
    est.phi[k] = phi;
  }
  est.value_full = value[masks - 1];
  return est;
}

int adaptive_samples(bool suspected) { return suspected ? 200 : 50; }

bool attack_suspected(const std::vector<FingerprintVector>& fps) {
  if (fps.empty()) return false;
  std::vector<double> norms;
  norms.reserve(fps.size());
  for (const FingerprintVector& f : fps) norms.push_back(f.f4);
  std::sort(norms.begin(), norms.end());
  size_t n = norms.size();
  double median = (n % 2 == 1) ? norms[n / 2]
                               : 0.5 * (norms[n / 2 - 1] + norms[n / 2]);
  for (const FingerprintVector& f : fps) {
    if (f.f2 < 0) return true;
    if (f.f4 > 3.0 * median) return true;
  }
  return false;
}

Vecd smooth_f6(SmoothedContribution& s, const Vecd& phi) {
  if (phi.size() != s.state.size())
    throw UsageError("smoothed contribution state has the wrong client count");
  s.state = s.beta * phi + (1.0 - s.beta) * s.state;
  return s.state;
}

}  // namespace fedtrust
