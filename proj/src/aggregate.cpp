#include "fedtrust/aggregate.hpp"

#include <algorithm>
#include <cmath>

namespace fedtrust {

const char* aggregator_kind_name(AggregatorKind k) {
  switch (k) {
    case AggregatorKind::FedAvg: return "fedavg";
    case AggregatorKind::FedProx: return "fedprox";
    case AggregatorKind::FedBn: return "fedbn";
    case AggregatorKind::FedBnp: return "fedbnp";
    case AggregatorKind::Krum: return "krum";
    case AggregatorKind::CoordMedian: return "coord_median";
    case AggregatorKind::GeoMedian: return "geo_median";
    case AggregatorKind::FltrustLike: return "fltrust_like";
  }
  return "fedavg";
}

AggregatorKind aggregator_kind_from_name(const std::string& name) {
  if (name == "fedavg") return AggregatorKind::FedAvg;
  if (name == "fedprox") return AggregatorKind::FedProx;
  if (name == "fedbn") return AggregatorKind::FedBn;
  if (name == "fedbnp") return AggregatorKind::FedBnp;
  if (name == "krum") return AggregatorKind::Krum;
  if (name == "coord_median") return AggregatorKind::CoordMedian;
  if (name == "geo_median") return AggregatorKind::GeoMedian;
  if (name == "fltrust_like") return AggregatorKind::FltrustLike;
  throw ConfigError("unknown aggregator kind: " + name);
}

namespace {

Vecd weighted_mean(const std::vector<GradientUpdate>& updates,
                   const std::vector<double>& weights) {
  double sum = 0;
  for (double w : weights) sum += w;
  if (sum <= 0) throw ConfigError("aggregation weights must sum to > 0");
  Vecd acc = Vecd::Zero(updates[0].delta.size());
  for (size_t k = 0; k < updates.size(); ++k)
    acc += (weights[k] / sum) * updates[k].delta.cast<double>();
  return acc;
}

ParameterSet apply(const ParameterSet& global, const Vecd& delta) {
  return with_delta(global, delta);
}

}  // namespace

int krum_select(const std::vector<GradientUpdate>& updates, int f) {
  const int n = (int)updates.size();
  if (n < 2 * f + 3)
    throw ConfigError("krum needs N >= 2f + 3 clients");
  Matd dist = Matd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double d = (updates[i].delta.cast<double>() -
                  updates[j].delta.cast<double>())
                     .squaredNorm();
      dist(i, j) = dist(j, i) = d;
    }
  int keep = n - f - 2;
  int best = -1;
  double best_score = 0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> d;
    d.reserve(n - 1);
    for (int j = 0; j < n; ++j)
      if (j != i) d.push_back(dist(i, j));
    std::sort(d.begin(), d.end());
    double score = 0;
    for (int j = 0; j < keep; ++j) score += d[j];
    if (best < 0 || score < best_score) {  // ties keep the lowest index
      best = i;
      best_score = score;
    }
  }
  return best;
}

Vecd geometric_median(const std::vector<GradientUpdate>& updates,
                      int max_iters, double tol) {
  const int n = (int)updates.size();
  const Eigen::Index d = updates[0].delta.size();
  std::vector<Vecd> pts(n);
  for (int k = 0; k < n; ++k) pts[k] = updates[k].delta.cast<double>();

  Vecd y = Vecd::Zero(d);
  for (const Vecd& p : pts) y += p / double(n);
  constexpr double kSingular = 1e-10;
  for (int it = 0; it < max_iters; ++it) {
    Vecd num = Vecd::Zero(d);
    double den = 0;
    bool at_point = false;
    for (const Vecd& p : pts) {
      double dist = (y - p).norm();
      if (dist < kSingular) {
        y = p;  // coincides with an input point; return it
        at_point = true;
        break;
      }
      num += p / dist;
      den += 1.0 / dist;
    }
    if (at_point) break;
    Vecd next = num / den;
    double step = (next - y).norm();
    y = next;
    if (step <= tol) break;
  }
  return y;
}

ParameterSet aggregate(const AggregatorSpec& spec, const ParameterSet& global,
                       const std::vector<GradientUpdate>& updates,
                       const std::vector<double>& weights,
                       const Vecf* reference) {
  if (updates.empty()) throw ConfigError("aggregate needs >= 1 update");
  const int n = (int)updates.size();
  for (const GradientUpdate& u : updates)
    if (u.delta.size() != global.values.size())
      throw ShapeError("update dimension does not match the global model");

  switch (spec.kind) {
    case AggregatorKind::FedAvg:
    case AggregatorKind::FedProx:
    case AggregatorKind::FedBn:
    case AggregatorKind::FedBnp: {
      if ((int)weights.size() != n)
        throw ConfigError("need one weight per update");
      return apply(global, weighted_mean(updates, weights));
    }
    case AggregatorKind::Krum: {
      int f = spec.krum_f >= 0 ? spec.krum_f : (int)std::floor(0.3 * n);
      int sel = krum_select(updates, f);
      return apply(global, updates[sel].delta.cast<double>());
    }
    case AggregatorKind::CoordMedian: {
      const Eigen::Index d = updates[0].delta.size();
      Vecd med(d);
      std::vector<double> col(n);
      for (Eigen::Index i = 0; i < d; ++i) {
        for (int k = 0; k < n; ++k) col[k] = double(updates[k].delta[i]);
        std::sort(col.begin(), col.end());
        med[i] = (n % 2 == 1) ? col[n / 2]
                              : 0.5 * (col[n / 2 - 1] + col[n / 2]);
      }
      return apply(global, med);
    }
    case AggregatorKind::GeoMedian:
      return apply(global, geometric_median(updates, spec.weiszfeld_max_iters,
                                            spec.weiszfeld_tol));
    case AggregatorKind::FltrustLike: {
      if (!reference || reference->size() != updates[0].delta.size())
        throw ConfigError("fltrust_like needs a reference gradient");
      Vecd ref = reference->cast<double>();
      double ref_norm = ref.norm();
      std::vector<double> w(n, 0.0);
      double sum = 0;
      for (int k = 0; k < n; ++k) {
        Vecd g = updates[k].delta.cast<double>();
        double gn = g.norm();
        if (gn <= 0 || ref_norm <= 0) continue;
        double cs = g.dot(ref) / (gn * ref_norm);
        if (cs > 0) {
          w[k] = cs * ref_norm / gn;
          sum += w[k];
        }
      }
      if (sum <= 0) return apply(global, ref);  // fall back to the reference
      Vecd acc = Vecd::Zero(updates[0].delta.size());
      for (int k = 0; k < n; ++k)
        if (w[k] > 0) acc += (w[k] / sum) * updates[k].delta.cast<double>();
      return apply(global, acc);
    }
  }
  throw ConfigError("unknown aggregator kind");
}

}  // namespace fedtrust
