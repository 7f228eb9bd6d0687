#include "fedtrust/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace fedtrust {

std::vector<int> LabeledDataset::class_histogram() const {
  std::vector<int> h(class_count, 0);
  for (int y : labels) ++h[y];
  return h;
}

LabeledDataset make_synthetic(int classes, int dim, int samples,
                              float separation, uint64_t seed) {
  if (classes < 2) throw ConfigError("synthetic data needs >= 2 classes");
  if (dim < 1) throw ConfigError("synthetic data needs dim >= 1");
  if (samples < classes)
    throw ConfigError("synthetic data needs samples >= classes");

  // Deterministic unit directions u_c: equally spaced on a circle inside a
  // fixed two-dimensional subspace whose basis has nonzero weight in every
  // coordinate, so no input dimension is pure noise.
  Matd centers = Matd::Zero(classes, dim);
  if (dim == 1) {
    for (int c = 0; c < classes; ++c)
      centers(c, 0) = (c % 2 == 0 ? 1.0 : -1.0) * (1.0 + c / 2);
  } else {
    Vecd a(dim), b(dim);
    for (int j = 0; j < dim; ++j) {
      double phase = 2.0 * M_PI * double(j) / double(dim) + 0.7;
      a[j] = std::cos(phase);
      b[j] = std::sin(phase);
    }
    a.normalize();
    b = (b - a * a.dot(b)).normalized();
    for (int c = 0; c < classes; ++c) {
      double angle = 2.0 * M_PI * double(c) / double(classes);
      centers.row(c) =
          (std::cos(angle) * a + std::sin(angle) * b).transpose();
    }
  }
  centers *= double(separation);

  LabeledDataset ds;
  ds.class_count = classes;
  ds.features.resize(samples, dim);
  ds.labels.resize(samples);
  RngStream s = RngStream::from_seed(seed).child("synthetic");
  for (int i = 0; i < samples; ++i) {
    int c = i % classes;  // interleaved, balanced to within one sample
    ds.labels[i] = c;
    for (int j = 0; j < dim; ++j)
      ds.features(i, j) = float(centers(c, j) + s.normal());
  }
  return ds;
}

namespace {

uint32_t read_be32(std::ifstream& f, const char* what) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4))
    throw IdxParseError(IdxParseError::Code::Truncated,
                        std::string("idx file truncated reading ") + what);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) |
         (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

std::ifstream open_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + path);
  return f;
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  std::ifstream imf = open_binary(images_path);
  uint32_t magic = read_be32(imf, "image magic");
  if (magic != 0x00000803u)
    throw IdxParseError(IdxParseError::Code::BadMagic,
                        "bad image magic in " + images_path);
  uint32_t n = read_be32(imf, "image count");
  uint32_t rows = read_be32(imf, "image rows");
  uint32_t cols = read_be32(imf, "image cols");
  size_t pixels = size_t(n) * rows * cols;
  std::vector<unsigned char> raw(pixels);
  if (!imf.read(reinterpret_cast<char*>(raw.data()), (std::streamsize)pixels))
    throw IdxParseError(IdxParseError::Code::Truncated,
                        "image payload truncated in " + images_path);

  std::ifstream lbf = open_binary(labels_path);
  uint32_t lmagic = read_be32(lbf, "label magic");
  if (lmagic != 0x00000801u)
    throw IdxParseError(IdxParseError::Code::BadMagic,
                        "bad label magic in " + labels_path);
  uint32_t ln = read_be32(lbf, "label count");
  if (ln != n)
    throw IdxParseError(IdxParseError::Code::CountMismatch,
                        "image/label count mismatch: " + std::to_string(n) +
                            " vs " + std::to_string(ln));
  std::vector<unsigned char> lraw(ln);
  if (!lbf.read(reinterpret_cast<char*>(lraw.data()), (std::streamsize)ln))
    throw IdxParseError(IdxParseError::Code::Truncated,
                        "label payload truncated in " + labels_path);

  LabeledDataset ds;
  ds.class_count = 10;
  ds.features.resize(n, rows * cols);
  ds.labels.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    for (uint32_t j = 0; j < rows * cols; ++j)
      ds.features(i, j) = float(raw[size_t(i) * rows * cols + j]) / 255.f;
    ds.labels[i] = int(lraw[i]);
  }
  return ds;
}

void PartitionPlan::validate(int dataset_size) const {
  std::vector<char> seen(dataset_size, 0);
  for (const auto& a : assignments) {
    if (a.empty()) throw ConfigError("partition produced an empty client");
    for (int i : a) {
      if (i < 0 || i >= dataset_size || seen[i])
        throw ConfigError("partition assignments overlap or escape dataset");
      seen[i] = 1;
    }
  }
}

namespace {

// Move one sample from the largest client into each empty client.
void repair_empty(std::vector<std::vector<int>>& parts) {
  for (auto& p : parts) {
    if (!p.empty()) continue;
    auto largest = std::max_element(
        parts.begin(), parts.end(),
        [](const auto& a, const auto& b) { return a.size() < b.size(); });
    if (largest->size() <= 1)
      throw ConfigError("cannot repair empty client: too few samples");
    p.push_back(largest->back());
    largest->pop_back();
  }
}

std::vector<std::vector<int>> indices_by_class(const LabeledDataset& ds) {
  std::vector<std::vector<int>> by_class(ds.class_count);
  for (int i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  return by_class;
}

}  // namespace

PartitionPlan partition(const LabeledDataset& ds, const PartitionSpec& spec,
                        int clients, uint64_t seed) {
  if (clients < 2) throw ConfigError("partition needs >= 2 clients");
  if (clients > ds.size())
    throw ConfigError("more clients than samples");

  RngStream root = RngStream::from_seed(seed).child("partition");
  PartitionPlan plan;
  plan.spec = spec;
  plan.client_count = clients;
  plan.seed = seed;
  auto& parts = plan.assignments;
  parts.assign(clients, {});

  switch (spec.scheme) {
    case PartitionScheme::Iid: {
      std::vector<int> idx = root.child("iid").permutation(ds.size());
      for (int i = 0; i < (int)idx.size(); ++i)
        parts[i % clients].push_back(idx[i]);
      break;
    }
    case PartitionScheme::Dirichlet: {
      if (spec.alpha <= 0) throw ConfigError("dirichlet alpha must be > 0");
      auto by_class = indices_by_class(ds);
      for (int c = 0; c < ds.class_count; ++c) {
        RngStream cs = root.child("dirichlet", (uint64_t)c);
        cs.shuffle(by_class[c]);
        std::vector<double> w(clients);
        double sum = 0;
        for (double& v : w) {
          v = cs.gamma(spec.alpha);
          sum += v;
        }
        // Cumulative boundaries keep the total exact.
        int n = (int)by_class[c].size();
        double cum = 0;
        int prev = 0;
        for (int k = 0; k < clients; ++k) {
          cum += w[k] / sum;
          int upto = (k == clients - 1) ? n : (int)std::floor(cum * n);
          for (int i = prev; i < upto; ++i)
            parts[k].push_back(by_class[c][i]);
          prev = upto;
        }
      }
      break;
    }
    case PartitionScheme::LabelSkew: {
      if (spec.skew_ratio < 0 || spec.skew_ratio > 1)
        throw ConfigError("label skew ratio must be in [0,1]");
      auto pools = indices_by_class(ds);
      for (int c = 0; c < ds.class_count; ++c)
        root.child("skew_pool", (uint64_t)c).shuffle(pools[c]);
      std::vector<int> quota(clients, ds.size() / clients);
      for (int k = 0; k < ds.size() % clients; ++k) ++quota[k];
      RngStream pick = root.child("skew_pick");
      for (int k = 0; k < clients; ++k) {
        int dominant = k % ds.class_count;
        int want_dom = (int)std::llround(spec.skew_ratio * quota[k]);
        auto take_from = [&](int cls) -> bool {
          if (pools[cls].empty()) return false;
          parts[k].push_back(pools[cls].back());
          pools[cls].pop_back();
          return true;
        };
        auto take_any = [&]() {
          int best = -1;
          for (int c = 0; c < ds.class_count; ++c)
            if (best < 0 || pools[c].size() > pools[best].size()) best = c;
          take_from(best);
        };
        for (int i = 0; i < want_dom; ++i)
          if (!take_from(dominant)) take_any();
        for (int i = want_dom; i < quota[k]; ++i) {
          // Uniform over the other classes, falling back when exhausted.
          int tries = 0;
          for (;;) {
            int c = pick.uniform_int(ds.class_count);
            if (c == dominant && ds.class_count > 1) continue;
            if (take_from(c)) break;
            if (++tries > 4 * ds.class_count) {
              take_any();
              break;
            }
          }
        }
      }
      break;
    }
    case PartitionScheme::QuantitySkew: {
      if (spec.sigma < 0) throw ConfigError("quantity skew sigma must be >= 0");
      RngStream qs = root.child("quantity");
      std::vector<double> raw(clients);
      double sum = 0;
      for (double& v : raw) {
        v = std::exp(spec.sigma * qs.normal());
        sum += v;
      }
      // Largest-remainder apportionment of the sample count.
      std::vector<int> count(clients);
      std::vector<std::pair<double, int>> rem(clients);
      int assigned = 0;
      for (int k = 0; k < clients; ++k) {
        double q = raw[k] / sum * ds.size();
        count[k] = (int)std::floor(q);
        rem[k] = {q - count[k], k};
        assigned += count[k];
      }
      std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      for (int i = 0; i < ds.size() - assigned; ++i)
        ++count[rem[i % clients].second];
      std::vector<int> idx = qs.child("deal").permutation(ds.size());
      int pos = 0;
      for (int k = 0; k < clients; ++k)
        for (int i = 0; i < count[k]; ++i) parts[k].push_back(idx[pos++]);
      break;
    }
  }

  repair_empty(parts);
  plan.validate(ds.size());
  return plan;
}

SplitIndices stratified_split(const LabeledDataset& ds,
                              std::array<double, 3> fractions, uint64_t seed) {
  double fsum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(fsum - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");

  auto by_class = indices_by_class(ds);
  for (int c = 0; c < ds.class_count; ++c) {
    if ((int)by_class[c].size() < 3)
      throw DataError("stratified split needs >= 3 samples per class");
    RngStream::from_seed(seed).child("split", (uint64_t)c).shuffle(by_class[c]);
  }

  std::array<double, 3> target{};
  std::array<int, 3> assigned{};
  for (int s = 0; s < 3; ++s) target[s] = fractions[s] * ds.size();

  SplitIndices out;
  std::array<std::vector<int>*, 3> dest{&out.train, &out.val, &out.test};
  for (int c = 0; c < ds.class_count; ++c) {
    int n = (int)by_class[c].size();
    std::array<int, 3> count{};
    std::array<double, 3> frac{};
    int base_total = 0;
    for (int s = 0; s < 3; ++s) {
      double q = fractions[s] * n;
      count[s] = (int)std::floor(q);
      frac[s] = q - count[s];
      base_total += count[s];
    }
    for (int extra = 0; extra < n - base_total; ++extra) {
      // Largest remainder; ties go to the split furthest below its target.
      int best = -1;
      for (int s = 0; s < 3; ++s) {
        if (best < 0) {
          best = s;
          continue;
        }
        double d = frac[s] - frac[best];
        if (d > 1e-12) {
          best = s;
        } else if (std::abs(d) <= 1e-12) {
          double deficit_s = target[s] - (assigned[s] + count[s]);
          double deficit_b = target[best] - (assigned[best] + count[best]);
          if (deficit_s > deficit_b + 1e-12) best = s;
        }
      }
      ++count[best];
      frac[best] = -1;  // each split gains at most one remainder unit
    }
    int pos = 0;
    for (int s = 0; s < 3; ++s) {
      for (int i = 0; i < count[s]; ++i) dest[s]->push_back(by_class[c][pos++]);
      assigned[s] += count[s];
    }
  }
  return out;
}

LabeledDataset subset(const LabeledDataset& ds, const std::vector<int>& idx) {
  LabeledDataset out;
  out.class_count = ds.class_count;
  out.features.resize((Eigen::Index)idx.size(), ds.dim());
  out.labels.resize(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    out.features.row((Eigen::Index)i) = ds.features.row(idx[i]);
    out.labels[i] = ds.labels[idx[i]];
  }
  return out;
}

LabeledDataset stratified_subsample(const LabeledDataset& ds, int n,
                                    uint64_t seed) {
  if (n >= ds.size()) return ds;
  auto by_class = indices_by_class(ds);
  std::vector<int> pick;
  std::vector<std::pair<double, int>> rem;
  int assigned = 0;
  std::vector<int> count(ds.class_count);
  for (int c = 0; c < ds.class_count; ++c) {
    double q = double(n) * by_class[c].size() / ds.size();
    count[c] = (int)std::floor(q);
    rem.push_back({q - count[c], c});
    assigned += count[c];
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int i = 0; i < n - assigned; ++i) ++count[rem[i].second];
  for (int c = 0; c < ds.class_count; ++c) {
    RngStream::from_seed(seed).child("subsample", (uint64_t)c)
        .shuffle(by_class[c]);
    for (int i = 0; i < count[c] && i < (int)by_class[c].size(); ++i)
      pick.push_back(by_class[c][i]);
  }
  return subset(ds, pick);
}

}  // namespace fedtrust
