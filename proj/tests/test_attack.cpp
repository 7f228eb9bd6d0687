#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedtrust/attack.hpp"

using namespace fedtrust;

namespace {

GradientUpdate make_update(int dim, uint64_t seed, int client = 0,
                           int round = 1) {
  GradientUpdate g;
  g.delta.resize(dim);
  RngStream s = RngStream::from_seed(seed);
  for (int i = 0; i < dim; ++i) g.delta[i] = float(s.normal());
  g.client_id = client;
  g.round = round;
  return g;
}

}  // namespace

TEST_CASE("sign flip negates exactly and twice is the identity") {
  GradientUpdate g = make_update(64, 1);
  AttackSpec spec;
  spec.kind = AttackKind::SignFlip;
  GradientUpdate f = apply_gradient_attack(spec, g);
  CHECK(f.delta == (-g.delta).eval());
  CHECK(f.tag == AttackKind::SignFlip);
  double cs = f.delta.cast<double>().dot(g.delta.cast<double>()) /
              (f.delta.cast<double>().norm() * g.delta.cast<double>().norm());
  CHECK(cs == doctest::Approx(-1.0).epsilon(1e-12));
  GradientUpdate ff = apply_gradient_attack(spec, f);
  CHECK(ff.delta == g.delta);
}

TEST_CASE("scaling multiplies the norm by lambda") {
  GradientUpdate g = make_update(128, 2);
  AttackSpec spec;
  spec.kind = AttackKind::Scaling;
  GradientUpdate s = apply_gradient_attack(spec, g);
  CHECK(s.delta.cast<double>().norm() ==
        doctest::Approx(10.0 * g.delta.cast<double>().norm()).epsilon(1e-6));
}

TEST_CASE("partial scaling hits exactly half the coordinates") {
  GradientUpdate g = make_update(1000, 3);
  AttackSpec spec;
  spec.kind = AttackKind::PartialScaling;
  spec.seed = 17;
  GradientUpdate s = apply_gradient_attack(spec, g);
  int scaled = 0, untouched = 0;
  for (int i = 0; i < 1000; ++i) {
    if (s.delta[i] == g.delta[i] * 5.f && g.delta[i] != 0.f) ++scaled;
    else if (s.delta[i] == g.delta[i]) ++untouched;
  }
  CHECK(scaled == 500);
  CHECK(untouched == 500);
}

TEST_CASE("partial scaling mask is redrawn per round and per client") {
  AttackSpec spec;
  spec.kind = AttackKind::PartialScaling;
  spec.seed = 17;
  GradientUpdate a = make_update(400, 5, /*client=*/0, /*round=*/1);
  GradientUpdate b = make_update(400, 5, /*client=*/0, /*round=*/2);
  GradientUpdate c = make_update(400, 5, /*client=*/1, /*round=*/1);
  auto mask_of = [&](const GradientUpdate& g) {
    GradientUpdate s = apply_gradient_attack(spec, g);
    std::vector<bool> m(400);
    for (int i = 0; i < 400; ++i) m[i] = s.delta[i] != g.delta[i];
    return m;
  };
  auto ma = mask_of(a), mb = mask_of(b), mc = mask_of(c);
  CHECK(ma != mb);
  CHECK(ma != mc);
  CHECK(ma == mask_of(a));  // deterministic per (round, client)
}

TEST_CASE("additive noise has the configured per-coordinate spread") {
  const int d = 10000;
  GradientUpdate g = make_update(d, 7);
  AttackSpec spec;
  spec.kind = AttackKind::AdditiveNoise;
  spec.sigma = 5.f;
  GradientUpdate n = apply_gradient_attack(spec, g);
  Vecd diff = (n.delta - g.delta).cast<double>();
  double mean = diff.mean();
  double sd = std::sqrt((diff.array() - mean).square().mean());
  CHECK(sd == doctest::Approx(5.0).epsilon(0.05));
}

TEST_CASE("gradient attacks never mutate their input") {
  GradientUpdate g = make_update(256, 9);
  Vecf before = g.delta;
  for (AttackKind k : {AttackKind::Scaling, AttackKind::PartialScaling,
                       AttackKind::SignFlip, AttackKind::AdditiveNoise}) {
    AttackSpec spec;
    spec.kind = k;
    GradientUpdate out = apply_gradient_attack(spec, g);
    CHECK(g.delta == before);
    CHECK(out.delta.size() == g.delta.size());
  }
}

TEST_CASE("label_flip routed at gradients is a usage error") {
  GradientUpdate g = make_update(16, 11);
  AttackSpec spec;
  spec.kind = AttackKind::LabelFlip;
  CHECK_THROWS_AS(apply_gradient_attack(spec, g), UsageError);
}

TEST_CASE("label flip probability 0 is the identity") {
  LabeledDataset ds = make_synthetic(4, 2, 200, 1.f, 13);
  LabeledDataset out = apply_label_flip(ds, 0.f, 4, 1);
  CHECK(out.labels == ds.labels);
}

TEST_CASE("label flip probability 1 with two classes toggles every label") {
  LabeledDataset ds = make_synthetic(2, 2, 100, 1.f, 15);
  LabeledDataset out = apply_label_flip(ds, 1.f, 2, 2);
  for (int i = 0; i < ds.size(); ++i)
    CHECK(out.labels[i] == 1 - ds.labels[i]);
}

TEST_CASE("label flip 0.5 lands in the binomial confidence band") {
  LabeledDataset ds = make_synthetic(5, 2, 10000, 1.f, 17);
  LabeledDataset out = apply_label_flip(ds, 0.5f, 5, 3);
  int flipped = 0;
  for (int i = 0; i < ds.size(); ++i) flipped += out.labels[i] != ds.labels[i];
  CHECK(flipped >= 4700);
  CHECK(flipped <= 5300);
  // a flipped label is always a different valid label
  for (int i = 0; i < ds.size(); ++i) {
    CHECK(out.labels[i] >= 0);
    CHECK(out.labels[i] < 5);
  }
}

TEST_CASE("schedule picks floor(fraction * N) distinct clients") {
  AttackSchedule s = make_schedule(10, 0.3, 5);
  CHECK(s.malicious_ids.size() == 3);
  CHECK(s.conformant);
  for (int id : s.malicious_ids) {
    CHECK(id >= 0);
    CHECK(id < 10);
  }
  CHECK(make_schedule(10, 0.0, 5).malicious_ids.empty());
}

TEST_CASE("schedule enforces the 0.3 cap unless overridden") {
  CHECK_THROWS_AS(make_schedule(10, 0.5, 1), ThreatModelError);
  AttackSchedule s = make_schedule(10, 0.5, 1, /*allow_overcap=*/true);
  CHECK(s.malicious_ids.size() == 5);
  CHECK(!s.conformant);
}
