// Acceptance suite: runs every gate criterion at its stated tolerance and
// prints one PASS/FAIL/SKIP line per criterion. Exit code 0 iff nothing
// failed (skips happen only for missing external data).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "fedtrust/aggregate.hpp"
#include "fedtrust/attack.hpp"
#include "fedtrust/dqn.hpp"
#include "fedtrust/harness.hpp"
#include "fedtrust/quantize.hpp"
#include "fedtrust/shapley.hpp"
#include "fedtrust/trust.hpp"

using namespace fedtrust;

namespace {

struct Outcome {
  bool pass = false;
  bool skipped = false;
  std::string detail;
};

// ---------- shared scenario helpers ----------

ExperimentConfig synth_base() {
  ExperimentConfig cfg;
  cfg.seed = 1;
  cfg.rounds = 15;
  cfg.clients = 10;
  cfg.local_epochs = 3;
  cfg.batch_size = 64;
  cfg.learning_rate = 0.05;
  cfg.cosine_decay = true;
  cfg.dataset.kind = "synthetic";
  cfg.dataset.classes = 3;
  cfg.dataset.dim = 8;
  cfg.dataset.samples = 3000;
  cfg.dataset.separation = 6.0;
  cfg.model.kind = "logreg";
  cfg.attack.kind = "none";
  cfg.attack.fraction = 0.0;
  cfg.aggregator.kind = "fedavg";
  cfg.aggregator.mu = 0.0;
  cfg.defense = DefenseConfig{false, false, false, false, false, 100, false, 8};
  cfg.attention.chunks = 8;
  cfg.vae = VaeDims{64, {32, 16}, 8};
  return cfg;
}

ExperimentConfig full_defense(ExperimentConfig cfg) {
  cfg.aggregator.kind = "fedbnp";
  cfg.aggregator.mu = 0.01;
  cfg.defense = DefenseConfig{true, true, true, true, false, 100, false, 8};
  return cfg;
}

Vecf randn_vec(int d, uint64_t seed) {
  Vecf v(d);
  RngStream s = RngStream::from_seed(seed);
  for (int i = 0; i < d; ++i) v[i] = float(s.normal());
  return v;
}

char buf[512];

// ---------- criterion 1: gradient correctness ----------

double fd_worst(ModelKind kind, const std::vector<int>& hidden, uint64_t seed) {
  RngStream master = RngStream::from_seed(seed);
  const int dim = 5, classes = 3, batch = 16;
  auto p = build_model<double>(kind, dim, hidden, classes, master.child("init"));
  Matd x;
  std::vector<int> y;
  ForwardCacheT<double> cache;
  // re-draw the probe batch until relu inputs clear the finite-difference step
  for (uint64_t retry = 0; retry < 32; ++retry) {
    LabeledDataset ds = make_synthetic(classes, dim, batch, 2.f,
                                       master.child("data", retry).next_u64());
    x = ds.features.cast<double>();
    y = ds.labels;
    auto q = p;
    forward_train(q, x, y, cache);
    double margin = 1e9;
    for (size_t l = 0; l < p.layout.layers.size(); ++l)
      if (p.layout.layers[l].relu_after)
        margin = std::min(margin, cache.z[l].cwiseAbs().minCoeff());
    if (margin > 5e-3) break;
  }
  forward_train(p, x, y, cache);
  Vecd analytic = backward(p, cache);
  const double h = 1e-3;
  double worst = 0;
  for (int i = 0; i < p.layout.param_count; ++i) {
    auto probe = [&](double d_) {
      auto q = p;
      q.values[i] += d_;
      ForwardCacheT<double> c;
      return double(forward_train(q, x, y, c));
    };
    double fd = (probe(h) - probe(-h)) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic[i]) /
                                std::max({1.0, std::abs(fd),
                                          std::abs(analytic[i])}));
  }
  return worst;
}

Outcome criterion_gradients() {
  double worst = 0;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    worst = std::max(worst, fd_worst(ModelKind::Logreg, {}, seed));
    worst = std::max(worst, fd_worst(ModelKind::MlpBn, {8}, seed));
    worst = std::max(worst, fd_worst(ModelKind::MlpBn, {8, 6}, seed));
  }
  std::snprintf(buf, sizeof buf, "max relative error %.3g (tolerance 1e-4)",
                worst);
  return {worst < 1e-4, false, buf};
}

// ---------- criterion 2: shapley oracle equivalence ----------

struct ShapScenario {
  ParameterSet base;
  std::vector<GradientUpdate> updates;
  LabeledDataset val;
};

ShapScenario shap_scenario(int n, uint64_t seed, bool attacker) {
  RngStream master = RngStream::from_seed(seed);
  ShapScenario sc;
  LabeledDataset ds = make_synthetic(3, 6, 8000, 4.f,
                                     master.child("data").next_u64());
  SplitIndices sp = stratified_split(ds, {0.70, 0.15, 0.15},
                                     master.child("split").next_u64());
  LabeledDataset train = subset(ds, sp.train);
  sc.val = stratified_subsample(subset(ds, sp.val), 1000,
                                master.child("sv").next_u64());
  sc.base =
      build_model<float>(ModelKind::Logreg, 6, {}, 3, master.child("init"));
  PartitionPlan plan =
      partition(train, PartitionSpec{}, n, master.child("part").next_u64());
  AdamConfig adam;
  adam.lr = 0.05f;
  for (int k = 0; k < n; ++k) {
    LabeledDataset cd = subset(train, plan.assignments[k]);
    sc.updates.push_back(
        local_train_prox(sc.base, sc.base, cd.features, cd.labels, 1, 0.f,
                         adam, 32, master.child("local", (uint64_t)k), k, 1)
            .update);
  }
  if (attacker) {
    AttackSpec spec;
    spec.kind = AttackKind::SignFlip;
    sc.updates.back() = apply_gradient_attack(spec, sc.updates.back());
  }
  return sc;
}

Outcome criterion_shapley() {
  ShapScenario sc = shap_scenario(6, 41, true);
  ShapleyEstimate exact = exact_shapley(sc.base, sc.updates, sc.val);
  ShapleyEstimate mc =
      mc_shapley(sc.base, sc.updates, sc.val, 2000, RngStream::from_seed(43));
  double range = exact.phi.maxCoeff() - exact.phi.minCoeff();
  double dev = (mc.phi - exact.phi).cwiseAbs().maxCoeff();
  bool mc_ok = dev < 0.05 * range;

  // axioms on a cohort with a duplicate pair and a zero (dummy) client
  ShapScenario ax = shap_scenario(4, 47, true);
  GradientUpdate dup = ax.updates[0];
  GradientUpdate zero;
  zero.delta = Vecf::Zero(ax.base.values.size());
  ax.updates.push_back(dup);
  ax.updates.push_back(zero);
  ShapleyEstimate e2 = exact_shapley(ax.base, ax.updates, ax.val);
  std::vector<const GradientUpdate*> all;
  for (const auto& u : ax.updates) all.push_back(&u);
  double v_full = coalition_value(ax.base, all, ax.val, (int)ax.updates.size());
  bool eff = std::abs(e2.phi.sum() - v_full) < 1e-9;
  bool sym = std::abs(e2.phi[0] - e2.phi[4]) < 1e-9;
  bool dum = std::abs(e2.phi[5]) < 1e-9;

  std::snprintf(buf, sizeof buf,
                "mc-exact dev %.4g vs bound %.4g; efficiency %s, symmetry %s, "
                "dummy %s",
                dev, 0.05 * range, eff ? "ok" : "violated",
                sym ? "ok" : "violated", dum ? "ok" : "violated");
  return {mc_ok && eff && sym && dum, false, buf};
}

// ---------- criterion 3: fingerprint separation ----------

ExperimentConfig fingerprint_cfg(const std::string& attack, int rounds) {
  ExperimentConfig cfg = full_defense(synth_base());
  cfg.rounds = rounds;
  cfg.local_epochs = 5;
  cfg.learning_rate = 0.002;  // slow descent keeps gradients informative
  cfg.dataset.samples = 4000;
  cfg.dataset.separation = 4.0;
  cfg.attack.kind = attack;
  cfg.attack.fraction = 0.3;
  cfg.attack.sigma = 10.0;
  // robust aggregation keeps the trajectory on the benign consensus so the
  // fingerprints are measured against an undamaged model
  cfg.aggregator.kind = "coord_median";
  return cfg;
}

Outcome criterion_fingerprints() {
  // scaling: attacker f4 at least 5x the benign median, every round
  ExperimentResult scaling = run_experiment(fingerprint_cfg("scaling", 15));
  double worst_ratio = 1e18;
  for (const RoundRecord& r : scaling.rounds) {
    std::vector<double> benign;
    double att_min = 1e18;
    for (const ClientRoundRecord& c : r.clients) {
      if (c.tag == AttackKind::None) benign.push_back(c.fingerprint.f4);
      else att_min = std::min(att_min, c.fingerprint.f4);
    }
    std::sort(benign.begin(), benign.end());
    double med = benign[benign.size() / 2];
    worst_ratio = std::min(worst_ratio, att_min / med);
  }
  bool scaling_ok = worst_ratio >= 5.0;

  // sign flip: attacker f2 < 0 and f5 < 0.2 in at least 90% of rounds
  ExperimentResult flip = run_experiment(fingerprint_cfg("sign_flip", 15));
  int good = 0;
  for (const RoundRecord& r : flip.rounds) {
    bool all = true;
    for (const ClientRoundRecord& c : r.clients)
      if (c.tag != AttackKind::None)
        all = all && c.fingerprint.f2 < 0 && c.fingerprint.f5 < 0.2;
    good += all;
  }
  bool flip_ok = good >= (int)std::ceil(0.9 * double(flip.rounds.size()));

  // additive noise: attacker f1 above the benign median in at least 80% of
  // the rounds after the vae's scheduled training pass (round 20 of 25)
  ExperimentResult noise =
      run_experiment(fingerprint_cfg("additive_noise", 25));
  int post = 0, post_good = 0;
  for (const RoundRecord& r : noise.rounds) {
    bool trained = true;
    for (const ClientRoundRecord& c : r.clients)
      trained = trained && !c.fingerprint.f1_untrained;
    if (!trained) continue;
    ++post;
    std::vector<double> benign;
    double att_min = 1e18;
    for (const ClientRoundRecord& c : r.clients) {
      if (c.tag == AttackKind::None) benign.push_back(c.fingerprint.f1);
      else att_min = std::min(att_min, c.fingerprint.f1);
    }
    std::sort(benign.begin(), benign.end());
    post_good += att_min > benign[benign.size() / 2];
  }
  bool noise_ok = post > 0 && post_good >= (int)std::ceil(0.8 * post);

  std::snprintf(buf, sizeof buf,
                "scaling worst f4 ratio %.2f (>=5); sign-flip rounds %d/%d "
                "(>=90%%); noise post-vae rounds %d/%d (>=80%%)",
                worst_ratio, good, (int)flip.rounds.size(), post_good, post);
  return {scaling_ok && flip_ok && noise_ok, false, buf};
}

// ---------- criterion 4: defense efficacy ----------

Outcome criterion_defense() {
  ExperimentConfig base = synth_base();
  base.model.kind = "mlp_bn";
  base.model.hidden = {16};
  base.local_epochs = 5;
  base.learning_rate = 0.1;
  base.cosine_decay = false;

  ExperimentConfig attacked = base;
  attacked.attack.kind = "scaling";
  attacked.attack.fraction = 0.3;
  ExperimentConfig defended = full_defense(attacked);

  double clean = run_experiment(base).final_test_accuracy();
  double undef = run_experiment(attacked).final_test_accuracy();
  double def = run_experiment(defended).final_test_accuracy();
  double drop = (clean - undef) * 100;
  double gap = (clean - def) * 100;
  std::snprintf(buf, sizeof buf,
                "clean %.3f, undefended %.3f (drop %.1fpp >= 10), defended "
                "%.3f (gap %.1fpp <= 2)",
                clean, undef, drop, def, gap);
  return {drop >= 10.0 && gap <= 2.0, false, buf};
}

// ---------- criterion 5: scaled mnist sanity ----------

Outcome criterion_mnist() {
  ExperimentConfig cfg = make_preset("desk-mnist");
  std::string dir = resolve_data_dir(cfg.dataset);
  if (!mnist_available(dir)) {
    std::snprintf(buf, sizeof buf,
                  "mnist idx files not found under %s; set FEDTRUST_DATA_DIR",
                  dir.c_str());
    return {true, true, buf};
  }
  cfg.seed = 1;
  cfg.defense = DefenseConfig{false, false, false, false, false, 100, false, 8};
  cfg.aggregator.kind = "fedavg";
  cfg.aggregator.mu = 0.0;
  double clean = run_experiment(cfg).final_test_accuracy();

  ExperimentConfig attacked = full_defense(cfg);
  attacked.attack.kind = "sign_flip";
  attacked.attack.fraction = 0.3;
  double defended = run_experiment(attacked).final_test_accuracy();
  double gap = (clean - defended) * 100;
  std::snprintf(buf, sizeof buf,
                "clean %.4f (>= 0.93), defended under sign-flip %.4f "
                "(gap %.2fpp <= 2.5)",
                clean, defended, gap);
  return {clean >= 0.93 && gap <= 2.5, false, buf};
}

// ---------- criterion 6: non-iid ordering ----------

Outcome criterion_noniid() {
  auto mean_acc = [&](const std::string& scheme, double alpha) {
    double sum = 0;
    for (uint64_t seed = 1; seed <= 3; ++seed) {
      ExperimentConfig cfg = synth_base();
      cfg.seed = seed;
      cfg.dataset.separation = 2.0;
      cfg.partition.scheme = scheme;
      cfg.partition.alpha = alpha;
      sum += run_experiment(cfg).final_test_accuracy();
    }
    return sum / 3.0;
  };
  double iid = mean_acc("iid", 0.5);
  double d05 = mean_acc("dirichlet", 0.5);
  double d01 = mean_acc("dirichlet", 0.1);
  const double tol = 0.005;  // 0.5pp noise allowance
  bool ok = iid >= d05 - tol && d05 >= d01 - tol;
  std::snprintf(buf, sizeof buf,
                "mean over 3 seeds: iid %.4f >= dir(0.5) %.4f >= dir(0.1) "
                "%.4f (tolerance 0.5pp)",
                iid, d05, d01);
  return {ok, false, buf};
}

// ---------- criterion 7: ddqn sanity ----------

Outcome criterion_ddqn() {
  DqnConfig cfg;
  cfg.state_dim = 6;
  DqnAgent agent(cfg, RngStream::from_seed(11));
  RngStream env = RngStream::from_seed(111);
  for (int i = 0; i < 1000; ++i) {
    Transition t;
    t.state = randn_vec(6, 1000 + i);
    t.action = (int)env.below(6);
    t.reward = t.action == 5 ? 1.f : -1.f;
    t.next_state = randn_vec(6, 2000 + i);
    agent.push(std::move(t));
  }
  for (int step = 1; step <= 500; ++step) {
    agent.train_step(env.child("train", (uint64_t)step));
    if (step % 100 == 0) agent.sync_target();
  }
  int best = 0;
  for (int i = 0; i < 100; ++i)
    best += agent.greedy_action(randn_vec(6, 3000 + i)) == 5;
  std::snprintf(buf, sizeof buf,
                "greedy picks the rewarded bin on %d/100 states (> 90)", best);
  return {best > 90, false, buf};
}

// ---------- criterion 8: quantizer ----------

Outcome criterion_quantizer() {
  // unbiasedness: mean of 1e4 quantizations within 1e-2 * ||v||_inf
  const int d = 10000;
  Vecf v = randn_vec(d, 71);
  Vecd mean = Vecd::Zero(d);
  RngStream qs = RngStream::from_seed(73);
  const int reps = 10000;
  for (int r = 0; r < reps; ++r)
    mean += dequantize(quantize(v, 8, qs.child((uint64_t)r))).cast<double>();
  mean /= double(reps);
  double bias = (mean - v.cast<double>()).cwiseAbs().maxCoeff();
  double tol = 1e-2 * double(v.cwiseAbs().maxCoeff());
  bool unbiased = bias < tol;

  // compression at 8 bits, d = 1e5: per-coordinate payload 4x, full stream
  // (levels + signs + norm + framing) within the 0.26 budget
  const int big = 100000;
  Vecf w = randn_vec(big, 79);
  QuantizedUpdate q = quantize(w, 8, RngStream::from_seed(81));
  size_t payload = (size_t(big) * 8 + 7) / 8;
  double per_coord_ratio = 4.0 * big / double(payload);
  double stream_ratio = double(q.serialized_size_bytes()) / (4.0 * big);
  bool size_ok = per_coord_ratio >= 4.0 && stream_ratio <= 0.26;

  std::snprintf(buf, sizeof buf,
                "max coordinate bias %.3g (tol %.3g); per-coordinate "
                "compression %.3fx (>= 4), full stream %.4f of raw (<= 0.26)",
                bias, tol, per_coord_ratio, stream_ratio);
  return {unbiased && size_ok, false, buf};
}

// ---------- criterion 9: aggregator invariants ----------

Outcome criterion_aggregators() {
  ParameterSet g = build_model<float>(ModelKind::Logreg, 4, {}, 3,
                                      RngStream::from_seed(83));
  RngStream s = RngStream::from_seed(87);
  auto rand_updates = [&](int n) {
    std::vector<GradientUpdate> out(n);
    for (int k = 0; k < n; ++k) {
      out[k].delta.resize(g.values.size());
      for (Eigen::Index i = 0; i < g.values.size(); ++i)
        out[k].delta[i] = float(s.normal());
      out[k].client_id = k;
    }
    return out;
  };

  // unanimity fixpoint for all eight kinds
  bool unanimity = true;
  GradientUpdate u = rand_updates(1)[0];
  std::vector<GradientUpdate> same(5, u);
  for (int k = 0; k < 5; ++k) same[k].client_id = k;
  for (AggregatorKind kind :
       {AggregatorKind::FedAvg, AggregatorKind::FedProx, AggregatorKind::FedBn,
        AggregatorKind::FedBnp, AggregatorKind::Krum,
        AggregatorKind::CoordMedian, AggregatorKind::GeoMedian,
        AggregatorKind::FltrustLike}) {
    AggregatorSpec spec;
    spec.kind = kind;
    spec.krum_f = 1;
    ParameterSet out = aggregate(spec, g, same, {1, 1, 1, 1, 1}, &u.delta);
    unanimity = unanimity &&
                ((out.values - (g.values + u.delta)).cwiseAbs().maxCoeff() <
                 1e-6f);
  }

  // krum membership
  auto updates = rand_updates(7);
  int sel = krum_select(updates, 2);
  bool member = sel >= 0 && sel < 7;

  // geometric median objective optimality vs every input point
  Vecd med = geometric_median(updates, 100, 1e-6);
  auto objective = [&](const Vecd& y) {
    double t = 0;
    for (const auto& up : updates) t += (y - up.delta.cast<double>()).norm();
    return t;
  };
  bool geo = true;
  for (const auto& up : updates)
    geo = geo && objective(med) <= objective(up.delta.cast<double>()) + 1e-6;

  // eq-4 linearity against a direct matrix product
  std::vector<double> w{0.25, 0.1, 0.05, 0.2, 0.15, 0.05, 0.2};
  AggregatorSpec spec;
  spec.kind = AggregatorKind::FedBnp;
  ParameterSet out = aggregate(spec, g, updates, w);
  Matd G(g.values.size(), 7);
  for (int k = 0; k < 7; ++k) G.col(k) = updates[k].delta.cast<double>();
  Vecd expect =
      g.values.cast<double>() + G * Eigen::Map<const Vecd>(w.data(), 7);
  bool linear =
      (out.values.cast<double>() - expect).cwiseAbs().maxCoeff() < 1e-6;

  std::snprintf(buf, sizeof buf,
                "unanimity %s; krum membership %s; geo-median optimality %s; "
                "eq-4 linearity %s",
                unanimity ? "ok" : "violated", member ? "ok" : "violated",
                geo ? "ok" : "violated", linear ? "ok" : "violated");
  return {unanimity && member && geo && linear, false, buf};
}

// ---------- criterion 10: determinism ----------

Outcome criterion_determinism() {
  ExperimentConfig cfg = full_defense(synth_base());
  cfg.rounds = 8;
  cfg.attack.kind = "scaling";
  cfg.attack.fraction = 0.3;
  cfg.defense.quantize = true;
  ExperimentResult a = run_experiment(cfg);
  ExperimentResult b = run_experiment(cfg);
  bool same = rounds_csv(a) == rounds_csv(b) &&
              clients_csv(a) == clients_csv(b) &&
              summary_json(a) == summary_json(b);
  std::snprintf(buf, sizeof buf,
                "repeated full-defense run produced %s csv/json bytes",
                same ? "identical" : "DIFFERING");
  return {same, false, buf};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc - 1; ++i)
    if (std::strcmp(argv[i], "--only") == 0) only = std::atoi(argv[i + 1]);

  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-correctness", criterion_gradients},
      {"shapley-oracle-equivalence", criterion_shapley},
      {"fingerprint-separation", criterion_fingerprints},
      {"defense-efficacy", criterion_defense},
      {"mnist-sanity", criterion_mnist},
      {"non-iid-ordering", criterion_noniid},
      {"ddqn-sanity", criterion_ddqn},
      {"quantizer", criterion_quantizer},
      {"aggregator-invariants", criterion_aggregators},
      {"determinism", criterion_determinism},
  };

  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    if (only > 0 && (int)i + 1 != only) continue;
    auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
    const char* verdict = out.skipped ? "SKIP" : out.pass ? "PASS" : "FAIL";
    std::printf("[%s] criterion-%zu %s (%.1fs) -- %s\n", verdict, i + 1,
                criteria[i].first.c_str(), secs, out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass && !out.skipped) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
