#include "fedtrust/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <numeric>
#include <thread>

#include "fedtrust/aggregate.hpp"
#include "fedtrust/attack.hpp"
#include "fedtrust/attention.hpp"
#include "fedtrust/dqn.hpp"
#include "fedtrust/quantize.hpp"
#include "fedtrust/shapley.hpp"
#include "fedtrust/trust.hpp"
#include "fedtrust/vae.hpp"

namespace fedtrust {

std::string resolve_data_dir(const DatasetConfig& ds) {
  if (!ds.data_dir.empty()) return ds.data_dir;
  if (const char* env = std::getenv("FEDTRUST_DATA_DIR")) return env;
  return "./data";
}

bool mnist_available(const std::string& dir) {
  auto exists = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return bool(f);
  };
  return exists(dir + "/train-images-idx3-ubyte") &&
         exists(dir + "/train-labels-idx1-ubyte") &&
         exists(dir + "/t10k-images-idx3-ubyte") &&
         exists(dir + "/t10k-labels-idx1-ubyte");
}

namespace {

LabeledDataset load_dataset(const ExperimentConfig& cfg, RngStream master) {
  if (cfg.dataset.kind == "synthetic") {
    return make_synthetic(cfg.dataset.classes, cfg.dataset.dim,
                          cfg.dataset.samples, float(cfg.dataset.separation),
                          master.child("data").next_u64());
  }
  std::string dir = resolve_data_dir(cfg.dataset);
  if (!mnist_available(dir))
    throw DataError("mnist idx files not found under " + dir);
  LabeledDataset train = load_idx(dir + "/train-images-idx3-ubyte",
                                  dir + "/train-labels-idx1-ubyte");
  LabeledDataset test = load_idx(dir + "/t10k-images-idx3-ubyte",
                                 dir + "/t10k-labels-idx1-ubyte");
  LabeledDataset all;
  all.class_count = train.class_count;
  all.features.resize(train.size() + test.size(), train.dim());
  all.features << train.features, test.features;
  all.labels = train.labels;
  all.labels.insert(all.labels.end(), test.labels.begin(), test.labels.end());
  return all;
}

struct PooledStats {
  float mean = 0.f, std_ = 1.f;
};

PooledStats pooled_stats(const Matf& x) {
  double mean = x.cast<double>().mean();
  double var = (x.cast<double>().array() - mean).square().mean();
  PooledStats s;
  s.mean = float(mean);
  s.std_ = float(std::max(std::sqrt(var), 1e-6));
  return s;
}

void standardize(Matf& x, PooledStats s) {
  x = (x.array() - s.mean) / s.std_;
}

ModelKind model_kind(const ExperimentConfig& cfg) {
  return cfg.model.kind == "logreg" ? ModelKind::Logreg : ModelKind::MlpBn;
}

AttackSpec attack_spec_from(const ExperimentConfig& cfg, RngStream master) {
  AttackSpec spec;
  spec.kind = attack_kind_from_name(cfg.attack.kind);
  spec.lambda = float(cfg.attack.lambda);
  spec.partial_lambda = float(cfg.attack.partial_lambda);
  spec.mask_fraction = float(cfg.attack.mask_fraction);
  spec.sigma = float(cfg.attack.sigma);
  spec.flip_prob = float(cfg.attack.flip_prob);
  spec.seed = master.child("attack_seed").next_u64();
  return spec;
}

double cosine_lr(const ExperimentConfig& cfg, int round) {
  if (!cfg.cosine_decay) return cfg.learning_rate;
  return cfg.learning_rate * 0.5 *
         (1.0 + std::cos(M_PI * double(round - 1) / double(cfg.rounds)));
}

double trail_mean(const std::deque<double>& q, double fallback) {
  if (q.empty()) return fallback;
  double s = 0;
  for (double v : q) s += v;
  return s / double(q.size());
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RngStream master = RngStream::from_seed(cfg.seed);
  const int n_clients = cfg.clients;

  // --- data setup ---
  LabeledDataset full = load_dataset(cfg, master);
  SplitIndices split = stratified_split(full, {0.70, 0.15, 0.15},
                                        master.child("split").next_u64());
  LabeledDataset train_ds = subset(full, split.train);
  LabeledDataset val_ds = subset(full, split.val);
  LabeledDataset test_ds = subset(full, split.test);
  LabeledDataset server_val = stratified_subsample(
      val_ds, 1000, master.child("server_val").next_u64());

  PartitionSpec pspec;
  if (cfg.partition.scheme == "iid") pspec.scheme = PartitionScheme::Iid;
  else if (cfg.partition.scheme == "dirichlet") pspec.scheme = PartitionScheme::Dirichlet;
  else if (cfg.partition.scheme == "label_skew") pspec.scheme = PartitionScheme::LabelSkew;
  else pspec.scheme = PartitionScheme::QuantitySkew;
  pspec.alpha = cfg.partition.alpha;
  pspec.skew_ratio = cfg.partition.ratio;
  pspec.sigma = cfg.partition.sigma;
  PartitionPlan plan = partition(train_ds, pspec, n_clients,
                                 master.child("partition").next_u64());

  AttackSpec attack = attack_spec_from(cfg, master);
  AttackSchedule schedule =
      make_schedule(n_clients, cfg.attack.fraction,
                    master.child("schedule").next_u64(), cfg.attack.allow_overcap);

  // Per-client data, label-flip corruption first, then per-client pooled
  // standardization (institution-specific feature scaling).
  std::vector<LabeledDataset> client_data(n_clients);
  for (int k = 0; k < n_clients; ++k) {
    client_data[k] = subset(train_ds, plan.assignments[k]);
    if (attack.kind == AttackKind::LabelFlip && schedule.is_malicious(k))
      client_data[k] = apply_label_flip(
          client_data[k], attack.flip_prob, client_data[k].class_count,
          master.child("label_flip", (uint64_t)k).next_u64());
    if (cfg.normalize_per_client)
      standardize(client_data[k].features, pooled_stats(client_data[k].features));
  }
  if (cfg.normalize_per_client) {
    PooledStats global_stats = pooled_stats(train_ds.features);
    standardize(server_val.features, global_stats);
    standardize(test_ds.features, global_stats);
  }

  // --- model and defense state ---
  ParameterSet global = build_model<float>(
      model_kind(cfg), train_ds.dim(), cfg.model.hidden, train_ds.class_count,
      master.child("init"));
  std::vector<ParameterSet> persisted(n_clients, global);

  const bool defense_on = cfg.defense.fingerprint;
  const AggregatorKind agg_kind = aggregator_kind_from_name(cfg.aggregator.kind);
  AggregatorSpec agg_spec;
  agg_spec.kind = agg_kind;
  agg_spec.mu = cfg.aggregator.mu;
  agg_spec.krum_f = cfg.aggregator.krum_f;
  agg_spec.weiszfeld_max_iters = cfg.aggregator.weiszfeld_max_iters;
  agg_spec.weiszfeld_tol = cfg.aggregator.weiszfeld_tol;
  const bool use_prox = agg_kind == AggregatorKind::FedProx ||
                        agg_kind == AggregatorKind::FedBnp;

  VaeConfig vae_cfg;
  vae_cfg.input_dim = cfg.vae.input_dim == -1 ? global.layout.param_count
                                              : cfg.vae.input_dim;
  vae_cfg.encoder_dims = cfg.vae.encoder;
  vae_cfg.latent_dim = cfg.vae.latent;
  Vae vae = make_vae<float>(vae_cfg, global.layout.param_count,
                            master.child("vae_init"));

  AttentionParams attn =
      make_attention<float>(cfg.attention, master.child("attn_init"));

  DqnConfig dqn_cfg;
  dqn_cfg.state_dim = cfg.attention.fused_dim + 4;
  dqn_cfg.hidden = cfg.rl.hidden;
  dqn_cfg.dropout = cfg.rl.dropout;
  DqnAgent agent(dqn_cfg, master.child("dqn_init"));

  SmoothedContribution f6_state(n_clients);
  std::vector<std::deque<double>> trust_trail(n_clients), f6_trail(n_clients);

  EvalMetrics val0 = evaluate(global, server_val.features, server_val.labels);
  double prev_val_acc = val0.accuracy;
  double prev_delta_acc = 0.0;

  bool has_pending = false;
  std::vector<int> pending_clients;
  std::vector<Vecf> pending_states;
  std::vector<int> pending_actions;
  double pending_reward = 0.0;

  ExperimentResult result;
  result.config = cfg;

  for (int round = 1; round <= cfg.rounds; ++round) {
    // --- participation ---
    std::vector<int> selected(n_clients);
    std::iota(selected.begin(), selected.end(), 0);
    if (cfg.participation < 1.0) {
      int take = std::max(1, (int)std::ceil(cfg.participation * n_clients));
      std::vector<int> perm =
          master.child("select", (uint64_t)round).permutation(n_clients);
      perm.resize(take);
      std::sort(perm.begin(), perm.end());
      selected = perm;
    }
    const int n_sel = (int)selected.size();

    AdamConfig adam;
    adam.lr = float(cosine_lr(cfg, round));
    adam.weight_decay = float(cfg.weight_decay);
    float mu = use_prox ? float(cfg.aggregator.mu) : 0.f;

    // --- local training + gradient attacks + optional quantization ---
    std::vector<GradientUpdate> updates(n_sel);
    for (int i = 0; i < n_sel; ++i) {
      int k = selected[i];
      LocalTrainResult lt = local_train_prox(
          global, persisted[k], client_data[k].features, client_data[k].labels,
          cfg.local_epochs, mu, adam, cfg.batch_size,
          master.child("local", (uint64_t)round, (uint64_t)k), k, round);
      persisted[k] = std::move(lt.theta);
      updates[i] = std::move(lt.update);
      if (schedule.is_malicious(k)) {
        if (attack.kind == AttackKind::LabelFlip)
          updates[i].tag = AttackKind::LabelFlip;
        else if (attack.kind != AttackKind::None)
          updates[i] = apply_gradient_attack(attack, updates[i]);
      }
      if (cfg.defense.quantize) {
        AttackKind tag = updates[i].tag;
        QuantizedUpdate q =
            quantize(updates[i].delta, cfg.defense.quantize_bits,
                     master.child("quantize", (uint64_t)round, (uint64_t)k));
        updates[i].delta = dequantize(q);
        updates[i].tag = tag;
      }
    }

    // --- reference gradient ---
    ReferenceGradient ref;
    const bool need_ref = defense_on || agg_kind == AggregatorKind::FltrustLike;
    if (need_ref)
      ref = compute_reference(global, server_val, adam, cfg.batch_size, round,
                              master.child("reference", (uint64_t)round));

    // --- fingerprints f1..f5 ---
    std::vector<FingerprintVector> fps(n_sel);
    if (defense_on) {
      for (int i = 0; i < n_sel; ++i) {
        FingerprintVector& f = fps[i];
        if (cfg.defense.vae)
          f.f1 = vae_recon_error(vae, updates[i].delta, &f.f1_untrained);
        f.f2 = f2_reference_cosine(updates[i].delta, ref, &f.degenerate);
        std::vector<const Vecf*> peers;
        for (int j = 0; j < n_sel; ++j)
          if (j != i) peers.push_back(&updates[j].delta);
        if (!peers.empty())
          f.f3 = f3_peer_cosine(updates[i].delta, peers, &f.degenerate);
        f.f4 = f4_l2(updates[i].delta);
        f.f5 = f5_sign_consistency(updates[i].delta, ref);
      }
    }

    // --- shapley + f6 smoothing ---
    int shap_m = 0;
    Vecd phi = Vecd::Zero(n_sel);
    if (defense_on && cfg.defense.shapley) {
      shap_m = cfg.defense.adaptive_shapley
                   ? adaptive_samples(attack_suspected(fps))
                   : cfg.defense.shapley_samples;
      ShapleyEstimate est =
          mc_shapley(global, updates, server_val, shap_m,
                     master.child("shapley", (uint64_t)round));
      phi = est.phi;
      // smooth only the selected clients, leave the rest untouched
      for (int i = 0; i < n_sel; ++i) {
        int k = selected[i];
        f6_state.state[k] =
            f6_state.beta * phi[i] + (1.0 - f6_state.beta) * f6_state.state[k];
        fps[i].f6 = f6_state.state[k];
      }
    }

    // --- attention + RL trust ---
    std::vector<float> bins(n_sel, 1.f);
    std::vector<int> actions(n_sel, 5);
    std::vector<float> anomalies(n_sel, 0.f);
    std::vector<Vecf> states(n_sel);
    if (defense_on) {
      for (int i = 0; i < n_sel; ++i) {
        int k = selected[i];
        TrustScore<float> ts = trust_forward(updates[i].delta,
                                             fps[i].as_vec(), attn);
        anomalies[i] = ts.anomaly;
        Vecf s(cfg.attention.fused_dim + 4);
        s.head(cfg.attention.fused_dim) = ts.h;
        s[cfg.attention.fused_dim + 0] =
            float(trail_mean(trust_trail[k], 1.0 / n_clients));
        s[cfg.attention.fused_dim + 1] = float(trail_mean(f6_trail[k], 0.0));
        s[cfg.attention.fused_dim + 2] = float(round) / float(cfg.rounds);
        s[cfg.attention.fused_dim + 3] = float(prev_delta_acc);
        states[i] = std::move(s);
      }
      if (cfg.defense.rl) {
        actions = agent.select_actions(states, round,
                                       master.child("eps", (uint64_t)round));
        for (int i = 0; i < n_sel; ++i) bins[i] = kTrustBins[actions[i]];
      }
    }
    TrustAssignment trust = combine_trust(bins, anomalies);

    // --- aggregation ---
    std::vector<double> agg_weights(n_sel);
    const bool trust_weighted = agg_kind == AggregatorKind::FedBnp && defense_on;
    for (int i = 0; i < n_sel; ++i)
      agg_weights[i] = trust_weighted
                           ? trust.weights[i]
                           : double(client_data[selected[i]].size());
    global = aggregate(agg_spec, global, updates, agg_weights,
                       need_ref ? &ref.vector : nullptr);
    // recorded weights: the defense's assignment when it ran, otherwise the
    // normalized data-size weights that actually entered the mean
    std::vector<double> record_weights = trust.weights;
    if (!defense_on) {
      double total = 0;
      for (double w : agg_weights) total += w;
      for (int i = 0; i < n_sel; ++i) record_weights[i] = agg_weights[i] / total;
    }

    // --- evaluation, detection, reward ---
    EvalMetrics test_m = evaluate(global, test_ds.features, test_ds.labels);
    EvalMetrics val_m = evaluate(global, server_val.features, server_val.labels);
    double delta_acc = val_m.accuracy - prev_val_acc;
    prev_val_acc = val_m.accuracy;

    std::vector<AttackKind> tags(n_sel);
    for (int i = 0; i < n_sel; ++i) tags[i] = updates[i].tag;
    DetectionCounts det = detection_counts(bins, tags);
    double reward = compute_reward(delta_acc, det.fpr_defined ? det.fpr : 0.0,
                                   det.fnr_defined ? det.fnr : 0.0, bins);

    // --- replay push (previous round's transitions get this round's states) ---
    if (defense_on && cfg.defense.rl) {
      if (has_pending) {
        for (size_t p = 0; p < pending_clients.size(); ++p) {
          auto it = std::find(selected.begin(), selected.end(),
                              pending_clients[p]);
          if (it == selected.end()) continue;
          int i = int(it - selected.begin());
          agent.push({pending_states[p], pending_actions[p],
                      float(pending_reward), states[i]});
        }
      }
      pending_clients = selected;
      pending_states = states;
      pending_actions = actions;
      pending_reward = reward;
      has_pending = true;
      agent.scheduled_update(round, master.child("dqn", (uint64_t)round));
    }

    // --- vae buffer admission + scheduled training ---
    if (defense_on && cfg.defense.vae) {
      std::vector<double> norms;
      for (int i = 0; i < n_sel; ++i) norms.push_back(fps[i].f4);
      std::sort(norms.begin(), norms.end());
      double med = norms.empty() ? 0.0
                   : (norms.size() % 2 ? norms[norms.size() / 2]
                                       : 0.5 * (norms[norms.size() / 2 - 1] +
                                                norms[norms.size() / 2]));
      for (int i = 0; i < n_sel; ++i) {
        bool admit;
        if (round <= 20)
          admit = med > 0 && fps[i].f4 >= 0.5 * med && fps[i].f4 <= 2.0 * med;
        else
          admit = trust.weights[i] >= 0.6 / double(n_clients);
        if (admit) vae_push_benign(vae, updates[i].delta);
      }
      vae_train(vae, round, master.child("vae_train", (uint64_t)round));
    }

    // --- attention training on shapley pseudo-labels ---
    if (defense_on && cfg.defense.shapley) {
      std::vector<const Vecf*> gptrs(n_sel);
      std::vector<Eigen::Matrix<double, 6, 1>> fvecs(n_sel);
      std::vector<int> labels(n_sel);
      for (int i = 0; i < n_sel; ++i) {
        gptrs[i] = &updates[i].delta;
        fvecs[i] = fps[i].as_vec();
        labels[i] = phi[i] < 0 ? 1 : 0;
      }
      train_attention_step(attn, gptrs, fvecs, labels, 1e-3);
    }

    // --- trails ---
    for (int i = 0; i < n_sel; ++i) {
      int k = selected[i];
      trust_trail[k].push_back(trust.weights[i]);
      if (trust_trail[k].size() > 5) trust_trail[k].pop_front();
      f6_trail[k].push_back(fps[i].f6);
      if (f6_trail[k].size() > 5) f6_trail[k].pop_front();
    }
    prev_delta_acc = delta_acc;

    // --- record ---
    RoundRecord rec;
    rec.round = round;
    rec.test_accuracy = test_m.accuracy;
    rec.val_loss = val_m.loss;
    rec.val_accuracy = val_m.accuracy;
    rec.delta_acc = delta_acc;
    rec.reward = reward;
    rec.tp = det.tp;
    rec.fp = det.fp;
    rec.tn = det.tn;
    rec.fn = det.fn;
    rec.fpr_defined = det.fpr_defined;
    rec.fnr_defined = det.fnr_defined;
    rec.shapley_samples = shap_m;
    rec.clients.resize(n_sel);
    for (int i = 0; i < n_sel; ++i) {
      ClientRoundRecord& c = rec.clients[i];
      c.client = selected[i];
      c.tag = tags[i];
      c.fingerprint = fps[i];
      c.action = actions[i];
      c.bin = bins[i];
      c.anomaly = anomalies[i];
      c.weight = record_weights[i];
    }
    result.rounds.push_back(std::move(rec));
  }
  result.final_model = std::move(global);
  return result;
}

GridSummary run_grid(
    const std::vector<std::pair<std::string, ExperimentConfig>>& configs,
    int jobs) {
  std::vector<ExperimentResult> results(configs.size());
  jobs = std::max(1, jobs);
  if (jobs == 1 || configs.size() <= 1) {
    for (size_t i = 0; i < configs.size(); ++i)
      results[i] = run_experiment(configs[i].second);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t)
      pool.emplace_back([&, t] {
        for (size_t i = t; i < configs.size(); i += (size_t)jobs)
          results[i] = run_experiment(configs[i].second);
      });
    for (auto& th : pool) th.join();
  }

  GridSummary out;
  std::vector<std::string> aggs, attacks;
  for (size_t i = 0; i < configs.size(); ++i) {
    GridRow row;
    row.name = configs[i].first;
    row.aggregator = configs[i].second.aggregator.kind;
    row.attack = configs[i].second.attack.kind;
    row.final_accuracy = results[i].final_test_accuracy();
    out.rows.push_back(row);
    if (std::find(aggs.begin(), aggs.end(), row.aggregator) == aggs.end())
      aggs.push_back(row.aggregator);
    if (std::find(attacks.begin(), attacks.end(), row.attack) == attacks.end())
      attacks.push_back(row.attack);
  }

  char buf[64];
  std::string t = "method";
  for (const auto& a : attacks) t += "," + a;
  t += ",avg\n";
  for (const auto& agg : aggs) {
    t += agg;
    double sum = 0;
    int cnt = 0;
    for (const auto& atk : attacks) {
      double cell = 0;
      int cell_n = 0;
      for (const GridRow& r : out.rows)
        if (r.aggregator == agg && r.attack == atk) {
          cell += r.final_accuracy;
          ++cell_n;
        }
      if (cell_n > 0) {
        cell /= cell_n;
        sum += cell;
        ++cnt;
        std::snprintf(buf, sizeof buf, "%.6g", cell);
        t += std::string(",") + buf;
      } else {
        t += ",-";
      }
    }
    std::snprintf(buf, sizeof buf, "%.6g", cnt ? sum / cnt : 0.0);
    t += std::string(",") + buf + "\n";
  }
  out.table_text = t;

  std::string csv = "name,aggregator,attack,final_accuracy\n";
  for (const GridRow& r : out.rows) {
    std::snprintf(buf, sizeof buf, "%.6g", r.final_accuracy);
    csv += r.name + "," + r.aggregator + "," + r.attack + "," + buf + "\n";
  }
  out.csv = csv;
  return out;
}

}  // namespace fedtrust
