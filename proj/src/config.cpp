#include "fedtrust/config.hpp"

#include <fstream>
#include <set>

#include "fedtrust/aggregate.hpp"
#include "fedtrust/data.hpp"

namespace fedtrust {

using nlohmann::json;

namespace {

// Strict object reader: every key must be known, types must match.
struct Reader {
  const json& j;
  std::string where;
  std::set<std::string> seen;

  Reader(const json& obj, std::string where_) : j(obj), where(std::move(where_)) {
    if (!j.is_object())
      throw ConfigError("config section '" + where + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen.insert(key);
    auto it = j.find(key);
    if (it == j.end()) return;  // keep default
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
    }
  }

  const json* section(const char* key) {
    seen.insert(key);
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!seen.count(it.key()))
        throw ConfigError("unknown config key '" + where + "." + it.key() + "'");
  }
};

}  // namespace

void ExperimentConfig::validate() const {
  if (version != 1) throw ConfigError("unsupported config version");
  if (rounds < 1 || rounds > 100000) throw ConfigError("rounds out of range");
  if (clients < 2 || clients > 10000) throw ConfigError("clients out of range");
  if (local_epochs < 1 || local_epochs > 64)
    throw ConfigError("local_epochs must be in [1, 64]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (participation <= 0 || participation > 1)
    throw ConfigError("participation must be in (0, 1]");
  if (dataset.kind != "synthetic" && dataset.kind != "mnist")
    throw ConfigError("dataset.kind must be synthetic or mnist");
  if (model.kind != "logreg" && model.kind != "mlp_bn")
    throw ConfigError("model.kind must be logreg or mlp_bn");
  if (partition.scheme != "iid" && partition.scheme != "dirichlet" &&
      partition.scheme != "label_skew" && partition.scheme != "quantity_skew")
    throw ConfigError("unknown partition scheme");
  attack_kind_from_name(attack.kind);        // throws on bad names
  aggregator_kind_from_name(aggregator.kind);
  if (aggregator.mu < 0) throw ConfigError("aggregator.mu must be >= 0");
  if (defense.shapley_samples < 1)
    throw ConfigError("shapley_samples must be >= 1");
  if (defense.quantize_bits < 2 || defense.quantize_bits > 16)
    throw ConfigError("quantize_bits must be in [2, 16]");
  if ((vae.input_dim < 1 && vae.input_dim != -1) || vae.latent < 1 ||
      vae.encoder.empty())
    throw ConfigError("vae dims must be >= 1 (-1: full gradient dimension)");
  if (rl.hidden.empty()) throw ConfigError("rl needs >= 1 hidden layer");
  for (int h : rl.hidden)
    if (h < 1) throw ConfigError("rl hidden dims must be >= 1");
  if (rl.dropout < 0 || rl.dropout >= 1)
    throw ConfigError("rl dropout must be in [0, 1)");
  attention.validate();
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["version"] = c.version;
  j["seed"] = c.seed;
  j["rounds"] = c.rounds;
  j["clients"] = c.clients;
  j["local_epochs"] = c.local_epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["cosine_decay"] = c.cosine_decay;
  j["weight_decay"] = c.weight_decay;
  j["participation"] = c.participation;
  j["normalize_per_client"] = c.normalize_per_client;
  j["dataset"] = {{"kind", c.dataset.kind},       {"classes", c.dataset.classes},
                  {"dim", c.dataset.dim},         {"samples", c.dataset.samples},
                  {"separation", c.dataset.separation},
                  {"data_dir", c.dataset.data_dir}};
  j["model"] = {{"kind", c.model.kind}, {"hidden", c.model.hidden}};
  j["partition"] = {{"scheme", c.partition.scheme},
                    {"alpha", c.partition.alpha},
                    {"ratio", c.partition.ratio},
                    {"sigma", c.partition.sigma}};
  j["attack"] = {{"kind", c.attack.kind},
                 {"fraction", c.attack.fraction},
                 {"lambda", c.attack.lambda},
                 {"partial_lambda", c.attack.partial_lambda},
                 {"mask_fraction", c.attack.mask_fraction},
                 {"sigma", c.attack.sigma},
                 {"flip_prob", c.attack.flip_prob},
                 {"allow_overcap", c.attack.allow_overcap}};
  j["aggregator"] = {{"kind", c.aggregator.kind},
                     {"mu", c.aggregator.mu},
                     {"krum_f", c.aggregator.krum_f},
                     {"weiszfeld_max_iters", c.aggregator.weiszfeld_max_iters},
                     {"weiszfeld_tol", c.aggregator.weiszfeld_tol}};
  j["defense"] = {{"fingerprint", c.defense.fingerprint},
                  {"vae", c.defense.vae},
                  {"shapley", c.defense.shapley},
                  {"rl", c.defense.rl},
                  {"quantize", c.defense.quantize},
                  {"shapley_samples", c.defense.shapley_samples},
                  {"adaptive_shapley", c.defense.adaptive_shapley},
                  {"quantize_bits", c.defense.quantize_bits}};
  j["vae"] = {{"input_dim", c.vae.input_dim},
              {"encoder", c.vae.encoder},
              {"latent", c.vae.latent}};
  j["rl"] = {{"hidden", c.rl.hidden}, {"dropout", c.rl.dropout}};
  j["attention"] = {{"chunks", c.attention.chunks},
                    {"heads", c.attention.heads},
                    {"model_dim", c.attention.model_dim},
                    {"fused_dim", c.attention.fused_dim},
                    {"local_attention", c.attention.local_attention}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Reader r(j, "");
  r.get("version", c.version);
  r.get("seed", c.seed);
  r.get("rounds", c.rounds);
  r.get("clients", c.clients);
  r.get("local_epochs", c.local_epochs);
  r.get("batch_size", c.batch_size);
  r.get("learning_rate", c.learning_rate);
  r.get("cosine_decay", c.cosine_decay);
  r.get("weight_decay", c.weight_decay);
  r.get("participation", c.participation);
  r.get("normalize_per_client", c.normalize_per_client);
  if (const json* s = r.section("dataset")) {
    Reader d(*s, "dataset");
    d.get("kind", c.dataset.kind);
    d.get("classes", c.dataset.classes);
    d.get("dim", c.dataset.dim);
    d.get("samples", c.dataset.samples);
    d.get("separation", c.dataset.separation);
    d.get("data_dir", c.dataset.data_dir);
    d.finish();
  }
  if (const json* s = r.section("model")) {
    Reader d(*s, "model");
    d.get("kind", c.model.kind);
    d.get("hidden", c.model.hidden);
    d.finish();
  }
  if (const json* s = r.section("partition")) {
    Reader d(*s, "partition");
    d.get("scheme", c.partition.scheme);
    d.get("alpha", c.partition.alpha);
    d.get("ratio", c.partition.ratio);
    d.get("sigma", c.partition.sigma);
    d.finish();
  }
  if (const json* s = r.section("attack")) {
    Reader d(*s, "attack");
    d.get("kind", c.attack.kind);
    d.get("fraction", c.attack.fraction);
    d.get("lambda", c.attack.lambda);
    d.get("partial_lambda", c.attack.partial_lambda);
    d.get("mask_fraction", c.attack.mask_fraction);
    d.get("sigma", c.attack.sigma);
    d.get("flip_prob", c.attack.flip_prob);
    d.get("allow_overcap", c.attack.allow_overcap);
    d.finish();
  }
  if (const json* s = r.section("aggregator")) {
    Reader d(*s, "aggregator");
    d.get("kind", c.aggregator.kind);
    d.get("mu", c.aggregator.mu);
    d.get("krum_f", c.aggregator.krum_f);
    d.get("weiszfeld_max_iters", c.aggregator.weiszfeld_max_iters);
    d.get("weiszfeld_tol", c.aggregator.weiszfeld_tol);
    d.finish();
  }
  if (const json* s = r.section("defense")) {
    Reader d(*s, "defense");
    d.get("fingerprint", c.defense.fingerprint);
    d.get("vae", c.defense.vae);
    d.get("shapley", c.defense.shapley);
    d.get("rl", c.defense.rl);
    d.get("quantize", c.defense.quantize);
    d.get("shapley_samples", c.defense.shapley_samples);
    d.get("adaptive_shapley", c.defense.adaptive_shapley);
    d.get("quantize_bits", c.defense.quantize_bits);
    d.finish();
  }
  if (const json* s = r.section("vae")) {
    Reader d(*s, "vae");
    d.get("input_dim", c.vae.input_dim);
    d.get("encoder", c.vae.encoder);
    d.get("latent", c.vae.latent);
    d.finish();
  }
  if (const json* s = r.section("rl")) {
    Reader d(*s, "rl");
    d.get("hidden", c.rl.hidden);
    d.get("dropout", c.rl.dropout);
    d.finish();
  }
  if (const json* s = r.section("attention")) {
    Reader d(*s, "attention");
    d.get("chunks", c.attention.chunks);
    d.get("heads", c.attention.heads);
    d.get("model_dim", c.attention.model_dim);
    d.get("fused_dim", c.attention.fused_dim);
    d.get("local_attention", c.attention.local_attention);
    d.finish();
  }
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid json: " + std::string(e.what()));
  }
  return config_from_json(j);
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write config file: " + path);
  f << config_to_json(cfg).dump(2) << "\n";
}

std::vector<std::string> preset_names() {
  return {"desk-synthetic", "desk-mnist", "full-mnist"};
}

ExperimentConfig make_preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "desk-synthetic") {
    c.rounds = 15;
    c.local_epochs = 3;
    c.learning_rate = 0.05;
    c.dataset = DatasetConfig{};  // synthetic 3x8, 3000 samples
    c.model.kind = "logreg";
    c.attention.chunks = 8;
    c.vae = VaeDims{64, {32, 16}, 8};
  } else if (name == "desk-mnist") {
    c.rounds = 15;
    c.local_epochs = 3;
    c.learning_rate = 0.002;
    c.dataset.kind = "mnist";
    c.model.kind = "mlp_bn";
    c.model.hidden = {32};
    c.attack.sigma = 5.0;  // noise level for mnist-scale features
    c.attention.chunks = 64;
  } else if (name == "full-mnist") {
    c.rounds = 30;
    c.local_epochs = 5;
    c.learning_rate = 1e-4;
    c.dataset.kind = "mnist";
    c.model.kind = "mlp_bn";
    c.model.hidden = {64};
    c.attack.sigma = 5.0;
    c.attention = AttentionConfig{64, 8, 256, 16, true};
    c.vae = VaeDims{-1, {512, 256, 128}, 64};  // vae on the raw gradient
    c.rl = RlDims{{512, 256, 128}, 0.3};
    c.defense.shapley_samples = 100;
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  c.validate();
  return c;
}

}  // namespace fedtrust
