#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedtrust/harness.hpp"

namespace fedtrust {

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct SummaryStats {
  int rounds = 0;
  double final_acc = 0, best_acc = 0, mean_reward = 0;
  long tp = 0, fp = 0, tn = 0, fn = 0;

  std::string text() const {
    std::string t;
    t += "rounds " + std::to_string(rounds) + "\n";
    t += "final_test_accuracy " + fmt6(final_acc) + "\n";
    t += "best_test_accuracy " + fmt6(best_acc) + "\n";
    t += "mean_reward " + fmt6(mean_reward) + "\n";
    t += "detection_tp " + std::to_string(tp) + " fp " + std::to_string(fp) +
         " tn " + std::to_string(tn) + " fn " + std::to_string(fn) + "\n";
    double prec = (tp + fp) > 0 ? double(tp) / double(tp + fp) : 0.0;
    double rec = (tp + fn) > 0 ? double(tp) / double(tp + fn) : 0.0;
    t += "detection_precision " + fmt6(prec) + "\n";
    t += "detection_recall " + fmt6(rec) + "\n";
    return t;
  }
};

// Summaries are always derived from the serialized CSV (not the in-memory
// records) so `run` output and a later `report` agree byte for byte.
SummaryStats stats_from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("rounds.csv is empty");
  SummaryStats s;
  double last_acc = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 13) throw DataError("rounds.csv row is malformed");
    ++s.rounds;
    last_acc = std::stod(cells[1]);
    s.best_acc = std::max(s.best_acc, last_acc);
    s.mean_reward += std::stod(cells[5]);
    s.tp += std::stol(cells[6]);
    s.fp += std::stol(cells[7]);
    s.tn += std::stol(cells[8]);
    s.fn += std::stol(cells[9]);
  }
  s.final_acc = last_acc;
  if (s.rounds > 0) s.mean_reward /= s.rounds;
  return s;
}

SummaryStats stats_from_result(const ExperimentResult& r) {
  std::stringstream ss(rounds_csv(r));
  return stats_from_csv(ss);
}

}  // namespace

std::string rounds_csv(const ExperimentResult& r) {
  std::string out =
      "round,test_accuracy,val_loss,val_accuracy,delta_acc,reward,"
      "tp,fp,tn,fn,fpr_defined,fnr_defined,shapley_samples\n";
  for (const RoundRecord& rec : r.rounds) {
    out += std::to_string(rec.round) + "," + fmt6(rec.test_accuracy) + "," +
           fmt6(rec.val_loss) + "," + fmt6(rec.val_accuracy) + "," +
           fmt6(rec.delta_acc) + "," + fmt6(rec.reward) + "," +
           std::to_string(rec.tp) + "," + std::to_string(rec.fp) + "," +
           std::to_string(rec.tn) + "," + std::to_string(rec.fn) + "," +
           (rec.fpr_defined ? "1" : "0") + "," +
           (rec.fnr_defined ? "1" : "0") + "," +
           std::to_string(rec.shapley_samples) + "\n";
  }
  return out;
}

std::string clients_csv(const ExperimentResult& r) {
  std::string out =
      "round,client,attack,f1,f2,f3,f4,f5,f6,action,bin,anomaly,weight\n";
  for (const RoundRecord& rec : r.rounds) {
    for (const ClientRoundRecord& c : rec.clients) {
      const FingerprintVector& f = c.fingerprint;
      out += std::to_string(rec.round) + "," + std::to_string(c.client) + "," +
             attack_kind_name(c.tag) + "," + fmt6(f.f1) + "," + fmt6(f.f2) +
             "," + fmt6(f.f3) + "," + fmt6(f.f4) + "," + fmt6(f.f5) + "," +
             fmt6(f.f6) + "," + std::to_string(c.action) + "," +
             fmt6(double(c.bin)) + "," + fmt6(double(c.anomaly)) + "," +
             fmt6(c.weight) + "\n";
    }
  }
  return out;
}

std::string summary_text(const ExperimentResult& r) {
  return stats_from_result(r).text();
}

std::string summary_json(const ExperimentResult& r) {
  SummaryStats s = stats_from_result(r);
  nlohmann::json j;
  j["config"] = config_to_json(r.config);
  j["rounds"] = s.rounds;
  j["final_test_accuracy"] = s.final_acc;
  j["best_test_accuracy"] = s.best_acc;
  j["mean_reward"] = s.mean_reward;
  j["detection"] = {{"tp", s.tp}, {"fp", s.fp}, {"tn", s.tn}, {"fn", s.fn}};
  return j.dump(2) + "\n";
}

void write_outputs(const ExperimentResult& r, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto put = [&](const std::string& name, const std::string& content) {
    std::ofstream f(out_dir + "/" + name, std::ios::binary);
    if (!f) throw DataError("cannot write " + out_dir + "/" + name);
    f << content;
  };
  put("rounds.csv", rounds_csv(r));
  put("clients.csv", clients_csv(r));
  put("summary.json", summary_json(r));
  put("config.json", config_to_json(r.config).dump(2) + "\n");
}

std::string report_from_dir(const std::string& dir) {
  std::ifstream f(dir + "/rounds.csv");
  if (!f) throw DataError("cannot open " + dir + "/rounds.csv");
  return stats_from_csv(f).text();
}

}  // namespace fedtrust
