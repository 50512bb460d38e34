#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ias/core/hash.hpp"
#include "ias/metrics/report.hpp"

#ifndef IAS_VERSION
#define IAS_VERSION "0.1.0"
#endif

namespace ias::harness {

inline constexpr const char* kVersion = IAS_VERSION;

enum class RunStatus { success, failed };

inline std::string_view name(RunStatus s) { return s == RunStatus::success ? "success" : "failed"; }

// Hash of a canonicalised configuration (object keys are sorted on dump).
inline std::string config_hash(const nlohmann::json& config) {
  Fnv1a h;
  h.update(config.dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h.digest()));
  return buf;
}

struct RunRecord {
  std::string key;        // experiment/variant/point/seed
  std::string spec_hash;  // of the resolved run configuration
  std::string version = kVersion;
  std::optional<metrics::MetricReport> metrics;
  nlohmann::json extra = nlohmann::json::object();
  double wall_clock = 0.0;
  RunStatus status = RunStatus::success;
  std::string message;
};

inline nlohmann::json to_json(const metrics::MetricReport& m) {
  return {{"caption_loglik", m.caption_loglik},
          {"cider", m.cider},
          {"color_object_accuracy", m.color_object_accuracy},
          {"color_object_defined", m.color_object_defined},
          {"novel_tpr", m.novel_tpr},
          {"novel_fpr", m.novel_fpr},
          {"novel_caption_loglik", m.novel_caption_loglik},
          {"novel_positives", m.novel_positives},
          {"novel_negatives", m.novel_negatives},
          {"n_eval", m.n_eval}};
}

inline metrics::MetricReport metric_report_from_json(const nlohmann::json& j) {
  metrics::MetricReport m;
  m.caption_loglik = j.at("caption_loglik").get<double>();
  m.cider = j.at("cider").get<double>();
  m.color_object_accuracy = j.at("color_object_accuracy").get<double>();
  m.color_object_defined = j.at("color_object_defined").get<bool>();
  m.novel_tpr = j.at("novel_tpr").get<double>();
  m.novel_fpr = j.at("novel_fpr").get<double>();
  m.novel_caption_loglik = j.at("novel_caption_loglik").get<double>();
  m.novel_positives = j.at("novel_positives").get<int>();
  m.novel_negatives = j.at("novel_negatives").get<int>();
  m.n_eval = j.at("n_eval").get<int>();
  return m;
}

inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json j{{"key", r.key},
                   {"spec_hash", r.spec_hash},
                   {"version", r.version},
                   {"extra", r.extra},
                   {"wall_clock", r.wall_clock},
                   {"status", std::string(name(r.status))},
                   {"message", r.message}};
  j["metrics"] = r.metrics ? to_json(*r.metrics) : nlohmann::json();
  return j;
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.key = j.at("key").get<std::string>();
  r.spec_hash = j.at("spec_hash").get<std::string>();
  r.version = j.at("version").get<std::string>();
  r.extra = j.at("extra");
  r.wall_clock = j.at("wall_clock").get<double>();
  const auto status = j.at("status").get<std::string>();
  if (status != "success" && status != "failed") throw DataError("run record: unknown status " + status);
  r.status = status == "success" ? RunStatus::success : RunStatus::failed;
  r.message = j.at("message").get<std::string>();
  if (!j.at("metrics").is_null()) r.metrics = metric_report_from_json(j.at("metrics"));
  return r;
}

// Append-only JSON-lines log of runs. A key may be appended again after a
// failure or a configuration change; lookups return the latest record.
class Registry {
 public:
  Registry() = default;
  explicit Registry(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(path_, std::ios::binary);
    std::string line;
    while (in && std::getline(in, line))
      if (!line.empty()) records_.push_back(run_record_from_json(nlohmann::json::parse(line)));
  }

  const std::vector<RunRecord>& records() const { return records_; }
  const std::filesystem::path& path() const { return path_; }

  std::optional<RunRecord> latest(const std::string& key) const {
    for (auto it = records_.rbegin(); it != records_.rend(); ++it)
      if (it->key == key) return *it;
    return std::nullopt;
  }

  // A successful record for the key under the same configuration.
  std::optional<RunRecord> completed(const std::string& key, const std::string& spec_hash) const {
    auto r = latest(key);
    if (r && r->status == RunStatus::success && r->spec_hash == spec_hash) return r;
    return std::nullopt;
  }

  void append(const RunRecord& r) {
    records_.push_back(r);
    if (path_.empty()) return;
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw DataError("registry: cannot append to " + path_.string());
    out << to_json(r).dump() << '\n';
  }

 private:
  std::filesystem::path path_;
  std::vector<RunRecord> records_;
};

// Runs `body` unless an equivalent successful record exists; failures are
// recorded and returned rather than thrown.
template <class F>
RunRecord run_once(Registry& reg, const std::string& key, const nlohmann::json& config, F&& body) {
  const std::string hash = config_hash(config);
  if (auto done = reg.completed(key, hash)) return *done;
  RunRecord r;
  r.key = key;
  r.spec_hash = hash;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(r);
    r.status = RunStatus::success;
  } catch (const std::exception& e) {
    r.status = RunStatus::failed;
    r.message = e.what();
  }
  r.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  reg.append(r);
  return r;
}

}  // namespace ias::harness
