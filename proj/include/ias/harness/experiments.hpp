#pragma once

#include <iostream>
#include <map>

#include "ias/agent/evaluate.hpp"
#include "ias/agent/train.hpp"
#include "ias/harness/plot.hpp"
#include "ias/harness/registry.hpp"
#include "ias/harness/spec.hpp"
#include "ias/metrics/report.hpp"
#include "ias/nets/bundle.hpp"

namespace ias::harness {

inline std::uint64_t seed_for(const ExperimentSpec& s, int seed_index) {
  return derive_seed(derive_seed(s.master_seed, "seed"), static_cast<std::uint64_t>(seed_index));
}

inline std::filesystem::path experiment_dir(const ExperimentSpec& s) { return s.out_dir / s.name; }

inline std::filesystem::path checkpoint_path(const ExperimentSpec& s, const std::string& key) {
  std::string file = key;
  std::replace(file.begin(), file.end(), '/', '_');
  return experiment_dir(s) / "checkpoints" / (file + ".bin");
}

inline Registry open_registry(const ExperimentSpec& s) { return Registry(experiment_dir(s) / "runs.jsonl"); }

inline std::string point_key(const std::string& experiment, const std::string& variant, const std::string& point,
                             int seed_index) {
  return experiment + "/" + variant + "/" + point + "/s" + std::to_string(seed_index);
}

// Data configuration of one captioner run.
inline world::DataConfig captioner_data(const ExperimentSpec& s, semisup::Variant v, int n_paired,
                                        std::optional<int> novel_quota, int seed_index) {
  world::DataConfig d = s.data;
  d.master_seed = seed_for(s, seed_index);
  d.n_paired = n_paired;
  if (v == semisup::Variant::supervised) d.n_unpaired = 0;
  if (novel_quota) {
    d.novel_shape = s.novel_shape;
    d.novel_quota = *novel_quota;
  }
  return d;
}

// Trains (or reuses) one captioner, evaluates it on the validation split and
// saves its checkpoint.
inline RunRecord run_captioner(Registry& reg, const ExperimentSpec& s, const std::string& key,
                               const world::DataConfig& data, semisup::Variant v, int seed_index,
                               std::ostream* log = nullptr) {
  const auto vocab = text::default_vocabulary();
  semisup::TrainConfig tc = s.captioner;
  tc.variant = v;
  tc.seed = seed_for(s, seed_index);
  const nets::NetConfig net = s.captioner_net(vocab.size());
  const nlohmann::json config{{"data", world::to_json(data)},
                              {"train", semisup::to_json(tc)},
                              {"net", nets::to_json(net)},
                              {"novel_eval", data.novel_shape ? std::string(world::name(*data.novel_shape)) : ""}};
  const auto ckpt = checkpoint_path(s, key);
  return run_once(reg, key, config, [&](RunRecord& r) {
    if (log) *log << "training " << key << std::endl;
    const auto ds = world::build_datasets(data);
    const auto result = semisup::train<float>(ds, tc, net, vocab);
    r.metrics = metrics::evaluate_captioner(result.bundle.omega, ds.validation, data.world, vocab,
                                            net.max_caption_length, data.novel_shape);
    nets::save_checkpoint(result.bundle, ckpt, {{"key", key}});
    r.extra = {{"best_step", result.best_step},
               {"steps_run", result.steps_run},
               {"best_validation_ll", result.best_validation_ll},
               {"checkpoint", std::filesystem::relative(ckpt, experiment_dir(s)).string()}};
  });
}

inline double metric_value(const metrics::MetricReport& m, const std::string& metric) {
  if (metric == "caption_loglik") return m.caption_loglik;
  if (metric == "cider") return m.cider;
  if (metric == "color_object_accuracy") return m.color_object_accuracy;
  if (metric == "novel_caption_loglik") return m.novel_caption_loglik;
  if (metric == "novel_tpr") return m.novel_tpr;
  if (metric == "novel_fpr") return m.novel_fpr;
  throw ConfigError("unknown metric " + metric);
}

struct ExperimentResult {
  std::vector<CurveRow> rows;
  std::vector<RunRecord> runs;
  std::vector<std::string> flags;  // consistency warnings (e.g. non-monotone curves)
  nlohmann::json summary = nlohmann::json::object();

  bool all_succeeded() const {
    for (const auto& r : runs)
      if (r.status != RunStatus::success) return false;
    return true;
  }

  const CurveRow* find(const std::string& variant, double x, const std::string& metric) const {
    for (const auto& r : rows)
      if (r.variant == variant && r.x == x && r.metric == metric) return &r;
    return nullptr;
  }
};

// Per-seed values of a metric for successful runs, in seed order.
inline std::vector<double> seed_values(const std::vector<RunRecord>& runs, const std::string& prefix, int seeds,
                                       const std::string& metric) {
  std::vector<double> out;
  for (int s = 0; s < seeds; ++s)
    for (const auto& r : runs)
      if (r.key == prefix + "/s" + std::to_string(s) && r.status == RunStatus::success && r.metrics)
        out.push_back(metric_value(*r.metrics, metric));
  return out;
}

inline void write_outputs(const ExperimentSpec& s, const std::string& stem, const ExperimentResult& res,
                          const PlotStyle& style) {
  const auto dir = experiment_dir(s);
  const Table t = curve_table(res.rows);
  write_csv(t, dir / (stem + ".csv"));
  if (!t.rows.empty()) plot(t, style, dir / "plots", stem);
  std::ofstream out(dir / (stem + "_summary.json"), std::ios::binary);
  out << res.summary.dump(2) << '\n';
}

inline const std::vector<std::string>& scaling_metrics() {
  static const std::vector<std::string> m{"caption_loglik", "cider", "color_object_accuracy"};
  return m;
}

// Labelled-size sweep over captioner variants with seed aggregates and the
// data-efficiency multiplier of each semi-supervised point against the
// supervised curve.
inline ExperimentResult run_scaling(const ExperimentSpec& s, Registry& reg, std::ostream* log = nullptr) {
  s.validate();
  ExperimentResult res;
  for (auto v : s.variants)
    for (int n : s.labeled_sizes)
      for (int seed = 0; seed < s.seeds; ++seed) {
        const auto key = point_key("scaling", std::string(semisup::name(v)), "n" + std::to_string(n), seed);
        res.runs.push_back(run_captioner(reg, s, key, captioner_data(s, v, n, std::nullopt, seed), v, seed, log));
      }
  for (auto v : s.variants)
    for (int n : s.labeled_sizes)
      for (const auto& m : scaling_metrics()) {
        const auto prefix = "scaling/" + std::string(semisup::name(v)) + "/n" + std::to_string(n);
        res.rows.push_back({std::string(semisup::name(v)), static_cast<double>(n), m,
                            summarize(seed_values(res.runs, prefix, s.seeds, m))});
      }

  const bool has_supervised =
      std::find(s.variants.begin(), s.variants.end(), semisup::Variant::supervised) != s.variants.end();
  if (has_supervised) {
    for (const auto& m : {std::string("caption_loglik"), std::string("color_object_accuracy")}) {
      std::vector<metrics::CurvePoint> curve;
      for (int n : s.labeled_sizes)
        if (const auto* row = res.find("supervised", n, m); row && row->stats.n > 0)
          curve.push_back({static_cast<double>(n), row->stats.mean});
      if (curve.empty()) continue;
      for (std::size_t i = 1; i < curve.size(); ++i)
        if (curve[i].metric < curve[i - 1].metric)
          res.flags.push_back("supervised " + m + " decreases between N_p=" + format_number(curve[i - 1].n_paired) +
                              " and " + format_number(curve[i].n_paired));
      for (auto v : s.variants) {
        if (v == semisup::Variant::supervised) continue;
        for (int n : s.labeled_sizes) {
          const auto prefix = "scaling/" + std::string(semisup::name(v)) + "/n" + std::to_string(n);
          std::vector<double> mult;
          nlohmann::json statuses = nlohmann::json::array();
          for (double value : seed_values(res.runs, prefix, s.seeds, m)) {
            const auto e = metrics::data_efficiency_multiplier(curve, value, n);
            mult.push_back(e.multiplier);
            statuses.push_back(e.status == metrics::EfficiencyStatus::interpolated    ? "interpolated"
                               : e.status == metrics::EfficiencyStatus::clamped_above ? "clamped_above"
                                                                                      : "below_range");
          }
          res.rows.push_back({std::string(semisup::name(v)), static_cast<double>(n), "multiplier_" + m, summarize(mult)});
          res.summary["multiplier_status"][std::string(semisup::name(v))][m][std::to_string(n)] = statuses;
        }
      }
    }
  }
  res.summary["flags"] = res.flags;
  res.summary["all_succeeded"] = res.all_succeeded();
  write_outputs(s, "scaling", res, PlotStyle{});
  return res;
}

inline const std::vector<std::string>& novel_metrics() {
  static const std::vector<std::string> m{"novel_caption_loglik", "novel_tpr", "novel_fpr"};
  return m;
}

inline std::string novel_key(semisup::Variant v, int quota, int seed) {
  return point_key("novel_object", std::string(semisup::name(v)), "q" + std::to_string(quota), seed);
}

inline RunRecord run_novel_point(Registry& reg, const ExperimentSpec& s, semisup::Variant v, int quota, int seed,
                                 std::ostream* log = nullptr) {
  return run_captioner(reg, s, novel_key(v, quota, seed), captioner_data(s, v, s.novel_base_paired, quota, seed), v,
                       seed, log);
}

// Novel-object quota sweep: the labelled set excludes every scene with the
// novel shape except `quota` examples whose caption names it.
inline ExperimentResult run_novel_object(const ExperimentSpec& s, Registry& reg, std::ostream* log = nullptr) {
  s.validate();
  ExperimentResult res;
  for (auto v : s.variants)
    for (int q : s.novel_quotas)
      for (int seed = 0; seed < s.seeds; ++seed) res.runs.push_back(run_novel_point(reg, s, v, q, seed, log));
  for (auto v : s.variants)
    for (int q : s.novel_quotas)
      for (const auto& m : novel_metrics()) {
        const auto prefix = "novel_object/" + std::string(semisup::name(v)) + "/q" + std::to_string(q);
        res.rows.push_back({std::string(semisup::name(v)), static_cast<double>(q), m,
                            summarize(seed_values(res.runs, prefix, s.seeds, m))});
      }
  res.summary["all_succeeded"] = res.all_succeeded();
  PlotStyle style;
  style.log_x = false;
  style.x_label = "novel-object labelled examples";
  write_outputs(s, "novel_object", res, style);
  return res;
}

// ---------------------------------------------------------------------------
// Zero-shot agent experiment.

struct AgentCondition {
  std::string name;
  bool caption_loss = false;
  bool match_loss = false;
  bool novel_demos = false;
  int quota = 0;  // captioner novel quota when an auxiliary loss is on
};

inline std::vector<AgentCondition> agent_conditions(const AgentSpec& a) {
  return {{"baseline", false, false, false, 0},
          {"caption", true, false, false, a.high_quota},
          {"caption_match", true, true, false, a.high_quota},
          {"novel_demos", false, false, true, 0},
          {"caption_match_low", true, true, false, a.low_quota}};
}

inline AgentCondition find_condition(const AgentSpec& a, const std::string& name) {
  for (const auto& c : agent_conditions(a))
    if (c.name == name) return c;
  throw ConfigError("unknown agent condition " + name);
}

inline const std::vector<std::string>& agent_tasks() {
  static const std::vector<std::string> t{"lift_novel", "ask_color_novel", "lift_control", "ask_color_control"};
  return t;
}

inline agent::AgentNetConfig agent_net(const ExperimentSpec& s, int vocab_size) {
  agent::AgentNetConfig c = s.agent.net;
  c.vocab_size = vocab_size;
  c.view_size = s.agent.env.view_size;
  return c;
}

inline std::vector<agent::Trajectory> agent_demos(const ExperimentSpec& s, bool novel, int seed_index) {
  agent::DemoConfig dc;
  dc.episodes = s.agent.demonstrations;
  dc.seed = derive_seed(seed_for(s, seed_index), "demos");
  dc.novel_shape = s.novel_shape;
  dc.include_novel = novel;
  return agent::generate_demonstrations(s.agent.env, dc);
}

// Normalised rewards of a trained agent on the four evaluation tasks.
inline std::map<std::string, double> evaluate_agent(const ExperimentSpec& s, const agent::AgentPolicy<float>& policy,
                                                    const text::Vocabulary& vocab) {
  std::map<std::string, double> out;
  const std::uint64_t eval_seed = derive_seed(s.master_seed, "agent-eval");
  auto run = [&](agent::Task task, world::Shape shape, const char* name) {
    agent::AgentController<float> c(policy, vocab, derive_seed(eval_seed, name));
    out[name] = agent::evaluate_task(c, s.agent.env, task, shape, s.agent.eval_episodes, derive_seed(eval_seed, name))
                    .normalized;
  };
  run(agent::Task::lift, s.novel_shape, "lift_novel");
  run(agent::Task::ask_color, s.novel_shape, "ask_color_novel");
  run(agent::Task::lift, s.control_shape, "lift_control");
  run(agent::Task::ask_color, s.control_shape, "ask_color_control");
  return out;
}

inline RunRecord run_agent_condition(Registry& reg, const ExperimentSpec& s, const AgentCondition& cond, int seed,
                                     std::ostream* log = nullptr) {
  const auto vocab = text::default_vocabulary();
  const bool aux = cond.caption_loss || cond.match_loss;
  std::optional<RunRecord> cap;
  if (aux) {
    cap = run_novel_point(reg, s, s.agent.captioner_variant, cond.quota, seed, log);
    if (cap->status != RunStatus::success) throw TrainingError("captioner run " + cap->key + " failed");
  }
  agent::AgentTrainConfig tc = s.agent.train;
  tc.caption_loss = cond.caption_loss;
  tc.match_loss = cond.match_loss;
  tc.seed = derive_seed(seed_for(s, seed), "agent-train");
  const auto net = agent_net(s, vocab.size());
  const nlohmann::json config{{"condition", cond.name},
                              {"env", to_json(s.agent.env)},
                              {"net", to_json(net)},
                              {"train", agent::to_json(tc)},
                              {"demonstrations", s.agent.demonstrations},
                              {"eval_episodes", s.agent.eval_episodes},
                              {"novel_shape", std::string(world::name(s.novel_shape))},
                              {"control_shape", std::string(world::name(s.control_shape))},
                              {"captioner", cap ? cap->spec_hash : ""}};
  const auto key = point_key("zero_shot", cond.name, "agent", seed);
  const auto ckpt = checkpoint_path(s, key);
  return run_once(reg, key, config, [&](RunRecord& r) {
    if (log) *log << "training " << key << std::endl;
    const auto demos = agent_demos(s, cond.novel_demos, seed);
    agent::AgentPolicy<float> policy(net, derive_seed(seed_for(s, seed), "agent-init"));
    std::optional<nets::ModelBundle<float>> captioner;
    if (cap) {
      captioner.emplace(s.captioner_net(vocab.size()), 0);
      nets::load_checkpoint(*captioner, experiment_dir(s) / cap->extra.at("checkpoint").get<std::string>());
    }
    const auto tr = agent::train_agent(policy, demos, s.agent.env, vocab, captioner ? &captioner->omega : nullptr, tc);
    nets::save_parameters<float>(std::as_const(policy).groups(), ckpt, {{"key", key}, {"net", to_json(net)}});
    const auto rewards = evaluate_agent(s, policy, vocab);
    r.extra = {{"rewards", rewards},
               {"checkpoint", std::filesystem::relative(ckpt, experiment_dir(s)).string()},
               {"cached_captions", tr.cached_captions}};
  });
}

inline ExperimentResult run_zero_shot(const ExperimentSpec& s, Registry& reg, std::ostream* log = nullptr) {
  s.validate();
  ExperimentResult res;
  const auto conds = agent_conditions(s.agent);
  for (const auto& c : conds)
    for (int seed = 0; seed < s.seeds; ++seed) res.runs.push_back(run_agent_condition(reg, s, c, seed, log));
  for (std::size_t ci = 0; ci < conds.size(); ++ci)
    for (const auto& task : agent_tasks()) {
      std::vector<double> v;
      for (int seed = 0; seed < s.seeds; ++seed)
        for (const auto& r : res.runs)
          if (r.key == point_key("zero_shot", conds[ci].name, "agent", seed) && r.status == RunStatus::success)
            v.push_back(r.extra.at("rewards").at(task).get<double>());
      res.rows.push_back({conds[ci].name, static_cast<double>(ci), task, summarize(v)});
    }
  res.summary["all_succeeded"] = res.all_succeeded();
  PlotStyle style;
  style.kind = PlotKind::bars;
  style.y_label = "normalised reward";
  write_outputs(s, "zero_shot", res, style);
  return res;
}

}  // namespace ias::harness
