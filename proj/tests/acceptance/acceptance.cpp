// Acceptance suite: one pass/fail line per criterion. Expensive runs go
// through the experiment registry under the output directory, so a rerun
// resumes from completed runs. Usage: acceptance [out_dir] [criterion...]

#include <chrono>
#include <cstdio>
#include <iostream>
#include <set>

#include "ias/agent/gradcheck.hpp"
#include "ias/core/runtime.hpp"
#include "ias/harness/experiments.hpp"
#include "ias/nets/gradcheck.hpp"
#include "ias/oracle/checks.hpp"

using namespace ias;
using namespace ias::harness;
using semisup::Variant;

namespace {

struct Outcome {
  bool pass = false;
  nlohmann::json detail = nlohmann::json::object();
};

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

bool checks_pass(const std::vector<oracle::OracleCheck>& checks, nlohmann::json& detail) {
  for (const auto& c : checks) detail[c.name] = {{"value", c.value}, {"tolerance", c.tolerance}, {"pass", c.pass}};
  return oracle::all_pass(checks);
}

ExperimentSpec acceptance_spec(const std::filesystem::path& out) {
  ExperimentSpec s;
  s.name = "acceptance";
  s.out_dir = out;
  return s;
}

// Per-seed metric values of a set of registry runs; throws if any failed.
std::vector<double> values(const std::vector<RunRecord>& runs, const std::string& metric) {
  std::vector<double> out;
  for (const auto& r : runs) {
    if (r.status != RunStatus::success || !r.metrics) throw TrainingError("run " + r.key + " failed: " + r.message);
    out.push_back(metric_value(*r.metrics, metric));
  }
  return out;
}

Outcome estimator_unbiasedness() {
  Outcome o;
  o.pass = checks_pass(oracle::unbiasedness_checks(101, 10000), o.detail);
  return o;
}

Outcome bound_validity() {
  Outcome o;
  o.pass = checks_pass(oracle::bound_checks(102, 100), o.detail);
  return o;
}

Outcome substitution_convergence() {
  Outcome o;
  const auto r = oracle::substitution_checks(103, {8, 64, 512, 4096}, 100);
  for (const auto& row : r.report.rows)
    o.detail["B" + std::to_string(row.batch)] = {{"median_cosine", row.median_cosine},
                                                 {"offset_variance", row.offset_variance}};
  o.pass = checks_pass(r.checks, o.detail);
  return o;
}

Outcome gradient_integrity() {
  Outcome o;
  o.pass = true;
  auto record = [&](const std::string& name, const ad::GradCheckResult& r) {
    o.detail[name] = {{"checked", r.checked}, {"failures", r.failures}, {"max_rel_error", r.max_rel_error}};
    o.pass = o.pass && r.failures == 0 && r.checked > 0;
  };
  for (const auto& c : nets::network_gradient_checks(oracle::make_micro_instance().net, 104, 6))
    record("micro/" + c.network, c.result);
  const auto vocab = text::default_vocabulary();
  nets::NetConfig desk = nets::net_config_for(world::WorldConfig{}, vocab.size());
  desk.width = 16;
  desk.heads = 2;
  desk.ff_width = 32;
  desk.conv_channels = {4, 8, 16};
  desk.embed_hidden = 16;
  desk.embed_dim = 8;
  for (const auto& c : nets::network_gradient_checks(desk, 105, 3)) record("desk/" + c.network, c.result);
  for (const auto& c : agent::agent_gradient_checks(106, 4)) record("agent/" + c.loss, c.result);
  return o;
}

// Semi-supervised captioners at N_p = 585 against the supervised curve.
Outcome scaling_ordering(const ExperimentSpec& s, Registry& reg) {
  const int n = 585;
  const std::vector<int> supervised_sizes{585, 1500, 4000};
  auto runs_at = [&](Variant v, int size) {
    std::vector<RunRecord> out;
    for (int seed = 0; seed < s.seeds; ++seed)
      out.push_back(run_captioner(reg, s, point_key("scaling", std::string(semisup::name(v)), "n" + std::to_string(size), seed),
                                  captioner_data(s, v, size, std::nullopt, seed), v, seed, &std::cerr));
    return out;
  };
  Outcome o;
  std::map<int, std::vector<RunRecord>> sup;
  for (int size : supervised_sizes) sup[size] = runs_at(Variant::supervised, size);
  bool ordering = true, efficient = false;
  for (auto v : {Variant::generative, Variant::contrastive}) {
    const auto semi = runs_at(v, n);
    auto& d = o.detail[std::string(semisup::name(v))];
    for (const auto& m : {std::string("caption_loglik"), std::string("color_object_accuracy")}) {
      const auto a = values(semi, m), b = values(sup[n], m);
      // Every semi-supervised seed above every supervised seed.
      const bool separated = *std::min_element(a.begin(), a.end()) > *std::max_element(b.begin(), b.end());
      ordering = ordering && separated;
      std::vector<metrics::CurvePoint> curve;
      for (int size : supervised_sizes) curve.push_back({static_cast<double>(size), mean_of(values(sup[size], m))});
      const auto e = metrics::data_efficiency_multiplier(curve, mean_of(a), n);
      if (m == "caption_loglik") efficient = efficient || e.multiplier >= 1.5;
      d[m] = {{"semi", a}, {"supervised", b}, {"separated", separated}, {"multiplier", e.multiplier}};
    }
  }
  o.detail["ordering"] = ordering;
  o.detail["multiplier_at_least_1.5"] = efficient;
  o.pass = ordering && efficient;
  return o;
}

Outcome novel_object(const ExperimentSpec& s, Registry& reg) {
  Outcome o;
  std::map<Variant, std::pair<double, double>> rates;
  for (auto v : {Variant::generative, Variant::supervised}) {
    std::vector<RunRecord> runs;
    for (int seed = 0; seed < s.seeds; ++seed) runs.push_back(run_novel_point(reg, s, v, s.agent.high_quota, seed, &std::cerr));
    const auto tpr = values(runs, "novel_tpr"), fpr = values(runs, "novel_fpr");
    rates[v] = {mean_of(tpr), mean_of(fpr)};
    o.detail[std::string(semisup::name(v))] = {{"tpr", tpr}, {"fpr", fpr}};
  }
  const auto [gt, gf] = rates[Variant::generative];
  const auto [st, sf] = rates[Variant::supervised];
  o.detail["tpr_ratio"] = st > 0 ? gt / st : std::numeric_limits<double>::infinity();
  o.detail["fpr_difference"] = gf - sf;
  o.pass = gt >= 2.0 * st && std::abs(gf - sf) <= 0.05;
  return o;
}

// Mean normalised reward per condition and task over seeds.
std::map<std::string, std::map<std::string, double>> agent_rewards(const ExperimentSpec& s, Registry& reg) {
  std::map<std::string, std::map<std::string, double>> out;
  for (const auto& c : agent_conditions(s.agent)) {
    std::map<std::string, std::vector<double>> per_task;
    for (int seed = 0; seed < s.seeds; ++seed) {
      const auto r = run_agent_condition(reg, s, c, seed, &std::cerr);
      if (r.status != RunStatus::success) throw TrainingError("run " + r.key + " failed: " + r.message);
      for (const auto& task : agent_tasks()) per_task[task].push_back(r.extra.at("rewards").at(task).get<double>());
    }
    for (const auto& [task, v] : per_task) out[c.name][task] = mean_of(v);
  }
  return out;
}

Outcome zero_shot(const std::map<std::string, std::map<std::string, double>>& r) {
  Outcome o;
  o.detail["rewards"] = r;
  const auto& aux = r.at("caption_match");
  const auto& upper = r.at("novel_demos");
  const auto& base = r.at("baseline");
  const bool lift = aux.at("lift_novel") >= 0.5 * upper.at("lift_novel");
  const bool ask = aux.at("ask_color_novel") >= 0.5 * upper.at("ask_color_novel");
  const bool baseline = base.at("lift_novel") <= 0.1 && base.at("ask_color_novel") <= 0.1;
  const bool low = r.at("caption_match_low").at("lift_novel") >= aux.at("lift_novel") - 0.15;
  o.detail["lift_novel_half_of_upper"] = lift;
  o.detail["ask_novel_half_of_upper"] = ask;
  o.detail["baseline_at_most_0.1"] = baseline;
  o.detail["low_quota_within_0.15"] = low;
  o.pass = lift && ask && baseline && low;
  return o;
}

Outcome control_stability(const std::map<std::string, std::map<std::string, double>>& r) {
  Outcome o;
  o.pass = true;
  for (const auto& task : {std::string("lift_control"), std::string("ask_color_control")}) {
    double lo = 1e300, hi = -1e300;
    for (const auto& [cond, tasks] : r) {
      lo = std::min(lo, tasks.at(task));
      hi = std::max(hi, tasks.at(task));
    }
    const double spread = hi > 0 ? (hi - lo) / hi : 0.0;
    o.detail[task] = {{"min", lo}, {"max", hi}, {"relative_spread", spread}};
    o.pass = o.pass && spread <= 0.1;
  }
  return o;
}

Outcome metric_exactness() {
  Outcome o;
  const world::WorldConfig w;
  std::vector<std::string> caps;
  for (std::uint64_t i = 0; caps.size() < 500; ++i) {
    const auto e = world::make_paired(derive_seed(107, i), w);
    if (text::split_words(e.caption).size() >= 4) caps.push_back(e.caption);
  }
  std::vector<std::vector<std::string>> refs;
  for (const auto& c : caps) refs.push_back({c});
  const double same = metrics::cider(caps, refs);
  const double disjoint = metrics::cider({"purple train", "yellow plane", "zzz"},
                                         {{"a red box"}, {"a blue ball above a green duck"}, {"a white bear"}});
  int recovered = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto e = world::make_paired(derive_seed(108, static_cast<std::uint64_t>(i)), w);
    std::vector<metrics::ColorObjectPair> asserted;
    const auto& p = e.scene.prompted();
    asserted.push_back({p.color, p.shape});
    if (text::split_words(e.caption).size() > 3)
      for (const auto& obj : e.scene.objects)
        if (&obj != &p && e.caption.ends_with(world::describe(obj))) {
          asserted.push_back({obj.color, obj.shape});
          break;
        }
    recovered += metrics::parse_color_object_pairs(e.caption, w) == asserted;
  }
  bool roll_ok = true;
  for (int batch = 2; batch <= 64; ++batch)
    for (int b = 0; b < batch; ++b) roll_ok = roll_ok && agent::roll(b, batch) == (b + 1) % batch;
  o.detail = {{"cider_identical", same}, {"cider_disjoint", disjoint}, {"parser_recovered", recovered},
              {"parser_total", n},       {"roll", roll_ok}};
  o.pass = std::abs(same - 10.0) <= 1e-9 && disjoint == 0.0 && recovered == n && roll_ok;
  return o;
}

// Every captioner variant and an auxiliary-loss agent, each run twice from
// scratch with the same master seed in separate registries.
Outcome determinism(const std::filesystem::path& out) {
  auto spec_in = [&](const std::string& dir) {
    ExperimentSpec s = acceptance_spec(out / "determinism" / dir);
    s.master_seed = 109;
    s.data.n_unpaired = 2000;
    s.data.n_validation = 200;
    s.captioner.max_steps = 30;
    s.captioner.eval_every = 10;
    s.captioner.prior_max_steps = 30;
    s.captioner.prior_eval_every = 10;
    s.captioner.validation_limit = 100;
    s.novel_base_paired = 200;
    s.agent.demonstrations = 200;
    s.agent.eval_episodes = 100;
    s.agent.train.steps = 30;
    s.agent.high_quota = 50;
    return s;
  };
  Outcome o;
  o.pass = true;
  std::vector<nlohmann::json> reports[2];
  for (int k = 0; k < 2; ++k) {
    const std::string dir = k == 0 ? "a" : "b";
    std::filesystem::remove_all(out / "determinism" / dir);
    const ExperimentSpec s = spec_in(dir);
    Registry reg = open_registry(s);
    for (auto v : {Variant::generative, Variant::contrastive, Variant::supervised}) {
      const auto r = run_captioner(reg, s, point_key("determinism", std::string(semisup::name(v)), "n100", 0),
                                   captioner_data(s, v, 100, std::nullopt, 0), v, 0);
      reports[k].push_back(r.metrics ? to_json(*r.metrics) : nlohmann::json(r.message));
    }
    const auto a = run_agent_condition(reg, s, find_condition(s.agent, "caption_match"), 0);
    reports[k].push_back(a.status == RunStatus::success ? a.extra.at("rewards") : nlohmann::json(a.message));
  }
  for (std::size_t i = 0; i < reports[0].size(); ++i) {
    const bool same = reports[0][i].dump() == reports[1][i].dump();
    o.pass = o.pass && same && !reports[0][i].is_string();
    o.detail["run" + std::to_string(i)] = same;
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  const std::filesystem::path out = argc > 1 ? argv[1] : "acceptance_runs";
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const ExperimentSpec spec = acceptance_spec(out);
  Registry reg = open_registry(spec);

  std::map<std::string, std::map<std::string, double>> rewards;
  auto rewards_once = [&]() -> const auto& {
    if (rewards.empty()) rewards = agent_rewards(spec, reg);
    return rewards;
  };
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"estimator unbiasedness", estimator_unbiasedness},
      {"bound validity", bound_validity},
      {"contrastive substitution convergence", substitution_convergence},
      {"gradient integrity", gradient_integrity},
      {"scaling ordering at 585 labels", [&] { return scaling_ordering(spec, reg); }},
      {"novel-object TPR/FPR at quota 585", [&] { return novel_object(spec, reg); }},
      {"zero-shot agent", [&] { return zero_shot(rewards_once()); }},
      {"control-object stability", [&] { return control_stability(rewards_once()); }},
      {"metric exactness", metric_exactness},
      {"determinism", [&] { return determinism(out); }},
  };

  nlohmann::json summary = nlohmann::json::array();
  int passed = 0, evaluated = 0, crashed = 0;
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    std::string error;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      error = e.what();
      ++crashed;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ++evaluated;
    passed += o.pass;
    const std::string line = "criterion " + std::to_string(id) + ": " + (o.pass ? "PASS" : "FAIL") + "  " +
                             criteria[i].first + (error.empty() ? "" : "  (error: " + error + ")") + "  [" +
                             fixed(secs, 1) + " s]";
    lines.push_back(line);
    std::cout << line << "\n  " << o.detail.dump() << std::endl;
    summary.push_back({{"criterion", id}, {"name", criteria[i].first}, {"pass", o.pass}, {"detail", o.detail},
                       {"error", error}, {"seconds", secs}});
  }
  std::filesystem::create_directories(out);
  std::ofstream(out / "acceptance.json") << summary.dump(2) << '\n';
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l << '\n';
  std::cout << passed << "/" << evaluated << " criteria passed" << std::endl;
  // Failed criteria are reported above; the exit status flags only a suite
  // that could not evaluate a criterion.
  return crashed == 0 ? 0 : 1;
}
