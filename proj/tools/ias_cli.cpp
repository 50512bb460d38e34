#include <CLI11.hpp>

#include <iostream>

#include "ias/core/runtime.hpp"
#include "ias/harness/experiments.hpp"

using namespace ias;
using namespace ias::harness;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;

  void attach(CLI::App* app) {
    app->add_option("config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "override the master seed");
    app->add_option("--out", out, "override the output directory");
  }

  ExperimentSpec spec() const {
    ExperimentSpec s = load_experiment_spec(config);
    if (seed) s.master_seed = *seed;
    if (out) s.out_dir = *out;
    return s;
  }
};

int report(const RunRecord& r) {
  nlohmann::json j = to_json(r);
  std::cout << j.dump(2) << '\n';
  return r.status == RunStatus::success ? 0 : 1;
}

int report(const ExperimentResult& r) {
  for (const auto& run : r.runs)
    if (run.status != RunStatus::success) std::cerr << "failed: " << run.key << ": " << run.message << '\n';
  for (const auto& f : r.flags) std::cerr << "flag: " << f << '\n';
  write_csv(curve_table(r.rows), std::cout);
  return r.all_succeeded() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Semi-supervised captioning and instruction-following agents"};
  app.require_subcommand(1);

  Common gen_c, trc_c, evc_c, tra_c, eva_c, sc_c, no_c, zs_c;

  auto* gen = app.add_subcommand("generate-data", "write a captioner dataset and agent demonstrations");
  gen_c.attach(gen);
  int gen_paired = 0, gen_seed_index = 0;
  std::optional<int> gen_quota;
  bool gen_demos = false;
  gen->add_option("--paired", gen_paired, "labelled examples (default: first sweep size)");
  gen->add_option("--quota", gen_quota, "novel-shape quota (enables the novel-object split)");
  gen->add_option("--seed-index", gen_seed_index, "seed index");
  gen->add_flag("--demos", gen_demos, "also write agent demonstrations");

  auto* trc = app.add_subcommand("train-captioner", "train and evaluate one captioner");
  trc_c.attach(trc);
  std::string trc_variant = "generative";
  int trc_paired = 0, trc_seed_index = 0;
  std::optional<int> trc_quota;
  trc->add_option("--variant", trc_variant, "generative, contrastive or supervised");
  trc->add_option("--paired", trc_paired, "labelled examples (default: first sweep size)");
  trc->add_option("--quota", trc_quota, "novel-shape quota");
  trc->add_option("--seed-index", trc_seed_index, "seed index");

  auto* evc = app.add_subcommand("eval-captioner", "evaluate a captioner checkpoint on a saved dataset");
  evc_c.attach(evc);
  std::string evc_ckpt, evc_data;
  evc->add_option("--checkpoint", evc_ckpt, "captioner checkpoint")->required()->check(CLI::ExistingFile);
  evc->add_option("--data", evc_data, "dataset directory")->required()->check(CLI::ExistingDirectory);

  auto* tra = app.add_subcommand("train-agent", "train and evaluate one agent condition");
  tra_c.attach(tra);
  std::string tra_cond = "baseline";
  int tra_seed_index = 0;
  tra->add_option("--condition", tra_cond, "baseline, caption, caption_match, novel_demos, caption_match_low");
  tra->add_option("--seed-index", tra_seed_index, "seed index");

  auto* eva = app.add_subcommand("eval-agent", "evaluate an agent checkpoint");
  eva_c.attach(eva);
  std::string eva_ckpt;
  eva->add_option("--checkpoint", eva_ckpt, "agent checkpoint")->required()->check(CLI::ExistingFile);

  auto* sc = app.add_subcommand("scaling", "labelled-data scaling sweep");
  sc_c.attach(sc);
  auto* no = app.add_subcommand("novel-object", "novel-object quota sweep");
  no_c.attach(no);
  auto* zs = app.add_subcommand("zero-shot", "zero-shot agent experiment");
  zs_c.attach(zs);

  auto* pl = app.add_subcommand("plot", "plot a curve table");
  std::string pl_csv, pl_dir = ".", pl_stem = "plot", pl_x = "labelled examples";
  bool pl_bars = false, pl_linear = false;
  pl->add_option("csv", pl_csv, "curve table (CSV)")->required()->check(CLI::ExistingFile);
  pl->add_option("--out", pl_dir, "output directory");
  pl->add_option("--stem", pl_stem, "file name prefix");
  pl->add_option("--x-label", pl_x, "x axis label");
  pl->add_flag("--bars", pl_bars, "bar chart");
  pl->add_flag("--linear-x", pl_linear, "linear x axis");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto s = gen_c.spec();
      s.validate();
      const int n = gen_paired > 0 ? gen_paired : s.labeled_sizes.front();
      const auto data = captioner_data(s, semisup::Variant::generative, n, gen_quota, gen_seed_index);
      const auto dir = experiment_dir(s) / "data" / ("n" + std::to_string(n) + "_s" + std::to_string(gen_seed_index));
      world::save_dataset(world::build_datasets(data), dir);
      std::cout << "dataset: " << dir.string() << '\n';
      if (gen_demos) {
        const auto path = dir / "demonstrations.jsonl";
        agent::save_demonstrations(agent_demos(s, false, gen_seed_index), path);
        std::cout << "demonstrations: " << path.string() << '\n';
      }
      return 0;
    }
    if (*trc) {
      const auto s = trc_c.spec();
      s.validate();
      const auto v = semisup::parse_variant(trc_variant);
      const int n = trc_paired > 0 ? trc_paired : s.labeled_sizes.front();
      Registry reg = open_registry(s);
      const std::string point = "n" + std::to_string(n) + (trc_quota ? "_q" + std::to_string(*trc_quota) : "");
      return report(run_captioner(reg, s, point_key("captioner", trc_variant, point, trc_seed_index),
                                  captioner_data(s, v, n, trc_quota, trc_seed_index), v, trc_seed_index, &std::cerr));
    }
    if (*evc) {
      const auto s = evc_c.spec();
      const auto ds = world::load_dataset(evc_data);
      const auto vocab = text::default_vocabulary();
      nets::ModelBundle<float> b(s.captioner_net(vocab.size()), 0);
      nets::load_checkpoint(b, evc_ckpt);
      const auto m = metrics::evaluate_captioner(b.omega, ds.validation, ds.config.world, vocab,
                                                 b.config.max_caption_length, ds.novel_shape);
      std::cout << to_json(m).dump(2) << '\n';
      return 0;
    }
    if (*tra) {
      const auto s = tra_c.spec();
      s.validate();
      Registry reg = open_registry(s);
      return report(run_agent_condition(reg, s, find_condition(s.agent, tra_cond), tra_seed_index, &std::cerr));
    }
    if (*eva) {
      const auto s = eva_c.spec();
      const auto vocab = text::default_vocabulary();
      agent::AgentPolicy<float> policy(agent_net(s, vocab.size()), 0);
      nets::load_parameters<float>(policy.groups(), eva_ckpt);
      std::cout << nlohmann::json(evaluate_agent(s, policy, vocab)).dump(2) << '\n';
      return 0;
    }
    if (*sc) {
      const auto s = sc_c.spec();
      Registry reg = open_registry(s);
      return report(run_scaling(s, reg, &std::cerr));
    }
    if (*no) {
      const auto s = no_c.spec();
      Registry reg = open_registry(s);
      return report(run_novel_object(s, reg, &std::cerr));
    }
    if (*zs) {
      const auto s = zs_c.spec();
      Registry reg = open_registry(s);
      return report(run_zero_shot(s, reg, &std::cerr));
    }
    if (*pl) {
      PlotStyle style;
      style.kind = pl_bars ? PlotKind::bars : PlotKind::lines;
      style.log_x = !pl_linear;
      style.x_label = pl_x;
      for (const auto& f : plot(read_csv(pl_csv), style, pl_dir, pl_stem)) std::cout << f.string() << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
