#pragma once

#include <memory>

#include "ias/agent/expert.hpp"
#include "ias/agent/policy.hpp"

namespace ias::agent {

// Acts for a batch of episodes run in lockstep. `slots` names the episodes
// (indices into the batch passed to reset) that still need an action.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void reset(int episodes) { (void)episodes; }
  virtual std::vector<ExpertStep> act(const std::vector<const Env*>& envs, const std::vector<int>& slots) = 0;
};

class ExpertController final : public Controller {
 public:
  std::vector<ExpertStep> act(const std::vector<const Env*>& envs, const std::vector<int>&) override {
    std::vector<ExpertStep> out;
    for (const auto* e : envs) out.push_back(expert_action(*e));
    return out;
  }
};

// Learned policy: sampled movement, greedy task-mode language. An empty
// greedy caption is silence.
template <class T>
class AgentController final : public Controller {
 public:
  AgentController(const AgentPolicy<T>& policy, const text::Vocabulary& vocab, std::uint64_t seed,
                  LanguageMode mode = LanguageMode::task)
      : policy_(&policy), vocab_(&vocab), rng_(seed), mode_(mode) {}

  void reset(int episodes) override { h_ = Matrix<T>::Zero(episodes, policy_->config().width); }

  std::vector<ExpertStep> act(const std::vector<const Env*>& envs, const std::vector<int>& slots) override {
    const int n = static_cast<int>(envs.size());
    FrameBatch frames;
    for (const auto* e : envs) {
      frames.views.push_back(e->observe());
      frames.instructions.push_back(e->instruction());
    }
    frames.alive = {n};
    Matrix<T> h(n, h_.cols());
    for (int i = 0; i < n; ++i) h.row(i) = h_.row(slots[static_cast<std::size_t>(i)]);
    Tape<T> t(false);
    const Encoded<T> enc = policy_->encode(t, frames, *vocab_);
    const Var<T> state = policy_->gru_step(t, enc.input, t.constant(std::move(h)));
    for (int i = 0; i < n; ++i) h_.row(slots[static_cast<std::size_t>(i)]) = state.value().row(i);
    const Matrix<T> logits = policy_->move_logits(t, enc, state).value();
    const Matrix<T> mem = policy_->language_memory(t, enc, state, {mode_}).value();
    std::vector<int> group(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) group[static_cast<std::size_t>(i)] = i;
    const auto utter = policy_->language().sample(&mem, group, nets::SampleMode::greedy, rng_);
    std::vector<ExpertStep> out;
    std::vector<double> w(kNumActions);
    for (int i = 0; i < n; ++i) {
      const double m = static_cast<double>(logits.row(i).maxCoeff());
      for (int a = 0; a < kNumActions; ++a) w[static_cast<std::size_t>(a)] = std::exp(static_cast<double>(logits(i, a)) - m);
      const auto a = static_cast<Action>(rng_.categorical(std::span<const double>(w)));
      out.push_back({a, text::decode(utter[static_cast<std::size_t>(i)], *vocab_)});
    }
    return out;
  }

 private:
  const AgentPolicy<T>* policy_;
  const text::Vocabulary* vocab_;
  Rng rng_;
  LanguageMode mode_;
  Matrix<T> h_;
};

struct TaskResult {
  double mean_reward = 0.0;
  double expert_reward = 0.0;
  double normalized = 0.0;
  double mean_length = 0.0;
  int episodes = 0;
};

// Episodes for one task: instruction about `shape`, seeded from `seed`.
inline std::vector<EpisodeSpec> task_episodes(const EnvConfig& cfg, Task task, world::Shape shape, int episodes,
                                              std::uint64_t seed) {
  if (std::find(cfg.shapes.begin(), cfg.shapes.end(), shape) == cfg.shapes.end())
    throw ConfigError("evaluate_task: shape not in the environment");
  std::vector<EpisodeSpec> out;
  for (int i = 0; i < episodes; ++i)
    out.push_back(make_episode(derive_seed(seed, static_cast<std::uint64_t>(i)), cfg, task, shape));
  return out;
}

// Runs every episode to termination; returns per-episode rewards and lengths.
inline std::pair<std::vector<double>, std::vector<int>> run_episodes(Controller& c, const EnvConfig& cfg,
                                                                     const std::vector<EpisodeSpec>& specs,
                                                                     int batch = 250) {
  std::vector<double> rewards(specs.size(), 0.0);
  std::vector<int> lengths(specs.size(), 0);
  for (std::size_t start = 0; start < specs.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(specs.size(), start + static_cast<std::size_t>(batch));
    std::vector<Env> envs;
    for (std::size_t i = start; i < end; ++i) envs.emplace_back(cfg, specs[i]);
    c.reset(static_cast<int>(envs.size()));
    for (;;) {
      std::vector<const Env*> live;
      std::vector<int> slots;
      for (std::size_t i = 0; i < envs.size(); ++i)
        if (!envs[i].done()) {
          live.push_back(&envs[i]);
          slots.push_back(static_cast<int>(i));
        }
      if (live.empty()) break;
      const auto acts = c.act(live, slots);
      require(acts.size() == live.size(), "run_episodes: controller returned the wrong number of actions");
      for (std::size_t k = 0; k < live.size(); ++k)
        envs[static_cast<std::size_t>(slots[k])].step(acts[k].action, acts[k].utterance);
    }
    for (std::size_t i = 0; i < envs.size(); ++i) {
      rewards[start + i] = envs[i].reward();
      lengths[start + i] = envs[i].step_count();
    }
  }
  return {rewards, lengths};
}

// Mean reward of `c` on the task, normalised by the scripted expert's mean on
// the same episodes.
inline TaskResult evaluate_task(Controller& c, const EnvConfig& cfg, Task task, world::Shape shape,
                                int episodes = 1000, std::uint64_t seed = 0) {
  require(episodes > 0, "evaluate_task: need at least one episode");
  const auto specs = task_episodes(cfg, task, shape, episodes, seed);
  ExpertController expert;
  const auto [er, el] = run_episodes(expert, cfg, specs);
  const auto [rw, len] = run_episodes(c, cfg, specs);
  TaskResult r;
  r.episodes = episodes;
  for (int i = 0; i < episodes; ++i) {
    r.mean_reward += rw[static_cast<std::size_t>(i)];
    r.expert_reward += er[static_cast<std::size_t>(i)];
    r.mean_length += static_cast<double>(len[static_cast<std::size_t>(i)]);
  }
  r.mean_reward /= episodes;
  r.expert_reward /= episodes;
  r.mean_length /= episodes;
  require(r.expert_reward > 0.0, "evaluate_task: expert earns no reward");
  r.normalized = r.mean_reward / r.expert_reward;
  return r;
}

}  // namespace ias::agent
