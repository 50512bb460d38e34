#pragma once

#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "ias/ad/adam.hpp"
#include "ias/agent/expert.hpp"
#include "ias/agent/policy.hpp"
#include "ias/metrics/report.hpp"

namespace ias::agent {

struct AgentTrainConfig {
  int steps = 3000;
  int batch_episodes = 16;
  int unroll = 16;  // frames per episode used for training
  double learning_rate = 1e-3;
  double final_lr_fraction = 0.1;  // linear decay to this fraction of the rate
  double clip_norm = 1.0;
  bool caption_loss = true;
  bool match_loss = true;
  std::uint64_t seed = 0;
  int log_every = 0;  // 0 disables the step log

  void validate() const {
    if (steps < 0 || unroll < 1 || batch_episodes < 1) throw ConfigError("agent train: bad steps, unroll or batch");
    if (match_loss && batch_episodes < 2) throw ConfigError("agent train: caption matching needs a batch of at least 2");
    if (!(learning_rate > 0.0) || clip_norm < 0.0 || final_lr_fraction < 0.0 || final_lr_fraction > 1.0) throw ConfigError("agent train: bad optimiser settings");
  }
};

inline nlohmann::json to_json(const AgentTrainConfig& c) {
  return {{"steps", c.steps},
          {"batch_episodes", c.batch_episodes},
          {"unroll", c.unroll},
          {"learning_rate", c.learning_rate},
          {"final_lr_fraction", c.final_lr_fraction},
          {"clip_norm", c.clip_norm},
          {"caption_loss", c.caption_loss},
          {"match_loss", c.match_loss},
          {"seed", c.seed},
          {"log_every", c.log_every}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline AgentTrainConfig agent_train_config_from_json(const nlohmann::json& j) {
  AgentTrainConfig c;
  if (!j.is_object()) throw ConfigError("agent train config: expected an object");
  const nlohmann::json known = to_json(c);
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ConfigError("agent train config: unknown key " + k);
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("steps", c.steps);
    get("batch_episodes", c.batch_episodes);
    get("unroll", c.unroll);
    get("learning_rate", c.learning_rate);
    get("final_lr_fraction", c.final_lr_fraction);
    get("clip_norm", c.clip_norm);
    get("caption_loss", c.caption_loss);
    get("match_loss", c.match_loss);
    get("seed", c.seed);
    get("log_every", c.log_every);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("agent train config: ") + e.what());
  }
  c.validate();
  return c;
}

// Negative partner of batch element b among B.
inline int roll(int b, int batch) {
  if (batch < 2) throw ConfigError("roll: caption matching needs a batch of at least 2");
  require(b >= 0 && b < batch, "roll: index out of range");
  return (b + 1) % batch;
}

// Frames of one demonstration as the agent observes them.
struct EpisodeFrames {
  std::vector<world::Image> views;
  std::vector<world::SceneSpec> scenes;  // visible objects per frame
  std::vector<std::string> instructions;
  std::vector<ExpertStep> steps;
  std::size_t size() const { return views.size(); }
};

inline EpisodeFrames unroll_episode(const EnvConfig& cfg, const Trajectory& tr, int max_frames) {
  Env env(cfg, tr.episode);
  EpisodeFrames f;
  for (const auto& s : tr.steps) {
    if (static_cast<int>(f.size()) >= max_frames || env.done()) break;
    f.views.push_back(env.observe());
    f.scenes.push_back(env.view_scene());
    f.instructions.push_back(env.instruction());
    f.steps.push_back(s);
    env.step(s.action, s.utterance);
  }
  return f;
}

// Greedy captions of the frozen captioner, computed once per demonstration
// frame.
template <class T>
class CaptionCache {
 public:
  CaptionCache(const nets::CaptionModel<T>& captioner, const text::Vocabulary& vocab)
      : captioner_(&captioner), vocab_(&vocab) {}

  // Fills captions for (demo, frame) keys not yet cached.
  void fill(const std::vector<std::pair<std::uint64_t, const world::SceneSpec*>>& frames) {
    std::vector<world::Image> images;
    std::vector<std::uint64_t> keys;
    for (const auto& [key, scene] : frames)
      if (!cache_.count(key) && std::find(keys.begin(), keys.end(), key) == keys.end()) {
        keys.push_back(key);
        images.push_back(world::render(*scene));
      }
    if (images.empty()) return;
    auto caps = metrics::greedy_captions(*captioner_, images);
    for (std::size_t i = 0; i < keys.size(); ++i) cache_.emplace(keys[i], std::move(caps[i]));
  }

  const text::Caption& at(std::uint64_t key) const { return cache_.at(key); }
  std::size_t size() const { return cache_.size(); }
  const text::Vocabulary& vocab() const { return *vocab_; }

 private:
  const nets::CaptionModel<T>* captioner_;
  const text::Vocabulary* vocab_;
  std::unordered_map<std::uint64_t, text::Caption> cache_;
};

inline std::uint64_t frame_key(std::size_t demo, int frame) {
  return static_cast<std::uint64_t>(demo) * 1024u + static_cast<std::uint64_t>(frame);
}

// A time-major training batch (see FrameBatch) with per-frame targets.
struct TrainBatch {
  FrameBatch frames;
  std::vector<int> episode_of;  // batch slot of each frame (slots sorted by length)
  std::vector<Action> actions;
  std::vector<text::Caption> utterances;      // task-mode targets; silence is the empty caption
  std::vector<text::Caption> captions;        // caption-mode targets (empty without a captioner)
  std::vector<std::string> caption_text;
};

template <class T>
TrainBatch make_batch(const EnvConfig& env, const std::vector<Trajectory>& demos, const std::vector<std::size_t>& picks,
                      int max_frames, const text::Vocabulary& vocab, int max_len, CaptionCache<T>* cache) {
  std::vector<EpisodeFrames> eps;
  for (auto i : picks) eps.push_back(unroll_episode(env, demos[i], max_frames));
  std::vector<std::size_t> order(picks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return eps[a].size() > eps[b].size(); });

  if (cache) {
    std::vector<std::pair<std::uint64_t, const world::SceneSpec*>> need;
    for (std::size_t i = 0; i < eps.size(); ++i)
      for (std::size_t s = 0; s < eps[i].size(); ++s) need.emplace_back(frame_key(picks[i], static_cast<int>(s)), &eps[i].scenes[s]);
    cache->fill(need);
  }
  TrainBatch b;
  const std::size_t longest = eps[order.front()].size();
  for (std::size_t s = 0; s < longest; ++s) {
    int alive = 0;
    for (std::size_t slot = 0; slot < order.size(); ++slot) {
      const auto& e = eps[order[slot]];
      if (s >= e.size()) break;
      ++alive;
      b.frames.views.push_back(e.views[s]);
      b.frames.instructions.push_back(e.instructions[s]);
      b.episode_of.push_back(static_cast<int>(slot));
      b.actions.push_back(e.steps[s].action);
      b.utterances.push_back(e.steps[s].utterance.empty() ? text::empty_caption()
                                                          : text::encode(e.steps[s].utterance, vocab, max_len));
      if (cache) {
        b.captions.push_back(cache->at(frame_key(picks[order[slot]], static_cast<int>(s))));
        b.caption_text.push_back(text::decode(b.captions.back(), vocab));
      }
    }
    b.frames.alive.push_back(alive);
  }
  return b;
}

// Mean negative log-probability of the taken movement actions.
template <class T>
Var<T> movement_nll(Var<T> logits, const std::vector<Action>& actions) {
  std::vector<int> idx;
  for (auto a : actions) idx.push_back(static_cast<int>(a));
  return ad::scale(ad::mean(ad::gather(ad::log_softmax(logits), std::move(idx))), T(-1));
}

// Caption-matching cross-entropy from matched and rolled-caption logits.
template <class T>
Var<T> match_nll(Var<T> positive_logits, Var<T> negative_logits) {
  return ad::scale(ad::add(ad::mean(ad::log_sigmoid(positive_logits)),
                           ad::mean(ad::log_sigmoid(ad::scale(negative_logits, T(-1))))),
                   T(-1));
}

template <class T>
struct ForwardLosses {
  Var<T> movement;
  Var<T> language;
  std::optional<Var<T>> caption;
};

// Behavioural-cloning terms and, when caption targets are present, the
// caption-mode term, from one pass over the batch.
template <class T>
ForwardLosses<T> forward_losses(Tape<T>& t, const AgentPolicy<T>& policy, const TrainBatch& b,
                                const text::Vocabulary& vocab, bool with_captions) {
  const Encoded<T> e = policy.encode(t, b.frames, vocab);
  const Var<T> states = policy.unroll(t, e, b.frames);
  ForwardLosses<T> out;
  out.movement = movement_nll(policy.move_logits(t, e, states), b.actions);
  const int n = static_cast<int>(b.frames.size());
  std::vector<LanguageMode> modes{LanguageMode::task};
  std::vector<text::Caption> targets = b.utterances;
  if (with_captions) {
    require(b.captions.size() == b.frames.size(), "agent: caption targets missing");
    modes.push_back(LanguageMode::caption);
    targets.insert(targets.end(), b.captions.begin(), b.captions.end());
  }
  const Var<T> mem = policy.language_memory(t, e, states, modes);
  std::vector<int> group(targets.size());
  std::iota(group.begin(), group.end(), 0);
  const Var<T> lp = policy.language().log_prob(t, targets, &mem, &group);
  out.language = ad::scale(ad::mean(ad::slice_rows(lp, 0, n)), T(-1));
  if (with_captions) out.caption = ad::scale(ad::mean(ad::slice_rows(lp, n, n)), T(-1));
  return out;
}

// Caption matching over frames whose time step has at least two episodes;
// the negative for slot b is the caption of slot roll(b) at the same step.
template <class T>
std::optional<Var<T>> match_loss(Tape<T>& t, const AgentPolicy<T>& policy, const TrainBatch& b,
                                 const text::Vocabulary& vocab) {
  std::vector<int> frame_of;
  std::vector<std::string> caps;
  std::vector<int> neg_frame;
  std::vector<std::string> neg_caps;
  int offset = 0;
  for (int m : b.frames.alive) {
    if (m >= 2)
      for (int s = 0; s < m; ++s) {
        frame_of.push_back(offset + s);
        caps.push_back(b.caption_text[static_cast<std::size_t>(offset + s)]);
        neg_frame.push_back(offset + s);
        neg_caps.push_back(b.caption_text[static_cast<std::size_t>(offset + roll(s, m))]);
      }
    offset += m;
  }
  if (frame_of.empty()) return std::nullopt;
  const Encoded<T> e = policy.encode(t, b.frames, vocab);
  const auto k = static_cast<Eigen::Index>(frame_of.size());
  frame_of.insert(frame_of.end(), neg_frame.begin(), neg_frame.end());
  caps.insert(caps.end(), neg_caps.begin(), neg_caps.end());
  const Var<T> logits = policy.match_logits(t, e, caps, frame_of, vocab);
  return match_nll(ad::slice_rows(logits, 0, k), ad::slice_rows(logits, k, k));
}

struct AgentStepLog {
  int step = 0;
  double movement = 0.0, language = 0.0, caption = 0.0, match = 0.0;
};

struct AgentTrainResult {
  std::vector<AgentStepLog> log;
  std::uint64_t captioner_hash = 0;
  std::size_t cached_captions = 0;
};

inline const char* agent_log_header() { return "step,movement,language,caption,match"; }

// Minimises L_BC (+ L_C) with one optimiser and L_CM in a separate pass with
// its own optimiser. The captioner is only read.
template <class T>
AgentTrainResult train_agent(AgentPolicy<T>& policy, const std::vector<Trajectory>& demos, const EnvConfig& env,
                             const text::Vocabulary& vocab, const nets::CaptionModel<T>* captioner,
                             const AgentTrainConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  env.validate();
  if (demos.empty()) throw ConfigError("train_agent: no demonstrations");
  const bool aux = cfg.caption_loss || cfg.match_loss;
  if (aux && !captioner) throw ConfigError("train_agent: auxiliary losses need a captioner");
  if (aux) {
    if (captioner->config().vocab_size != policy.config().vocab_size)
      throw ConfigError("train_agent: captioner and agent vocabularies differ");
    if (captioner->config().max_caption_length > policy.config().max_utterance_length)
      throw ConfigError("train_agent: captioner captions longer than the agent's language head");
  }
  AgentTrainResult result;
  const auto frozen_hash = [&] { return captioner ? captioner->params().hash() : std::uint64_t{0}; };
  result.captioner_hash = frozen_hash();
  std::optional<CaptionCache<T>> cache;
  if (aux) cache.emplace(*captioner, vocab);

  ad::Adam<T> opt({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.clip_norm});
  ad::Adam<T> match_opt({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.clip_norm});
  const auto params = policy.parameters();
  Rng rng(derive_seed(cfg.seed, "agent-train"));
  if (log && cfg.log_every > 0) *log << agent_log_header() << '\n';
  const int max_len = policy.config().max_utterance_length;

  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> picks;
    for (int i = 0; i < cfg.batch_episodes; ++i) picks.push_back(rng.below(demos.size()));
    const double progress = cfg.steps > 1 ? static_cast<double>(step - 1) / (cfg.steps - 1) : 0.0;
    const double lr = cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * progress);
    opt.set_learning_rate(lr);
    match_opt.set_learning_rate(lr);
    const TrainBatch b = make_batch(env, demos, picks, cfg.unroll, vocab, max_len, cache ? &*cache : nullptr);
    AgentStepLog row;
    row.step = step;
    {
      Tape<T> t(true);
      const auto l = forward_losses(t, policy, b, vocab, cfg.caption_loss);
      Var<T> total = ad::add(l.movement, l.language);
      if (l.caption) total = ad::add(total, *l.caption);
      if (!std::isfinite(static_cast<double>(total.scalar())))
        throw TrainingError("train_agent: non-finite loss at step " + std::to_string(step));
      row.movement = l.movement.scalar();
      row.language = l.language.scalar();
      row.caption = l.caption ? static_cast<double>(l.caption->scalar()) : 0.0;
      t.backward(total);
      opt.step(params);
    }
    if (cfg.match_loss) {
      Tape<T> t(true);
      if (const auto m = match_loss(t, policy, b, vocab)) {
        if (!std::isfinite(static_cast<double>(m->scalar())))
          throw TrainingError("train_agent: non-finite matching loss at step " + std::to_string(step));
        row.match = m->scalar();
        t.backward(*m);
        match_opt.step(params);
      }
    }
    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step == cfg.steps)) {
      result.log.push_back(row);
      if (log)
        *log << row.step << ',' << row.movement << ',' << row.language << ',' << row.caption << ',' << row.match
             << std::endl;
    }
  }
  if (frozen_hash() != result.captioner_hash) throw TrainingError("train_agent: captioner parameters changed");
  result.cached_captions = cache ? cache->size() : 0;
  return result;
}

}  // namespace ias::agent
