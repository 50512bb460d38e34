#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ias/agent/evaluate.hpp"
#include "ias/agent/gradcheck.hpp"
#include "ias/agent/train.hpp"

using namespace ias;
using namespace ias::agent;
using world::Color;
using world::Shape;

namespace {

EpisodeSpec spec_with(Task task, std::vector<world::Object> objects, int row, int col, int delay = 0) {
  EpisodeSpec e;
  e.task = task;
  e.target = objects.front().shape;
  e.room.grid_size = 5;
  e.room.objects = std::move(objects);
  e.avatar_row = row;
  e.avatar_col = col;
  e.delay = delay;
  return e;
}

AgentNetConfig small_net(const text::Vocabulary& v) {
  AgentNetConfig c;
  c.width = 16;
  c.heads = 2;
  c.ff_width = 32;
  c.vocab_size = v.size();
  return c;
}

nets::NetConfig small_captioner_config(const text::Vocabulary& v) {
  nets::NetConfig c;
  c.width = 16;
  c.heads = 2;
  c.ff_width = 32;
  c.conv_channels = {8, 8, 16};
  c.vocab_size = v.size();
  c.grid_size = 4;
  return c;
}

AgentTrainConfig short_training(bool aux) {
  AgentTrainConfig c;
  c.steps = 4;
  c.batch_episodes = 4;
  c.caption_loss = aux;
  c.match_loss = aux;
  c.seed = 5;
  c.log_every = 1;
  return c;
}

// Walks to the nearest object (ties by object order) and lifts it.
class NearestObject final : public Controller {
 public:
  std::vector<ExpertStep> act(const std::vector<const Env*>& envs, const std::vector<int>&) override {
    std::vector<ExpertStep> out;
    for (const auto* e : envs) {
      const auto& o = e->spec().room.objects[static_cast<std::size_t>(nearest(e->spec()))];
      const Action a = toward(*e, o.row, o.col);
      out.push_back({a == Action::noop ? Action::lift : a, {}});
    }
    return out;
  }
  static int nearest(const EpisodeSpec& s) {
    int best = 0, dist = 1 << 20;
    for (std::size_t i = 0; i < s.room.objects.size(); ++i) {
      const auto& o = s.room.objects[i];
      const int d = std::abs(o.row - s.avatar_row) + std::abs(o.col - s.avatar_col);
      if (d < dist) {
        dist = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }
};

}  // namespace

TEST(Environment, EpisodesHaveOneTargetAndAFreeStart) {
  const EnvConfig cfg;
  for (std::uint64_t i = 0; i < 500; ++i) {
    const auto e = make_episode(i, cfg, Task::lift, Shape::drum);
    int targets = 0;
    for (const auto& o : e.room.objects) {
      targets += o.shape == Shape::drum;
      EXPECT_FALSE(o.row == e.avatar_row && o.col == e.avatar_col);
    }
    EXPECT_EQ(targets, 1);
    EXPECT_GE(e.room.objects.size(), 2u);
    EXPECT_LE(e.room.objects.size(), 4u);
    EXPECT_LE(e.delay, cfg.max_delay);
  }
}

TEST(Environment, RewardRules) {
  const EnvConfig cfg;
  const std::vector<world::Object> objs{{Shape::duck, Color::green, 2, 2}, {Shape::box, Color::red, 2, 3}};
  Env wrong_lift(cfg, spec_with(Task::lift, objs, 2, 3));
  const auto r = wrong_lift.step(Action::lift);
  EXPECT_TRUE(r.done);
  EXPECT_EQ(r.reward, 0.0);

  Env wrong_color(cfg, spec_with(Task::ask_color, objs, 0, 0));
  EXPECT_EQ(wrong_color.step(Action::noop, "red").reward, 0.0);
  EXPECT_TRUE(wrong_color.done());

  Env right_color(cfg, spec_with(Task::ask_color, objs, 0, 0));
  EXPECT_EQ(right_color.step(Action::noop, "green").reward, 1.0);

  Env ignored(cfg, spec_with(Task::lift, objs, 0, 0));
  ignored.step(Action::up, "green");
  EXPECT_FALSE(ignored.done());
  EXPECT_EQ(ignored.avatar_row(), 0);

  Env idle(cfg, spec_with(Task::lift, objs, 0, 0));
  int steps = 0;
  while (!idle.done()) {
    idle.step(Action::noop);
    ++steps;
  }
  EXPECT_EQ(steps, cfg.timeout);
  EXPECT_EQ(idle.reward(), 0.0);
}

TEST(Environment, ObservationBlacksOutWalls) {
  const EnvConfig cfg;
  Env env(cfg, spec_with(Task::lift, {{Shape::duck, Color::green, 4, 4}}, 0, 0));
  const auto img = env.observe();
  EXPECT_EQ(img.height, cfg.view_size * world::kCellPixels);
  EXPECT_EQ(img.at(0, 0, 0), 0.0f);
  const int inside = (cfg.view_size / 2) * world::kCellPixels + 1;
  EXPECT_GT(img.at(inside, inside, 0), 0.0f);
}

TEST(Expert, AdjacentTargetTakesAtMostTwoSteps) {
  const EnvConfig cfg;
  const auto tr = scripted_expert(cfg, spec_with(Task::lift, {{Shape::box, Color::red, 2, 3}}, 2, 2));
  ASSERT_TRUE(tr);
  EXPECT_LE(tr->steps.size(), 2u);
  EXPECT_EQ(tr->steps.back().action, Action::lift);
  EXPECT_EQ(tr->reward, 1.0);
}

TEST(Expert, AnswersColorQuestions) {
  const EnvConfig cfg;
  const auto tr = scripted_expert(
      cfg, spec_with(Task::ask_color, {{Shape::duck, Color::green, 1, 1}, {Shape::box, Color::red, 3, 3}}, 2, 2, 3));
  ASSERT_TRUE(tr);
  EXPECT_EQ(tr->steps.back().utterance, "green");
  EXPECT_EQ(tr->steps.size(), 4u);
  EXPECT_EQ(tr->reward, 1.0);
}

TEST(Expert, PerfectOnGeneratedEpisodes) {
  const EnvConfig env;
  DemoConfig dc;
  dc.episodes = 1000;
  dc.seed = 3;
  const auto demos = generate_demonstrations(env, dc);
  ASSERT_EQ(demos.size(), 1000u);
  double total = 0.0;
  int drum_present = 0;
  for (const auto& d : demos) {
    total += d.reward;
    EXPECT_NE(d.episode.target, Shape::drum);
    for (const auto& o : d.episode.room.objects) drum_present += o.shape == Shape::drum;
  }
  EXPECT_EQ(total / 1000.0, 1.0);
  EXPECT_GT(drum_present, 150);

  ExpertController expert;
  EXPECT_EQ(evaluate_task(expert, env, Task::lift, Shape::drum, 200, 1).normalized, 1.0);
  EXPECT_EQ(evaluate_task(expert, env, Task::ask_color, Shape::bear, 200, 1).normalized, 1.0);
}

TEST(Expert, DemonstrationsRoundTripAndReplay) {
  const EnvConfig env;
  DemoConfig dc;
  dc.episodes = 50;
  dc.seed = 8;
  const auto demos = generate_demonstrations(env, dc);
  const auto path = std::filesystem::temp_directory_path() / "ias_demos_test.jsonl";
  save_demonstrations(demos, path);
  const auto back = load_demonstrations(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.size(), demos.size());
  for (std::size_t i = 0; i < demos.size(); ++i) {
    EXPECT_EQ(back[i], demos[i]);
    EXPECT_EQ(replay(env, back[i]), 1.0);
  }
  EXPECT_THROW(parse_action("jump"), DataError);
}

TEST(Evaluator, NearestObjectPolicyMatchesEpisodeDistribution) {
  const EnvConfig env;
  const int n = 400;
  const auto specs = task_episodes(env, Task::lift, Shape::duck, n, 21);
  double expected = 0.0;
  for (const auto& s : specs)
    expected += s.room.objects[static_cast<std::size_t>(NearestObject::nearest(s))].shape == Shape::duck;
  NearestObject policy;
  const auto r = evaluate_task(policy, env, Task::lift, Shape::duck, n, 21);
  EXPECT_DOUBLE_EQ(r.mean_reward, expected / n);
  EXPECT_THROW(task_episodes(EnvConfig{.shapes = {Shape::box, Shape::ball}}, Task::lift, Shape::drum, 1, 0),
               ConfigError);
}

TEST(AgentLosses, ClosedForms) {
  ad::Tape<double> t(false);
  const std::vector<Action> acts{Action::up, Action::lift, Action::noop};
  EXPECT_NEAR(movement_nll(t.constant(ad::Matrix<double>::Zero(3, kNumActions)), acts).scalar(), std::log(6.0), 1e-12);
  const auto zero = t.constant(ad::Matrix<double>::Zero(5, 1));
  EXPECT_NEAR(match_nll(zero, zero).scalar(), 2.0 * std::log(2.0), 1e-12);
  ad::Matrix<double> big = ad::Matrix<double>::Constant(5, 1, 40.0);
  EXPECT_LT(match_nll(t.constant(big), t.constant(-big)).scalar(), 1e-12);
}

TEST(AgentLosses, RollPairsDistinctElements) {
  EXPECT_EQ(roll(0, 4), 1);
  EXPECT_EQ(roll(3, 4), 0);
  for (int b = 2; b <= 64; ++b)
    for (int i = 0; i < b; ++i) {
      EXPECT_EQ(roll(i, b), (i + 1) % b);
      EXPECT_NE(roll(i, b), i);
    }
  EXPECT_THROW(roll(0, 1), ConfigError);
  AgentTrainConfig c;
  c.batch_episodes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c.match_loss = false;
  EXPECT_NO_THROW(c.validate());
}

TEST(AgentLosses, FiniteDifferenceGradients) {
  const auto checks = agent_gradient_checks(3, 3);
  ASSERT_EQ(checks.size(), 4u);
  for (const auto& c : checks) {
    EXPECT_EQ(c.result.failures, 0) << c.loss << " max rel error " << c.result.max_rel_error;
    EXPECT_GT(c.result.checked, 0);
  }
}

TEST(AgentLosses, BatchIsTimeMajorAndTermsAdd) {
  const EnvConfig env;
  const auto vocab = text::default_vocabulary();
  DemoConfig dc;
  dc.episodes = 6;
  const auto demos = generate_demonstrations(env, dc);
  const auto b = make_batch<float>(env, demos, {0, 1, 2, 3, 4, 5}, 16, vocab, 12, nullptr);
  int total = 0;
  for (std::size_t i = 0; i < b.frames.alive.size(); ++i) {
    total += b.frames.alive[i];
    if (i > 0) EXPECT_LE(b.frames.alive[i], b.frames.alive[i - 1]);
  }
  EXPECT_EQ(total, static_cast<int>(b.frames.size()));
  EXPECT_EQ(b.frames.alive.front(), 6);

  AgentPolicy<float> policy(small_net(vocab), 2);
  ad::Tape<float> t(false);
  const auto l = forward_losses(t, policy, b, vocab, false);
  EXPECT_GT(l.movement.scalar(), 0.0f);
  EXPECT_GT(l.language.scalar(), 0.0f);
  EXPECT_FALSE(l.caption);
}

TEST(AgentTraining, AblationMatchesPureBehaviouralCloning) {
  const EnvConfig env;
  const auto vocab = text::default_vocabulary();
  DemoConfig dc;
  dc.episodes = 40;
  const auto demos = generate_demonstrations(env, dc);
  const nets::CaptionModel<float> captioner(small_captioner_config(vocab), true, "cap", 4, 1);
  AgentPolicy<float> a(small_net(vocab), 9), b(small_net(vocab), 9);
  train_agent(a, demos, env, vocab, &captioner, short_training(false));
  train_agent(b, demos, env, vocab, static_cast<const nets::CaptionModel<float>*>(nullptr), short_training(false));
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_THROW(train_agent(b, demos, env, vocab, static_cast<const nets::CaptionModel<float>*>(nullptr),
                           short_training(true)),
               ConfigError);
}

TEST(AgentTraining, AuxiliaryLossesKeepCaptionerFrozenAndAreDeterministic) {
  const EnvConfig env;
  const auto vocab = text::default_vocabulary();
  DemoConfig dc;
  dc.episodes = 40;
  const auto demos = generate_demonstrations(env, dc);
  const nets::CaptionModel<float> captioner(small_captioner_config(vocab), true, "cap", 4, 1);
  const auto before = captioner.params().hash();
  AgentPolicy<float> a(small_net(vocab), 9), b(small_net(vocab), 9);
  std::ostringstream log;
  const auto ra = train_agent(a, demos, env, vocab, &captioner, short_training(true), &log);
  train_agent(b, demos, env, vocab, &captioner, short_training(true));
  EXPECT_EQ(captioner.params().hash(), before);
  EXPECT_EQ(ra.captioner_hash, before);
  EXPECT_GT(ra.cached_captions, 0u);
  EXPECT_EQ(a.hash(), b.hash());
  ASSERT_EQ(ra.log.size(), 4u);
  EXPECT_GT(ra.log.back().caption, 0.0);
  EXPECT_GT(ra.log.back().match, 0.0);
  EXPECT_EQ(log.str().rfind(agent_log_header(), 0), 0u);

  AgentController<float> ca(a, vocab, 3), cb(b, vocab, 3);
  const auto x = evaluate_task(ca, env, Task::ask_color, Shape::duck, 40, 2);
  const auto y = evaluate_task(cb, env, Task::ask_color, Shape::duck, 40, 2);
  EXPECT_EQ(x.mean_reward, y.mean_reward);
  EXPECT_EQ(x.mean_length, y.mean_length);
}

TEST(AgentTraining, LearnsToFollowLiftInstructions) {
  EnvConfig env;
  env.shapes = {Shape::box, Shape::ball, Shape::duck};
  env.max_objects = 3;
  const auto vocab = text::default_vocabulary();
  DemoConfig dc;
  dc.episodes = 2000;
  dc.ask_fraction = 0.0;
  dc.novel_shape.reset();
  const auto demos = generate_demonstrations(env, dc);
  AgentNetConfig net = small_net(vocab);
  net.width = 32;
  net.ff_width = 64;
  AgentPolicy<float> policy(net, 1);
  AgentTrainConfig tc;
  tc.steps = 1500;
  tc.batch_episodes = 16;
  tc.caption_loss = tc.match_loss = false;
  tc.learning_rate = 3e-3;
  train_agent(policy, demos, env, vocab, static_cast<const nets::CaptionModel<float>*>(nullptr), tc);
  AgentController<float> c(policy, vocab, 4);
  const auto r = evaluate_task(c, env, Task::lift, Shape::ball, 200, 9);
  // A policy ignoring the instruction lifts the right object far less often.
  EXPECT_GT(r.normalized, 0.35);
}
