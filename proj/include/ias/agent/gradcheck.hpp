#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ias/ad/gradcheck.hpp"
#include "ias/agent/train.hpp"

namespace ias::agent {

struct AgentGradCheck {
  std::string loss;
  ad::GradCheckResult result;
};

// Central-difference checks of a double-precision agent on every training
// term: movement, task language, caption-mode language and caption matching.
// Caption-mode targets are the task utterances of a rolled slot so that no
// captioner is needed.
inline std::vector<AgentGradCheck> agent_gradient_checks(std::uint64_t seed, int probes, int episodes = 4) {
  const EnvConfig env;
  const auto vocab = text::default_vocabulary();
  DemoConfig dc;
  dc.episodes = episodes;
  dc.seed = derive_seed(seed, "demos");
  const auto demos = generate_demonstrations(env, dc);
  AgentNetConfig net;
  net.width = 8;
  net.heads = 2;
  net.ff_width = 16;
  net.max_utterance_length = 8;
  net.vocab_size = vocab.size();
  AgentPolicy<double> policy(net, seed);
  std::vector<std::size_t> picks(demos.size());
  std::iota(picks.begin(), picks.end(), std::size_t{0});
  TrainBatch b = make_batch<double>(env, demos, picks, 6, vocab, net.max_utterance_length, nullptr);
  for (std::size_t i = 0; i < b.frames.size(); ++i) {
    const auto& j = b.utterances[(i + 1) % b.utterances.size()];
    b.captions.push_back(!j.empty_body() ? j : text::encode("a red ball", vocab, net.max_utterance_length));
    b.caption_text.push_back(text::decode(b.captions.back(), vocab));
  }

  std::vector<AgentGradCheck> out;
  auto run = [&](const std::string& name, const std::function<Var<double>(Tape<double>&)>& f) {
    auto loss = [&](bool with_grad) {
      Tape<double> t(with_grad);
      const Var<double> s = f(t);
      if (with_grad) t.backward(s);
      return s.scalar();
    };
    Rng probe(derive_seed(seed, name));
    out.push_back({name, ad::check_parameter_gradients(policy.parameters(), loss, probe, probes)});
  };
  run("movement", [&](Tape<double>& t) { return forward_losses(t, policy, b, vocab, false).movement; });
  run("language", [&](Tape<double>& t) { return forward_losses(t, policy, b, vocab, false).language; });
  run("caption", [&](Tape<double>& t) { return *forward_losses(t, policy, b, vocab, true).caption; });
  run("match", [&](Tape<double>& t) { return *match_loss(t, policy, b, vocab); });
  return out;
}

}  // namespace ias::agent
