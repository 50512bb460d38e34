#pragma once

#include <vector>

#include "ias/ad/adam.hpp"
#include "ias/oracle/exact.hpp"

namespace ias::oracle {

// Short maximum-likelihood fit of the decoder and prior on micro pairs
// (uniform scene, caption naming a uniform object), so that likelihood
// ratios p(x|y)/p(x) carry information. Returns the final mean joint NLL.
inline double fit_micro_generative(Bundle& b, const MicroInstance& inst, int steps, int batch, double learning_rate,
                                   std::uint64_t seed) {
  Rng rng(seed);
  ad::Adam<double> opt({learning_rate, 0.9, 0.999, 1e-8, 1.0});
  std::vector<ad::Parameter<double>*> params = b.theta.params().pointers();
  for (auto* p : b.phi.params().pointers()) params.push_back(p);
  double nll = 0.0;
  for (int step = 0; step < steps; ++step) {
    std::vector<text::Caption> ys;
    std::vector<nets::ImageTokens> xs;
    for (int i = 0; i < batch; ++i) {
      const auto& s = inst.scenes[rng.below(inst.scenes.size())];
      const auto& o = s.objects[rng.below(s.objects.size())];
      ys.push_back(text::encode(world::describe(o), inst.vocab));
      xs.push_back(nets::image_tokens(s, inst.world));
    }
    ad::Tape<double> t;
    auto ll = ad::add(b.theta.log_prob(t, ys, xs), b.phi.log_prob(t, ys));
    auto loss = ad::scale(ad::sum(ll), -1.0 / batch);
    t.backward(loss);
    opt.step(params);
    nll = loss.scalar();
  }
  return nll;
}

}  // namespace ias::oracle
