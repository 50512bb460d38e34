#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ias/ad/gradcheck.hpp"
#include "ias/nets/bundle.hpp"

namespace ias::nets {

struct NetGradCheck {
  std::string network;
  ad::GradCheckResult result;
};

inline Matrix<double> random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
  return m;
}

inline text::Caption random_caption(Rng& rng, const NetConfig& cfg) {
  text::Caption c{{text::kBos}};
  const int len = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_caption_length - 1)));
  for (int i = 0; i < len; ++i)
    c.ids.push_back(text::kReserved + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.vocab_size - text::kReserved))));
  c.ids.push_back(text::kEos);
  return c;
}

// Central-difference checks of every network in a double-precision bundle:
// image encoder (with positional memory), caption policy, prior, image
// decoder and both contrastive heads. Each scalar is a fixed random weighting
// of the network output.
inline std::vector<NetGradCheck> network_gradient_checks(const NetConfig& cfg, std::uint64_t seed, int probes,
                                                         int n_cells = -1) {
  ModelBundle<double> b(cfg, seed, n_cells);
  Rng rng(derive_seed(seed, "inputs"));
  const int hw = cfg.image_size() * cfg.image_size();
  const Matrix<double> pixels = random_matrix(rng, 2 * hw, 3, 0.5).array().abs().min(1.0).matrix();
  std::vector<text::Caption> captions;
  for (int i = 0; i < 3; ++i) captions.push_back(random_caption(rng, cfg));
  const std::vector<int> image_of{0, 1, 1};
  std::vector<ImageTokens> tokens(3, ImageTokens(static_cast<std::size_t>(b.theta.n_cells())));
  for (auto& tk : tokens)
    for (auto& v : tk) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.image_vocab())));

  auto weighted = [&](Matrix<double>& w, ad::Var<double> out) {
    if (w.size() == 0) w = random_matrix(rng, out.rows(), out.cols());
    return ad::sum(ad::mul_const(out, w));
  };
  std::vector<NetGradCheck> out;
  auto run = [&](const std::string& name, std::vector<ad::Parameter<double>*> params,
                 const std::function<ad::Var<double>(ad::Tape<double>&)>& f) {
    Matrix<double> w;
    auto loss = [&](bool with_grad) {
      ad::Tape<double> t(with_grad);
      auto s = weighted(w, f(t));
      if (with_grad) t.backward(s);
      return s.scalar();
    };
    loss(false);
    Rng probe(derive_seed(seed, name));
    out.push_back({name, ad::check_parameter_gradients(params, loss, probe, probes)});
  };

  run("image_encoder", b.omega.params().pointers(), [&](ad::Tape<double>& t) {
    return b.omega.memory(t, t.constant(pixels));
  });
  run("caption_policy", b.omega.params().pointers(), [&](ad::Tape<double>& t) {
    auto mem = b.omega.memory(t, t.constant(pixels));
    return b.omega.log_prob(t, captions, &mem, &image_of);
  });
  run("language_prior", b.phi.params().pointers(), [&](ad::Tape<double>& t) { return b.phi.log_prob(t, captions); });
  run("image_decoder", b.theta.params().pointers(), [&](ad::Tape<double>& t) {
    return b.theta.log_prob(t, captions, tokens);
  });
  run("contrastive_image_head", b.contrastive.params().pointers(), [&](ad::Tape<double>& t) {
    return b.contrastive.embed_images(t, t.constant(pixels));
  });
  run("contrastive_caption_head", b.contrastive.params().pointers(), [&](ad::Tape<double>& t) {
    return b.contrastive.embed_captions(t, captions);
  });
  return out;
}

}  // namespace ias::nets
