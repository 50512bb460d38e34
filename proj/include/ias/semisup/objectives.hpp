#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "ias/nets/bundle.hpp"
#include "ias/semisup/config.hpp"
#include "ias/world/render.hpp"

namespace ias::semisup {

using ad::Tape;
using ad::Var;
using nets::Matrix;
using nets::ModelBundle;

struct PairedBatch {
  std::vector<world::Image> images;
  std::vector<text::Caption> captions;
  std::vector<nets::ImageTokens> tokens;

  std::size_t size() const { return captions.size(); }
};

struct UnpairedBatch {
  std::vector<world::Image> images;
  std::vector<nets::ImageTokens> tokens;

  std::size_t size() const { return images.size(); }
};

// Batch means of the three log-probability terms of the paired objective.
struct PairedTerms {
  double decoder = 0.0;
  double prior = 0.0;
  double policy = 0.0;
  double total() const { return decoder + prior + policy; }
};

template <class T>
Var<T> pixels_of(Tape<T>& t, const std::vector<world::Image>& images) {
  return t.constant(nets::image_rows<T>(images));
}

template <class T>
std::vector<double> column_values(const Var<T>& v) {
  std::vector<double> out(static_cast<std::size_t>(v.rows()));
  for (Eigen::Index i = 0; i < v.rows(); ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(v.value()(i, 0));
  return out;
}

template <class T>
std::vector<double> prior_values(const ModelBundle<T>& b, const std::vector<text::Caption>& captions) {
  Tape<T> t(false);
  return column_values(b.phi.log_prob(t, captions));
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Paired objective on a tape: batch mean of log p_theta(x|y) + log p_phi(y)
// + log q_omega(y|x). The prior term is a constant here (the prior is trained
// separately and frozen). The returned Var is the differentiable part, i.e.
// without the prior term; `terms` receives all three means.
template <class T>
Var<T> paired_objective(Tape<T>& t, const ModelBundle<T>& b, const PairedBatch& batch, PairedTerms& terms,
                        bool with_decoder = true) {
  require(batch.size() > 0 && batch.images.size() == batch.size(), "paired_objective: malformed batch");
  const T inv = static_cast<T>(1.0 / static_cast<double>(batch.size()));
  auto mem = b.omega.memory(t, pixels_of(t, batch.images));
  Var<T> lq = b.omega.log_prob(t, batch.captions, &mem);
  terms.policy = mean(column_values(lq));
  terms.prior = mean(prior_values(b, batch.captions));
  Var<T> total = ad::sum(lq);
  if (with_decoder) {
    require(batch.tokens.size() == batch.size(), "paired_objective: missing image tokens");
    Var<T> ld = b.theta.log_prob(t, batch.captions, batch.tokens);
    terms.decoder = mean(column_values(ld));
    total = ad::add(total, ad::sum(ld));
  } else {
    terms.decoder = 0.0;
  }
  return ad::scale(total, inv);
}

// Value of the paired objective, J_p, for a batch.
template <class T>
PairedTerms paired_objective(const ModelBundle<T>& b, const PairedBatch& batch) {
  Tape<T> t(false);
  PairedTerms terms;
  paired_objective(t, b, batch, terms);
  return terms;
}

// ---------------------------------------------------------------------------
// Contrastive classifier.

enum class Source { paired, policy_sample };

struct ContrastiveBatch {
  std::vector<world::Image> images;
  std::vector<text::Caption> captions;
  std::vector<Source> source;

  std::size_t size() const { return images.size(); }
  void validate() const {
    require(images.size() == captions.size() && (source.empty() || source.size() == images.size()),
            "contrastive batch: images and captions must pair up");
  }
};

// Reward for caption s: log softmax over images b of f(x_b).g(y_s) at
// b = image_of[s]. f is images x d, g is captions x d.
template <class T>
std::vector<double> substitute_rewards(const Matrix<T>& f, const Matrix<T>& g, const std::vector<int>& image_of,
                                       double temperature = 1.0) {
  require(g.rows() == static_cast<Eigen::Index>(image_of.size()), "contrastive_substitute: size mismatch");
  const Eigen::MatrixXd logits = (f.template cast<double>() * g.template cast<double>().transpose()) / temperature;
  std::vector<double> out(image_of.size());
  for (Eigen::Index s = 0; s < logits.cols(); ++s) {
    const double m = logits.col(s).maxCoeff();
    const double lse = m + std::log((logits.col(s).array() - m).exp().sum());
    out[static_cast<std::size_t>(s)] = logits(image_of[static_cast<std::size_t>(s)], s) - lse;
  }
  return out;
}

template <class T>
std::vector<double> contrastive_substitute(const ContrastiveBatch& batch, const ModelBundle<T>& b) {
  batch.validate();
  require(batch.size() >= 2, "contrastive_substitute: batch needs at least two items");
  Tape<T> t(false);
  const auto f = b.contrastive.embed_images(t, pixels_of(t, batch.images)).value();
  const auto g = b.contrastive.embed_captions(t, batch.captions).value();
  std::vector<int> image_of(batch.size());
  for (std::size_t i = 0; i < image_of.size(); ++i) image_of[i] = static_cast<int>(i);
  return substitute_rewards(f, g, image_of, b.config.temperature);
}

// Symmetric cross-entropy: -(1/B) sum_j log softmax_b(f_b.g_j)[j]
//                          -(1/B) sum_j log softmax_b(f_j.g_b)[j].
template <class T>
Var<T> contrastive_classifier_loss(Tape<T>& t, const nets::ContrastiveHeads<T>& heads, Var<T> f, Var<T> g) {
  const auto n = static_cast<int>(f.rows());
  require(n >= 1 && g.rows() == n, "contrastive_classifier_loss: size mismatch");
  (void)t;
  std::vector<int> diag(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) diag[static_cast<std::size_t>(i)] = i;
  Var<T> image_given_caption = ad::gather(ad::log_softmax(heads.logits(g, f)), diag);
  Var<T> caption_given_image = ad::gather(ad::log_softmax(heads.logits(f, g)), diag);
  return ad::scale(ad::add(ad::sum(image_given_caption), ad::sum(caption_given_image)),
                   static_cast<T>(-1.0 / n));
}

template <class T>
double contrastive_classifier_loss(const ContrastiveBatch& batch, const ModelBundle<T>& b) {
  batch.validate();
  require(batch.size() >= 1, "contrastive_classifier_loss: empty batch");
  Tape<T> t(false);
  auto f = b.contrastive.embed_images(t, pixels_of(t, batch.images));
  auto g = b.contrastive.embed_captions(t, batch.captions);
  return static_cast<double>(contrastive_classifier_loss(t, b.contrastive, f, g).scalar());
}

// ---------------------------------------------------------------------------
// Unpaired estimator.

enum class EstimatorMode { sampling, enumeration };

// Batch means over images of the per-sample return and its parts
// (reconstruction, prior, entropy = -log q), plus the mean baseline.
struct UnpairedTerms {
  double j_u = 0.0;
  double recon = 0.0;
  double prior = 0.0;
  double entropy = 0.0;
  double baseline = 0.0;
};

struct UnpairedOptions {
  EstimatorMode mode = EstimatorMode::sampling;
  // Caption space for enumeration mode.
  const std::vector<text::Caption>* captions = nullptr;
  // Extra images that join the classifier's softmax (contrastive variant).
  const std::vector<world::Image>* context_images = nullptr;
};

// Accumulates into the parameter gradients the gradient of -J_u for the
// batch, so an optimiser step ascends J_u. Sampling mode draws M captions per
// image and weights each score by (R - b); enumeration mode sums over every
// caption weighted by q(y|x) with the constant baseline.
template <class T>
UnpairedTerms unpaired_gradient(const UnpairedBatch& batch, const ModelBundle<T>& b, const TrainConfig& cfg, Rng& rng,
                                const UnpairedOptions& opt = {}) {
  require(cfg.variant != Variant::supervised, "unpaired_gradient: supervised variant has no unpaired term");
  if (opt.mode == EstimatorMode::sampling && cfg.baseline == Baseline::leave_one_out && cfg.samples_per_image < 2)
    throw ConfigError("unpaired_gradient: leave-one-out baseline needs at least two samples per image");
  const int n_images = static_cast<int>(batch.size());
  require(n_images > 0, "unpaired_gradient: empty batch");
  const bool generative = cfg.variant == Variant::generative;
  if (generative) require(batch.tokens.size() == batch.images.size(), "unpaired_gradient: missing image tokens");

  Tape<T> t;
  auto mem = b.omega.memory(t, pixels_of(t, batch.images));

  std::vector<text::Caption> captions;
  std::vector<int> image_of;
  if (opt.mode == EstimatorMode::sampling) {
    for (int i = 0; i < n_images; ++i)
      for (int m = 0; m < cfg.samples_per_image; ++m) image_of.push_back(i);
    captions = b.omega.sample(&mem.value(), image_of, nets::SampleMode::stochastic, rng);
  } else {
    require(opt.captions != nullptr && !opt.captions->empty(), "unpaired_gradient: enumeration needs a caption list");
    for (int i = 0; i < n_images; ++i)
      for (const auto& c : *opt.captions) {
        captions.push_back(c);
        image_of.push_back(i);
      }
  }
  const auto n = captions.size();
  Var<T> lq = b.omega.log_prob(t, captions, &mem, &image_of);
  const std::vector<double> lq_v = column_values(lq);
  const std::vector<double> lp_v = prior_values(b, captions);

  std::vector<double> recon(n);
  std::optional<Var<T>> ld;
  if (generative) {
    std::vector<nets::ImageTokens> tokens;
    tokens.reserve(n);
    for (int i : image_of) tokens.push_back(batch.tokens[static_cast<std::size_t>(i)]);
    if (cfg.train_decoder_on_unpaired) {
      ld = b.theta.log_prob(t, captions, tokens);
      recon = column_values(*ld);
    } else {
      Tape<T> t0(false);
      recon = column_values(b.theta.log_prob(t0, captions, tokens));
    }
  } else {
    Tape<T> t0(false);
    std::vector<world::Image> images = batch.images;
    if (opt.context_images) images.insert(images.end(), opt.context_images->begin(), opt.context_images->end());
    const auto f = b.contrastive.embed_images(t0, pixels_of(t0, images)).value();
    const auto g = b.contrastive.embed_captions(t0, captions).value();
    recon = substitute_rewards(f, g, image_of, b.config.temperature);
  }

  // Per-caption weight on log q and on the decoder term.
  std::vector<double> ret(n), base(n, cfg.baseline_constant), w_score(n), w_dec(n);
  for (std::size_t s = 0; s < n; ++s) ret[s] = recon[s] + lp_v[s] - lq_v[s];
  UnpairedTerms terms;
  if (opt.mode == EstimatorMode::sampling) {
    const int m = cfg.samples_per_image;
    if (cfg.baseline == Baseline::leave_one_out) {
      for (int i = 0; i < n_images; ++i) {
        double total = 0.0;
        for (int k = 0; k < m; ++k) total += ret[static_cast<std::size_t>(i * m + k)];
        for (int k = 0; k < m; ++k) {
          const auto s = static_cast<std::size_t>(i * m + k);
          base[s] = (total - ret[s]) / (m - 1);
        }
      }
    }
    const double w = 1.0 / (static_cast<double>(n_images) * m);
    for (std::size_t s = 0; s < n; ++s) {
      w_score[s] = w * (ret[s] - base[s]);
      w_dec[s] = w;
      terms.j_u += w * ret[s];
      terms.recon += w * recon[s];
      terms.prior += w * lp_v[s];
      terms.entropy -= w * lq_v[s];
      terms.baseline += w * base[s];
    }
  } else {
    for (std::size_t s = 0; s < n; ++s) {
      const double q = std::exp(lq_v[s]) / n_images;
      w_score[s] = q * (ret[s] - base[s]);
      w_dec[s] = q;
      terms.j_u += q * ret[s];
      terms.recon += q * recon[s];
      terms.prior += q * lp_v[s];
      terms.entropy -= q * lq_v[s];
      terms.baseline += q * base[s];
    }
  }

  auto to_column = [](const std::vector<double>& v) {
    Matrix<T> m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<T>(-v[i]);
    return m;
  };
  Var<T> loss = ad::sum(ad::mul_const(lq, to_column(w_score)));
  if (ld) loss = ad::add(loss, ad::sum(ad::mul_const(*ld, to_column(w_dec))));
  t.backward(loss);
  return terms;
}

}  // namespace ias::semisup
