#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>
#include <vector>

#include "ias/semisup/objectives.hpp"
#include "ias/semisup/prior.hpp"
#include "ias/text/codec.hpp"
#include "ias/world/dataset.hpp"

namespace ias::semisup {

struct StepReport {
  int step = 0;
  double j_p = 0.0;
  double jp_decoder = 0.0;
  double jp_prior = 0.0;
  double jp_policy = 0.0;
  double j_u = 0.0;
  double recon = 0.0;
  double prior = 0.0;
  double entropy = 0.0;
  double baseline = 0.0;
  double classifier_loss = 0.0;
  double validation_ll = 0.0;  // latest evaluation
};

inline const char* step_csv_header() {
  return "step,j_p,jp_decoder,jp_prior,jp_policy,j_u,recon,prior,entropy,baseline,classifier_loss,validation_ll";
}

inline std::string to_csv_row(const StepReport& r) {
  std::ostringstream o;
  o.precision(17);
  o << r.step << ',' << r.j_p << ',' << r.jp_decoder << ',' << r.jp_prior << ',' << r.jp_policy << ',' << r.j_u << ','
    << r.recon << ',' << r.prior << ',' << r.entropy << ',' << r.baseline << ',' << r.classifier_loss << ','
    << r.validation_ll;
  return o.str();
}

inline void write_step_csv(std::ostream& out, const std::vector<StepReport>& reports) {
  out << step_csv_header() << '\n';
  for (const auto& r : reports) out << to_csv_row(r) << '\n';
}

// Encoded paired data with rendered images and grid tokens.
struct PairedData {
  std::vector<world::Image> images;
  std::vector<text::Caption> captions;
  std::vector<nets::ImageTokens> tokens;

  std::size_t size() const { return captions.size(); }

  PairedBatch batch(const std::vector<int>& idx) const {
    PairedBatch b;
    for (int i : idx) {
      const auto k = static_cast<std::size_t>(i);
      b.images.push_back(images[k]);
      b.captions.push_back(captions[k]);
      b.tokens.push_back(tokens[k]);
    }
    return b;
  }
};

inline PairedData encode_paired(const std::vector<world::PairedExample>& examples, const world::WorldConfig& w,
                                const text::Vocabulary& vocab, int max_len, std::size_t limit = SIZE_MAX) {
  PairedData d;
  for (std::size_t i = 0; i < examples.size() && i < limit; ++i) {
    const auto& e = examples[i];
    d.images.push_back(world::render(e.scene));
    d.captions.push_back(text::encode(e.caption, vocab, max_len));
    d.tokens.push_back(nets::image_tokens(e.scene, w));
  }
  return d;
}

inline UnpairedBatch unpaired_batch(const std::vector<world::UnpairedExample>& examples, const std::vector<int>& idx,
                                    const world::WorldConfig& w) {
  UnpairedBatch b;
  for (int i : idx) {
    const auto& s = examples[static_cast<std::size_t>(i)].scene;
    b.images.push_back(world::render(s));
    b.tokens.push_back(nets::image_tokens(s, w));
  }
  return b;
}

// Mean log q(y|x) over paired data, evaluated in chunks.
template <class T>
double caption_log_likelihood(const nets::CaptionModel<T>& omega, const PairedData& data, int chunk = 250) {
  require(data.size() > 0, "caption_log_likelihood: empty data");
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); i += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(data.size(), i + static_cast<std::size_t>(chunk));
    ad::Tape<T> t(false);
    std::vector<world::Image> imgs(data.images.begin() + static_cast<std::ptrdiff_t>(i),
                                   data.images.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<text::Caption> caps(data.captions.begin() + static_cast<std::ptrdiff_t>(i),
                                    data.captions.begin() + static_cast<std::ptrdiff_t>(end));
    auto mem = omega.memory(t, pixels_of(t, imgs));
    total += static_cast<double>(omega.log_prob(t, caps, &mem).value().sum());
  }
  return total / static_cast<double>(data.size());
}

template <class T>
struct TrainResult {
  ModelBundle<T> bundle;  // parameters at the best validation step
  std::vector<StepReport> reports;
  PriorReport prior;
  int best_step = 0;
  double best_validation_ll = -std::numeric_limits<double>::infinity();
  double final_validation_ll = 0.0;  // parameters after the last step
  int steps_run = 0;
  bool early_stopped = false;
};

using StepCallback = std::function<void(const StepReport&)>;

// Trains one variant. The generative and contrastive variants first pretrain
// and freeze the prior on the run's labelled captions; the supervised variant
// only reads the paired split.
template <class T = float>
TrainResult<T> train(const world::DatasetBundle& data, const TrainConfig& cfg, const nets::NetConfig& net,
                     const text::Vocabulary& vocab, const StepCallback& on_step = {}) {
  cfg.validate();
  net.validate();
  require(net.vocab_size == vocab.size(), "train: vocabulary size does not match the network");
  const auto& w = data.config.world;
  if (data.paired.empty()) throw TrainingError("train: no paired data");
  if (data.validation.empty()) throw TrainingError("train: no validation data");
  const bool semi = cfg.variant != Variant::supervised;
  if (semi && data.unpaired.empty()) throw TrainingError("train: semi-supervised variant needs unpaired data");

  const PairedData paired = encode_paired(data.paired, w, vocab, net.max_caption_length);
  const PairedData validation =
      encode_paired(data.validation, w, vocab, net.max_caption_length, static_cast<std::size_t>(cfg.validation_limit));

  TrainResult<T> result;
  ModelBundle<T> b(net, derive_seed(cfg.seed, "init"));
  if (semi) result.prior = pretrain_prior(paired.captions, b.phi, cfg);
  b.phi.params().set_frozen(true);

  std::vector<ad::Parameter<T>*> params = b.omega.params().pointers();
  if (cfg.variant == Variant::generative)
    for (auto* p : b.theta.params().pointers()) params.push_back(p);
  if (cfg.variant == Variant::contrastive)
    for (auto* p : b.contrastive.params().pointers()) params.push_back(p);
  ad::Adam<T> opt({cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8, cfg.clip_norm});

  IndexStream paired_stream(paired.size(), derive_seed(cfg.seed, "paired"));
  IndexStream unpaired_stream;
  if (semi) unpaired_stream = IndexStream(data.unpaired.size(), derive_seed(cfg.seed, "unpaired"));
  Rng policy_rng(derive_seed(cfg.seed, "policy"));

  ModelBundle<T> best = b;
  result.best_validation_ll = caption_log_likelihood(b.omega, validation);
  double last_val = result.best_validation_ll;
  int stale = 0;

  auto check = [&](const StepReport& r) {
    const double vals[] = {r.j_p, r.j_u, r.recon, r.prior, r.entropy, r.baseline, r.classifier_loss};
    for (double v : vals)
      if (!std::isfinite(v))
        throw TrainingError("train: non-finite objective at step " + std::to_string(r.step) + ": " + to_csv_row(r));
  };

  for (int step = 1; step <= cfg.max_steps; ++step) {
    StepReport r;
    r.step = step;
    const PairedBatch pb = paired.batch(paired_stream.take(cfg.batch_paired));

    if (cfg.variant == Variant::contrastive) {
      const UnpairedBatch ub = unpaired_batch(data.unpaired, unpaired_stream.take(cfg.batch_unpaired), w);
      // Classifier: paired items plus one policy sample per paired item,
      // drawn on distinct unpaired images.
      const int n_pos = std::min(cfg.batch_paired, static_cast<int>(ub.size()));
      ContrastiveBatch cb;
      cb.images = pb.images;
      cb.captions = pb.captions;
      cb.source.assign(pb.size(), Source::paired);
      {
        Tape<T> t0(false);
        std::vector<world::Image> imgs(ub.images.begin(), ub.images.begin() + n_pos);
        const auto mem = b.omega.memory(t0, pixels_of(t0, imgs)).value();
        std::vector<int> image_of(static_cast<std::size_t>(n_pos));
        for (int i = 0; i < n_pos; ++i) image_of[static_cast<std::size_t>(i)] = i;
        const auto samples = b.omega.sample(&mem, image_of, nets::SampleMode::stochastic, policy_rng);
        for (int i = 0; i < n_pos; ++i) {
          cb.images.push_back(imgs[static_cast<std::size_t>(i)]);
          cb.captions.push_back(samples[static_cast<std::size_t>(i)]);
          cb.source.push_back(Source::policy_sample);
        }
      }
      // Unpaired score-function term, rewards from the current classifier
      // over every image in the joint batch.
      UnpairedOptions uo;
      uo.context_images = &pb.images;
      const UnpairedTerms ut = unpaired_gradient(ub, b, cfg, policy_rng, uo);
      Tape<T> t;
      PairedTerms pt;
      Var<T> jp = paired_objective(t, b, pb, pt, false);
      auto f = b.contrastive.embed_images(t, pixels_of(t, cb.images));
      auto g = b.contrastive.embed_captions(t, cb.captions);
      Var<T> closs = contrastive_classifier_loss(t, b.contrastive, f, g);
      t.backward(ad::sub(closs, jp));
      r.jp_policy = pt.policy;
      r.jp_prior = pt.prior;
      r.classifier_loss = static_cast<double>(closs.scalar());
      r.j_u = ut.j_u;
      r.recon = ut.recon;
      r.prior = ut.prior;
      r.entropy = ut.entropy;
      r.baseline = ut.baseline;
      r.j_p = r.jp_policy + r.jp_prior;
      check(r);
      opt.step(params);
    } else {
      {
        Tape<T> t;
        PairedTerms pt;
        const bool gen = cfg.variant == Variant::generative;
        Var<T> jp = paired_objective(t, b, pb, pt, gen);
        t.backward(ad::scale(jp, T(-1)));
        r.jp_decoder = pt.decoder;
        r.jp_policy = pt.policy;
        r.jp_prior = gen ? pt.prior : 0.0;
        r.j_p = r.jp_decoder + r.jp_prior + r.jp_policy;
        check(r);
        opt.step(params);
      }
      if (cfg.variant == Variant::generative) {
        const UnpairedBatch ub = unpaired_batch(data.unpaired, unpaired_stream.take(cfg.batch_unpaired), w);
        const UnpairedTerms ut = unpaired_gradient(ub, b, cfg, policy_rng);
        r.j_u = ut.j_u;
        r.recon = ut.recon;
        r.prior = ut.prior;
        r.entropy = ut.entropy;
        r.baseline = ut.baseline;
        check(r);
        opt.step(params);
      }
    }
    if (!b.omega.params().all_finite()) throw TrainingError("train: non-finite parameters at step " + std::to_string(step));

    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      last_val = caption_log_likelihood(b.omega, validation);
      if (last_val > result.best_validation_ll) {
        result.best_validation_ll = last_val;
        result.best_step = step;
        best = b;
        stale = 0;
      } else {
        ++stale;
      }
    }
    r.validation_ll = last_val;
    result.reports.push_back(r);
    result.steps_run = step;
    if (on_step) on_step(r);
    if (stale >= cfg.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
  }
  result.final_validation_ll = last_val;
  result.bundle = std::move(best);
  return result;
}

}  // namespace ias::semisup
