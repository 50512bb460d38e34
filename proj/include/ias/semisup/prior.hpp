#pragma once

#include <vector>

#include "ias/ad/adam.hpp"
#include "ias/nets/caption_model.hpp"
#include "ias/semisup/config.hpp"

namespace ias::semisup {

// Shuffled pass over 0..n-1, reshuffled at the end of every epoch.
class IndexStream {
 public:
  IndexStream() = default;
  IndexStream(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    require(n > 0, "IndexStream: empty data");
    for (std::size_t i = 0; i < n; ++i) order_[i] = static_cast<int>(i);
    rng_.shuffle(order_);
  }

  int next() {
    if (pos_ == order_.size()) {
      rng_.shuffle(order_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

  std::vector<int> take(int k) {
    std::vector<int> out(static_cast<std::size_t>(k));
    for (auto& i : out) i = next();
    return out;
  }

 private:
  Rng rng_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
};

struct PriorReport {
  int steps = 0;
  double train_nll = 0.0;
  double holdout_nll = 0.0;  // at the restored best step
  int best_step = 0;
};

template <class T>
double mean_nll(const nets::CaptionModel<T>& model, const std::vector<text::Caption>& captions) {
  double total = 0.0;
  for (std::size_t i = 0; i < captions.size(); i += 512) {
    const std::vector<text::Caption> chunk(captions.begin() + static_cast<std::ptrdiff_t>(i),
                                           captions.begin() + static_cast<std::ptrdiff_t>(std::min(captions.size(), i + 512)));
    ad::Tape<T> t(false);
    total -= static_cast<double>(model.log_prob(t, chunk).value().sum());
  }
  return total / static_cast<double>(captions.size());
}

// Fits the unconditional caption model by maximum likelihood on the corpus.
// Every tenth caption is held out for early stopping when the corpus has at
// least ten items (otherwise the training corpus is its own holdout). The
// best parameters are restored and frozen.
template <class T>
PriorReport pretrain_prior(const std::vector<text::Caption>& corpus, nets::CaptionModel<T>& phi, const TrainConfig& cfg) {
  if (corpus.empty()) throw TrainingError("pretrain_prior: empty caption corpus");
  require(!phi.conditional(), "pretrain_prior: prior must be unconditional");
  std::vector<text::Caption> train, holdout;
  for (std::size_t i = 0; i < corpus.size(); ++i) (corpus.size() >= 10 && i % 10 == 9 ? holdout : train).push_back(corpus[i]);
  if (holdout.empty()) holdout = train;

  phi.params().set_frozen(false);
  IndexStream stream(train.size(), derive_seed(cfg.seed, "prior"));
  ad::Adam<T> opt({cfg.prior_learning_rate, cfg.beta1, cfg.beta2, 1e-8, cfg.clip_norm});
  auto params = phi.params().pointers();
  PriorReport report;
  double best = mean_nll(phi, holdout);
  report.holdout_nll = best;
  nets::ParamSet<T> best_params = phi.params();
  int stale = 0;
  for (int step = 1; step <= cfg.prior_max_steps; ++step) {
    std::vector<text::Caption> batch;
    for (int i : stream.take(cfg.prior_batch)) batch.push_back(train[static_cast<std::size_t>(i)]);
    ad::Tape<T> t;
    auto loss = ad::scale(ad::sum(phi.log_prob(t, batch)), static_cast<T>(-1.0 / cfg.prior_batch));
    if (!std::isfinite(static_cast<double>(loss.scalar())))
      throw TrainingError("pretrain_prior: non-finite loss at step " + std::to_string(step));
    t.backward(loss);
    opt.step(params);
    report.steps = step;
    report.train_nll = static_cast<double>(loss.scalar());
    if (step % cfg.prior_eval_every == 0 || step == cfg.prior_max_steps) {
      const double h = mean_nll(phi, holdout);
      if (h < best) {
        best = h;
        best_params = phi.params();
        report.best_step = step;
        report.holdout_nll = h;
        stale = 0;
      } else if (++stale >= cfg.prior_patience) {
        break;
      }
    }
  }
  phi.params().copy_values_from(best_params);
  phi.params().set_frozen(true);
  return report;
}

}  // namespace ias::semisup
