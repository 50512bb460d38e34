#pragma once

#include <optional>
#include <ostream>
#include <sstream>

#include "ias/metrics/captions.hpp"
#include "ias/semisup/trainer.hpp"

namespace ias::metrics {

struct MetricReport {
  double caption_loglik = 0.0;
  double cider = 0.0;
  double color_object_accuracy = 0.0;
  bool color_object_defined = false;
  double novel_tpr = 0.0;
  double novel_fpr = 0.0;
  double novel_caption_loglik = 0.0;  // on references mentioning the novel shape
  int novel_positives = 0;
  int novel_negatives = 0;
  int n_eval = 0;
};

inline const char* metric_csv_header() {
  return "caption_loglik,cider,color_object_accuracy,color_object_defined,novel_tpr,novel_fpr,novel_caption_loglik,"
         "novel_positives,novel_negatives,n_eval";
}

inline std::string to_csv_row(const MetricReport& m) {
  std::ostringstream o;
  o.precision(17);
  o << m.caption_loglik << ',' << m.cider << ',' << m.color_object_accuracy << ',' << m.color_object_defined << ','
    << m.novel_tpr << ',' << m.novel_fpr << ',' << m.novel_caption_loglik << ',' << m.novel_positives << ','
    << m.novel_negatives << ',' << m.n_eval;
  return o.str();
}

inline bool operator==(const MetricReport& a, const MetricReport& b) { return to_csv_row(a) == to_csv_row(b); }

// Greedy captions for every image, in chunks.
template <class T>
std::vector<text::Caption> greedy_captions(const nets::CaptionModel<T>& omega, const std::vector<world::Image>& images,
                                           int chunk = 250) {
  std::vector<text::Caption> out;
  Rng unused(0);
  for (std::size_t i = 0; i < images.size(); i += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(images.size(), i + static_cast<std::size_t>(chunk));
    const std::vector<world::Image> part(images.begin() + static_cast<std::ptrdiff_t>(i),
                                         images.begin() + static_cast<std::ptrdiff_t>(end));
    ad::Tape<T> t(false);
    const auto mem = omega.memory(t, semisup::pixels_of(t, part)).value();
    std::vector<int> image_of(part.size());
    for (std::size_t k = 0; k < part.size(); ++k) image_of[k] = static_cast<int>(k);
    for (auto& c : omega.sample(&mem, image_of, nets::SampleMode::greedy, unused)) out.push_back(std::move(c));
  }
  return out;
}

// Captioning metrics of a policy on held-out paired examples: validation
// log-likelihood, greedy-sample CIDEr, color-object accuracy against the
// references, and novel-shape mention rates when a novel shape is given.
template <class T>
MetricReport evaluate_captioner(const nets::CaptionModel<T>& omega, const std::vector<world::PairedExample>& eval,
                                const world::WorldConfig& w, const text::Vocabulary& vocab, int max_len,
                                std::optional<world::Shape> novel = std::nullopt) {
  require(!eval.empty(), "evaluate_captioner: empty evaluation set");
  const semisup::PairedData data = semisup::encode_paired(eval, w, vocab, max_len);
  MetricReport m;
  m.n_eval = static_cast<int>(eval.size());
  m.caption_loglik = semisup::caption_log_likelihood(omega, data);

  const auto captions = greedy_captions(omega, data.images);
  std::vector<std::string> candidates;
  std::vector<std::vector<std::string>> references;
  std::vector<CaptionSample> samples, refs;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    candidates.push_back(text::decode(captions[i], vocab));
    references.push_back({eval[i].caption});
    samples.push_back({candidates.back(), eval[i].scene});
    refs.push_back({eval[i].caption, eval[i].scene});
  }
  m.cider = cider(candidates, references);
  const ColorObjectAccuracy acc = color_object_accuracy(samples, refs, w);
  m.color_object_accuracy = acc.ratio;
  m.color_object_defined = acc.defined;
  if (novel) {
    const NovelRates r = novel_rates(samples, *novel);
    m.novel_tpr = r.tpr;
    m.novel_fpr = r.fpr;
    m.novel_positives = r.positives;
    m.novel_negatives = r.negatives;
    semisup::PairedData mentioning;
    for (std::size_t i = 0; i < eval.size(); ++i)
      if (mentions_shape(eval[i].caption, *novel)) {
        mentioning.images.push_back(data.images[i]);
        mentioning.captions.push_back(data.captions[i]);
        mentioning.tokens.push_back(data.tokens[i]);
      }
    if (mentioning.size() > 0) m.novel_caption_loglik = semisup::caption_log_likelihood(omega, mentioning);
  }
  return m;
}

}  // namespace ias::metrics
