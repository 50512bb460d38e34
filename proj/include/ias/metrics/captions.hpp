#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ias/text/codec.hpp"
#include "ias/world/scene.hpp"

namespace ias::metrics {

struct ColorObjectPair {
  world::Color color = world::Color::red;
  world::Shape shape = world::Shape::box;
  friend bool operator==(const ColorObjectPair&, const ColorObjectPair&) = default;
};

// Left-to-right scan: each shape word takes the nearest preceding color word
// not yet consumed; words outside the configured lexicons are ignored.
inline std::vector<ColorObjectPair> parse_color_object_pairs(const std::string& caption, const world::WorldConfig& w) {
  std::vector<ColorObjectPair> out;
  std::vector<world::Color> open;  // unconsumed colors, most recent last
  for (const auto& word : text::split_words(caption)) {
    if (auto c = world::parse_color(word); c && w.color_index(*c) >= 0) {
      open.push_back(*c);
    } else if (auto s = world::parse_shape(word); s && w.shape_index(*s) >= 0) {
      if (open.empty()) continue;
      out.push_back({open.back(), *s});
      open.pop_back();
    }
  }
  return out;
}

struct CaptionSample {
  std::string caption;
  world::SceneSpec scene;
};

struct PairPrecision {
  int mentioned = 0;
  int correct = 0;
  bool defined() const { return mentioned > 0; }
  double value() const { return defined() ? static_cast<double>(correct) / mentioned : 0.0; }
};

inline PairPrecision pair_precision(const std::vector<CaptionSample>& samples, const world::WorldConfig& w) {
  PairPrecision p;
  for (const auto& s : samples)
    for (const auto& pair : parse_color_object_pairs(s.caption, w)) {
      ++p.mentioned;
      if (s.scene.contains(pair.color, pair.shape)) ++p.correct;
    }
  return p;
}

// Model pair precision divided by reference pair precision on the same
// scenes. `defined` is false when the model mentions no pair at all;
// `unnormalised` is set when the references mention no correct pair and the
// raw model precision is returned.
struct ColorObjectAccuracy {
  double ratio = 0.0;
  PairPrecision model;
  PairPrecision reference;
  bool defined = false;
  bool unnormalised = false;
};

inline ColorObjectAccuracy color_object_accuracy(const std::vector<CaptionSample>& samples,
                                                 const std::vector<CaptionSample>& references,
                                                 const world::WorldConfig& w) {
  require(!samples.empty(), "color_object_accuracy: empty sample set");
  require(samples.size() == references.size(), "color_object_accuracy: references must cover the same scenes");
  for (std::size_t i = 0; i < samples.size(); ++i)
    require(samples[i].scene == references[i].scene, "color_object_accuracy: reference scene mismatch");
  ColorObjectAccuracy a;
  a.model = pair_precision(samples, w);
  a.reference = pair_precision(references, w);
  a.defined = a.model.defined();
  if (!a.defined) return a;
  if (a.reference.value() > 0.0) {
    a.ratio = a.model.value() / a.reference.value();
  } else {
    a.ratio = a.model.value();
    a.unnormalised = true;
  }
  return a;
}

// ---------------------------------------------------------------------------
// CIDEr (original form): tf-idf n-gram vectors for n = 1..n_max, idf over the
// reference sets, cosine averaged over references and n, scaled by 10.

namespace detail {

using NGramCounts = std::map<std::vector<std::string>, double>;

inline NGramCounts ngrams(const std::vector<std::string>& words, int n) {
  NGramCounts out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= words.size(); ++i)
    out[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                 words.begin() + static_cast<std::ptrdiff_t>(i) + n)] += 1.0;
  return out;
}

inline std::map<std::vector<std::string>, double> tfidf(const NGramCounts& counts,
                                                        const std::map<std::vector<std::string>, int>& df,
                                                        double log_n) {
  double total = 0.0;
  for (const auto& [g, c] : counts) total += c;
  std::map<std::vector<std::string>, double> v;
  for (const auto& [g, c] : counts) {
    auto it = df.find(g);
    const double d = it == df.end() ? 0.0 : std::log(static_cast<double>(it->second));
    v[g] = c / total * (log_n - d);
  }
  return v;
}

inline double cosine(const std::map<std::vector<std::string>, double>& a,
                     const std::map<std::vector<std::string>, double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [g, x] : a) {
    na += x * x;
    auto it = b.find(g);
    if (it != b.end()) dot += x * it->second;
  }
  for (const auto& [g, y] : b) nb += y * y;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace detail

inline double cider(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references,
                    int n_max = 4) {
  require(candidates.size() == references.size(), "cider: one reference set per candidate");
  require(!candidates.empty(), "cider: empty corpus");
  require(n_max >= 1, "cider: n_max must be positive");
  for (const auto& r : references) require(!r.empty(), "cider: every candidate needs a reference");
  const auto n_items = candidates.size();
  const double log_n = std::log(static_cast<double>(n_items));

  std::vector<std::vector<std::vector<std::string>>> ref_words(n_items);
  for (std::size_t i = 0; i < n_items; ++i)
    for (const auto& r : references[i]) ref_words[i].push_back(text::split_words(r));

  double score = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    std::map<std::vector<std::string>, int> df;
    for (const auto& refs : ref_words) {
      std::map<std::vector<std::string>, bool> seen;
      for (const auto& r : refs)
        for (const auto& [g, c] : detail::ngrams(r, n)) seen[g] = true;
      for (const auto& [g, b] : seen) ++df[g];
    }
    double sum_n = 0.0;
    for (std::size_t i = 0; i < n_items; ++i) {
      const auto cand = text::split_words(candidates[i]);
      if (cand.empty()) continue;
      const auto vc = detail::tfidf(detail::ngrams(cand, n), df, log_n);
      double s = 0.0;
      for (const auto& r : ref_words[i]) s += detail::cosine(vc, detail::tfidf(detail::ngrams(r, n), df, log_n));
      sum_n += s / static_cast<double>(ref_words[i].size());
    }
    score += sum_n / static_cast<double>(n_items);
  }
  return 10.0 * score / n_max;
}

// ---------------------------------------------------------------------------

struct NovelRates {
  double tpr = 0.0;
  double fpr = 0.0;
  int positives = 0;
  int negatives = 0;
  int true_mentions = 0;
  int false_mentions = 0;
  bool tpr_defined() const { return positives > 0; }
  bool fpr_defined() const { return negatives > 0; }
};

inline bool mentions_shape(const std::string& caption, world::Shape s) {
  for (const auto& word : text::split_words(caption))
    if (word == world::name(s)) return true;
  return false;
}

inline NovelRates novel_rates(const std::vector<CaptionSample>& samples, world::Shape novel) {
  NovelRates r;
  for (const auto& s : samples) {
    const bool m = mentions_shape(s.caption, novel);
    if (s.scene.contains(novel)) {
      ++r.positives;
      r.true_mentions += m;
    } else {
      ++r.negatives;
      r.false_mentions += m;
    }
  }
  if (r.positives > 0) r.tpr = static_cast<double>(r.true_mentions) / r.positives;
  if (r.negatives > 0) r.fpr = static_cast<double>(r.false_mentions) / r.negatives;
  return r;
}

// ---------------------------------------------------------------------------

enum class EfficiencyStatus { interpolated, clamped_above, below_range };

struct DataEfficiency {
  double multiplier = 0.0;
  double equivalent_size = 0.0;
  EfficiencyStatus status = EfficiencyStatus::interpolated;
  bool monotone = true;  // supervised curve non-decreasing
};

struct CurvePoint {
  double n_paired = 0.0;
  double metric = 0.0;
};

// Labelled-set size at which the supervised curve (log-linear in N_p) reaches
// `semi_value`, divided by the semi-supervised run's N_p. Values above the
// curve clamp to the largest N_p; values below the smallest point report the
// smallest N_p with a below-range status.
inline DataEfficiency data_efficiency_multiplier(std::vector<CurvePoint> curve, double semi_value, double semi_n_paired) {
  require(!curve.empty(), "data_efficiency_multiplier: empty supervised curve");
  require(semi_n_paired > 0.0, "data_efficiency_multiplier: N_p must be positive");
  std::sort(curve.begin(), curve.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.n_paired < b.n_paired; });
  DataEfficiency out;
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i].metric < curve[i - 1].metric) out.monotone = false;
  if (semi_value < curve.front().metric) {
    out.status = EfficiencyStatus::below_range;
    out.equivalent_size = curve.front().n_paired;
  } else if (semi_value >= curve.back().metric) {
    out.status = semi_value > curve.back().metric ? EfficiencyStatus::clamped_above : EfficiencyStatus::interpolated;
    out.equivalent_size = curve.back().n_paired;
  } else {
    for (std::size_t i = 1; i < curve.size(); ++i) {
      const auto& a = curve[i - 1];
      const auto& b = curve[i];
      if (semi_value >= a.metric && semi_value <= b.metric) {
        const double t = b.metric == a.metric ? 0.0 : (semi_value - a.metric) / (b.metric - a.metric);
        out.equivalent_size = std::exp(std::log(a.n_paired) + t * (std::log(b.n_paired) - std::log(a.n_paired)));
        break;
      }
    }
  }
  out.multiplier = out.equivalent_size / semi_n_paired;
  return out;
}

}  // namespace ias::metrics
