#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "ias/core/error.hpp"
#include "ias/text/vocabulary.hpp"
#include "ias/world/caption_grammar.hpp"

namespace ias::text {

// Token ids: BOS, body, EOS. Never padded in storage; models pad on the fly.
struct Caption {
  std::vector<int> ids;

  std::size_t body_length() const { return ids.size() >= 2 ? ids.size() - 2 : 0; }
  bool empty_body() const { return ids.size() == 2; }

  friend bool operator==(const Caption&, const Caption&) = default;
  friend auto operator<=>(const Caption&, const Caption&) = default;
};

inline Caption empty_caption() { return Caption{{kBos, kEos}}; }

inline bool is_valid(const Caption& c, int vocab_size, int max_length = kDefaultMaxLength) {
  const auto& v = c.ids;
  if (v.size() < 2 || static_cast<int>(v.size()) > max_length) return false;
  if (v.front() != kBos || v.back() != kEos) return false;
  for (std::size_t i = 1; i + 1 < v.size(); ++i)
    if (v[i] < kReserved && v[i] != kUnk) return false;
  for (int id : v)
    if (id < 0 || id >= vocab_size) return false;
  return true;
}

struct EncodeResult {
  Caption caption;
  bool truncated = false;
};

inline std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

inline EncodeResult encode_checked(const std::string& text, const Vocabulary& vocab,
                                   int max_length = kDefaultMaxLength) {
  const auto words = split_words(text);
  if (words.empty()) throw EncodingError("encode: empty text");
  EncodeResult r;
  r.caption.ids.push_back(kBos);
  const std::size_t limit = static_cast<std::size_t>(max_length - 2);
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i == limit) {
      r.truncated = true;
      break;
    }
    r.caption.ids.push_back(vocab.id(words[i]));
  }
  r.caption.ids.push_back(kEos);
  return r;
}

inline Caption encode(const std::string& text, const Vocabulary& vocab, int max_length = kDefaultMaxLength) {
  return encode_checked(text, vocab, max_length).caption;
}

inline std::string decode(const Caption& c, const Vocabulary& vocab) {
  std::string out;
  for (int id : c.ids) {
    const std::string& tok = vocab.token(id);
    if (id == kBos || id == kEos || id == kPad) continue;
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

inline Vocabulary default_vocabulary() { return Vocabulary(world::lexicon()); }

}  // namespace ias::text
