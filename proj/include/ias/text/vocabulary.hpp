#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ias/core/error.hpp"

namespace ias::text {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kReserved = 4;
inline constexpr int kDefaultMaxLength = 12;

inline const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> r = {"<pad>", "<bos>", "<eos>", "<unk>"};
  return r;
}

// Dense word-level vocabulary: reserved ids first, then the lexicon in
// lexicographic order.
class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  explicit Vocabulary(std::vector<std::string> words) {
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    for (const auto& r : reserved_tokens()) add(r);
    for (const auto& w : words) {
      require(!w.empty() && w.find_first_of(" \t\n") == std::string::npos,
              "Vocabulary: tokens must be non-empty single words");
      if (w.front() == '<' && w.back() == '>') throw ConfigError("Vocabulary: reserved token in lexicon: " + w);
      add(w);
    }
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  int id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& word) const { return index_.count(word) > 0; }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw DecodingError("Vocabulary: id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line, line number = id.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    for (const auto& t : tokens_) out << t << "\n";
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("Vocabulary: cannot open " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) lines.push_back(line);
    const auto& r = reserved_tokens();
    if (lines.size() < r.size() || !std::equal(r.begin(), r.end(), lines.begin()))
      throw ConfigError("Vocabulary: file must start with the reserved tokens");
    Vocabulary v(std::vector<std::string>(lines.begin() + static_cast<long>(r.size()), lines.end()));
    if (v.tokens_ != lines) throw ConfigError("Vocabulary: file is not in canonical order");
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(const std::string& w) {
    index_.emplace(w, size());
    tokens_.push_back(w);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace ias::text
