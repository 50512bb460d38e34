#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ias/core/error.hpp"
#include "ias/core/random.hpp"
#include "ias/nets/caption_model.hpp"
#include "ias/nets/contrastive.hpp"
#include "ias/nets/decoder.hpp"

namespace ias::nets {

// All learnable groups: caption policy (omega), image decoder (theta),
// language prior (phi) and the contrastive heads f, g.
template <class T>
struct ModelBundle {
  NetConfig config;
  CaptionModel<T> omega;
  ImageDecoder<T> theta;
  CaptionModel<T> phi;
  ContrastiveHeads<T> contrastive;

  ModelBundle() = default;
  ModelBundle(const NetConfig& cfg, std::uint64_t seed, int n_cells = -1)
      : config(cfg),
        omega(cfg, true, "omega", derive_seed(seed, "omega"), cfg.policy_layers),
        theta(cfg, "theta", derive_seed(seed, "theta"), n_cells),
        phi(cfg, false, "phi", derive_seed(seed, "phi"), cfg.prior_layers),
        contrastive(cfg, "contrastive", derive_seed(seed, "contrastive")) {}

  std::vector<const ParamSet<T>*> groups() const {
    return {&omega.params(), &theta.params(), &phi.params(), &contrastive.params()};
  }
  std::vector<ParamSet<T>*> groups() {
    return {&omega.params(), &theta.params(), &phi.params(), &contrastive.params()};
  }

  std::uint64_t hash() const {
    Fnv1a h;
    for (const auto* g : groups()) {
      const std::uint64_t v = g->hash();
      h.update(&v, sizeof v);
    }
    return h.digest();
  }

  bool all_finite() const {
    for (const auto* g : groups())
      if (!g->all_finite()) return false;
    return true;
  }
};

inline constexpr char kCheckpointMagic[8] = {'I', 'A', 'S', 'C', 'K', 'P', 'T', '1'};

// Checkpoint: magic, u64 manifest length, JSON manifest of (name, shape,
// dtype), then the raw little-endian arrays in manifest order.
template <class T>
void save_parameters(const std::vector<const ParamSet<T>*>& groups, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");
  nlohmann::json entries = nlohmann::json::array();
  for (const auto* g : groups)
    for (const auto& p : g->all())
      entries.push_back({{"name", p.name},
                         {"shape", {p.value.rows(), p.value.cols()}},
                         {"dtype", sizeof(T) == 4 ? "f32" : "f64"}});
  nlohmann::json manifest{{"format", "ias-checkpoint-v1"}, {"params", entries}, {"extra", extra}};
  const std::string text = manifest.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("checkpoint: cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* g : groups)
    for (const auto& p : g->all())
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(static_cast<std::size_t>(p.value.size()) * sizeof(T)));
}

template <class T>
nlohmann::json load_parameters(const std::vector<ParamSet<T>*>& groups, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw DataError("checkpoint: bad magic");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("checkpoint: truncated manifest");
  const auto manifest = nlohmann::json::parse(text);
  const auto& entries = manifest.at("params");
  std::size_t k = 0;
  for (auto* g : groups)
    for (auto& p : g->all()) {
      if (k >= entries.size()) throw DataError("checkpoint: fewer arrays than the architecture");
      const auto& e = entries[k++];
      const auto shape = e.at("shape").get<std::vector<long>>();
      if (e.at("name").get<std::string>() != p.name || shape.size() != 2 || shape[0] != p.value.rows() ||
          shape[1] != p.value.cols())
        throw DataError("checkpoint: layout mismatch at " + p.name);
      const std::string dtype = e.at("dtype").get<std::string>();
      const auto n = static_cast<std::size_t>(p.value.size());
      if (dtype == "f32") {
        std::vector<float> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
        for (std::size_t i = 0; i < n; ++i) p.value.data()[i] = static_cast<T>(buf[i]);
      } else if (dtype == "f64") {
        std::vector<double> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(double)));
        for (std::size_t i = 0; i < n; ++i) p.value.data()[i] = static_cast<T>(buf[i]);
      } else {
        throw DataError("checkpoint: unknown dtype " + dtype);
      }
      if (!in) throw DataError("checkpoint: truncated data at " + p.name);
      p.zero_grad();
    }
  if (k != entries.size()) throw DataError("checkpoint: more arrays than the architecture");
  return manifest.at("extra");
}

template <class T>
void save_checkpoint(const ModelBundle<T>& b, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  save_parameters<T>(b.groups(), path, extra);
}

template <class T>
nlohmann::json load_checkpoint(ModelBundle<T>& b, const std::filesystem::path& path) {
  return load_parameters<T>(b.groups(), path);
}

}  // namespace ias::nets
