#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ias/core/error.hpp"
#include "ias/core/hash.hpp"
#include "ias/world/dataset.hpp"

// Dataset files: one JSON object per line (split, seed, scene,
// prompted_index and, for labeled records, caption) plus a manifest with the
// config, master seed, split counts and a content hash of the records file.
namespace ias::world {

using nlohmann::json;

inline json to_json(const WorldConfig& w) {
  json shapes = json::array(), colors = json::array();
  for (Shape s : w.shapes) shapes.push_back(std::string(name(s)));
  for (Color c : w.colors) colors.push_back(std::string(name(c)));
  return json{{"grid_size", w.grid_size},       {"cell_pixels", w.cell_pixels},
              {"shapes", shapes},               {"colors", colors},
              {"min_objects", w.min_objects},   {"max_objects", w.max_objects},
              {"relation_probability", w.relation_probability}};
}

inline WorldConfig world_config_from_json(const json& j) {
  WorldConfig w;
  w.grid_size = j.value("grid_size", w.grid_size);
  w.cell_pixels = j.value("cell_pixels", w.cell_pixels);
  w.min_objects = j.value("min_objects", w.min_objects);
  w.max_objects = j.value("max_objects", w.max_objects);
  w.relation_probability = j.value("relation_probability", w.relation_probability);
  if (j.contains("shapes")) {
    w.shapes.clear();
    for (const auto& s : j.at("shapes")) {
      auto v = parse_shape(s.get<std::string>());
      if (!v) throw ConfigError("unknown shape: " + s.get<std::string>());
      w.shapes.push_back(*v);
    }
  }
  if (j.contains("colors")) {
    w.colors.clear();
    for (const auto& c : j.at("colors")) {
      auto v = parse_color(c.get<std::string>());
      if (!v) throw ConfigError("unknown color: " + c.get<std::string>());
      w.colors.push_back(*v);
    }
  }
  w.validate();
  return w;
}

inline json to_json(const DataConfig& c) {
  json j{{"world", to_json(c.world)},       {"master_seed", c.master_seed},
         {"n_unpaired", c.n_unpaired},      {"n_paired", c.n_paired},
         {"n_validation", c.n_validation},  {"labeled_pool", c.labeled_pool},
         {"novel_quota", c.novel_quota}};
  j["novel_shape"] = c.novel_shape ? json(std::string(name(*c.novel_shape))) : json(nullptr);
  return j;
}

inline DataConfig data_config_from_json(const json& j) {
  DataConfig c;
  if (j.contains("world")) c.world = world_config_from_json(j.at("world"));
  c.master_seed = j.value("master_seed", c.master_seed);
  c.n_unpaired = j.value("n_unpaired", c.n_unpaired);
  c.n_paired = j.value("n_paired", c.n_paired);
  c.n_validation = j.value("n_validation", c.n_validation);
  c.labeled_pool = j.value("labeled_pool", c.labeled_pool);
  c.novel_quota = j.value("novel_quota", c.novel_quota);
  if (j.contains("novel_shape") && !j.at("novel_shape").is_null()) {
    auto s = parse_shape(j.at("novel_shape").get<std::string>());
    if (!s) throw ConfigError("unknown novel shape");
    c.novel_shape = *s;
  }
  c.validate();
  return c;
}

inline json scene_to_json(const SceneSpec& s) {
  json objs = json::array();
  for (const Object& o : s.objects)
    objs.push_back(json::array({std::string(name(o.shape)), std::string(name(o.color)), o.row, o.col}));
  return json{{"grid", s.grid_size}, {"objects", objs}};
}

inline SceneSpec scene_from_json(const json& j, int prompted_index) {
  SceneSpec s;
  s.grid_size = j.at("grid").get<int>();
  for (const auto& o : j.at("objects")) {
    auto shape = parse_shape(o.at(0).get<std::string>());
    auto color = parse_color(o.at(1).get<std::string>());
    if (!shape || !color) throw DataError("dataset record: unknown shape or color");
    s.objects.push_back({*shape, *color, o.at(2).get<int>(), o.at(3).get<int>()});
  }
  s.prompted_index = prompted_index;
  try {
    s.validate();
  } catch (const ContractError& e) {
    throw DataError(std::string("dataset record: ") + e.what());
  }
  return s;
}

inline std::string record_line(std::string_view split, std::uint64_t seed, const SceneSpec& scene,
                               const std::string* caption) {
  json j{{"split", split}, {"seed", seed}, {"scene", scene_to_json(scene)},
         {"prompted_index", scene.prompted_index}};
  if (caption) j["caption"] = *caption;
  return j.dump();
}

inline std::string serialize_records(const DatasetBundle& b) {
  std::string out;
  for (const auto& e : b.paired) out += record_line("paired", e.seed, e.scene, &e.caption) + "\n";
  for (const auto& e : b.unpaired) out += record_line("unpaired", e.seed, e.scene, nullptr) + "\n";
  for (const auto& e : b.validation) out += record_line("validation", e.seed, e.scene, &e.caption) + "\n";
  return out;
}

inline json manifest(const DatasetBundle& b, const std::string& records) {
  return json{{"format", "ias-dataset-v1"},
              {"config", to_json(b.config)},
              {"master_seed", b.config.master_seed},
              {"counts",
               {{"paired", b.paired.size()},
                {"unpaired", b.unpaired.size()},
                {"validation", b.validation.size()}}},
              {"content_hash", fnv1a_hex(records)}};
}

inline void save_dataset(const DatasetBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string records = serialize_records(b);
  std::ofstream(dir / "records.jsonl", std::ios::binary) << records;
  std::ofstream(dir / "manifest.json", std::ios::binary) << manifest(b, records).dump(2) << "\n";
}

inline DatasetBundle load_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw DataError("load_dataset: missing manifest in " + dir.string());
  const json m = json::parse(mf);
  std::ifstream rf(dir / "records.jsonl", std::ios::binary);
  if (!rf) throw DataError("load_dataset: missing records in " + dir.string());
  std::stringstream ss;
  ss << rf.rdbuf();
  const std::string records = ss.str();
  if (fnv1a_hex(records) != m.at("content_hash").get<std::string>())
    throw DataError("load_dataset: content hash mismatch");
  DatasetBundle b;
  b.config = data_config_from_json(m.at("config"));
  b.novel_shape = b.config.novel_shape;
  std::istringstream lines(records);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const json r = json::parse(line);
    const std::string split = r.at("split").get<std::string>();
    const auto seed = r.at("seed").get<std::uint64_t>();
    SceneSpec scene = scene_from_json(r.at("scene"), r.at("prompted_index").get<int>());
    if (split == "unpaired") {
      b.unpaired.push_back({seed, std::move(scene)});
    } else if (split == "paired" || split == "validation") {
      PairedExample e{seed, std::move(scene), r.at("caption").get<std::string>()};
      (split == "paired" ? b.paired : b.validation).push_back(std::move(e));
    } else {
      throw DataError("load_dataset: unknown split " + split);
    }
  }
  const auto& counts = m.at("counts");
  if (counts.at("paired").get<std::size_t>() != b.paired.size() ||
      counts.at("unpaired").get<std::size_t>() != b.unpaired.size() ||
      counts.at("validation").get<std::size_t>() != b.validation.size())
    throw DataError("load_dataset: record counts disagree with manifest");
  return b;
}

}  // namespace ias::world
