#pragma once

#include <array>
#include <cctype>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabfm/cleaning/cleaning.hpp"
#include "tabfm/core/csv.hpp"
#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/data/split.hpp"
#include "tabfm/models/synthesizer.hpp"
#include "tabfm/training/trainer.hpp"

namespace tabfm::pipeline {

/// Everything a run needs. Defaults, then the config file, then the file's
/// `overrides` section, then command-line `--section.key=value` flags.
struct RunConfig {
  std::string corpus_dir = "corpus";
  std::string work_dir = "work";
  std::uint64_t seed = 0;  // root of every random stream
  SplitSpec split;
  std::string embeddings;  // optional `name<TAB>v1,v2,...` file
  cleaning::CleaningConfig cleaning;
  models::ModelConfig model;
  training::TrainConfig train;
  std::vector<std::string> methods{"stvae"};
  std::size_t workers = 1;

  nlohmann::json to_json() const {
    auto train_json = train.to_json();
    train_json.erase("seed");
    return {
        {"paths", {{"corpus", corpus_dir}, {"work", work_dir}}},
        {"seed", seed},
        {"split",
         {{"mode", split.mode == SplitMode::Random ? "random" : "domain"},
          {"ratios", split.ratios},
          {"clusters", split.clusters},
          {"embeddings", embeddings}}},
        {"cleaning",
         {{"category_uniqueness_max", cleaning.category_uniqueness_max},
          {"min_avg_category_freq", cleaning.min_avg_category_freq},
          {"max_null_fraction", cleaning.max_null_fraction},
          {"max_rejected_column_fraction", cleaning.max_rejected_column_fraction},
          {"min_columns", cleaning.min_columns},
          {"min_rows", cleaning.min_rows}}},
        {"model", model.to_json()},
        {"train", train_json},
        {"benchmark", {{"methods", methods}, {"workers", workers}}},
    };
  }

  static RunConfig from_json(const nlohmann::json& doc) {
    try {
      auto j = RunConfig{}.to_json();
      j.merge_patch(doc);
      RunConfig c;
      c.corpus_dir = j.at("paths").at("corpus").get<std::string>();
      c.work_dir = j.at("paths").at("work").get<std::string>();
      c.seed = j.at("seed").get<std::uint64_t>();
      const auto& s = j.at("split");
      const auto mode = s.at("mode").get<std::string>();
      require(mode == "random" || mode == "domain", ErrorKind::Usage, "split.mode must be random or domain");
      c.split.mode = mode == "random" ? SplitMode::Random : SplitMode::Domain;
      c.split.ratios = s.at("ratios").get<std::array<double, 3>>();
      c.split.clusters = s.at("clusters").get<std::size_t>();
      c.split.seed = Rng(c.seed).substream("split").next_u64();
      c.embeddings = s.at("embeddings").get<std::string>();
      const auto& cl = j.at("cleaning");
      c.cleaning.category_uniqueness_max = cl.at("category_uniqueness_max").get<double>();
      c.cleaning.min_avg_category_freq = cl.at("min_avg_category_freq").get<double>();
      c.cleaning.max_null_fraction = cl.at("max_null_fraction").get<double>();
      c.cleaning.max_rejected_column_fraction = cl.at("max_rejected_column_fraction").get<double>();
      c.cleaning.min_columns = cl.at("min_columns").get<std::size_t>();
      c.cleaning.min_rows = cl.at("min_rows").get<std::size_t>();
      c.model = models::ModelConfig::from_json(j.at("model"));
      c.train = training::TrainConfig::from_json(j.at("train"));
      c.train.seed = c.seed;
      c.methods = j.at("benchmark").at("methods").get<std::vector<std::string>>();
      c.workers = j.at("benchmark").at("workers").get<std::size_t>();
      c.validate();
      return c;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Usage, std::string("bad configuration: ") + e.what());
    }
  }

  void validate() const {
    split.validate();
    cleaning.validate();
    model.validate();
    train.validate();
    require(!methods.empty(), ErrorKind::Usage, "benchmark.methods is empty");
    for (const auto& m : methods) models::method_from_string(m);
    require(workers >= 1, ErrorKind::Usage, "benchmark.workers must be >= 1");
  }

  /// Model configuration with the method switched.
  models::ModelConfig model_for(const std::string& method) const {
    auto m = model;
    m.method = models::method_from_string(method);
    return m;
  }

  /// Hash of everything that can change results; paths and worker count are
  /// excluded so relocated or parallel runs compare equal.
  std::string hash() const {
    auto j = to_json();
    j.erase("paths");
    j["benchmark"].erase("workers");
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(tabfm::detail::fnv1a(j.dump())));
    return buf;
  }
};

/// Splits "a.b.c=value" into a JSON pointer and a value. Values that parse as
/// JSON keep their type; anything else is taken as a string.
inline std::pair<nlohmann::json::json_pointer, nlohmann::json> parse_override(std::string_view text) {
  const auto eq = text.find('=');
  require(eq != std::string_view::npos && eq > 0, ErrorKind::Usage,
          "override '" + std::string(text) + "' must look like section.key=value");
  std::string path = "/" + std::string(text.substr(0, eq));
  for (auto& ch : path)
    if (ch == '.') ch = '/';
  const std::string raw(text.substr(eq + 1));
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  return {nlohmann::json::json_pointer(path), value};
}

/// Applies one override to a config document, rejecting keys that no
/// default configuration has.
inline void apply_override(nlohmann::json& doc, std::string_view text) {
  auto [ptr, value] = parse_override(text);
  const auto defaults = RunConfig{}.to_json();
  require(defaults.contains(ptr), ErrorKind::Usage, "unknown configuration key '" + ptr.to_string() + "'");
  doc[ptr] = value;
}

/// Builds the effective configuration from an optional file plus overrides.
inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!path.empty()) {
    try {
      doc = nlohmann::json::parse(csv::read_file(path));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Usage, "config " + path + ": " + e.what());
    }
    require(doc.is_object(), ErrorKind::Usage, "config " + path + ": top level must be an object");
  }
  nlohmann::json file_overrides = nlohmann::json::object();
  if (doc.contains("overrides")) {
    file_overrides = doc.at("overrides");
    doc.erase("overrides");
    require(file_overrides.is_object(), ErrorKind::Usage, "config overrides must be an object");
  }
  const auto defaults = RunConfig{}.to_json();
  const auto flat = doc.flatten();
  for (const auto& [k, v] : flat.items()) {
    nlohmann::json::json_pointer ptr(k);
    // array-valued settings flatten into indexed paths; check their parent
    while (!defaults.contains(ptr) && !ptr.empty() && std::isdigit(static_cast<unsigned char>(ptr.back()[0])))
      ptr = ptr.parent_pointer();
    require(defaults.contains(ptr), ErrorKind::Usage, "unknown configuration key '" + k + "'");
  }
  nlohmann::json merged = doc;
  for (const auto& [k, v] : file_overrides.items()) apply_override(merged, k + "=" + v.dump());
  for (const auto& o : overrides) apply_override(merged, o);
  return RunConfig::from_json(merged);
}

}  // namespace tabfm::pipeline
