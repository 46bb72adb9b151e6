#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "tabfm/core/csv.hpp"
#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/data/table.hpp"

namespace tabfm {

enum class SplitMode { Random, Domain };

struct SplitSpec {
  std::array<double, 3> ratios{0.8, 0.1, 0.1};  // train, val, test
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::Random;
  std::size_t clusters = 100;  // Domain mode only

  void validate() const {
    for (double r : ratios) require(r > 0.0, ErrorKind::Usage, "split ratios must be positive");
    require(std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) <= 1e-9, ErrorKind::Usage,
            "split ratios must sum to 1");
    require(mode == SplitMode::Random || clusters >= 1, ErrorKind::Usage,
            "domain split needs k >= 1");
  }
};

struct DatasetSplit {
  std::vector<std::string> train, val, test;
  SplitSpec spec;
  std::map<std::string, std::size_t> clusters;  // Domain mode only

  const std::vector<std::string>& part(std::size_t i) const {
    return i == 0 ? train : (i == 1 ? val : test);
  }

  /// Partition check against the corpus names; also checks cluster integrity.
  void validate(const std::vector<std::string>& corpus) const {
    std::set<std::string> seen;
    for (std::size_t p = 0; p < 3; ++p)
      for (const auto& id : part(p))
        require(seen.insert(id).second, ErrorKind::Data, "table '" + id + "' in two parts");
    require(seen == std::set<std::string>(corpus.begin(), corpus.end()), ErrorKind::Data,
            "split does not cover the corpus exactly");
    if (clusters.empty()) return;
    std::map<std::size_t, std::size_t> owner;
    for (std::size_t p = 0; p < 3; ++p)
      for (const auto& id : part(p)) {
        const auto c = clusters.at(id);
        auto [it, inserted] = owner.emplace(c, p);
        require(inserted || it->second == p, ErrorKind::Data,
                "cluster " + std::to_string(c) + " straddles split parts");
      }
  }
};

namespace detail {

inline std::vector<std::string> table_names(const std::vector<Table>& corpus) {
  std::vector<std::string> names;
  for (const auto& t : corpus) names.push_back(t.name);
  std::vector<std::string> sorted = names;
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorKind::Data,
          "corpus table names must be unique");
  return names;
}

inline void require_nonempty_parts(const DatasetSplit& s) {
  static const char* names[] = {"train", "val", "test"};
  for (std::size_t p = 0; p < 3; ++p)
    require(!s.part(p).empty(), ErrorKind::Data,
            std::string("split part '") + names[p] + "' is empty");
}

}  // namespace detail

/// Seeded shuffle, then cut at floor(train*n), floor(val*n); test takes the rest.
inline DatasetSplit random_split(const std::vector<std::string>& ids, const SplitSpec& spec) {
  spec.validate();
  require(ids.size() >= 3, ErrorKind::Data, "random split needs at least 3 tables");
  Rng rng = Rng(spec.seed).substream("split");
  auto order = rng.permutation(ids.size());
  const double n = static_cast<double>(ids.size());
  const auto n_train = static_cast<std::size_t>(std::floor(spec.ratios[0] * n + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.ratios[1] * n + 1e-9));
  DatasetSplit out;
  out.spec = spec;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& id = ids[order[i]];
    if (i < n_train)
      out.train.push_back(id);
    else if (i < n_train + n_val)
      out.val.push_back(id);
    else
      out.test.push_back(id);
  }
  detail::require_nonempty_parts(out);
  return out;
}

inline DatasetSplit random_split(const std::vector<Table>& corpus, const SplitSpec& spec) {
  return random_split(detail::table_names(corpus), spec);
}

struct KMeansResult {
  std::vector<std::size_t> assignments;
  std::vector<std::vector<double>> centroids;
  std::vector<double> wcss_trace;  // one entry per assignment step
  std::size_t iterations = 0;

  double wcss() const { return wcss_trace.empty() ? 0.0 : wcss_trace.back(); }
};

namespace detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace detail

/// Lloyd's algorithm from a seeded k-means++ start. Empty clusters keep their
/// previous centroid, so WCSS never increases between iterations.
inline KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                           std::uint64_t seed, std::size_t max_iter = 300) {
  require(!points.empty(), ErrorKind::Data, "kmeans: empty input");
  const std::size_t dim = points.front().size();
  require(dim > 0, ErrorKind::Data, "kmeans: zero-dimension vectors");
  for (const auto& p : points) require(p.size() == dim, ErrorKind::Data, "kmeans: ragged vectors");
  require(k >= 1 && k <= points.size(), ErrorKind::Usage, "kmeans: need 1 <= k <= |points|");

  Rng rng(seed);
  KMeansResult res;
  // k-means++ seeding.
  std::vector<double> d2(points.size(), std::numeric_limits<double>::infinity());
  std::size_t first = rng.index(points.size());
  res.centroids.push_back(points[first]);
  while (res.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], detail::sq_dist(points[i], res.centroids.back()));
      total += d2[i];
    }
    std::size_t pick;
    if (total > 0.0) {
      pick = rng.categorical(d2);
    } else {
      pick = rng.index(points.size());
    }
    res.centroids.push_back(points[pick]);
  }

  res.assignments.assign(points.size(), 0);
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iter, 1); ++it) {
    bool changed = false;
    double wcss = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::size_t best = 0;
      double best_d = detail::sq_dist(points[i], res.centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = detail::sq_dist(points[i], res.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (it == 0 || res.assignments[i] != best) changed = true;
      res.assignments[i] = best;
      wcss += best_d;
    }
    res.wcss_trace.push_back(wcss);
    res.iterations = it + 1;
    if (!changed) break;
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto& s = sums[res.assignments[i]];
      for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
      ++counts[res.assignments[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < dim; ++d) res.centroids[c][d] = sums[c][d] / counts[c];
    }
  }
  return res;
}

/// Clusters table embeddings, then hands out whole clusters (largest first,
/// seeded order among equal sizes) to whichever part is furthest below its
/// target size. No cluster straddles two parts.
inline DatasetSplit domain_split(const std::vector<std::string>& ids,
                                 const std::map<std::string, std::vector<double>>& embeddings,
                                 const SplitSpec& spec) {
  spec.validate();
  require(spec.mode == SplitMode::Domain, ErrorKind::Usage, "domain_split needs Domain mode");
  require(spec.clusters <= ids.size(), ErrorKind::Usage, "domain split: k exceeds corpus size");
  std::vector<std::vector<double>> vecs;
  for (const auto& id : ids) {
    auto it = embeddings.find(id);
    require(it != embeddings.end(), ErrorKind::Data, "missing embedding for table '" + id + "'");
    vecs.push_back(it->second);
  }
  Rng root(spec.seed);
  const auto km = kmeans(vecs, spec.clusters, root.substream("kmeans").next_u64());

  std::vector<std::vector<std::size_t>> members(spec.clusters);
  for (std::size_t i = 0; i < ids.size(); ++i) members[km.assignments[i]].push_back(i);
  std::vector<std::size_t> order(spec.clusters);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = root.substream("split");
  shuffle_rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return members[a].size() > members[b].size();
  });

  DatasetSplit out;
  out.spec = spec;
  std::array<double, 3> filled{0, 0, 0};
  const double n = static_cast<double>(ids.size());
  for (std::size_t c : order) {
    if (members[c].empty()) continue;
    std::size_t part = 0;
    double best_deficit = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < 3; ++p) {
      const double deficit = spec.ratios[p] * n - filled[p];
      if (deficit > best_deficit + 1e-12) {
        best_deficit = deficit;
        part = p;
      }
    }
    filled[part] += static_cast<double>(members[c].size());
    auto& dst = part == 0 ? out.train : (part == 1 ? out.val : out.test);
    for (std::size_t i : members[c]) {
      dst.push_back(ids[i]);
      out.clusters[ids[i]] = c;
    }
  }
  detail::require_nonempty_parts(out);
  return out;
}

inline DatasetSplit domain_split(const std::vector<Table>& corpus,
                                 const std::map<std::string, std::vector<double>>& embeddings,
                                 const SplitSpec& spec) {
  return domain_split(detail::table_names(corpus), embeddings, spec);
}

/// Hashed character-trigram embedding of a name, L2-normalised. The name is
/// lower-cased and wrapped in boundary markers before slicing.
inline std::vector<double> name_embedding(std::string_view name, std::size_t dim = 64) {
  require(!name.empty(), ErrorKind::Usage, "name_embedding: empty name");
  require(dim >= 8, ErrorKind::Usage, "name_embedding: dim must be >= 8");
  std::string padded = "^";
  for (char c : name) padded.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  padded.push_back('$');
  std::vector<double> v(dim, 0.0);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i)
    v[detail::fnv1a(std::string_view(padded).substr(i, 3)) % dim] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

/// Parses `name<TAB>v1,v2,...` lines.
inline std::map<std::string, std::vector<double>> parse_embeddings(std::string_view text) {
  std::map<std::string, std::vector<double>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto tab = line.find('\t');
    require(tab != std::string_view::npos, ErrorKind::Format,
            "embedding line " + std::to_string(line_no) + ": missing TAB");
    std::vector<double> vec;
    std::string_view rest = line.substr(tab + 1);
    while (true) {
      auto comma = rest.find(',');
      auto v = csv::parse_number(rest.substr(0, comma));
      require(v.has_value(), ErrorKind::Format,
              "embedding line " + std::to_string(line_no) + ": bad number");
      vec.push_back(*v);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    out[std::string(line.substr(0, tab))] = std::move(vec);
  }
  return out;
}

inline std::map<std::string, std::vector<double>> load_embeddings(const std::string& path) {
  return parse_embeddings(csv::read_file(path));
}

/// Embeddings for each name: external entries win, hashing fallback fills the rest.
inline std::map<std::string, std::vector<double>> embed_names(
    const std::vector<std::string>& names, std::size_t dim,
    const std::map<std::string, std::vector<double>>& external = {}) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& n : names) {
    auto it = external.find(n);
    out[n] = it != external.end() ? it->second : name_embedding(n, dim);
  }
  return out;
}

struct PartStats {
  std::size_t tables = 0;
  double avg_columns = 0.0;
  double avg_rows = 0.0;
};

struct CorpusStats {
  PartStats train, val, test, all;
};

inline CorpusStats dataset_stats(const DatasetSplit& split, const std::vector<Table>& corpus) {
  std::map<std::string, const Table*> by_name;
  for (const auto& t : corpus) by_name[t.name] = &t;
  auto part_stats = [&](const std::vector<std::string>& ids) {
    PartStats s;
    for (const auto& id : ids) {
      auto it = by_name.find(id);
      require(it != by_name.end(), ErrorKind::Data, "dangling table id '" + id + "'");
      s.avg_columns += static_cast<double>(it->second->n_cols());
      s.avg_rows += static_cast<double>(it->second->n_rows());
    }
    s.tables = ids.size();
    if (s.tables) {
      s.avg_columns /= static_cast<double>(s.tables);
      s.avg_rows /= static_cast<double>(s.tables);
    }
    return s;
  };
  CorpusStats cs{part_stats(split.train), part_stats(split.val), part_stats(split.test), {}};
  std::vector<std::string> all = split.train;
  all.insert(all.end(), split.val.begin(), split.val.end());
  all.insert(all.end(), split.test.begin(), split.test.end());
  cs.all = part_stats(all);
  return cs;
}

inline nlohmann::json to_json(const PartStats& s) {
  return {{"tables", s.tables}, {"avg_columns", s.avg_columns}, {"avg_rows", s.avg_rows}};
}

inline nlohmann::json to_json(const CorpusStats& s) {
  return {{"train", to_json(s.train)},
          {"val", to_json(s.val)},
          {"test", to_json(s.test)},
          {"all", to_json(s.all)},
          {"cleaned_tables",
           std::to_string(s.train.tables) + "/" + std::to_string(s.val.tables) + "/" +
               std::to_string(s.test.tables)}};
}

inline nlohmann::json to_json(const SplitSpec& spec) {
  nlohmann::json j = {{"ratios", spec.ratios},
                      {"seed", spec.seed},
                      {"mode", spec.mode == SplitMode::Random ? "random" : "domain"}};
  if (spec.mode == SplitMode::Domain) j["k"] = spec.clusters;
  return j;
}

inline nlohmann::json to_json(const DatasetSplit& s) {
  nlohmann::json clusters = nlohmann::json::object();
  for (const auto& [id, c] : s.clusters) clusters[id] = c;
  return {{"spec", to_json(s.spec)},
          {"train", s.train},
          {"val", s.val},
          {"test", s.test},
          {"clusters", clusters}};
}

inline DatasetSplit split_from_json(const nlohmann::json& j) {
  try {
    DatasetSplit s;
    const auto& spec = j.at("spec");
    s.spec.ratios = spec.at("ratios").get<std::array<double, 3>>();
    s.spec.seed = spec.at("seed").get<std::uint64_t>();
    s.spec.mode = spec.at("mode").get<std::string>() == "domain" ? SplitMode::Domain
                                                                 : SplitMode::Random;
    if (spec.contains("k")) s.spec.clusters = spec.at("k").get<std::size_t>();
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    if (j.contains("clusters"))
      for (const auto& [id, c] : j.at("clusters").items()) s.clusters[id] = c.get<std::size_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("bad split manifest: ") + e.what());
  }
}

}  // namespace tabfm
