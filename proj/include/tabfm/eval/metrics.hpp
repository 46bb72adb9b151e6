#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabfm/core/error.hpp"
#include "tabfm/data/table.hpp"

namespace tabfm::eval {

/// 1 minus the two-sample Kolmogorov-Smirnov statistic.
inline double ks_shape(std::vector<double> real, std::vector<double> syn) {
  require(!real.empty() && !syn.empty(), ErrorKind::Data, "ks_shape: empty sample");
  std::sort(real.begin(), real.end());
  std::sort(syn.begin(), syn.end());
  const double nr = static_cast<double>(real.size()), ns = static_cast<double>(syn.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < real.size() || j < syn.size()) {
    double x;
    if (j == syn.size() || (i < real.size() && real[i] <= syn[j]))
      x = real[i];
    else
      x = syn[j];
    while (i < real.size() && real[i] <= x) ++i;
    while (j < syn.size() && syn[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / nr - static_cast<double>(j) / ns));
  }
  return 1.0 - d;
}

inline std::map<std::string, double> frequencies(const std::vector<std::string>& labels) {
  std::map<std::string, double> f;
  for (const auto& l : labels) f[l] += 1.0;
  for (auto& [k, v] : f) v /= static_cast<double>(labels.size());
  return f;
}

/// Half the L1 distance between two frequency maps over their union support.
template <typename Key>
double total_variation(const std::map<Key, double>& a, const std::map<Key, double>& b) {
  double s = 0.0;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    s += std::abs(v - (it == b.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : b)
    if (!a.count(k)) s += v;
  return 0.5 * s;
}

inline double tvd_shape(const std::vector<std::string>& real, const std::vector<std::string>& syn) {
  require(!real.empty() && !syn.empty(), ErrorKind::Data, "tvd_shape: empty sample");
  return std::clamp(1.0 - total_variation(frequencies(real), frequencies(syn)), 0.0, 1.0);
}

/// Sample correlation; 0 when either side has no variance.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), ErrorKind::Shape, "pearson: length mismatch");
  require(x.size() >= 2, ErrorKind::Data, "pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double trend_numeric(const std::vector<double>& real_x, const std::vector<double>& real_y,
                            const std::vector<double>& syn_x, const std::vector<double>& syn_y) {
  return 1.0 - std::abs(pearson(syn_x, syn_y) - pearson(real_x, real_y)) / 2.0;
}

inline double trend_categorical(const std::vector<std::string>& real_a, const std::vector<std::string>& real_b,
                                const std::vector<std::string>& syn_a, const std::vector<std::string>& syn_b) {
  require(real_a.size() == real_b.size() && syn_a.size() == syn_b.size(), ErrorKind::Shape,
          "trend_categorical: pair length mismatch");
  require(!real_a.empty() && !syn_a.empty(), ErrorKind::Data, "trend_categorical: empty sample");
  auto joint = [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::pair<std::string, std::string>, double> f;
    for (std::size_t i = 0; i < a.size(); ++i) f[{a[i], b[i]}] += 1.0;
    for (auto& [k, v] : f) v /= static_cast<double>(a.size());
    return f;
  };
  return std::clamp(1.0 - total_variation(joint(real_a, real_b), joint(syn_a, syn_b)), 0.0, 1.0);
}

/// Interior bin edges from the deciles of the real values. Edges at or below
/// the real minimum are dropped, so a constant column has a single bin.
inline std::vector<double> decile_edges(std::vector<double> real, std::size_t bins = 10) {
  require(!real.empty(), ErrorKind::Data, "bin_numeric: empty real sample");
  std::sort(real.begin(), real.end());
  std::vector<double> edges;
  for (std::size_t q = 1; q < bins; ++q) {
    const double pos = static_cast<double>(q) / static_cast<double>(bins) * static_cast<double>(real.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, real.size() - 1);
    const double e = real[lo] + (pos - static_cast<double>(lo)) * (real[hi] - real[lo]);
    if (e > real.front() && (edges.empty() || e > edges.back())) edges.push_back(e);
  }
  return edges;
}

/// Bin index of v: the number of edges at or below it.
inline std::size_t bin_of(const std::vector<double>& edges, double v) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
}

struct BinnedPair {
  std::vector<std::string> real, syn;
  std::vector<double> edges;
};

inline BinnedPair bin_numeric(const std::vector<double>& real, const std::vector<double>& syn, std::size_t bins = 10) {
  BinnedPair out;
  out.edges = decile_edges(real, bins);
  for (double v : real) out.real.push_back("bin" + std::to_string(bin_of(out.edges, v)));
  for (double v : syn) out.syn.push_back("bin" + std::to_string(bin_of(out.edges, v)));
  return out;
}

struct ColumnScore {
  std::string column;
  std::string metric;  // "ks" or "tvd"
  double score = 0;
};

struct PairScore {
  std::string a, b;
  std::string metric;  // "pearson", "contingency" or "binned"
  double score = 0;
  double real_value = 0;  // correlation for numeric pairs, otherwise 0
  double syn_value = 0;
};

struct TableReport {
  std::string table;
  std::vector<ColumnScore> shapes;
  std::vector<PairScore> trends;
  double shape = 0;
  std::optional<double> trend;  // undefined for single-column tables
  double overall = 0;
  std::size_t real_rows = 0;
  std::size_t syn_rows = 0;

  nlohmann::json to_json() const {
    nlohmann::json cols = nlohmann::json::array(), pairs = nlohmann::json::array();
    for (const auto& c : shapes) cols.push_back({{"column", c.column}, {"metric", c.metric}, {"score", c.score}});
    for (const auto& p : trends)
      pairs.push_back({{"a", p.a}, {"b", p.b}, {"metric", p.metric}, {"score", p.score},
                       {"real", p.real_value}, {"syn", p.syn_value}});
    nlohmann::json j = {{"table", table},     {"shape", shape},         {"overall", overall},
                        {"columns", cols},    {"pairs", pairs},         {"real_rows", real_rows},
                        {"syn_rows", syn_rows}, {"trend_defined", trend.has_value()}};
    j["trend"] = trend ? nlohmann::json(*trend) : nlohmann::json(nullptr);
    return j;
  }
};

inline void require_same_schema(const Table& real, const Table& syn) {
  require(real.n_cols() == syn.n_cols(), ErrorKind::Data, "table_report: column count differs");
  for (std::size_t j = 0; j < real.n_cols(); ++j) {
    require(real.columns[j].name == syn.columns[j].name, ErrorKind::Data,
            "table_report: column " + std::to_string(j) + " is '" + real.columns[j].name + "' vs '" +
                syn.columns[j].name + "'");
    require(real.columns[j].kind.is_numerical() == syn.columns[j].kind.is_numerical(), ErrorKind::Data,
            "table_report: column '" + real.columns[j].name + "' changes kind");
  }
}

/// Column Shapes, Column Trends and their mean for a synthetic table.
inline TableReport table_report(const Table& real, const Table& syn) {
  require_same_schema(real, syn);
  require(real.n_cols() > 0, ErrorKind::Data, "table_report: no columns");
  require(real.n_rows() > 0 && syn.n_rows() > 0, ErrorKind::Data, "table_report: empty table");
  TableReport rep;
  rep.table = real.name;
  rep.real_rows = real.n_rows();
  rep.syn_rows = syn.n_rows();
  const std::size_t m = real.n_cols();
  std::vector<std::vector<double>> rn(m), sn(m);
  std::vector<std::vector<std::string>> rc(m), sc(m);
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const bool num = real.columns[j].kind.is_numerical();
    ColumnScore cs{real.columns[j].name, num ? "ks" : "tvd", 0.0};
    if (num) {
      rn[j] = real.numeric_column(j);
      sn[j] = syn.numeric_column(j);
      require(rn[j].size() == real.n_rows() && sn[j].size() == syn.n_rows(), ErrorKind::Data,
              "table_report: nulls in column '" + cs.column + "'");
      cs.score = ks_shape(rn[j], sn[j]);
    } else {
      rc[j] = real.label_column(j);
      sc[j] = syn.label_column(j);
      require(rc[j].size() == real.n_rows() && sc[j].size() == syn.n_rows(), ErrorKind::Data,
              "table_report: nulls in column '" + cs.column + "'");
      cs.score = tvd_shape(rc[j], sc[j]);
    }
    total += cs.score;
    rep.shapes.push_back(cs);
  }
  rep.shape = total / static_cast<double>(m);
  if (m == 1) {
    rep.overall = rep.shape;
    return rep;
  }
  double trend_total = 0.0;
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a + 1; b < m; ++b) {
      const bool na = real.columns[a].kind.is_numerical(), nb = real.columns[b].kind.is_numerical();
      PairScore ps{real.columns[a].name, real.columns[b].name, "", 0.0, 0.0, 0.0};
      if (na && nb) {
        ps.metric = "pearson";
        if (real.n_rows() >= 2 && syn.n_rows() >= 2) {
          ps.real_value = pearson(rn[a], rn[b]);
          ps.syn_value = pearson(sn[a], sn[b]);
        }
        ps.score = 1.0 - std::abs(ps.syn_value - ps.real_value) / 2.0;
      } else if (!na && !nb) {
        ps.metric = "contingency";
        ps.score = trend_categorical(rc[a], rc[b], sc[a], sc[b]);
      } else {
        ps.metric = "binned";
        const std::size_t num = na ? a : b, cat = na ? b : a;
        const auto binned = bin_numeric(rn[num], sn[num]);
        ps.score = trend_categorical(binned.real, rc[cat], binned.syn, sc[cat]);
      }
      trend_total += ps.score;
      rep.trends.push_back(ps);
    }
  rep.trend = trend_total / static_cast<double>(rep.trends.size());
  rep.overall = (rep.shape + *rep.trend) / 2.0;
  return rep;
}

/// Per-column histograms of real and synthetic values on shared bins:
/// decile edges plus the pooled range for numeric columns, categories for
/// categorical ones.
inline nlohmann::json histograms(const Table& real, const Table& syn) {
  require_same_schema(real, syn);
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t j = 0; j < real.n_cols(); ++j) {
    nlohmann::json h = {{"column", real.columns[j].name}};
    if (real.columns[j].kind.is_numerical()) {
      const auto r = real.numeric_column(j), s = syn.numeric_column(j);
      const auto edges = r.empty() ? std::vector<double>{} : decile_edges(r);
      std::vector<std::size_t> rc(edges.size() + 1, 0), sc(edges.size() + 1, 0);
      for (double v : r) ++rc[bin_of(edges, v)];
      for (double v : s) ++sc[bin_of(edges, v)];
      h["kind"] = "numerical";
      h["edges"] = edges;
      h["real"] = rc;
      h["syn"] = sc;
    } else {
      std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
      for (const auto& v : real.label_column(j)) ++counts[v].first;
      for (const auto& v : syn.label_column(j)) ++counts[v].second;
      std::vector<std::string> cats;
      std::vector<std::size_t> rc, sc;
      for (const auto& [k, c] : counts) {
        cats.push_back(k);
        rc.push_back(c.first);
        sc.push_back(c.second);
      }
      h["kind"] = "categorical";
      h["categories"] = cats;
      h["real"] = rc;
      h["syn"] = sc;
    }
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace tabfm::eval
