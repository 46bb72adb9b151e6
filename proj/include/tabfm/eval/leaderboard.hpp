#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "tabfm/core/error.hpp"
#include "tabfm/eval/metrics.hpp"

namespace tabfm::eval {

struct MannWhitney {
  double u = 0;  // U statistic of the first sample
  double p = 1;  // two-sided
  bool exact = true;
};

namespace detail {

/// Midranks of the pooled sample, first sample first.
inline std::vector<double> midranks(const std::vector<double>& pooled) {
  std::vector<std::size_t> idx(pooled.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto x, auto y) { return pooled[x] < pooled[y]; });
  std::vector<double> ranks(pooled.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && pooled[idx[j + 1]] == pooled[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline void validate_samples(const std::vector<double>& a, const std::vector<double>& b) {
  require(!a.empty() && !b.empty(), ErrorKind::Data, "mann_whitney_u: empty sample");
}

inline double u_from_ranks(const std::vector<double>& ranks, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += ranks[i];
  return s - static_cast<double>(n) * static_cast<double>(n + 1) / 2.0;
}

}  // namespace detail

/// Exact permutation p-value: every split of the pooled midranks into groups
/// of the observed sizes is equally likely under the null.
inline double mann_whitney_exact_p(const std::vector<double>& a, const std::vector<double>& b) {
  detail::validate_samples(a, b);
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = detail::midranks(pooled);
  const std::size_t n = a.size(), N = pooled.size();
  const double mean = static_cast<double>(n) * static_cast<double>(b.size()) / 2.0;
  const double observed = std::abs(detail::u_from_ranks(ranks, n) - mean);
  const double shift = static_cast<double>(n) * static_cast<double>(n + 1) / 2.0;
  std::size_t hits = 0, total = 0;
  std::vector<std::size_t> pick(n);
  std::iota(pick.begin(), pick.end(), 0);
  while (true) {
    double s = 0;
    for (auto i : pick) s += ranks[i];
    ++total;
    if (std::abs(s - shift - mean) >= observed - 1e-9) ++hits;
    // next combination in lexicographic order
    std::size_t k = n;
    while (k > 0 && pick[k - 1] == N - n + k - 1) --k;
    if (k == 0) break;
    ++pick[k - 1];
    for (std::size_t i = k; i < n; ++i) pick[i] = pick[i - 1] + 1;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

/// Normal approximation with tie-corrected variance and continuity correction,
/// plus the Edgeworth kurtosis term (U is platykurtic, so the plain normal tail
/// is off by about 0.011 at n = m = 8).
inline double mann_whitney_normal_p(const std::vector<double>& a, const std::vector<double>& b) {
  detail::validate_samples(a, b);
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = detail::midranks(pooled);
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size()), N = n + m;
  const double u = detail::u_from_ranks(ranks, a.size());
  std::map<double, double> ties;
  for (double v : pooled) ties[v] += 1;
  double t = 0;
  for (const auto& [v, c] : ties) t += c * c * c - c;
  const double var = n * m / 12.0 * ((N + 1) - t / (N * (N - 1)));
  if (var <= 0) return 1.0;
  const double z = std::max(0.0, std::abs(u - n * m / 2.0) - 0.5) / std::sqrt(var);
  const double kurt = (n * n + m * m + n * m + n + m) / (20.0 * n * m * (N + 1));
  const double density = std::exp(-z * z / 2) / std::sqrt(2 * M_PI);
  const double p = std::erfc(z / std::sqrt(2.0)) - 2 * kurt * density * (z * z * z - 3 * z);
  return std::clamp(p, 0.0, 1.0);
}

inline constexpr std::size_t kExactLimit = 16;

inline MannWhitney mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
  detail::validate_samples(a, b);
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  MannWhitney r;
  r.u = detail::u_from_ranks(detail::midranks(pooled), a.size());
  r.exact = pooled.size() <= kExactLimit;
  r.p = r.exact ? mann_whitney_exact_p(a, b) : mann_whitney_normal_p(a, b);
  return r;
}

inline const std::string kFinetuned = "pretrained-finetuned";
inline const std::string kScratch = "scratch";

struct ReportKey {
  std::string split;
  std::string method;
  std::string regime;
  std::string table;
};

struct LeaderboardRow {
  std::string split, method, regime;
  std::size_t tables = 0;
  double shape_mean = 0, shape_std = 0, trend_mean = 0, trend_std = 0, overall_mean = 0, overall_std = 0;
  std::optional<double> p_value;  // finetuned vs scratch Overall, same for both regimes
};

struct Leaderboard {
  std::vector<LeaderboardRow> rows;

  static constexpr const char* kHeader =
      "split,method,regime,shape_mean,shape_std,trend_mean,trend_std,overall_mean,overall_std,p_value";

  std::string to_csv() const {
    std::ostringstream os;
    os << kHeader << "\n";
    char buf[64];
    auto num = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%.6f", v);
      return std::string(buf);
    };
    for (const auto& r : rows)
      os << r.split << "," << r.method << "," << r.regime << "," << num(r.shape_mean) << "," << num(r.shape_std)
         << "," << num(r.trend_mean) << "," << num(r.trend_std) << "," << num(r.overall_mean) << ","
         << num(r.overall_std) << "," << (r.p_value ? num(*r.p_value) : std::string()) << "\n";
    return os.str();
  }

  /// Fixed-width text table with std in brackets.
  std::string to_text() const {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-8s %-8s %-22s %-16s %-16s %-16s %s\n", "split", "method", "regime", "Shape",
                  "Trends", "Overall", "p-value");
    os << buf;
    for (const auto& r : rows) {
      auto cell = [](double m, double s) {
        char c[32];
        std::snprintf(c, sizeof(c), "%.3f (%.3f)", m, s);
        return std::string(c);
      };
      std::string p = "-";
      if (r.p_value) {
        char c[32];
        std::snprintf(c, sizeof(c), "%.4f", *r.p_value);
        p = c;
      }
      std::snprintf(buf, sizeof(buf), "%-8s %-8s %-22s %-16s %-16s %-16s %s\n", r.split.c_str(), r.method.c_str(),
                    r.regime.c_str(), cell(r.shape_mean, r.shape_std).c_str(),
                    cell(r.trend_mean, r.trend_std).c_str(), cell(r.overall_mean, r.overall_std).c_str(), p.c_str());
      os << buf;
    }
    return os.str();
  }
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double m = 0;
  for (double x : v) m += x;
  m /= n;
  if (v.size() < 2) return {m, 0.0};
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / (n - 1))};
}

}  // namespace detail

/// Means and sample standard deviations per (split, method, regime), with a
/// Mann-Whitney p-value comparing the two regimes' Overall scores.
inline Leaderboard build_leaderboard(const std::vector<std::pair<ReportKey, TableReport>>& reports) {
  using Group = std::tuple<std::string, std::string, std::string>;
  std::map<Group, std::map<std::string, const TableReport*>> groups;
  for (const auto& [key, rep] : reports) {
    auto& g = groups[{key.split, key.method, key.regime}];
    require(!g.count(key.table), ErrorKind::Data, "leaderboard: duplicate report for table " + key.table);
    g[key.table] = &rep;
  }
  // every regime of a (split, method) must cover the same tables
  std::map<std::pair<std::string, std::string>, std::set<std::string>> coverage;
  for (const auto& [g, tables] : groups) {
    std::set<std::string> names;
    for (const auto& [t, r] : tables) names.insert(t);
    auto [it, fresh] = coverage.emplace(std::pair(std::get<0>(g), std::get<1>(g)), names);
    require(fresh || it->second == names, ErrorKind::Data,
            "leaderboard: regimes of " + std::get<1>(g) + " on " + std::get<0>(g) + " cover different tables");
  }
  Leaderboard lb;
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<double>>> overall;
  for (const auto& [g, tables] : groups) {
    LeaderboardRow row;
    std::tie(row.split, row.method, row.regime) = g;
    std::vector<double> s, t, o;
    for (const auto& [name, r] : tables) {
      s.push_back(r->shape);
      t.push_back(r->trend.value_or(r->shape));
      o.push_back(r->overall);
    }
    row.tables = tables.size();
    std::tie(row.shape_mean, row.shape_std) = detail::mean_std(s);
    std::tie(row.trend_mean, row.trend_std) = detail::mean_std(t);
    std::tie(row.overall_mean, row.overall_std) = detail::mean_std(o);
    overall[{row.split, row.method}][row.regime] = o;
    lb.rows.push_back(row);
  }
  for (auto& row : lb.rows) {
    const auto& regimes = overall[{row.split, row.method}];
    auto ft = regimes.find(kFinetuned), sc = regimes.find(kScratch);
    if (ft != regimes.end() && sc != regimes.end()) row.p_value = mann_whitney_u(ft->second, sc->second).p;
  }
  return lb;
}

}  // namespace tabfm::eval
