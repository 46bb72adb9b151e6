#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "tabfm/core/error.hpp"
#include "tabfm/data/table.hpp"

namespace tabfm::cleaning {

struct CleaningConfig {
  double category_uniqueness_max = 0.90;
  double min_avg_category_freq = 0.03;
  double max_null_fraction = 0.50;
  double max_rejected_column_fraction = 0.90;
  std::size_t min_columns = 2;
  std::size_t min_rows = 10;

  void validate() const {
    for (double v : {category_uniqueness_max, min_avg_category_freq, max_null_fraction,
                     max_rejected_column_fraction})
      require(v > 0.0 && v <= 1.0, ErrorKind::Usage, "cleaning thresholds must be in (0,1]");
  }
};

/// Per-column view used by the rule predicates.
struct ColumnView {
  const ColumnMeta& meta;
  std::vector<const Cell*> cells;

  static ColumnView of(const Table& t, std::size_t j) {
    ColumnView v{t.columns[j], {}};
    v.cells.reserve(t.rows.size());
    for (const auto& r : t.rows) v.cells.push_back(&r[j]);
    return v;
  }

  std::size_t non_null() const {
    return static_cast<std::size_t>(
        std::count_if(cells.begin(), cells.end(), [](const Cell* c) { return !is_null(*c); }));
  }
};

/// Identity columns: all non-null values distinct and either an id-like name
/// or a contiguous run of integers.
inline bool detect_identity(const ColumnView& col) {
  std::set<std::string> labels;
  std::vector<double> nums;
  std::size_t non_null = 0;
  for (const Cell* c : col.cells) {
    if (is_null(*c)) continue;
    ++non_null;
    if (const double* v = std::get_if<double>(c))
      nums.push_back(*v);
    else
      labels.insert(std::get<std::string>(*c));
  }
  if (non_null < 2) return false;
  std::sort(nums.begin(), nums.end());
  const bool distinct = std::adjacent_find(nums.begin(), nums.end()) == nums.end() &&
                        labels.size() + nums.size() == non_null;
  if (!distinct) return false;
  static const std::regex id_name(R"((^|_)id$)", std::regex::icase);
  if (std::regex_search(col.meta.name, id_name)) return true;
  if (nums.size() != non_null) return false;
  for (double v : nums)
    if (v != std::floor(v)) return false;
  return nums.back() - nums.front() + 1.0 == static_cast<double>(nums.size());
}

inline constexpr double kTimestampMatchFraction = 0.90;

namespace detail {

inline bool is_date_text(const std::string& s) {
  static const std::regex iso(
      R"(^\s*\d{4}-\d{2}-\d{2}([T ]\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?\s*$)");
  static const std::regex us(R"(^\s*\d{1,2}/\d{1,2}/\d{4}(\s+\d{1,2}:\d{2}(:\d{2})?)?\s*$)");
  static const std::regex eu(R"(^\s*\d{1,2}-\d{1,2}-\d{4}(\s+\d{1,2}:\d{2}(:\d{2})?)?\s*$)");
  return std::regex_match(s, iso) || std::regex_match(s, us) || std::regex_match(s, eu);
}

}  // namespace detail

/// Date/time columns: at least 90% of non-null cells match a date pattern, or
/// the column is named like a time field and holds epoch seconds.
inline bool detect_timestamp(const ColumnView& col) {
  static const std::regex time_name("date|time|stamp", std::regex::icase);
  const bool time_named = std::regex_search(col.meta.name, time_name);
  std::size_t non_null = 0, matches = 0;
  for (const Cell* c : col.cells) {
    if (is_null(*c)) continue;
    ++non_null;
    if (const auto* s = std::get_if<std::string>(c)) {
      if (detail::is_date_text(*s)) ++matches;
    } else if (const double* v = std::get_if<double>(c)) {
      if (time_named && *v >= 1e8 && *v <= 2e10) ++matches;
    }
  }
  return non_null > 0 && static_cast<double>(matches) >= kTimestampMatchFraction * non_null;
}

/// Keeps a categorical column unless it has too many distinct labels or its
/// mean per-category frequency (fraction of non-null rows) is too low.
inline bool categorical_sparsity_check(const ColumnView& col, const CleaningConfig& cfg) {
  std::map<std::string, std::size_t> counts;
  std::size_t non_null = 0;
  for (const Cell* c : col.cells)
    if (const auto* s = std::get_if<std::string>(c)) {
      ++counts[*s];
      ++non_null;
    }
  if (non_null == 0) return true;  // handled by imputation (all-null)
  const double n = static_cast<double>(non_null);
  if (static_cast<double>(counts.size()) / n > cfg.category_uniqueness_max) return false;
  double mean_freq = 0.0;
  for (const auto& [label, count] : counts) mean_freq += static_cast<double>(count) / n;
  mean_freq /= static_cast<double>(counts.size());
  return mean_freq >= cfg.min_avg_category_freq;
}

struct ImputeResult {
  bool dropped = false;
  std::string reason;  // set when dropped
  std::size_t imputed = 0;
};

/// Fills nulls in column j in place (mean / first modal category) or reports
/// that the column must be dropped.
inline ImputeResult impute_column(Table& t, std::size_t j, const CleaningConfig& cfg) {
  refresh_column_meta(t, j);
  const auto& col = t.columns[j];
  ImputeResult res;
  if (col.null_fraction >= 1.0) return {true, "all_null", 0};
  if (col.null_fraction > cfg.max_null_fraction) return {true, "too_many_nulls", 0};
  Cell fill;
  if (col.kind.is_numerical()) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : t.rows)
      if (const double* v = std::get_if<double>(&r[j])) {
        sum += *v;
        ++n;
      }
    fill = sum / static_cast<double>(n);
  } else {
    std::map<std::string, std::size_t> counts;
    for (const auto& r : t.rows)
      if (const auto* s = std::get_if<std::string>(&r[j])) ++counts[*s];
    std::string best;
    std::size_t best_count = 0;
    for (const auto& label : col.categories)  // appearance order breaks ties
      if (counts[label] > best_count) {
        best = label;
        best_count = counts[label];
      }
    fill = best;
  }
  for (auto& r : t.rows)
    if (is_null(r[j])) {
      r[j] = fill;
      ++res.imputed;
    }
  refresh_column_meta(t, j);
  return res;
}

enum class Action { Kept, Dropped, Imputed };

struct ColumnAction {
  std::string column;
  Action action = Action::Kept;
  std::string reason;  // drop reason
  std::size_t imputed = 0;
};

struct CleaningReport {
  std::string table;
  std::vector<ColumnAction> columns;  // one per original column, original order
  bool kept = true;
  std::string discard_reason;

  std::size_t dropped_count() const {
    return static_cast<std::size_t>(std::count_if(columns.begin(), columns.end(), [](const auto& c) {
      return c.action == Action::Dropped;
    }));
  }
  bool unchanged() const {
    return kept && std::all_of(columns.begin(), columns.end(),
                               [](const auto& c) { return c.action == Action::Kept; });
  }
};

inline nlohmann::json to_json(const CleaningReport& r) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : r.columns) {
    nlohmann::json e = {{"column", c.column}};
    switch (c.action) {
      case Action::Kept:
        e["action"] = "kept";
        break;
      case Action::Dropped:
        e["action"] = "dropped";
        e["reason"] = c.reason;
        break;
      case Action::Imputed:
        e["action"] = "imputed";
        e["count"] = c.imputed;
        break;
    }
    cols.push_back(std::move(e));
  }
  nlohmann::json j = {{"table", r.table}, {"columns", cols}};
  j["verdict"] = r.kept ? "kept" : "discarded";
  if (!r.kept) j["reason"] = r.discard_reason;
  return j;
}

struct CleaningOutcome {
  std::optional<Table> table;  // empty when discarded
  CleaningReport report;
};

/// Fixed rule order: schema rejection, identity, timestamp, categorical
/// sparsity, imputation. The table is discarded when too many columns were
/// dropped or too little survives.
inline CleaningOutcome clean_table(const Table& input, const CleaningConfig& cfg = {}) {
  cfg.validate();
  CleaningOutcome out;
  out.report.table = input.name;
  for (const auto& c : input.columns) out.report.columns.push_back({c.name, Action::Kept, {}, 0});

  std::vector<bool> drop(input.n_cols(), false);
  auto mark = [&](std::size_t j, const std::string& reason) {
    drop[j] = true;
    out.report.columns[j].action = Action::Dropped;
    out.report.columns[j].reason = reason;
  };
  for (std::size_t j = 0; j < input.n_cols(); ++j)
    if (input.columns[j].kind.is_rejected()) mark(j, "schema_" + input.columns[j].kind.reason());
  for (std::size_t j = 0; j < input.n_cols(); ++j)
    if (!drop[j] && detect_identity(ColumnView::of(input, j))) mark(j, "identity");
  for (std::size_t j = 0; j < input.n_cols(); ++j)
    if (!drop[j] && detect_timestamp(ColumnView::of(input, j))) mark(j, "timestamp");
  for (std::size_t j = 0; j < input.n_cols(); ++j)
    if (!drop[j] && input.columns[j].kind.is_categorical() &&
        !categorical_sparsity_check(ColumnView::of(input, j), cfg))
      mark(j, "sparse_categorical");

  Table t;
  t.name = input.name;
  std::vector<std::size_t> kept_idx;
  for (std::size_t j = 0; j < input.n_cols(); ++j)
    if (!drop[j]) {
      kept_idx.push_back(j);
      t.columns.push_back(input.columns[j]);
    }
  t.rows.reserve(input.n_rows());
  for (const auto& r : input.rows) {
    Row row;
    for (std::size_t j : kept_idx) row.push_back(r[j]);
    t.rows.push_back(std::move(row));
  }

  std::vector<std::size_t> survivors;
  for (std::size_t k = 0; k < kept_idx.size(); ++k) {
    auto res = impute_column(t, k, cfg);
    auto& entry = out.report.columns[kept_idx[k]];
    if (res.dropped) {
      entry.action = Action::Dropped;
      entry.reason = res.reason;
    } else {
      survivors.push_back(k);
      if (res.imputed) {
        entry.action = Action::Imputed;
        entry.imputed = res.imputed;
      }
    }
  }
  if (survivors.size() != t.n_cols()) {
    Table pruned;
    pruned.name = t.name;
    for (std::size_t k : survivors) pruned.columns.push_back(t.columns[k]);
    for (const auto& r : t.rows) {
      Row row;
      for (std::size_t k : survivors) row.push_back(r[k]);
      pruned.rows.push_back(std::move(row));
    }
    t = std::move(pruned);
  }

  const double dropped_frac = input.n_cols() == 0
                                  ? 1.0
                                  : static_cast<double>(out.report.dropped_count()) / input.n_cols();
  if (dropped_frac > cfg.max_rejected_column_fraction) {
    out.report.kept = false;
    out.report.discard_reason = "too_many_unqualified_columns";
  } else if (t.n_cols() < cfg.min_columns) {
    out.report.kept = false;
    out.report.discard_reason = "too_few_columns";
  } else if (t.n_rows() < cfg.min_rows) {
    out.report.kept = false;
    out.report.discard_reason = "too_few_rows";
  }
  if (out.report.kept) out.table = std::move(t);
  return out;
}

}  // namespace tabfm::cleaning
