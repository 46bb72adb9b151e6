#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <regex>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "tabfm/core/csv.hpp"
#include "tabfm/core/error.hpp"

namespace tabfm {

/// A table cell: null, a finite number, or a category label.
using Cell = std::variant<std::monostate, double, std::string>;

inline bool is_null(const Cell& c) { return std::holds_alternative<std::monostate>(c); }

class ColumnKind {
 public:
  enum class Tag { Numerical, Categorical, Rejected };

  static ColumnKind numerical() { return ColumnKind(Tag::Numerical, {}); }
  static ColumnKind categorical() { return ColumnKind(Tag::Categorical, {}); }
  static ColumnKind rejected(std::string reason) {
    require(!reason.empty(), ErrorKind::Usage, "rejected column kind needs a reason code");
    return ColumnKind(Tag::Rejected, std::move(reason));
  }

  Tag tag() const { return tag_; }
  bool is_numerical() const { return tag_ == Tag::Numerical; }
  bool is_categorical() const { return tag_ == Tag::Categorical; }
  bool is_rejected() const { return tag_ == Tag::Rejected; }
  const std::string& reason() const { return reason_; }

  std::string to_string() const {
    switch (tag_) {
      case Tag::Numerical:
        return "numerical";
      case Tag::Categorical:
        return "categorical";
      default:
        return "rejected(" + reason_ + ")";
    }
  }

  friend bool operator==(const ColumnKind&, const ColumnKind&) = default;

 private:
  ColumnKind(Tag tag, std::string reason) : tag_(tag), reason_(std::move(reason)) {}
  Tag tag_;
  std::string reason_;
};

struct ColumnMeta {
  std::string name;
  ColumnKind kind = ColumnKind::numerical();
  std::vector<std::string> categories;  // first-appearance order; Categorical only
  double null_fraction = 0.0;

  std::size_t category_index(const std::string& label) const {
    auto it = std::find(categories.begin(), categories.end(), label);
    require(it != categories.end(), ErrorKind::Data,
            "unknown category '" + label + "' in column '" + name + "'");
    return static_cast<std::size_t>(it - categories.begin());
  }

  friend bool operator==(const ColumnMeta&, const ColumnMeta&) = default;
};

using Row = std::vector<Cell>;

struct Table {
  std::string name;
  std::vector<ColumnMeta> columns;
  std::vector<Row> rows;

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return columns.size(); }

  std::size_t column_index(const std::string& col) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j].name == col) return j;
    fail(ErrorKind::Data, "no column '" + col + "' in table '" + name + "'");
  }

  std::vector<double> numeric_column(std::size_t j) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows)
      if (const double* v = std::get_if<double>(&r[j])) out.push_back(*v);
    return out;
  }

  std::vector<std::string> label_column(std::size_t j) const {
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (const auto& r : rows)
      if (const auto* v = std::get_if<std::string>(&r[j])) out.push_back(*v);
    return out;
  }

  /// Checks the structural invariants; throws on the first violation.
  void validate() const {
    for (const auto& c : columns) {
      require(c.null_fraction >= 0.0 && c.null_fraction <= 1.0, ErrorKind::Data,
              "null fraction out of range in column " + c.name);
      require(!c.kind.is_numerical() || c.categories.empty(), ErrorKind::Data,
              "numerical column with categories: " + c.name);
      std::vector<std::string> sorted = c.categories;
      std::sort(sorted.begin(), sorted.end());
      require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorKind::Data,
              "duplicate category labels in column " + c.name);
    }
    for (const auto& r : rows) {
      require(r.size() == columns.size(), ErrorKind::Data, "ragged row in table " + name);
      for (std::size_t j = 0; j < r.size(); ++j) {
        const auto& col = columns[j];
        if (is_null(r[j])) continue;
        if (col.kind.is_numerical()) {
          const double* v = std::get_if<double>(&r[j]);
          require(v && std::isfinite(*v), ErrorKind::Data, "non-finite numeric cell in " + col.name);
        } else if (col.kind.is_categorical()) {
          const auto* s = std::get_if<std::string>(&r[j]);
          require(s && std::find(col.categories.begin(), col.categories.end(), *s) !=
                           col.categories.end(),
                  ErrorKind::Data, "cell outside category list in " + col.name);
        }
      }
    }
  }

  bool has_nulls() const {
    for (const auto& r : rows)
      for (const auto& c : r)
        if (is_null(c)) return true;
    return false;
  }
};

/// Recomputes categories (first-appearance order) and null fraction for column j.
inline void refresh_column_meta(Table& t, std::size_t j) {
  auto& col = t.columns[j];
  col.categories.clear();
  std::size_t nulls = 0;
  if (col.kind.is_categorical()) {
    std::unordered_map<std::string, bool> seen;
    for (const auto& r : t.rows) {
      if (const auto* s = std::get_if<std::string>(&r[j])) {
        if (seen.emplace(*s, true).second) col.categories.push_back(*s);
      }
    }
  }
  for (const auto& r : t.rows) nulls += is_null(r[j]) ? 1 : 0;
  col.null_fraction = t.rows.empty() ? 0.0 : static_cast<double>(nulls) / t.rows.size();
}

inline constexpr double kNumericParseThreshold = 0.95;

/// Types a header plus raw records by per-column majority parse.
inline Table table_from_records(std::string name, const csv::Record& header,
                                const std::vector<csv::Record>& records) {
  require(!records.empty(), ErrorKind::Data, "table '" + name + "' has zero data rows");
  for (std::size_t i = 0; i < records.size(); ++i)
    require(records[i].size() == header.size(), ErrorKind::Data,
            "ragged rows in '" + name + "': row " + std::to_string(i + 1) + " has " +
                std::to_string(records[i].size()) + " cells, header has " +
                std::to_string(header.size()));

  Table t;
  t.name = std::move(name);
  t.rows.assign(records.size(), Row(header.size()));
  for (std::size_t j = 0; j < header.size(); ++j) {
    std::size_t non_null = 0, parsed = 0;
    std::vector<std::optional<double>> nums(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i][j].empty()) continue;
      ++non_null;
      nums[i] = csv::parse_number(records[i][j]);
      if (nums[i]) ++parsed;
    }
    const bool numeric =
        non_null == 0 || static_cast<double>(parsed) >= kNumericParseThreshold * non_null;
    ColumnMeta meta;
    meta.name = header[j];
    meta.kind = numeric ? ColumnKind::numerical() : ColumnKind::categorical();
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i][j].empty()) continue;
      if (numeric) {
        if (nums[i]) t.rows[i][j] = *nums[i];  // stray tokens become null
      } else {
        t.rows[i][j] = records[i][j];
      }
    }
    t.columns.push_back(std::move(meta));
  }
  for (std::size_t j = 0; j < t.columns.size(); ++j) refresh_column_meta(t, j);
  return t;
}

inline Table parse_csv_table(std::string_view text, std::string name) {
  auto records = csv::parse(text);
  require(!records.empty(), ErrorKind::Data, "csv '" + name + "' has no header");
  csv::Record header = std::move(records.front());
  records.erase(records.begin());
  return table_from_records(std::move(name), header, records);
}

/// Reads an RFC-4180 CSV whose first line is a header.
inline Table ingest_csv(const std::string& path, std::string name) {
  return parse_csv_table(csv::read_file(path), std::move(name));
}

inline std::string cell_text(const Cell& c) {
  if (const double* v = std::get_if<double>(&c)) return csv::format_number(*v);
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  return {};
}

inline std::string to_csv(const Table& t) {
  std::vector<csv::Record> out;
  out.reserve(t.rows.size() + 1);
  csv::Record header;
  for (const auto& c : t.columns) header.push_back(c.name);
  out.push_back(std::move(header));
  for (const auto& r : t.rows) {
    csv::Record rec;
    for (const auto& c : r) rec.push_back(cell_text(c));
    out.push_back(std::move(rec));
  }
  return csv::write(out);
}

namespace detail {

inline bool looks_like_url(const std::string& s) {
  static const std::regex re(R"(^\s*((https?|ftp)://|www\.)\S+)", std::regex::icase);
  return std::regex_search(s, re);
}

inline bool looks_like_path(const std::string& s) {
  static const std::regex abs_or_rel(R"(^\s*(/|\./|\.\./|~/|[A-Za-z]:\\)\S*)");
  static const std::regex with_ext(R"(^[^\s]*[/\\][^\s/\\]+\.[A-Za-z0-9]{1,5}\s*$)");
  return std::regex_search(s, abs_or_rel) || std::regex_match(s, with_ext);
}

inline bool looks_like_phone(const std::string& s) {
  static const std::regex re(R"(^\s*\+?[0-9][0-9 ().\-]{5,18}[0-9]\s*$)");
  static const std::regex date(R"(^\s*(\d{4}-\d{1,2}-\d{1,2}|\d{1,2}[-/.]\d{1,2}[-/.]\d{4})\b)");
  if (!std::regex_match(s, re) || std::regex_search(s, date)) return false;
  const auto digits = std::count_if(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  const bool separated = s.find_first_of(" ()-.+") != std::string::npos;
  return digits >= 7 && separated;
}

}  // namespace detail

inline constexpr std::size_t kLongTextMedianChars = 50;
inline constexpr double kPatternRejectFraction = 0.5;
inline constexpr std::size_t kPatternSampleLimit = 1000;

/// Assigns each column a kind: keeps Numerical/Categorical from the majority
/// parse and rejects long-text, URL, path and phone-number columns. Also
/// re-enumerates categories in first-appearance order.
inline Table infer_schema(Table table) {
  require(!table.rows.empty() && !table.columns.empty(), ErrorKind::Data,
          "infer_schema on empty table '" + table.name + "'");
  for (std::size_t j = 0; j < table.columns.size(); ++j) {
    auto& col = table.columns[j];
    if (col.kind.is_rejected()) continue;
    refresh_column_meta(table, j);
    if (!col.kind.is_categorical()) continue;
    std::vector<std::size_t> lengths;
    std::size_t urls = 0, paths = 0, phones = 0, sampled = 0;
    for (const auto& r : table.rows) {
      const auto* s = std::get_if<std::string>(&r[j]);
      if (!s) continue;
      lengths.push_back(s->size());
      if (sampled < kPatternSampleLimit) {
        ++sampled;
        if (detail::looks_like_url(*s))
          ++urls;
        else if (detail::looks_like_path(*s))
          ++paths;
        else if (detail::looks_like_phone(*s))
          ++phones;
      }
    }
    if (lengths.empty()) continue;
    std::nth_element(lengths.begin(), lengths.begin() + lengths.size() / 2, lengths.end());
    const std::size_t median = lengths[lengths.size() / 2];
    const double limit = kPatternRejectFraction * static_cast<double>(sampled);
    std::string reason;
    if (median > kLongTextMedianChars)
      reason = "long_text";
    else if (urls > limit)
      reason = "url";
    else if (paths > limit)
      reason = "path";
    else if (phones > limit)
      reason = "phone";
    if (!reason.empty()) {
      col.kind = ColumnKind::rejected(reason);
      col.categories.clear();
    }
  }
  return table;
}

}  // namespace tabfm
