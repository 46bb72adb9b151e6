#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tabfm/core/csv.hpp"
#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/data/table.hpp"

namespace tabfm::transform {

inline constexpr std::string_view kClauseSep = " and ";
inline constexpr std::string_view kIs = " is ";

/// Six significant digits, trailing zeros trimmed.
inline std::string render_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  std::string s(buf);
  if (s == "-0") s = "0";
  return s;
}

namespace detail {

inline bool needs_quotes(std::string_view s) {
  return s.empty() || s.find(kClauseSep) != std::string_view::npos ||
         s.find(kIs) != std::string_view::npos || s.find('"') != std::string_view::npos ||
         s.front() == ' ' ||
         s.back() == ' ';
}

inline std::string quote_token(std::string_view s) {
  if (!needs_quotes(s)) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

/// Splits on `sep` occurrences outside double quotes. With `first_only` the
/// result has at most two parts.
inline std::vector<std::string_view> split_top(std::string_view s, std::string_view sep,
                                               bool first_only) {
  std::vector<std::string_view> parts;
  bool quoted = false;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < s.size();) {
    if (s[i] == '"') {
      quoted = !quoted;
      ++i;
      continue;
    }
    if (!quoted && s.compare(i, sep.size(), sep) == 0 &&
        !(first_only && !parts.empty())) {
      parts.push_back(s.substr(begin, i - begin));
      i += sep.size();
      begin = i;
      continue;
    }
    ++i;
  }
  parts.push_back(s.substr(begin));
  return parts;
}

inline std::optional<std::string> unquote_token(std::string_view s) {
  if (s.empty() || s.front() != '"') return std::string(s);
  if (s.size() < 2 || s.back() != '"') return std::nullopt;
  std::string out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    if (s[i] == '"') {
      if (i + 2 < s.size() && s[i + 1] == '"') {
        out.push_back('"');
        ++i;
      } else {
        return std::nullopt;
      }
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

}  // namespace detail

/// Renders a row as `<name> is <value>` clauses joined by ` and `. With
/// `permute` the clause order is a uniform permutation drawn from rng.
inline std::string serialize_row_text(const std::vector<ColumnMeta>& schema, const Row& row,
                                      bool permute, Rng* rng) {
  require(row.size() == schema.size(), ErrorKind::Shape, "serialize_row_text: row width mismatch");
  std::vector<std::size_t> order(schema.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (permute) {
    require(rng != nullptr, ErrorKind::Usage, "serialize_row_text: permutation needs an rng");
    rng->shuffle(order);
  }
  std::string out;
  for (std::size_t n = 0; n < order.size(); ++n) {
    const auto j = order[n];
    const auto& cell = row[j];
    require(!is_null(cell), ErrorKind::Data, "serialize_row_text: null cell in " + schema[j].name);
    std::string value;
    if (const double* v = std::get_if<double>(&cell))
      value = render_number(*v);
    else
      value = std::get<std::string>(cell);
    if (n) out += kClauseSep;
    out += detail::quote_token(schema[j].name);
    out += kIs;
    out += detail::quote_token(value);
  }
  return out;
}

struct RowParse {
  std::optional<Row> row;
  std::string failure;  // reason code when row is empty

  explicit operator bool() const { return row.has_value(); }
};

/// Parses a sentence back into a row of the given schema. Never throws on
/// malformed text; the failure reason is returned instead.
inline RowParse parse_row_text(const std::vector<ColumnMeta>& schema, std::string_view sentence) {
  auto failed = [](std::string why) { return RowParse{std::nullopt, std::move(why)}; };
  Row row(schema.size());
  std::vector<bool> seen(schema.size(), false);
  for (auto clause : detail::split_top(sentence, kClauseSep, false)) {
    const auto kv = detail::split_top(clause, kIs, true);
    if (kv.size() != 2) return failed("malformed_clause");
    const auto name = detail::unquote_token(kv[0]);
    const auto value = detail::unquote_token(kv[1]);
    if (!name || !value) return failed("malformed_quotes");
    std::size_t j = schema.size();
    for (std::size_t k = 0; k < schema.size(); ++k)
      if (schema[k].name == *name) {
        j = k;
        break;
      }
    if (j == schema.size()) return failed("unknown_column");
    if (seen[j]) return failed("duplicate_column");
    seen[j] = true;
    if (schema[j].kind.is_numerical()) {
      const auto v = csv::parse_number(*value);
      if (!v) return failed("numeric_parse");
      row[j] = *v;
    } else {
      const auto& cats = schema[j].categories;
      if (std::find(cats.begin(), cats.end(), *value) == cats.end())
        return failed("unknown_category");
      row[j] = *value;
    }
  }
  for (bool s : seen)
    if (!s) return failed("missing_column");
  return RowParse{std::move(row), {}};
}

}  // namespace tabfm::transform
