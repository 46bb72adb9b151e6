#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/data/table.hpp"
#include "tabfm/transform/gmm.hpp"

namespace tabfm::transform {

inline std::vector<double> encode_categorical(const std::vector<std::string>& order,
                                              const std::string& label) {
  require(!order.empty(), ErrorKind::Data, "encode_categorical: empty category order");
  std::vector<double> v(order.size(), 0.0);
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i] == label) {
      v[i] = 1.0;
      return v;
    }
  fail(ErrorKind::Data, "encode_categorical: unknown label '" + label + "'");
}

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;  // ties keep the lowest index
  return best;
}

inline const std::string& decode_categorical(const std::vector<std::string>& order,
                                             std::span<const double> v) {
  require(!order.empty(), ErrorKind::Data, "decode_categorical: empty category order");
  require(v.size() == order.size(), ErrorKind::Shape, "decode_categorical: width mismatch");
  return order[argmax(v)];
}

enum class SpanKind { Alpha, Beta, Category };

/// One block of the encoded row.
struct OutputSpan {
  std::size_t start = 0;
  std::size_t width = 0;
  SpanKind kind = SpanKind::Alpha;
  std::size_t column = 0;  // schema column index
};

struct ColumnTransform {
  std::size_t column = 0;  // schema column index
  bool numeric = true;
  GmmParams gmm;                        // numeric
  std::vector<std::string> categories;  // categorical
  std::size_t start = 0;
  std::size_t width = 0;  // 1 + active modes, or |categories|
};

/// Row-major encoded rows plus the span index that describes them.
struct TransformedMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::vector<OutputSpan> spans;

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

struct TransformOptions {
  std::size_t modes = 10;
  GmmOptions gmm;
};

/// Fitted per-column transforms for one table. Numeric columns are laid out
/// first, then categorical ones, each group in schema order.
class TableTransformer {
 public:
  static TableTransformer fit(const Table& table, const TransformOptions& opt, std::uint64_t seed) {
    require(!table.has_nulls(), ErrorKind::Data, "transform: table '" + table.name + "' has nulls");
    TableTransformer tt;
    tt.table_name_ = table.name;
    tt.schema_ = table.columns;
    Rng rng(seed);
    std::size_t offset = 0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < table.n_cols(); ++j) {
        const auto& col = table.columns[j];
        require(!col.kind.is_rejected(), ErrorKind::Data,
                "transform: rejected column '" + col.name + "' must be cleaned first");
        if (col.kind.is_numerical() != (pass == 0)) continue;
        ColumnTransform ct;
        ct.column = j;
        ct.numeric = col.kind.is_numerical();
        ct.start = offset;
        if (ct.numeric) {
          const auto values = table.numeric_column(j);
          ct.gmm = fit_gmm(values, opt.modes, rng.substream("gmm", j).next_u64(), opt.gmm);
          ct.width = 1 + ct.gmm.n_active();
        } else {
          ct.categories = col.categories;
          require(!ct.categories.empty(), ErrorKind::Data,
                  "transform: categorical column '" + col.name + "' has no categories");
          ct.width = ct.categories.size();
        }
        offset += ct.width;
        tt.columns_.push_back(std::move(ct));
      }
    }
    tt.width_ = offset;
    return tt;
  }

  std::size_t width() const { return width_; }
  const std::vector<ColumnTransform>& columns() const { return columns_; }
  const std::vector<ColumnMeta>& schema() const { return schema_; }
  const std::string& table_name() const { return table_name_; }

  std::size_t n_numeric() const {
    std::size_t n = 0;
    for (const auto& c : columns_) n += c.numeric ? 1 : 0;
    return n;
  }
  std::size_t n_categorical() const { return columns_.size() - n_numeric(); }

  std::vector<OutputSpan> spans() const {
    std::vector<OutputSpan> out;
    for (const auto& c : columns_) {
      if (c.numeric) {
        out.push_back({c.start, 1, SpanKind::Alpha, c.column});
        out.push_back({c.start + 1, c.width - 1, SpanKind::Beta, c.column});
      } else {
        out.push_back({c.start, c.width, SpanKind::Category, c.column});
      }
    }
    return out;
  }

  TransformedMatrix encode(const Table& table, Rng& rng) const {
    require(table.n_cols() == schema_.size(), ErrorKind::Shape, "encode: schema width mismatch");
    TransformedMatrix m;
    m.rows = table.n_rows();
    m.cols = width_;
    m.data.assign(m.rows * m.cols, 0.0);
    m.spans = spans();
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
      const auto& row = table.rows[r];
      for (const auto& c : columns_) {
        const auto& cell = row[c.column];
        if (c.numeric) {
          const double* v = std::get_if<double>(&cell);
          require(v != nullptr, ErrorKind::Data, "encode: non-numeric cell in numeric column");
          const auto code = encode_numeric(c.gmm, *v, rng);
          m.at(r, c.start) = code.alpha;
          m.at(r, c.start + 1 + code.mode) = 1.0;
        } else {
          const auto* s = std::get_if<std::string>(&cell);
          require(s != nullptr, ErrorKind::Data, "encode: null or numeric cell in categorical column");
          bool found = false;
          for (std::size_t i = 0; i < c.categories.size(); ++i)
            if (c.categories[i] == *s) {
              m.at(r, c.start + i) = 1.0;
              found = true;
              break;
            }
          require(found, ErrorKind::Data, "encode: unknown category '" + *s + "'");
        }
      }
    }
    return m;
  }

  /// Inverts encode; mode and category blocks are read by argmax.
  Table decode(std::span<const double> data, std::size_t rows) const {
    require(data.size() == rows * width_, ErrorKind::Shape, "decode: width mismatch");
    Table t;
    t.name = table_name_;
    t.columns = schema_;
    t.rows.assign(rows, Row(schema_.size()));
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = data.subspan(r * width_, width_);
      for (const auto& c : columns_) {
        if (c.numeric) {
          const auto mode = argmax(row.subspan(c.start + 1, c.width - 1));
          t.rows[r][c.column] = decode_numeric_mode(c.gmm, row[c.start], mode);
        } else {
          t.rows[r][c.column] = decode_categorical(c.categories, row.subspan(c.start, c.width));
        }
      }
    }
    return t;
  }

  Table decode(const TransformedMatrix& m) const {
    require(m.cols == width_, ErrorKind::Shape, "decode: width mismatch");
    return decode(m.data, m.rows);
  }

  nlohmann::json to_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : columns_) {
      nlohmann::json e = {{"column", c.column}, {"numeric", c.numeric}, {"start", c.start},
                          {"width", c.width}};
      if (c.numeric)
        e["gmm"] = transform::to_json(c.gmm);
      else
        e["categories"] = c.categories;
      cols.push_back(std::move(e));
    }
    nlohmann::json schema = nlohmann::json::array();
    for (const auto& m : schema_)
      schema.push_back({{"name", m.name},
                        {"kind", m.kind.is_numerical() ? "numerical" : "categorical"},
                        {"categories", m.categories}});
    return {{"table", table_name_}, {"width", width_}, {"schema", schema}, {"columns", cols}};
  }

  static TableTransformer from_json(const nlohmann::json& j) {
    try {
      TableTransformer tt;
      tt.table_name_ = j.at("table").get<std::string>();
      tt.width_ = j.at("width").get<std::size_t>();
      for (const auto& s : j.at("schema")) {
        ColumnMeta m;
        m.name = s.at("name").get<std::string>();
        m.kind = s.at("kind").get<std::string>() == "numerical" ? ColumnKind::numerical()
                                                                : ColumnKind::categorical();
        m.categories = s.at("categories").get<std::vector<std::string>>();
        tt.schema_.push_back(std::move(m));
      }
      for (const auto& e : j.at("columns")) {
        ColumnTransform c;
        c.column = e.at("column").get<std::size_t>();
        c.numeric = e.at("numeric").get<bool>();
        c.start = e.at("start").get<std::size_t>();
        c.width = e.at("width").get<std::size_t>();
        if (c.numeric)
          c.gmm = gmm_from_json(e.at("gmm"));
        else
          c.categories = e.at("categories").get<std::vector<std::string>>();
        tt.columns_.push_back(std::move(c));
      }
      return tt;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Format, std::string("bad transformer state: ") + e.what());
    }
  }

 private:
  std::string table_name_;
  std::vector<ColumnMeta> schema_;
  std::vector<ColumnTransform> columns_;
  std::size_t width_ = 0;
};

}  // namespace tabfm::transform
