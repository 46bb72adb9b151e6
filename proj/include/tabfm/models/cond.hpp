#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/transform/table_transformer.hpp"

namespace tabfm::models {

/// Where each categorical column lives, both inside the conditional vector and
/// inside the encoded row.
struct CondLayout {
  struct Block {
    std::size_t offset = 0;     // within cond
    std::size_t width = 0;      // category count
    std::size_t row_start = 0;  // within the encoded row
  };
  std::vector<Block> blocks;
  std::size_t width = 0;

  static CondLayout from_spans(const std::vector<transform::OutputSpan>& spans) {
    CondLayout l;
    for (const auto& s : spans)
      if (s.kind == transform::SpanKind::Category) {
        l.blocks.push_back({l.width, s.width, s.start});
        l.width += s.width;
      }
    return l;
  }

  std::size_t columns() const { return blocks.size(); }
};

/// All-zero vector with a single one at offset(i) + k.
inline std::vector<double> build_cond_vector(const CondLayout& layout, std::size_t i, std::size_t k) {
  require(i < layout.columns(), ErrorKind::Usage, "cond: column index out of range");
  require(k < layout.blocks[i].width, ErrorKind::Usage, "cond: category index out of range");
  std::vector<double> v(layout.width, 0.0);
  v[layout.blocks[i].offset + k] = 1.0;
  return v;
}

struct Condition {
  std::size_t column = 0;
  std::size_t category = 0;
};

/// Per-category row counts and row lists for training-by-sampling.
class CategoryIndex {
 public:
  CategoryIndex() = default;
  CategoryIndex(const CondLayout& layout, const transform::TransformedMatrix& m) : layout_(layout) {
    rows_.resize(layout.columns());
    for (std::size_t i = 0; i < layout.columns(); ++i) {
      const auto& b = layout.blocks[i];
      rows_[i].resize(b.width);
      for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t k = 0; k < b.width; ++k)
          if (m.at(r, b.row_start + k) == 1.0) {
            rows_[i][k].push_back(r);
            break;
          }
    }
    n_rows_ = m.rows;
  }

  const CondLayout& layout() const { return layout_; }
  std::size_t n_rows() const { return n_rows_; }
  std::size_t count(std::size_t i, std::size_t k) const { return rows_.at(i).at(k).size(); }

  std::vector<std::vector<double>> counts() const {
    std::vector<std::vector<double>> out;
    for (const auto& col : rows_) {
      std::vector<double> c;
      for (const auto& rs : col) c.push_back(static_cast<double>(rs.size()));
      out.push_back(std::move(c));
    }
    return out;
  }

  const std::vector<std::size_t>& rows(std::size_t i, std::size_t k) const { return rows_.at(i).at(k); }

 private:
  CondLayout layout_;
  std::vector<std::vector<std::vector<std::size_t>>> rows_;
  std::size_t n_rows_ = 0;
};

/// Column chosen uniformly, category from log(1 + count) weights.
inline Condition sample_condition(const std::vector<std::vector<double>>& counts, Rng& rng) {
  require(!counts.empty(), ErrorKind::Usage, "sample_condition: no categorical columns");
  const std::size_t i = rng.index(counts.size());
  std::vector<double> w(counts[i].size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::log1p(counts[i][k]);
  return {i, rng.categorical(w)};
}

/// Column chosen uniformly, category from raw training frequencies.
inline Condition sample_condition_empirical(const std::vector<std::vector<double>>& counts, Rng& rng) {
  require(!counts.empty(), ErrorKind::Usage, "sample_condition: no categorical columns");
  const std::size_t i = rng.index(counts.size());
  return {i, rng.categorical(counts[i])};
}

/// Uniform draw among rows whose category block i holds k.
inline std::size_t sample_real_conditioned(const CategoryIndex& index, const Condition& c, Rng& rng) {
  const auto& rows = index.rows(c.column, c.category);
  require(!rows.empty(), ErrorKind::Data, "sample_real_conditioned: no row matches the condition");
  return rows[rng.index(rows.size())];
}

}  // namespace tabfm::models
