#pragma once

#include <string>
#include <vector>

#include "tabfm/core/rng.hpp"
#include "tabfm/data/table.hpp"

namespace fixture {

/// Parses CSV text and infers the schema, like the ingest path does.
inline tabfm::Table csv_table(const std::string& text, const std::string& name = "t") {
  return tabfm::infer_schema(tabfm::parse_csv_table(text, name));
}

/// Two numeric columns drawn from two-mode mixtures plus two categoricals
/// whose labels depend on the numerics.
inline tabfm::Table mixed_table(std::size_t rows, std::uint64_t seed, const std::string& name = "mixed",
                                double shift = 0.0) {
  tabfm::Rng rng(seed);
  std::string text = "x,y,colour,size\n";
  const char* colours[] = {"red", "green", "blue"};
  for (std::size_t i = 0; i < rows; ++i) {
    const bool hi = rng.uniform() < 0.4;
    const double x = hi ? rng.normal(8.0 + shift, 1.0) : rng.normal(0.0 + shift, 0.7);
    const double y = rng.uniform() < 0.5 ? rng.normal(-3.0, 0.5) : rng.normal(2.0 + 0.2 * x, 0.8);
    const std::string colour = hi ? colours[rng.index(2)] : colours[2];
    const std::string size = y > 0 ? (rng.uniform() < 0.8 ? "L" : "S") : "S";
    text += tabfm::csv::format_number(x) + "," + tabfm::csv::format_number(y) + "," + colour + "," +
            size + "\n";
  }
  return csv_table(text, name);
}

}  // namespace fixture
