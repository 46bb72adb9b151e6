#include <gtest/gtest.h>

#include <cmath>

#include "support/metric_oracle.hpp"
#include "support/tables.hpp"
#include "tabfm/eval/leaderboard.hpp"

using namespace tabfm;
using namespace tabfm::eval;

using Labels = std::vector<std::string>;

TEST(Ks, Examples) {
  EXPECT_EQ(ks_shape({1, 2, 3}, {3, 2, 1}), 1.0);
  EXPECT_EQ(ks_shape({0, 0, 0}, {1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(ks_shape({1, 2, 3, 4}, {1, 2, 3, 10}), 0.75);
  EXPECT_THROW(ks_shape({}, {1}), Error);
}

TEST(Ks, InvariantUnderMonotoneTransform) {
  Rng rng(1);
  std::vector<double> a, b, ea, eb;
  for (int i = 0; i < 50; ++i) a.push_back(rng.normal());
  for (int i = 0; i < 70; ++i) b.push_back(rng.normal(0.3, 1.2));
  for (double v : a) ea.push_back(std::exp(3 * v) + 1);
  for (double v : b) eb.push_back(std::exp(3 * v) + 1);
  EXPECT_EQ(ks_shape(a, b), ks_shape(ea, eb));
}

TEST(Tvd, Examples) {
  EXPECT_EQ(tvd_shape({"A", "B"}, {"B", "A"}), 1.0);
  EXPECT_DOUBLE_EQ(tvd_shape({"A", "B"}, {"A", "A", "A", "B"}), 0.75);
  EXPECT_EQ(tvd_shape({"A"}, {"B"}), 0.0);
  EXPECT_DOUBLE_EQ(tvd_shape({"A", "B", "B"}, {"A", "C"}), tvd_shape({"A", "C"}, {"A", "B", "B"}));
  EXPECT_THROW(tvd_shape({"A"}, {}), Error);
}

TEST(Pearson, Examples) {
  std::vector<double> x{1, 2, 3, 4, 5}, y, neg;
  for (double v : x) {
    y.push_back(2 * v + 1);
    neg.push_back(-v);
  }
  EXPECT_NEAR(pearson(x, y), 1.0, 1e-12);
  EXPECT_NEAR(pearson(x, neg), -1.0, 1e-12);
  EXPECT_NEAR(pearson({1, 2, 3}, {1, 3, 2}), 0.5, 1e-12);
  EXPECT_EQ(pearson({1, 1, 1}, {1, 2, 3}), 0.0);
  EXPECT_THROW(pearson({1, 2}, {1}), Error);
}

TEST(Trend, NumericExamples) {
  const std::vector<double> x{1, 2, 3}, up{1, 2, 3}, down{3, 2, 1}, flat{1, 1, 1};
  EXPECT_EQ(trend_numeric(x, up, x, up), 1.0);
  EXPECT_EQ(trend_numeric(x, down, x, up), 0.0);
  EXPECT_NEAR(trend_numeric(x, flat, {1, 2, 3}, {1, 3, 2}), 0.75, 1e-12);
}

TEST(Trend, CategoricalExamples) {
  const Labels ra{"0", "0", "1", "1"}, rb{"0", "1", "0", "1"};
  const Labels sa{"0", "1", "0", "1"}, sb{"0", "1", "0", "1"};
  EXPECT_EQ(trend_categorical(ra, rb, ra, rb), 1.0);
  EXPECT_DOUBLE_EQ(trend_categorical(ra, rb, sa, sb), 0.5);
  EXPECT_EQ(trend_categorical({"x"}, {"y"}, {"p"}, {"q"}), 0.0);
  EXPECT_EQ(trend_categorical(ra, rb, sa, sb), trend_categorical(rb, ra, sb, sa));
}

TEST(Binning, DecilesOfReal) {
  Rng rng(2);
  std::vector<double> real;
  for (int i = 0; i < 1000; ++i) real.push_back(rng.uniform());
  auto b = bin_numeric(real, {-5.0, 0.5, 7.0});
  EXPECT_EQ(b.edges.size(), 9u);
  std::map<std::string, int> counts;
  for (const auto& l : b.real) ++counts[l];
  EXPECT_EQ(counts.size(), 10u);
  for (const auto& [l, c] : counts) EXPECT_NEAR(c / 1000.0, 0.1, 0.02) << l;
  EXPECT_EQ(b.syn[0], "bin0");
  EXPECT_EQ(b.syn[2], "bin9");

  auto constant = bin_numeric({3, 3, 3, 3}, {3, 3});
  EXPECT_TRUE(constant.edges.empty());
  for (const auto& l : constant.real) EXPECT_EQ(l, constant.real[0]);
  EXPECT_THROW(bin_numeric({}, {1}), Error);
}

TEST(TableReport, SelfComparisonIsPerfect) {
  auto t = fixture::mixed_table(200, 3);
  auto r = table_report(t, t);
  EXPECT_EQ(r.shape, 1.0);
  EXPECT_EQ(*r.trend, 1.0);
  EXPECT_EQ(r.overall, 1.0);
  EXPECT_EQ(r.trends.size(), 6u);
}

TEST(TableReport, ShuffledColumnBreaksOnlyTrends) {
  auto t = fixture::csv_table("a,b\n1,2\n2,4\n3,6\n4,8\n5,10\n6,12\n", "pair");
  auto syn = t;
  std::vector<Cell> col;
  for (auto& r : syn.rows) col.push_back(r[1]);
  std::reverse(col.begin(), col.end());
  for (std::size_t i = 0; i < col.size(); ++i) syn.rows[i][1] = col[i];
  auto r = table_report(t, syn);
  EXPECT_EQ(r.shape, 1.0);
  EXPECT_LT(*r.trend, 1.0);
  EXPECT_NEAR(r.overall, (r.shape + *r.trend) / 2, 1e-12);
}

TEST(TableReport, SingleColumnAndErrors) {
  auto t = fixture::csv_table("a\n1\n2\n3\n", "one");
  auto s = fixture::csv_table("a\n1\n5\n3\n", "one");
  auto r = table_report(t, s);
  EXPECT_FALSE(r.trend.has_value());
  EXPECT_EQ(r.overall, r.shape);
  EXPECT_TRUE(r.to_json()["trend"].is_null());
  auto other = fixture::csv_table("b\n1\n2\n", "x");
  EXPECT_THROW(table_report(t, other), Error);
}

TEST(TableReport, MatchesBruteForceOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t cols = 1 + rng.index(6), rows = 2 + rng.index(199);
    auto real = oracle::random_table(rng, cols, rows);
    auto syn = oracle::random_table(rng, cols, 2 + rng.index(199), &real.columns);
    const auto got = table_report(real, syn);
    const auto want = oracle::report(real, syn);
    EXPECT_NEAR(got.shape, want.shape, 1e-9) << trial;
    EXPECT_NEAR(got.trend.value_or(got.shape), want.trend, 1e-9) << trial;
    EXPECT_NEAR(got.overall, want.overall, 1e-9) << trial;
    for (const auto& s : got.shapes) {
      EXPECT_GE(s.score, 0.0);
      EXPECT_LE(s.score, 1.0);
    }
  }
}

TEST(MannWhitney, DisjointExample) {
  auto r = mann_whitney_u({1, 2, 3}, {4, 5, 6});
  EXPECT_EQ(r.u, 0.0);
  EXPECT_TRUE(r.exact);
  EXPECT_DOUBLE_EQ(r.p, 0.1);
  EXPECT_EQ(mann_whitney_u({1, 2, 2, 5}, {5, 2, 2, 1}).p, 1.0);
  EXPECT_THROW(mann_whitney_u({}, {1}), Error);
}

TEST(MannWhitney, ExactMatchesEnumerationForAllSmallSizes) {
  Rng rng(5);
  for (std::size_t n = 1; n < 10; ++n)
    for (std::size_t m = 1; n + m <= 10; ++m)
      for (int trial = 0; trial < 4; ++trial) {
        std::vector<double> a, b;
        // a small value alphabet forces ties
        for (std::size_t i = 0; i < n; ++i) a.push_back(double(rng.index(trial < 2 ? 4 : 100)));
        for (std::size_t i = 0; i < m; ++i) b.push_back(double(rng.index(trial < 2 ? 4 : 100)));
        EXPECT_NEAR(mann_whitney_u(a, b).p, oracle::mann_whitney_p(a, b), 1e-12) << n << "," << m;
      }
}

TEST(MannWhitney, NormalApproximationCloseToExact) {
  Rng rng(6);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> a, b;
    const double shift = rng.uniform(0, 2);
    for (int i = 0; i < 8; ++i) a.push_back(rng.normal());
    for (int i = 0; i < 8; ++i) b.push_back(rng.normal(shift, 1));
    EXPECT_NEAR(mann_whitney_normal_p(a, b), mann_whitney_exact_p(a, b), 0.01) << trial;
  }
  std::vector<double> big_a, big_b;
  for (int i = 0; i < 12; ++i) {
    big_a.push_back(i);
    big_b.push_back(i + 0.5);
  }
  EXPECT_FALSE(mann_whitney_u(big_a, big_b).exact);
}

namespace {

TableReport fake_report(double shape, double trend) {
  TableReport r;
  r.shape = shape;
  r.trend = trend;
  r.overall = (shape + trend) / 2;
  return r;
}

}  // namespace

TEST(Leaderboard, SingleTableAndIdenticalRegimes) {
  std::vector<std::pair<ReportKey, TableReport>> reps{
      {{"random", "stvae", kFinetuned, "t1"}, fake_report(0.8, 0.6)},
      {{"random", "stvae", kScratch, "t1"}, fake_report(0.8, 0.6)}};
  auto lb = build_leaderboard(reps);
  ASSERT_EQ(lb.rows.size(), 2u);
  for (const auto& r : lb.rows) {
    EXPECT_EQ(r.overall_std, 0.0);
    EXPECT_DOUBLE_EQ(r.overall_mean, 0.7);
    ASSERT_TRUE(r.p_value.has_value());
    EXPECT_EQ(*r.p_value, 1.0);
  }
  const auto csv = lb.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), Leaderboard::kHeader);
  EXPECT_NE(lb.to_text().find("0.800 (0.000)"), std::string::npos);
}

TEST(Leaderboard, MeansStdsAndCoverage) {
  std::vector<std::pair<ReportKey, TableReport>> reps;
  const double ft[] = {0.9, 0.8, 0.85}, sc[] = {0.5, 0.6, 0.55};
  for (int i = 0; i < 3; ++i) {
    reps.push_back({{"domain", "ctgan", kFinetuned, "t" + std::to_string(i)}, fake_report(ft[i], ft[i])});
    reps.push_back({{"domain", "ctgan", kScratch, "t" + std::to_string(i)}, fake_report(sc[i], sc[i])});
  }
  auto lb = build_leaderboard(reps);
  for (const auto& r : lb.rows) {
    EXPECT_NEAR(r.overall_std, 0.05, 1e-12);
    EXPECT_DOUBLE_EQ(*r.p_value, 0.1);
  }
  reps.pop_back();
  EXPECT_THROW(build_leaderboard(reps), Error);
}

TEST(Leaderboard, SingleRegimeKeepsColumns) {
  std::vector<std::pair<ReportKey, TableReport>> reps{{{"random", "tvae", kScratch, "t"}, fake_report(0.5, 0.5)}};
  auto csv = build_leaderboard(reps).to_csv();
  const auto line = csv.substr(csv.find('\n') + 1);
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), 9);
}

TEST(Histograms, SharedBins) {
  auto t = fixture::mixed_table(100, 1);
  auto h = histograms(t, t);
  ASSERT_EQ(h.size(), 4u);
  EXPECT_EQ(h[0]["real"], h[0]["syn"]);
  EXPECT_EQ(h[2]["kind"], "categorical");
}
