#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "support/gradcheck.hpp"
#include "support/tables.hpp"
#include "tabfm/models/cond.hpp"
#include "tabfm/models/ctgan.hpp"
#include "tabfm/models/vae.hpp"

using namespace tabfm;
using namespace tabfm::models;
using transform::OutputSpan;
using transform::SpanKind;
using T = nn::Tensor<double>;

namespace {

std::vector<OutputSpan> toy_spans() {
  // one numeric column with 2 modes, then categoricals with 3 and 2 labels
  return {{0, 1, SpanKind::Alpha, 0}, {1, 2, SpanKind::Beta, 0}, {3, 3, SpanKind::Category, 1},
          {6, 2, SpanKind::Category, 2}};
}

transform::TransformedMatrix toy_matrix(std::size_t rows, std::uint64_t seed) {
  transform::TransformedMatrix m;
  m.rows = rows;
  m.cols = 8;
  m.spans = toy_spans();
  m.data.assign(rows * 8, 0.0);
  Rng rng(seed);
  for (std::size_t r = 0; r < rows; ++r) {
    m.at(r, 0) = rng.uniform(-0.5, 0.5);
    m.at(r, 1 + rng.index(2)) = 1;
    m.at(r, 3 + rng.index(3)) = 1;
    m.at(r, 6 + rng.index(2)) = 1;
  }
  return m;
}

T matrix_tensor(const transform::TransformedMatrix& m) {
  T t(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) t.data[i] = m.data[i];
  return t;
}

CtganConfig tiny_ctgan() {
  CtganConfig c;
  c.z_dim = 3;
  c.generator_hidden = {4, 5};
  c.critic_hidden = {6, 4};
  c.pac = 2;
  c.batch = 6;
  return c;
}

VaeConfig tiny_vae(VaeVariant v) {
  VaeConfig c;
  c.variant = v;
  c.hidden = {6, 5};
  c.latent = 3;
  c.signature_dim = 8;
  return c;
}

}  // namespace

TEST(Cond, VectorExample) {
  std::vector<OutputSpan> spans{{0, 3, SpanKind::Category, 0}, {3, 2, SpanKind::Category, 1}};
  auto layout = CondLayout::from_spans(spans);
  EXPECT_EQ(build_cond_vector(layout, 1, 0), (std::vector<double>{0, 0, 0, 1, 0}));
  EXPECT_THROW(build_cond_vector(layout, 2, 0), Error);
  EXPECT_THROW(build_cond_vector(layout, 0, 3), Error);
}

TEST(Cond, LayoutMatchesEnumeration) {
  auto layout = CondLayout::from_spans(toy_spans());
  EXPECT_EQ(layout.width, 5u);
  std::vector<std::size_t> widths{3, 2};
  std::size_t flat = 0;
  for (std::size_t i = 0; i < widths.size(); ++i)
    for (std::size_t k = 0; k < widths[i]; ++k, ++flat) {
      auto v = build_cond_vector(layout, i, k);
      double sum = 0;
      for (double x : v) sum += x;
      EXPECT_EQ(sum, 1.0);
      EXPECT_EQ(v[flat], 1.0);
    }
  EXPECT_EQ(flat, layout.width);
}

TEST(Cond, SingleCategoryAlwaysChosen) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    auto c = sample_condition({{5.0}}, rng);
    EXPECT_EQ(c.column, 0u);
    EXPECT_EQ(c.category, 0u);
  }
  EXPECT_THROW(sample_condition({}, rng), Error);
}

TEST(Cond, ColumnsEquallyLikely) {
  Rng rng(2);
  int first = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) first += sample_condition({{1, 2}, {3, 4, 5}}, rng).column == 0;
  EXPECT_NEAR(first / double(n), 0.5, 0.02);
}

TEST(Cond, LogFrequencyPmf) {
  Rng rng(3);
  const int n = 100000;
  int zero = 0;
  for (int i = 0; i < n; ++i) zero += sample_condition({{1.0, std::exp(1.0) - 1.0}}, rng).category == 0;
  const double ratio = zero / double(n - zero);
  EXPECT_NEAR(ratio / std::log(2.0), 1.0, 0.02);
}

TEST(Cond, RealRowsUniformOverMatches) {
  auto m = toy_matrix(60, 4);
  auto layout = CondLayout::from_spans(m.spans);
  CategoryIndex index(layout, m);
  Condition c{0, 1};
  const auto& matches = index.rows(0, 1);
  ASSERT_GT(matches.size(), 3u);
  std::map<std::size_t, int> hits;
  Rng rng(5);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto r = sample_real_conditioned(index, c, rng);
    EXPECT_EQ(m.at(r, 3 + 1), 1.0);
    ++hits[r];
  }
  EXPECT_EQ(hits.size(), matches.size());
  const double expect = double(n) / matches.size();
  for (const auto& [r, h] : hits) EXPECT_NEAR(h / expect, 1.0, 0.03 * std::sqrt(matches.size()));

  transform::TransformedMatrix one = m;
  one.rows = 1;
  one.data.resize(8);
  CategoryIndex single(layout, one);
  const auto only = std::find(one.data.begin() + 3, one.data.begin() + 6, 1.0) - (one.data.begin() + 3);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_real_conditioned(single, {0, std::size_t(only)}, rng), 0u);
  EXPECT_THROW(sample_real_conditioned(single, {0, std::size_t((only + 1) % 3)}, rng), Error);
}

TEST(Ctgan, ArchitectureWidths) {
  Rng init(1);
  CtganNet<float> net(tiny_ctgan(), toy_spans(), 8, init);
  EXPECT_EQ(net.layout().width, 5u);
  EXPECT_EQ(net.generator().in_width(), 3u + 5u);
  // concat-skip: 8 -> 8+4 -> 12+5, then the output layer
  EXPECT_EQ(net.generator().out_width(), 8u);
  EXPECT_EQ(nn::spec_output_width({nn::LayerSpec::concat_skip({nn::LayerSpec::dense(8, 4)}),
                                   nn::LayerSpec::concat_skip({nn::LayerSpec::dense(12, 5)})},
                                  8),
            17u);
  EXPECT_EQ(net.critic_input_width(), 2u * (8u + 5u));
  bool found_last = false;
  for (auto* p : net.generator_params())
    if (p->name == "generator.2.weight") {
      EXPECT_EQ(p->value.cols(), 17u);
      EXPECT_EQ(p->value.rows(), 8u);
      found_last = true;
    }
  EXPECT_TRUE(found_last);
  auto bad = tiny_ctgan();
  bad.batch = 5;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Ctgan, BodyTagging) {
  Rng init(1);
  CtganNet<float> net(tiny_ctgan(), toy_spans(), 8, init);
  EXPECT_FALSE(net.is_body("critic.0.weight"));
  EXPECT_TRUE(net.is_body("critic.3.weight"));
  EXPECT_TRUE(net.is_body("critic.6.bias"));
  EXPECT_TRUE(net.is_body("generator.0.1.gamma"));
  EXPECT_FALSE(net.is_body("generator.0.0.weight"));
  EXPECT_FALSE(net.is_body("generator.2.weight"));
}

TEST(Ctgan, CriticObjectiveGradients) {
  Rng init(7);
  CtganNet<double> net(tiny_ctgan(), toy_spans(), 8, init);
  auto m = toy_matrix(40, 1);
  CategoryIndex index(net.layout(), m);
  Rng draw(2);
  auto batch = net.draw_batch(m, index, index.counts(), 6, draw);
  auto loss = [&] {
    Rng rng(11);
    return net.critic_objective(batch, rng).loss;
  };
  for (auto* p : net.params()) p->zero_grad();
  const double l = loss();
  EXPECT_TRUE(std::isfinite(l));
  for (auto* p : net.generator_params())
    for (double g : p->grad.data) EXPECT_EQ(g, 0.0);
  auto rep = gradcheck::params(net.critic_params(), loss);
  EXPECT_TRUE(rep.ok()) << rep.detail;
}

TEST(Ctgan, GeneratorObjectiveGradients) {
  Rng init(8);
  CtganNet<double> net(tiny_ctgan(), toy_spans(), 8, init);
  auto m = toy_matrix(40, 2);
  CategoryIndex index(net.layout(), m);
  Rng draw(3);
  auto batch = net.draw_batch(m, index, index.counts(), 6, draw);
  auto loss = [&] {
    Rng rng(12);
    return net.generator_objective(batch, rng).loss;
  };
  for (auto* p : net.params()) p->zero_grad();
  loss();
  for (auto* p : net.critic_params())
    for (double g : p->grad.data) EXPECT_EQ(g, 0.0);
  auto rep = gradcheck::params(net.generator_params(), loss);
  EXPECT_TRUE(rep.ok()) << rep.detail;
}

TEST(Ctgan, CrossEntropyVanishesOnExactOneHot) {
  // one categorical column whose training rows all hold category 0
  std::vector<OutputSpan> spans{{0, 2, SpanKind::Category, 0}};
  transform::TransformedMatrix m;
  m.rows = 10;
  m.cols = 2;
  m.spans = spans;
  for (int r = 0; r < 10; ++r) m.data.insert(m.data.end(), {1.0, 0.0});
  auto cfg = tiny_ctgan();
  Rng init(1);
  CtganNet<double> net(cfg, spans, 2, init);
  for (auto* p : net.generator_params())
    if (p->name == "generator.2.weight") p->value.fill(0.0);
    else if (p->name == "generator.2.bias") p->value.data = {100.0, -100.0};
  CategoryIndex index(net.layout(), m);
  Rng rng(4);
  auto batch = net.draw_batch(m, index, index.counts(), 6, rng);
  EXPECT_EQ(net.generator_objective(batch, rng).cross_entropy, 0.0);
}

TEST(Ctgan, TrainingStaysFinite) {
  auto cfg = tiny_ctgan();
  cfg.batch = 20;
  Rng init(5), rng(6);
  CtganNet<float> net(cfg, toy_spans(), 8, init);
  auto m = toy_matrix(100, 3);
  CategoryIndex index(net.layout(), m);
  const auto counts = index.counts();
  nn::Adam<float> gopt(cfg.adam), copt(cfg.adam);
  for (int step = 0; step < 200; ++step) {
    for (auto* p : net.params()) p->zero_grad();
    auto c = net.critic_objective(net.draw_batch(m, index, counts, cfg.batch, rng), rng);
    copt.step(net.critic_params());
    for (auto* p : net.params()) p->zero_grad();
    auto g = net.generator_objective(net.draw_batch(m, index, counts, cfg.batch, rng), rng);
    gopt.step(net.generator_params());
    ASSERT_TRUE(std::isfinite(c.loss) && std::isfinite(g.loss)) << "step " << step;
  }
  for (auto* p : net.params()) EXPECT_TRUE(p->value.all_finite()) << p->name;
}

TEST(Ctgan, CriticLearnsToSeparateWithFrozenGenerator) {
  auto cfg = tiny_ctgan();
  cfg.lambda = 0;
  cfg.batch = 20;
  cfg.critic_hidden = {16, 16};
  cfg.adam.lr = 1e-3;
  Rng init(9), rng(10);
  CtganNet<float> net(cfg, toy_spans(), 8, init);
  // real alpha sits far from anything the untrained generator emits
  auto m = toy_matrix(100, 3);
  for (std::size_t r = 0; r < m.rows; ++r) m.at(r, 0) = 5.0;
  CategoryIndex index(net.layout(), m);
  const auto counts = index.counts();
  nn::Adam<float> copt(cfg.adam);
  auto fixed = net.draw_batch(m, index, counts, cfg.batch, rng);
  auto eval = [&] {
    Rng r(1);
    for (auto* p : net.params()) p->zero_grad();
    return net.critic_objective(fixed, r).loss;
  };
  const double before = eval();
  for (int step = 0; step < 50; ++step) {
    for (auto* p : net.params()) p->zero_grad();
    net.critic_objective(net.draw_batch(m, index, counts, cfg.batch, rng), rng);
    copt.step(net.critic_params());
  }
  EXPECT_LT(eval(), before);
}

TEST(Ctgan, SampleShapesAndForcedCondition) {
  Rng init(1), rng(2);
  CtganNet<float> net(tiny_ctgan(), toy_spans(), 8, init);
  EXPECT_EQ(net.sample_encoded(0, {{1, 1, 1}, {1, 1}}, rng).rows(), 0u);
  auto s = net.sample_encoded(30, {{1, 1, 1}, {1, 1}}, rng, Condition{1, 1});
  ASSERT_EQ(s.rows(), 30u);
  for (std::size_t r = 0; r < 30; ++r) {
    EXPECT_EQ(s(r, 1) + s(r, 2), 1.0f);
    EXPECT_EQ(s(r, 3) + s(r, 4) + s(r, 5), 1.0f);
    EXPECT_LE(std::abs(s(r, 0)), 1.0f);
  }
  EXPECT_THROW(net.sample_encoded(3, {{1, 1, 1}, {1, 1}}, rng, Condition{2, 0}), Error);
}

TEST(Elbo, GradientsAllVariants) {
  for (auto variant : {VaeVariant::TVAE, VaeVariant::STVAE, VaeVariant::STVAEM}) {
    SCOPED_TRACE(to_string(variant));
    const std::size_t sig = variant == VaeVariant::STVAEM ? 6 : 0;
    Rng init(3);
    VaeNet<double> net(tiny_vae(variant), toy_spans(), 8, sig, init);
    const T target = matrix_tensor(toy_matrix(5, 6));
    T input = target;
    if (sig) {
      T s(5, sig);
      for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < sig; ++c) s(r, c) = 0.1 * double(c + 1);
      input = nn::concat_cols(target, s);
    }
    auto loss = [&] {
      Rng rng(21);
      return net.loss(input, target, rng);
    };
    net.zero_grad();
    Rng rng(21);
    net.loss_and_grads(input, target, rng);
    auto rep = gradcheck::params(net.params(), loss);
    EXPECT_TRUE(rep.ok()) << rep.detail;
  }
}

TEST(Elbo, PerfectReconstructionIsZero) {
  const auto spans = toy_spans();
  const T target = matrix_tensor(toy_matrix(4, 2));
  T mu(4, 3, 0.0), sigma(4, 3, 1.0);
  auto r = elbo_loss<double>(VaeVariant::STVAE, spans, target, target, mu, sigma, nullptr);
  EXPECT_EQ(r.loss, 0.0);
  std::vector<double> delta{0.1};
  EXPECT_THROW(elbo_loss<double>(VaeVariant::STVAE, spans, target, target, mu, sigma, &delta), Error);
  EXPECT_THROW(elbo_loss<double>(VaeVariant::TVAE, spans, target, target, mu, sigma, nullptr), Error);
}

TEST(Elbo, TvaeNumericNllAtMean) {
  std::vector<OutputSpan> spans{{0, 1, SpanKind::Alpha, 0}, {1, 1, SpanKind::Beta, 0}};
  T out(1, 2), target(1, 2);
  out(0, 0) = target(0, 0) = 0.3;
  out(0, 1) = target(0, 1) = 1.0;
  T mu(1, 1, 0.0), sigma(1, 1, 1.0);
  std::vector<double> delta{0.25};
  auto r = elbo_loss<double>(VaeVariant::TVAE, spans, out, target, mu, sigma, &delta);
  EXPECT_NEAR(r.recon, 0.5 * std::log(2 * M_PI * 0.25 * 0.25), 1e-12);
}

TEST(Vae, ZeroNoiseGivesMean) {
  Rng init(1), rng(2);
  VaeNet<double> net(tiny_vae(VaeVariant::STVAE), toy_spans(), 8, 0, init);
  const T x = matrix_tensor(toy_matrix(4, 1));
  const T eps(4, 3, 0.0);
  auto p = net.forward(x, rng, &eps);
  EXPECT_EQ(p.z.data, p.mu.data);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_NEAR(p.out(r, 1) + p.out(r, 2), 1.0, 1e-6);
    EXPECT_NEAR(p.out(r, 3) + p.out(r, 4) + p.out(r, 5), 1.0, 1e-6);
    EXPECT_NEAR(p.out(r, 6) + p.out(r, 7), 1.0, 1e-6);
  }
}

TEST(Vae, StvaemWidthsAndSignatures) {
  auto t = fixture::mixed_table(40, 1);
  auto tt = transform::TableTransformer::fit(t, {}, 1);
  const std::size_t dim = 8;
  auto sig = stvaem_signatures(tt, {}, dim);
  EXPECT_EQ(sig.size(), t.n_cols() * dim);
  Rng init(1);
  VaeNet<float> net(tiny_vae(VaeVariant::STVAEM), tt.spans(), tt.width(), sig.size(), init);
  EXPECT_EQ(net.input_width(), tt.width() + (tt.n_numeric() + tt.n_categorical()) * dim);

  Table renamed = t;
  renamed.columns[0].name = "renamed";
  auto tt2 = transform::TableTransformer::fit(renamed, {}, 1);
  auto sig2 = stvaem_signatures(tt2, {}, dim);
  for (std::size_t i = 0; i < sig.size(); ++i) {
    if (i < dim)
      continue;  // column 0 comes first in encoded order
    EXPECT_EQ(sig[i], sig2[i]);
  }
  EXPECT_NE(std::vector<double>(sig.begin(), sig.begin() + dim), std::vector<double>(sig2.begin(), sig2.begin() + dim));

  std::map<std::string, std::vector<double>> wrong{{"x", {1.0, 2.0}}};
  EXPECT_THROW(stvaem_signatures(tt, wrong, dim), Error);
  EXPECT_THROW(stvaem_signatures(tt, {}, 4), Error);
}

TEST(Vae, StvaemWithoutSignaturesEqualsStvae) {
  Rng a(4), b(4);
  VaeNet<double> m(tiny_vae(VaeVariant::STVAEM), toy_spans(), 8, 0, a);
  VaeNet<double> s(tiny_vae(VaeVariant::STVAE), toy_spans(), 8, 0, b);
  const T x = matrix_tensor(toy_matrix(6, 3));
  Rng ra(9), rb(9);
  EXPECT_EQ(m.loss(x, x, ra), s.loss(x, x, rb));
}

TEST(Vae, BodyTagging) {
  Rng init(1);
  VaeNet<float> net(tiny_vae(VaeVariant::TVAE), toy_spans(), 8, 0, init);
  EXPECT_FALSE(net.is_body("encoder.0.weight"));
  EXPECT_TRUE(net.is_body("encoder.2.weight"));
  EXPECT_TRUE(net.is_body("encoder.4.bias"));
  EXPECT_TRUE(net.is_body("decoder.0.weight"));
  EXPECT_FALSE(net.is_body("decoder.4.weight"));
  EXPECT_FALSE(net.is_body("delta"));
}

TEST(Vae, SampleIsOneHot) {
  Rng init(1), rng(3);
  VaeNet<float> net(tiny_vae(VaeVariant::STVAE), toy_spans(), 8, 0, init);
  auto s = net.sample_encoded(25, rng);
  ASSERT_EQ(s.rows(), 25u);
  for (std::size_t r = 0; r < 25; ++r) {
    EXPECT_EQ(s(r, 1) + s(r, 2), 1.0f);
    EXPECT_EQ(s(r, 6) + s(r, 7), 1.0f);
  }
}
