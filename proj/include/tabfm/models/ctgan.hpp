#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/models/cond.hpp"
#include "tabfm/neural/net.hpp"
#include "tabfm/neural/optim.hpp"
#include "tabfm/transform/table_transformer.hpp"

namespace tabfm::models {

struct CtganConfig {
  std::size_t z_dim = 128;
  std::vector<std::size_t> generator_hidden{256, 256};
  std::vector<std::size_t> critic_hidden{256, 256};
  std::size_t pac = 10;
  std::size_t batch = 500;
  double lambda = 10.0;
  double dropout = 0.5;
  double leaky = 0.2;
  double tau = 0.2;
  nn::AdamConfig adam = nn::AdamConfig::gan();

  void validate() const {
    require(z_dim > 0 && pac > 0 && batch > 0, ErrorKind::Usage, "ctgan config: sizes must be positive");
    require(batch % pac == 0, ErrorKind::Usage, "ctgan config: pac must divide the batch size");
    require(!generator_hidden.empty() && !critic_hidden.empty(), ErrorKind::Usage,
            "ctgan config: need hidden layers");
    require(tau > 0 && lambda >= 0 && dropout >= 0 && dropout < 1, ErrorKind::Usage,
            "ctgan config: bad tau, lambda or dropout");
  }

  nlohmann::json to_json() const {
    return {{"z_dim", z_dim},   {"generator_hidden", generator_hidden},
            {"critic_hidden", critic_hidden},
            {"pac", pac},       {"batch", batch},
            {"lambda", lambda}, {"dropout", dropout},
            {"leaky", leaky},   {"tau", tau},
            {"lr", adam.lr},    {"beta1", adam.beta1},
            {"beta2", adam.beta2}, {"weight_decay", adam.weight_decay}};
  }

  static CtganConfig from_json(const nlohmann::json& j) {
    CtganConfig c;
    c.z_dim = j.value("z_dim", c.z_dim);
    c.generator_hidden = j.value("generator_hidden", c.generator_hidden);
    c.critic_hidden = j.value("critic_hidden", c.critic_hidden);
    c.pac = j.value("pac", c.pac);
    c.batch = j.value("batch", c.batch);
    c.lambda = j.value("lambda", c.lambda);
    c.dropout = j.value("dropout", c.dropout);
    c.leaky = j.value("leaky", c.leaky);
    c.tau = j.value("tau", c.tau);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.weight_decay = j.value("weight_decay", c.adam.weight_decay);
    c.validate();
    return c;
  }
};

/// Head activations for an encoded row: tanh for alpha, Gumbel-softmax for
/// mode and category blocks.
inline std::vector<nn::HeadSpan> ctgan_head_spans(const std::vector<transform::OutputSpan>& spans) {
  std::vector<nn::HeadSpan> out;
  for (const auto& s : spans)
    out.push_back({s.start, s.width, s.kind == transform::SpanKind::Alpha ? nn::HeadAct::Tanh : nn::HeadAct::Gumbel});
  return out;
}

/// One training batch worth of inputs, drawn before any network runs so the
/// objectives below are pure functions of it (plus an rng for noise).
template <typename Real>
struct CtganBatch {
  nn::Tensor<Real> z;     // [B, z_dim]
  nn::Tensor<Real> cond;  // [B, cond width]
  nn::Tensor<Real> real;  // [B, row width]
  std::vector<Condition> conditions;
};

template <typename Real>
class CtganNet {
 public:
  CtganNet(const CtganConfig& cfg, std::vector<transform::OutputSpan> spans, std::size_t row_width, Rng& init)
      : cfg_(cfg),
        spans_(std::move(spans)),
        row_width_(row_width),
        layout_(CondLayout::from_spans(spans_)),
        heads_(ctgan_head_spans(spans_), cfg.tau) {
    cfg.validate();
    nn::NetSpec gen;
    std::size_t w = cfg.z_dim + layout_.width;
    for (auto h : cfg.generator_hidden) {
      gen.push_back(nn::LayerSpec::concat_skip(
          {nn::LayerSpec::dense(w, h), nn::LayerSpec::batch_norm(h), nn::LayerSpec::relu()}));
      w += h;
    }
    gen.push_back(nn::LayerSpec::dense(w, row_width));
    generator_ = nn::Sequential<Real>(gen, cfg.z_dim + layout_.width, "generator", init);

    nn::NetSpec critic;
    w = cfg.pac * (row_width + layout_.width);
    for (auto h : cfg.critic_hidden) {
      critic.push_back(nn::LayerSpec::dense(w, h));
      critic.push_back(nn::LayerSpec::leaky_relu(cfg.leaky));
      critic.push_back(nn::LayerSpec::dropout(cfg.dropout));
      w = h;
    }
    critic.push_back(nn::LayerSpec::dense(w, 1));
    critic_ = nn::Sequential<Real>(critic, cfg.pac * (row_width + layout_.width), "critic", init);

    penalty_mask_.resize(critic_.in_width());
    for (std::size_t c = 0; c < penalty_mask_.size(); ++c)
      penalty_mask_[c] = c % (row_width + layout_.width) < row_width;
  }

  const CtganConfig& config() const { return cfg_; }
  const CondLayout& layout() const { return layout_; }
  const std::vector<transform::OutputSpan>& spans() const { return spans_; }
  std::size_t row_width() const { return row_width_; }
  nn::Sequential<Real>& generator() { return generator_; }
  nn::Sequential<Real>& critic() { return critic_; }
  std::size_t critic_input_width() const { return critic_.in_width(); }

  std::vector<nn::Param<Real>*> generator_params() { return generator_.params(); }
  std::vector<nn::Param<Real>*> critic_params() { return critic_.params(); }
  std::vector<nn::Param<Real>*> params() {
    auto p = generator_.params();
    for (auto* c : critic_.params()) p.push_back(c);
    return p;
  }

  /// Batch-norm parameters and the critic's hidden and output layers are
  /// shared across tables; every width-dependent dense layer is per table.
  bool is_body(const std::string& name) const {
    if (name.starts_with("critic.")) return !name.starts_with("critic.0.");
    if (name.starts_with("generator.")) {
      for (std::size_t l = 0; l < cfg_.generator_hidden.size(); ++l)
        if (name.starts_with("generator." + std::to_string(l) + ".1.")) return true;
    }
    return false;
  }

  /// Training-by-sampling draw of B conditions, latent noise and matching real rows.
  CtganBatch<Real> draw_batch(const transform::TransformedMatrix& data, const CategoryIndex& index,
                              const std::vector<std::vector<double>>& counts, std::size_t B, Rng& rng) const {
    require(data.cols == row_width_, ErrorKind::Shape, "ctgan: data width mismatch");
    require(data.rows > 0, ErrorKind::Data, "ctgan: empty training data");
    CtganBatch<Real> b;
    b.z = nn::Tensor<Real>(B, cfg_.z_dim);
    for (auto& v : b.z.data) v = static_cast<Real>(rng.normal());
    b.cond = nn::Tensor<Real>(B, layout_.width);
    b.real = nn::Tensor<Real>(B, row_width_);
    for (std::size_t j = 0; j < B; ++j) {
      std::size_t r;
      if (layout_.columns() > 0) {
        const auto c = sample_condition(counts, rng);
        b.conditions.push_back(c);
        b.cond(j, layout_.blocks[c.column].offset + c.category) = Real(1);
        r = sample_real_conditioned(index, c, rng);
      } else {
        r = rng.index(data.rows);
      }
      for (std::size_t c = 0; c < row_width_; ++c) b.real(j, c) = static_cast<Real>(data.at(r, c));
    }
    return b;
  }

  struct CriticTerms {
    double loss = 0;     // mean C(fake) - mean C(real) + penalty
    double penalty = 0;
  };

  /// Critic objective; gradients accumulate into the critic parameters only.
  CriticTerms critic_objective(const CtganBatch<Real>& b, Rng& rng) {
    const std::size_t B = b.z.rows();
    require(B % cfg_.pac == 0, ErrorKind::Usage, "ctgan: batch must be a multiple of pac");
    const std::size_t n_pac = B / cfg_.pac;
    const auto fake = generate(b.z, b.cond, nn::Mode::Train, rng);
    const auto fake_pac = nn::concat_cols(fake, b.cond).reshaped(n_pac);
    const auto real_pac = nn::concat_cols(b.real, b.cond).reshaped(n_pac);

    CriticTerms t;
    const auto y_fake = critic_.forward(fake_pac, nn::Mode::Train, rng);
    critic_.backward(nn::Tensor<Real>(n_pac, 1, Real(1) / Real(n_pac)));
    const auto y_real = critic_.forward(real_pac, nn::Mode::Train, rng);
    critic_.backward(nn::Tensor<Real>(n_pac, 1, Real(-1) / Real(n_pac)));
    for (std::size_t k = 0; k < n_pac; ++k) t.loss += (double(y_fake(k, 0)) - double(y_real(k, 0))) / n_pac;

    if (cfg_.lambda > 0) {
      nn::Tensor<Real> mix(fake_pac.shape);
      for (std::size_t k = 0; k < n_pac; ++k) {
        const Real rho = static_cast<Real>(rng.uniform());
        for (std::size_t c = 0; c < mix.cols(); ++c)
          mix(k, c) = rho * fake_pac(k, c) + (Real(1) - rho) * real_pac(k, c);
      }
      auto gp = critic_.input_gradient_penalty(mix, static_cast<Real>(cfg_.lambda), penalty_mask_,
                                               nn::Mode::Train, rng);
      t.penalty = gp.penalty;
      t.loss += t.penalty;
    }
    return t;
  }

  struct GeneratorTerms {
    double loss = 0;  // -mean C(fake) + mean CE
    double cross_entropy = 0;
  };

  /// Generator objective; gradients accumulate into the generator parameters
  /// only. The cross-entropy term covers the conditioned block of each row.
  GeneratorTerms generator_objective(const CtganBatch<Real>& b, Rng& rng) {
    const std::size_t B = b.z.rows();
    const std::size_t n_pac = B / cfg_.pac;
    const auto fake = generate(b.z, b.cond, nn::Mode::Train, rng);
    const auto y = critic_.forward(nn::concat_cols(fake, b.cond).reshaped(n_pac), nn::Mode::Train, rng);
    GeneratorTerms t;
    for (std::size_t k = 0; k < n_pac; ++k) t.loss -= double(y(k, 0)) / n_pac;
    const auto d_in = critic_.backward(nn::Tensor<Real>(n_pac, 1, Real(-1) / Real(n_pac)), false).reshaped(B);
    const auto d_fake = nn::slice_cols(d_in, 0, row_width_);
    auto d_logits = heads_.backward(d_fake, true);

    const auto& soft = heads_.soft();
    for (std::size_t j = 0; j < b.conditions.size(); ++j) {
      const auto& c = b.conditions[j];
      const auto start = layout_.blocks[c.column].row_start;
      const auto width = layout_.blocks[c.column].width;
      const double p = soft(j, start + c.category);
      t.cross_entropy += -std::log(std::max(p, 1e-30)) / B;
      for (std::size_t i = 0; i < width; ++i) {
        const double target = i == c.category ? 1.0 : 0.0;
        d_logits(j, start + i) += static_cast<Real>((soft(j, start + i) - target) / cfg_.tau / B);
      }
    }
    t.loss += t.cross_entropy;
    generator_.backward(d_logits);
    return t;
  }

  /// Generator output after head activations. Train mode gives relaxed
  /// samples, Sample mode hard one-hot blocks.
  nn::Tensor<Real> generate(const nn::Tensor<Real>& z, const nn::Tensor<Real>& cond, nn::Mode mode, Rng& rng) {
    const auto logits = generator_.forward(nn::concat_cols(z, cond), mode, rng);
    return heads_.forward(logits, mode, rng);
  }

  /// Encoded synthetic rows. Conditions come from the empirical category
  /// frequencies unless one is forced.
  nn::Tensor<Real> sample_encoded(std::size_t n, const std::vector<std::vector<double>>& counts, Rng& rng,
                                  std::optional<Condition> forced = std::nullopt) {
    if (n == 0) return nn::Tensor<Real>(0, row_width_);
    nn::Tensor<Real> z(n, cfg_.z_dim), cond(n, layout_.width);
    for (auto& v : z.data) v = static_cast<Real>(rng.normal());
    if (forced) {
      require(forced->column < layout_.columns() && forced->category < layout_.blocks[forced->column].width,
              ErrorKind::Usage, "ctgan: forced condition out of range");
    }
    for (std::size_t j = 0; j < n && layout_.columns() > 0; ++j) {
      const auto c = forced ? *forced : sample_condition_empirical(counts, rng);
      cond(j, layout_.blocks[c.column].offset + c.category) = Real(1);
    }
    return generate(z, cond, nn::Mode::Sample, rng);
  }

 private:
  CtganConfig cfg_;
  std::vector<transform::OutputSpan> spans_;
  std::size_t row_width_;
  CondLayout layout_;
  nn::Heads<Real> heads_;
  nn::Sequential<Real> generator_, critic_;
  std::vector<bool> penalty_mask_;
};

}  // namespace tabfm::models
