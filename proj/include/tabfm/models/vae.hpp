#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/data/split.hpp"
#include "tabfm/neural/functional.hpp"
#include "tabfm/neural/net.hpp"
#include "tabfm/neural/optim.hpp"
#include "tabfm/transform/table_transformer.hpp"

namespace tabfm::models {

enum class VaeVariant { TVAE, STVAE, STVAEM };

inline std::string to_string(VaeVariant v) {
  switch (v) {
    case VaeVariant::TVAE:
      return "tvae";
    case VaeVariant::STVAE:
      return "stvae";
    default:
      return "stvaem";
  }
}

inline VaeVariant vae_variant_from_string(const std::string& s) {
  if (s == "tvae") return VaeVariant::TVAE;
  if (s == "stvae") return VaeVariant::STVAE;
  if (s == "stvaem") return VaeVariant::STVAEM;
  fail(ErrorKind::Usage, "unknown VAE variant '" + s + "'");
}

struct VaeConfig {
  VaeVariant variant = VaeVariant::STVAE;
  std::vector<std::size_t> hidden{128, 128};
  std::size_t latent = 128;
  std::size_t signature_dim = 16;  // STVAEM only
  std::size_t batch = 500;
  double delta_init = 0.1;
  double delta_min = 1e-3;
  nn::AdamConfig adam = nn::AdamConfig::vae();

  nlohmann::json to_json() const {
    return {{"variant", to_string(variant)}, {"hidden", hidden},       {"latent", latent},
            {"signature_dim", signature_dim}, {"batch", batch},         {"delta_init", delta_init},
            {"delta_min", delta_min},         {"lr", adam.lr},          {"beta1", adam.beta1},
            {"beta2", adam.beta2},            {"weight_decay", adam.weight_decay}};
  }

  static VaeConfig from_json(const nlohmann::json& j) {
    VaeConfig c;
    c.variant = vae_variant_from_string(j.value("variant", std::string("stvae")));
    c.hidden = j.value("hidden", c.hidden);
    c.latent = j.value("latent", c.latent);
    c.signature_dim = j.value("signature_dim", c.signature_dim);
    c.batch = j.value("batch", c.batch);
    c.delta_init = j.value("delta_init", c.delta_init);
    c.delta_min = j.value("delta_min", c.delta_min);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.weight_decay = j.value("weight_decay", c.adam.weight_decay);
    c.validate();
    return c;
  }

  void validate() const {
    require(!hidden.empty() && latent > 0 && batch > 0, ErrorKind::Usage,
            "vae config: hidden, latent and batch must be positive");
    for (auto h : hidden) require(h > 0, ErrorKind::Usage, "vae config: zero-width hidden layer");
    require(delta_min > 0 && delta_init >= delta_min, ErrorKind::Usage, "vae config: bad delta bounds");
  }
};

/// Per-dataset signature: the name embedding of every column in encoded
/// order, concatenated. Identical for every row of the table.
inline std::vector<double> stvaem_signatures(const transform::TableTransformer& tt,
                                             const std::map<std::string, std::vector<double>>& embeddings,
                                             std::size_t dim) {
  std::vector<double> sig;
  if (dim == 0) return sig;
  for (const auto& c : tt.columns()) {
    const auto& name = tt.schema()[c.column].name;
    std::vector<double> e;
    if (auto it = embeddings.find(name); it != embeddings.end()) {
      e = it->second;
      require(e.size() == dim, ErrorKind::Data,
              "signature for column '" + name + "' has " + std::to_string(e.size()) +
                  " dims, expected " + std::to_string(dim));
    } else {
      require(dim >= 8, ErrorKind::Data,
              "missing embedding for column '" + name + "' and dim too small for hashing fallback");
      e = name_embedding(name, dim);
    }
    sig.insert(sig.end(), e.begin(), e.end());
  }
  return sig;
}

/// Per-row reconstruction terms and their gradients. Gradients are taken with
/// respect to the decoder logits (pre-activation), mu, sigma and delta, all
/// already divided by the batch size.
template <typename Real>
struct ElboResult {
  double loss = 0, recon = 0, kl = 0;
  nn::Tensor<Real> d_logits, d_mu, d_sigma;
  std::vector<Real> d_delta;
};

inline constexpr double kProbFloor = 1e-30;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

/// loss = mean_b [recon_b + KL_b]. `out` holds activated decoder outputs (tanh
/// for alpha spans, softmax for one-hot spans).
template <typename Real>
ElboResult<Real> elbo_loss(VaeVariant variant, const std::vector<transform::OutputSpan>& spans,
                           const nn::Tensor<Real>& out, const nn::Tensor<Real>& target,
                           const nn::Tensor<Real>& mu, const nn::Tensor<Real>& sigma,
                           const std::vector<Real>* delta, double delta_min = 1e-3) {
  require(out.same_shape(target), ErrorKind::Shape, "elbo: output/target shape mismatch");
  require(mu.same_shape(sigma) && mu.rows() == out.rows(), ErrorKind::Shape, "elbo: latent shape mismatch");
  std::size_t n_numeric = 0;
  for (const auto& s : spans) n_numeric += s.kind == transform::SpanKind::Alpha;
  const bool needs_delta = variant == VaeVariant::TVAE;
  require(needs_delta == (delta != nullptr), ErrorKind::Usage,
          needs_delta ? "elbo: TVAE requires delta" : "elbo: delta only applies to TVAE");
  if (delta) require(delta->size() == n_numeric, ErrorKind::Shape, "elbo: delta size mismatch");

  const std::size_t B = out.rows();
  const double inv_b = 1.0 / static_cast<double>(B);
  ElboResult<Real> res;
  res.d_logits = nn::Tensor<Real>(out.shape);
  res.d_mu = nn::Tensor<Real>(mu.shape);
  res.d_sigma = nn::Tensor<Real>(mu.shape);
  if (delta) res.d_delta.assign(delta->size(), Real(0));
  std::vector<double> d_delta(n_numeric, 0.0);

  for (std::size_t b = 0; b < B; ++b) {
    std::size_t numeric = 0;
    for (const auto& s : spans) {
      if (s.kind == transform::SpanKind::Alpha) {
        const double pred = out(b, s.start), truth = target(b, s.start);
        double d_pred;
        if (delta) {
          const double raw = (*delta)[numeric];
          const double dl = std::max(raw, delta_min);
          const double diff = truth - pred;
          res.recon += diff * diff / (2 * dl * dl) + std::log(dl) + kHalfLog2Pi;
          d_pred = -diff / (dl * dl);
          if (raw > delta_min) d_delta[numeric] += -diff * diff / (dl * dl * dl) + 1.0 / dl;
        } else {
          const double diff = pred - truth;
          res.recon += diff * diff;
          d_pred = 2 * diff;
        }
        res.d_logits(b, s.start) = static_cast<Real>(d_pred * (1 - pred * pred) * inv_b);
        ++numeric;
      } else {
        std::size_t hot = s.start;
        for (std::size_t i = 0; i < s.width; ++i)
          if (target(b, s.start + i) > target(b, hot)) hot = s.start + i;
        res.recon += -std::log(std::max<double>(out(b, hot), kProbFloor));
        for (std::size_t i = 0; i < s.width; ++i) {
          const auto c = s.start + i;
          res.d_logits(b, c) = static_cast<Real>((out(b, c) - target(b, c)) * inv_b);
        }
      }
    }
    for (std::size_t j = 0; j < mu.cols(); ++j) {
      const double m = mu(b, j), sd = sigma(b, j);
      require(sd > 0, ErrorKind::Data, "elbo: sigma must be positive");
      res.kl += 0.5 * (m * m + sd * sd - 1 - 2 * std::log(sd));
      res.d_mu(b, j) = static_cast<Real>(m * inv_b);
      res.d_sigma(b, j) = static_cast<Real>((sd - 1 / sd) * inv_b);
    }
  }
  res.recon *= inv_b;
  res.kl *= inv_b;
  res.loss = res.recon + res.kl;
  for (std::size_t i = 0; i < n_numeric && delta; ++i) res.d_delta[i] = static_cast<Real>(d_delta[i] * inv_b);
  return res;
}

/// Activations of the decoder output spans; one-hot spans use softmax.
template <typename Real>
nn::Tensor<Real> vae_activate(const std::vector<transform::OutputSpan>& spans, const nn::Tensor<Real>& logits) {
  nn::Tensor<Real> y = logits;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    Real* v = y.row_ptr(r);
    for (const auto& s : spans) {
      if (s.kind == transform::SpanKind::Alpha)
        v[s.start] = std::tanh(v[s.start]);
      else
        nn::softmax_inplace(v + s.start, s.width);
    }
  }
  return y;
}

/// Encoder/decoder pair for one table layout. Parameter names are stable
/// across tables so hidden layers can move between them.
template <typename Real>
class VaeNet {
 public:
  VaeNet(const VaeConfig& cfg, std::vector<transform::OutputSpan> spans, std::size_t row_width,
         std::size_t signature_width, Rng& init)
      : cfg_(cfg), spans_(std::move(spans)), row_width_(row_width), sig_width_(signature_width) {
    cfg.validate();
    require(cfg.variant == VaeVariant::STVAEM || signature_width == 0, ErrorKind::Usage,
            "signatures only apply to STVAEM");
    nn::NetSpec enc;
    std::size_t w = row_width + signature_width;
    for (auto h : cfg.hidden) {
      enc.push_back(nn::LayerSpec::dense(w, h));
      enc.push_back(nn::LayerSpec::relu());
      w = h;
    }
    enc.push_back(nn::LayerSpec::dense(w, 2 * cfg.latent));
    nn::NetSpec dec;
    w = cfg.latent;
    for (auto h : cfg.hidden) {
      dec.push_back(nn::LayerSpec::dense(w, h));
      dec.push_back(nn::LayerSpec::relu());
      w = h;
    }
    dec.push_back(nn::LayerSpec::dense(w, row_width));
    encoder_ = nn::Sequential<Real>(enc, row_width + signature_width, "encoder", init);
    decoder_ = nn::Sequential<Real>(dec, cfg.latent, "decoder", init);
    std::size_t n_numeric = 0;
    for (const auto& s : spans_) n_numeric += s.kind == transform::SpanKind::Alpha;
    if (cfg.variant == VaeVariant::TVAE)
      delta_ = nn::Param<Real>("delta", nn::Tensor<Real>(1, n_numeric, static_cast<Real>(cfg.delta_init)));
  }

  const VaeConfig& config() const { return cfg_; }
  const std::vector<transform::OutputSpan>& spans() const { return spans_; }
  std::size_t row_width() const { return row_width_; }
  std::size_t signature_width() const { return sig_width_; }
  std::size_t input_width() const { return row_width_ + sig_width_; }
  nn::Sequential<Real>& encoder() { return encoder_; }
  nn::Sequential<Real>& decoder() { return decoder_; }

  std::vector<nn::Param<Real>*> params() {
    auto p = encoder_.params();
    for (auto* d : decoder_.params()) p.push_back(d);
    if (cfg_.variant == VaeVariant::TVAE) p.push_back(&delta_);
    return p;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

  /// Hidden layers shared across tables. The first encoder layer and the last
  /// decoder layer depend on the table width; delta is per numeric column.
  bool is_body(const std::string& name) const {
    if (name == "delta") return false;
    const auto last_enc = "encoder.0.";
    const auto last_dec = "decoder." + std::to_string(2 * cfg_.hidden.size()) + ".";
    return !name.starts_with(last_enc) && !name.starts_with(last_dec);
  }

  struct Pass {
    nn::Tensor<Real> mu, sigma, eps, z, logits, out;
  };

  /// Encoder, reparameterisation and decoder. `eps` may be supplied to pin the
  /// latent noise; otherwise it is drawn from rng.
  Pass forward(const nn::Tensor<Real>& input, Rng& rng, const nn::Tensor<Real>* eps = nullptr) {
    require(input.cols() == input_width(), ErrorKind::Shape,
            "vae: input width " + std::to_string(input.cols()) + " != " + std::to_string(input_width()));
    const std::size_t B = input.rows(), L = cfg_.latent;
    Pass p;
    const auto enc = encoder_.forward(input, nn::Mode::Train, rng);
    p.mu = nn::Tensor<Real>(B, L);
    p.sigma = nn::Tensor<Real>(B, L);
    p.eps = eps ? *eps : nn::Tensor<Real>(B, L);
    require(p.eps.rows() == B && p.eps.cols() == L, ErrorKind::Shape, "vae: eps shape mismatch");
    p.z = nn::Tensor<Real>(B, L);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < L; ++j) {
        p.mu(b, j) = enc(b, j);
        const Real logvar = std::clamp(enc(b, L + j), Real(-30), Real(20));
        p.sigma(b, j) = std::exp(logvar / Real(2));
        if (!eps) p.eps(b, j) = static_cast<Real>(rng.normal());
        p.z(b, j) = p.mu(b, j) + p.sigma(b, j) * p.eps(b, j);
      }
    p.logits = decoder_.forward(p.z, nn::Mode::Train, rng);
    p.out = vae_activate(spans_, p.logits);
    return p;
  }

  const std::vector<Real>* delta_values() const {
    return cfg_.variant == VaeVariant::TVAE ? &delta_.value.data : nullptr;
  }

  /// One forward/backward pass on a batch; gradients accumulate into params.
  ElboResult<Real> loss_and_grads(const nn::Tensor<Real>& input, const nn::Tensor<Real>& target, Rng& rng,
                                  const nn::Tensor<Real>* eps = nullptr) {
    require(target.cols() == row_width_, ErrorKind::Shape, "vae: target width mismatch");
    auto p = forward(input, rng, eps);
    auto res = elbo_loss<Real>(cfg_.variant, spans_, p.out, target, p.mu, p.sigma, delta_values(), cfg_.delta_min);
    const auto dz = decoder_.backward(res.d_logits);
    const std::size_t B = input.rows(), L = cfg_.latent;
    nn::Tensor<Real> d_enc(B, 2 * L);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < L; ++j) {
        d_enc(b, j) = dz(b, j) + res.d_mu(b, j);
        const Real d_sigma = dz(b, j) * p.eps(b, j) + res.d_sigma(b, j);
        d_enc(b, L + j) = d_sigma * p.sigma(b, j) / Real(2);
      }
    encoder_.backward(d_enc);
    if (cfg_.variant == VaeVariant::TVAE)
      for (std::size_t i = 0; i < res.d_delta.size(); ++i) delta_.grad.data[i] += res.d_delta[i];
    return res;
  }

  /// Loss only, no gradient bookkeeping beyond the cached forward.
  double loss(const nn::Tensor<Real>& input, const nn::Tensor<Real>& target, Rng& rng,
              const nn::Tensor<Real>* eps = nullptr) {
    auto p = forward(input, rng, eps);
    return elbo_loss<Real>(cfg_.variant, spans_, p.out, target, p.mu, p.sigma, delta_values(), cfg_.delta_min)
        .loss;
  }

  /// Decoded rows for z ~ N(0, I): alpha from tanh, one-hot blocks by argmax.
  nn::Tensor<Real> sample_encoded(std::size_t n, Rng& rng) {
    nn::Tensor<Real> z(n, cfg_.latent);
    for (auto& v : z.data) v = static_cast<Real>(rng.normal());
    if (n == 0) return nn::Tensor<Real>(0, row_width_);
    auto out = vae_activate(spans_, decoder_.forward(z, nn::Mode::Eval, rng));
    for (std::size_t r = 0; r < n; ++r) {
      Real* v = out.row_ptr(r);
      for (const auto& s : spans_) {
        if (s.kind == transform::SpanKind::Alpha) continue;
        std::size_t k = 0;
        for (std::size_t i = 1; i < s.width; ++i)
          if (v[s.start + i] > v[s.start + k]) k = i;
        std::fill(v + s.start, v + s.start + s.width, Real(0));
        v[s.start + k] = Real(1);
      }
    }
    return out;
  }

 private:
  VaeConfig cfg_;
  std::vector<transform::OutputSpan> spans_;
  std::size_t row_width_, sig_width_;
  nn::Sequential<Real> encoder_, decoder_;
  nn::Param<Real> delta_;
};

}  // namespace tabfm::models
