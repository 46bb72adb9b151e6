#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/neural/layers.hpp"
#include "tabfm/neural/tensor.hpp"

namespace tabfm::nn {

enum class LayerType { Dense, ReLU, LeakyReLU, Tanh, Gelu, Heads, BatchNorm, Dropout, ConcatSkip };

/// Declarative layer descriptor. ConcatSkip wraps `inner` and emits x ⊕ inner(x).
struct LayerSpec {
  LayerType type = LayerType::Dense;
  std::size_t in = 0, out = 0;  // Dense; BatchNorm uses `out` as its width
  double slope = 0.2;           // LeakyReLU
  double p = 0.5;               // Dropout
  double tau = 0.2;             // Gumbel heads
  std::vector<HeadSpan> spans;  // Heads
  std::vector<LayerSpec> inner; // ConcatSkip

  static LayerSpec dense(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.type = LayerType::Dense;
    s.in = in;
    s.out = out;
    return s;
  }
  static LayerSpec relu() { return typed(LayerType::ReLU); }
  static LayerSpec leaky_relu(double slope) {
    auto s = typed(LayerType::LeakyReLU);
    s.slope = slope;
    return s;
  }
  static LayerSpec tanh() { return typed(LayerType::Tanh); }
  static LayerSpec gelu() { return typed(LayerType::Gelu); }
  static LayerSpec heads(std::vector<HeadSpan> spans, double tau = 0.2) {
    auto s = typed(LayerType::Heads);
    s.spans = std::move(spans);
    s.tau = tau;
    return s;
  }
  static LayerSpec batch_norm(std::size_t dim) {
    auto s = typed(LayerType::BatchNorm);
    s.out = dim;
    return s;
  }
  static LayerSpec dropout(double p) {
    auto s = typed(LayerType::Dropout);
    s.p = p;
    return s;
  }
  static LayerSpec concat_skip(std::vector<LayerSpec> inner) {
    auto s = typed(LayerType::ConcatSkip);
    s.inner = std::move(inner);
    return s;
  }

 private:
  static LayerSpec typed(LayerType t) {
    LayerSpec s;
    s.type = t;
    return s;
  }
};

using NetSpec = std::vector<LayerSpec>;

/// Output width of a spec for a given input width; throws on incompatible
/// adjacent dimensions.
inline std::size_t spec_output_width(const NetSpec& spec, std::size_t width) {
  for (const auto& l : spec) {
    switch (l.type) {
      case LayerType::Dense:
        require(l.in == width, ErrorKind::Shape,
                "NetSpec: Dense expects " + std::to_string(l.in) + " inputs, gets " +
                    std::to_string(width));
        width = l.out;
        break;
      case LayerType::BatchNorm:
        require(l.out == width, ErrorKind::Shape, "NetSpec: BatchNorm width mismatch");
        break;
      case LayerType::Heads: {
        std::size_t total = 0;
        for (const auto& s : l.spans) total += s.width;
        require(total == width, ErrorKind::Shape, "NetSpec: head spans must cover the width");
        break;
      }
      case LayerType::ConcatSkip:
        width += spec_output_width(l.inner, width);
        break;
      default:
        break;
    }
  }
  return width;
}

template <typename Real>
class Sequential;

namespace detail {
template <typename Real>
std::unique_ptr<Layer<Real>> build_layer_w(const LayerSpec& s, const std::string& name, Rng& init,
                                           std::size_t width);
}  // namespace detail

/// An ordered stack of layers with cached forward state.
template <typename Real>
class Sequential {
 public:
  Sequential() = default;
  Sequential(const NetSpec& spec, std::size_t in_width, const std::string& name, Rng& init)
      : in_width_(in_width), out_width_(spec_output_width(spec, in_width)) {
    std::size_t width = in_width;
    for (std::size_t i = 0; i < spec.size(); ++i) {
      layers_.push_back(
          detail::build_layer_w<Real>(spec[i], name + "." + std::to_string(i), init, width));
      width = spec_output_width(NetSpec{spec[i]}, width);
    }
  }

  std::size_t in_width() const { return in_width_; }
  std::size_t out_width() const { return out_width_; }
  std::size_t size() const { return layers_.size(); }
  Layer<Real>& layer(std::size_t i) { return *layers_[i]; }

  Tensor<Real> forward(const Tensor<Real>& x, Mode mode, Rng& rng) {
    require(x.cols() == in_width_, ErrorKind::Shape,
            "net input width " + std::to_string(x.cols()) + " != " + std::to_string(in_width_));
    Tensor<Real> h = x;
    for (auto& l : layers_) h = l->forward(h, mode, rng);
    require(h.all_finite(), ErrorKind::Data, "non-finite network output");
    return h;
  }

  Tensor<Real> backward(const Tensor<Real>& dy, bool accumulate = true) {
    Tensor<Real> g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g, accumulate);
    return g;
  }

  std::vector<Param<Real>*> params() {
    std::vector<Param<Real>*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

  struct PenaltyResult {
    Real penalty = 0;
    std::vector<Real> grad_norms;  // per input row
  };

  /// Gradient penalty lambda * mean_b (||d out_b / d x_b||_2 - 1)^2 for a
  /// scalar-output network made of chain-linear layers. The input gradient is
  /// restricted to the columns flagged in `columns` (all when empty).
  /// Parameter gradients of the penalty are added to the accumulators
  /// (second-order pass). The forward pass runs in `mode` and consumes `rng`
  /// for dropout.
  PenaltyResult input_gradient_penalty(const Tensor<Real>& x, Real lambda,
                                       const std::vector<bool>& columns, Mode mode, Rng& rng) {
    require(out_width_ == 1, ErrorKind::Shape, "gradient penalty needs a scalar-output network");
    require(columns.empty() || columns.size() == in_width_, ErrorKind::Shape,
            "gradient penalty column mask width mismatch");
    auto use = [&](std::size_t c) { return columns.empty() || columns[c]; };
    for (auto& l : layers_)
      require(l->chain_linear(), ErrorKind::Usage,
              "gradient penalty unsupported through layer " + l->kind());
    const std::size_t n = x.rows();
    forward(x, mode, rng);
    // v[i] is the gradient of the output w.r.t. the input of layer i.
    std::vector<Tensor<Real>> v(layers_.size() + 1);
    v[layers_.size()] = Tensor<Real>(n, 1, Real(1));
    for (std::size_t i = layers_.size(); i-- > 0;) v[i] = layers_[i]->backward(v[i + 1], false);

    PenaltyResult res;
    res.grad_norms.resize(n);
    Tensor<Real> adj(n, in_width_);
    for (std::size_t r = 0; r < n; ++r) {
      Real sq = 0;
      for (std::size_t c = 0; c < in_width_; ++c)
        if (use(c)) sq += v[0](r, c) * v[0](r, c);
      const Real norm = std::sqrt(sq);
      res.grad_norms[r] = norm;
      res.penalty += (norm - Real(1)) * (norm - Real(1));
      if (norm > Real(0)) {
        const Real k = lambda * Real(2) * (norm - Real(1)) / (norm * Real(n));
        for (std::size_t c = 0; c < in_width_; ++c)
          if (use(c)) adj(r, c) = k * v[0](r, c);
      }
    }
    res.penalty *= lambda / Real(n);
    for (std::size_t i = 0; i < layers_.size(); ++i) adj = layers_[i]->chain_reverse(adj, v[i + 1]);
    return res;
  }

 private:
  std::vector<std::unique_ptr<Layer<Real>>> layers_;
  std::size_t in_width_ = 0, out_width_ = 0;
};

/// Emits x ⊕ inner(x).
template <typename Real>
class ConcatSkip final : public Layer<Real> {
 public:
  ConcatSkip(const NetSpec& inner, std::size_t in_width, const std::string& name, Rng& init)
      : inner_(inner, in_width, name, init) {}
  std::string kind() const override { return "ConcatSkip"; }

  Tensor<Real> forward(const Tensor<Real>& x, Mode mode, Rng& rng) override {
    cached_ = true;
    return concat_cols(x, inner_.forward(x, mode, rng));
  }
  Tensor<Real> backward(const Tensor<Real>& dy, bool accumulate) override {
    this->require_cache(cached_);
    const auto in = inner_.in_width();
    Tensor<Real> dx = slice_cols(dy, 0, in);
    const Tensor<Real> di = inner_.backward(slice_cols(dy, in, dy.cols() - in), accumulate);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += di.data[i];
    return dx;
  }
  std::vector<Param<Real>*> params() override { return inner_.params(); }

 private:
  Sequential<Real> inner_;
  bool cached_ = false;
};

namespace detail {

// ConcatSkip needs the running input width.
template <typename Real>
std::unique_ptr<Layer<Real>> build_layer_w(const LayerSpec& s, const std::string& name, Rng& init,
                                           std::size_t width) {
  switch (s.type) {
    case LayerType::Dense:
      return std::make_unique<Dense<Real>>(s.in, s.out, name, init);
    case LayerType::ReLU:
      return std::make_unique<ReLU<Real>>();
    case LayerType::LeakyReLU:
      return std::make_unique<LeakyReLU<Real>>(s.slope);
    case LayerType::Tanh:
      return std::make_unique<Tanh<Real>>();
    case LayerType::Gelu:
      return std::make_unique<Gelu<Real>>();
    case LayerType::Heads:
      return std::make_unique<Heads<Real>>(s.spans, s.tau);
    case LayerType::BatchNorm:
      return std::make_unique<BatchNorm<Real>>(s.out, name);
    case LayerType::Dropout:
      return std::make_unique<Dropout<Real>>(s.p);
    case LayerType::ConcatSkip:
      return std::make_unique<ConcatSkip<Real>>(s.inner, width, name, init);
  }
  fail(ErrorKind::Usage, "unknown layer type");
}

}  // namespace detail

}  // namespace tabfm::nn
