#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/neural/functional.hpp"
#include "tabfm/neural/tensor.hpp"

namespace tabfm::nn {

/// Train: batch statistics, dropout and Gumbel noise active.
/// Eval: deterministic, running statistics, no noise.
/// Sample: like Eval but Gumbel heads draw hard one-hot samples with noise.
enum class Mode { Train, Eval, Sample };

template <typename Real>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Tensor<Real> forward(const Tensor<Real>& x, Mode mode, Rng& rng) = 0;
  /// dL/dx for the most recent forward; adds parameter gradients when `accumulate`.
  virtual Tensor<Real> backward(const Tensor<Real>& dy, bool accumulate = true) = 0;
  virtual std::vector<Param<Real>*> params() { return {}; }

  /// Layers whose input Jacobian is fixed once the forward pass is cached
  /// (affine maps and piecewise-linear masks) support second-order passes
  /// through the input-gradient chain.
  virtual bool chain_linear() const { return false; }
  /// Reverse of the chain step v_in = J^T v_out: takes the adjoint of v_in,
  /// accumulates parameter gradients, returns the adjoint of v_out.
  virtual Tensor<Real> chain_reverse(const Tensor<Real>& adj_in, const Tensor<Real>& v_out) {
    (void)adj_in;
    (void)v_out;
    fail(ErrorKind::Usage, kind() + " does not support second-order passes");
  }

 protected:
  void require_cache(bool ok) const {
    require(ok, ErrorKind::Usage, kind() + ": backward called before forward");
  }
};

/// y = x W^T + b with W of shape [out, in].
template <typename Real>
class Dense final : public Layer<Real> {
 public:
  Dense(std::size_t in, std::size_t out, const std::string& name, Rng& init)
      : in_(in), out_(out) {
    Tensor<Real> w(out, in), b(1, out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : w.data) v = static_cast<Real>(init.uniform(-bound, bound));
    for (auto& v : b.data) v = static_cast<Real>(init.uniform(-bound, bound));
    weight_ = Param<Real>(name + ".weight", std::move(w));
    bias_ = Param<Real>(name + ".bias", std::move(b));
  }

  std::string kind() const override { return "Dense"; }
  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }
  Param<Real>& weight() { return weight_; }
  Param<Real>& bias() { return bias_; }

  Tensor<Real> forward(const Tensor<Real>& x, Mode, Rng&) override {
    require(x.cols() == in_, ErrorKind::Shape,
            "Dense: input width " + std::to_string(x.cols()) + " != " + std::to_string(in_));
    x_ = x;
    cached_ = true;
    Tensor<Real> y(x.rows(), out_);
    y.mat().noalias() = x.mat() * weight_.value.mat().transpose();
    y.mat().rowwise() += bias_.value.mat().row(0);
    return y;
  }

  Tensor<Real> backward(const Tensor<Real>& dy, bool accumulate) override {
    this->require_cache(cached_);
    require_shape(dy, x_.rows(), out_, "Dense backward");
    if (accumulate) {
      weight_.grad.mat().noalias() += dy.mat().transpose() * x_.mat();
      bias_.grad.mat().row(0) += dy.mat().colwise().sum();
    }
    Tensor<Real> dx(dy.rows(), in_);
    dx.mat().noalias() = dy.mat() * weight_.value.mat();
    return dx;
  }

  std::vector<Param<Real>*> params() override { return {&weight_, &bias_}; }

  bool chain_linear() const override { return true; }
  Tensor<Real> chain_reverse(const Tensor<Real>& adj_in, const Tensor<Real>& v_out) override {
    weight_.grad.mat().noalias() += v_out.mat().transpose() * adj_in.mat();
    Tensor<Real> adj_out(adj_in.rows(), out_);
    adj_out.mat().noalias() = adj_in.mat() * weight_.value.mat().transpose();
    return adj_out;
  }

 private:
  std::size_t in_, out_;
  Param<Real> weight_, bias_;
  Tensor<Real> x_;
  bool cached_ = false;
};

/// Elementwise layer whose local derivative is cached as a mask.
template <typename Real>
class MaskLayer : public Layer<Real> {
 public:
  Tensor<Real> backward(const Tensor<Real>& dy, bool) override {
    this->require_cache(!mask_.empty());
    require(dy.same_shape(mask_), ErrorKind::Shape, this->kind() + ": gradient shape mismatch");
    Tensor<Real> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= mask_.data[i];
    return dx;
  }
  bool chain_linear() const override { return true; }
  Tensor<Real> chain_reverse(const Tensor<Real>& adj_in, const Tensor<Real>&) override {
    return backward(adj_in, false);
  }

 protected:
  Tensor<Real> mask_;
};

template <typename Real>
class ReLU final : public MaskLayer<Real> {
 public:
  std::string kind() const override { return "ReLU"; }
  Tensor<Real> forward(const Tensor<Real>& x, Mode, Rng&) override {
    Tensor<Real> y = x;
    this->mask_ = Tensor<Real>(x.shape);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const bool pos = x.data[i] > Real(0);
      this->mask_.data[i] = pos ? Real(1) : Real(0);
      if (!pos) y.data[i] = Real(0);
    }
    return y;
  }
};

template <typename Real>
class LeakyReLU final : public MaskLayer<Real> {
 public:
  explicit LeakyReLU(double slope) : slope_(static_cast<Real>(slope)) {}
  std::string kind() const override { return "LeakyReLU"; }
  Tensor<Real> forward(const Tensor<Real>& x, Mode, Rng&) override {
    Tensor<Real> y = x;
    this->mask_ = Tensor<Real>(x.shape);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const Real s = x.data[i] > Real(0) ? Real(1) : slope_;
      this->mask_.data[i] = s;
      y.data[i] *= s;
    }
    return y;
  }

 private:
  Real slope_;
};

template <typename Real>
class Dropout final : public MaskLayer<Real> {
 public:
  explicit Dropout(double p) : p_(p) {
    require(p >= 0.0 && p < 1.0, ErrorKind::Usage, "Dropout: p must be in [0,1)");
  }
  std::string kind() const override { return "Dropout"; }
  Tensor<Real> forward(const Tensor<Real>& x, Mode mode, Rng& rng) override {
    this->mask_ = Tensor<Real>(x.shape, Real(1));
    if (mode == Mode::Train && p_ > 0.0) {
      const Real scale = static_cast<Real>(1.0 / (1.0 - p_));
      for (auto& m : this->mask_.data) m = rng.uniform() < p_ ? Real(0) : scale;
    }
    Tensor<Real> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] *= this->mask_.data[i];
    return y;
  }

 private:
  double p_;
};

template <typename Real>
class Tanh final : public Layer<Real> {
 public:
  std::string kind() const override { return "Tanh"; }
  Tensor<Real> forward(const Tensor<Real>& x, Mode, Rng&) override {
    y_ = x;
    for (auto& v : y_.data) v = std::tanh(v);
    return y_;
  }
  Tensor<Real> backward(const Tensor<Real>& dy, bool) override {
    this->require_cache(!y_.empty());
    Tensor<Real> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= Real(1) - y_.data[i] * y_.data[i];
    return dx;
  }

 private:
  Tensor<Real> y_;
};

/// tanh-approximated GELU.
template <typename Real>
class Gelu final : public Layer<Real> {
 public:
  std::string kind() const override { return "GELU"; }
  Tensor<Real> forward(const Tensor<Real>& x, Mode, Rng&) override {
    x_ = x;
    Tensor<Real> y = x;
    for (auto& v : y.data) {
      const Real u = kC * (v + Real(0.044715) * v * v * v);
      v = Real(0.5) * v * (Real(1) + std::tanh(u));
    }
    return y;
  }
  Tensor<Real> backward(const Tensor<Real>& dy, bool) override {
    this->require_cache(!x_.empty());
    Tensor<Real> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const Real v = x_.data[i];
      const Real u = kC * (v + Real(0.044715) * v * v * v);
      const Real t = std::tanh(u);
      const Real du = kC * (Real(1) + Real(3 * 0.044715) * v * v);
      dx.data[i] *= Real(0.5) * (Real(1) + t) + Real(0.5) * v * (Real(1) - t * t) * du;
    }
    return dx;
  }

 private:
  static constexpr Real kC = Real(0.7978845608028654);  // sqrt(2/pi)
  Tensor<Real> x_;
};

/// Per-feature batch normalisation with affine output. Running statistics are
/// non-trainable parameters so they travel with checkpoints.
template <typename Real>
class BatchNorm final : public Layer<Real> {
 public:
  BatchNorm(std::size_t dim, const std::string& name, double momentum = 0.1, double eps = 1e-5)
      : dim_(dim), momentum_(momentum), eps_(eps) {
    gamma_ = Param<Real>(name + ".gamma", Tensor<Real>(1, dim, Real(1)));
    beta_ = Param<Real>(name + ".beta", Tensor<Real>(1, dim, Real(0)));
    running_mean_ = Param<Real>(name + ".running_mean", Tensor<Real>(1, dim, Real(0)));
    running_var_ = Param<Real>(name + ".running_var", Tensor<Real>(1, dim, Real(1)));
    running_mean_.trainable = false;
    running_var_.trainable = false;
  }
  std::string kind() const override { return "BatchNorm"; }

  Tensor<Real> forward(const Tensor<Real>& x, Mode mode, Rng&) override {
    require(x.cols() == dim_, ErrorKind::Shape, "BatchNorm: width mismatch");
    const std::size_t n = x.rows();
    xhat_ = Tensor<Real>(n, dim_);
    inv_std_.assign(dim_, Real(1));
    Tensor<Real> y(n, dim_);
    train_cache_ = mode == Mode::Train;
    for (std::size_t c = 0; c < dim_; ++c) {
      Real mean, var;
      if (train_cache_) {
        require(n >= 1, ErrorKind::Shape, "BatchNorm: empty batch");
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += x(r, c);
        mean = static_cast<Real>(s / n);
        double v = 0.0;
        for (std::size_t r = 0; r < n; ++r) v += double(x(r, c) - mean) * double(x(r, c) - mean);
        var = static_cast<Real>(v / n);
        const double unbiased = n > 1 ? v / (n - 1) : v;
        auto& rm = running_mean_.value.data[c];
        auto& rv = running_var_.value.data[c];
        rm = static_cast<Real>((1 - momentum_) * rm + momentum_ * mean);
        rv = static_cast<Real>((1 - momentum_) * rv + momentum_ * unbiased);
      } else {
        mean = running_mean_.value.data[c];
        var = running_var_.value.data[c];
      }
      const Real inv = Real(1) / std::sqrt(var + static_cast<Real>(eps_));
      inv_std_[c] = inv;
      for (std::size_t r = 0; r < n; ++r) {
        const Real h = (x(r, c) - mean) * inv;
        xhat_(r, c) = h;
        y(r, c) = gamma_.value.data[c] * h + beta_.value.data[c];
      }
    }
    return y;
  }

  Tensor<Real> backward(const Tensor<Real>& dy, bool accumulate) override {
    this->require_cache(!xhat_.empty());
    require(dy.same_shape(xhat_), ErrorKind::Shape, "BatchNorm backward: shape mismatch");
    const std::size_t n = dy.rows();
    Tensor<Real> dx(n, dim_);
    for (std::size_t c = 0; c < dim_; ++c) {
      Real sum_dy = 0, sum_dy_xhat = 0;
      for (std::size_t r = 0; r < n; ++r) {
        sum_dy += dy(r, c);
        sum_dy_xhat += dy(r, c) * xhat_(r, c);
      }
      if (accumulate) {
        gamma_.grad.data[c] += sum_dy_xhat;
        beta_.grad.data[c] += sum_dy;
      }
      const Real g = gamma_.value.data[c];
      const Real inv = inv_std_[c];
      for (std::size_t r = 0; r < n; ++r) {
        if (train_cache_) {
          dx(r, c) = g * inv / Real(n) *
                     (Real(n) * dy(r, c) - sum_dy - xhat_(r, c) * sum_dy_xhat);
        } else {
          dx(r, c) = g * inv * dy(r, c);
        }
      }
    }
    return dx;
  }

  std::vector<Param<Real>*> params() override {
    return {&gamma_, &beta_, &running_mean_, &running_var_};
  }

 private:
  std::size_t dim_;
  double momentum_, eps_;
  Param<Real> gamma_, beta_, running_mean_, running_var_;
  Tensor<Real> xhat_;
  std::vector<Real> inv_std_;
  bool train_cache_ = true;
};

enum class HeadAct { Identity, Tanh, Softmax, Gumbel };

struct HeadSpan {
  std::size_t start = 0;
  std::size_t width = 0;
  HeadAct act = HeadAct::Identity;
};

/// Applies one activation per column span (tanh for normalised values,
/// softmax or Gumbel-softmax for one-hot blocks). Spans partition the width.
template <typename Real>
class Heads final : public Layer<Real> {
 public:
  Heads(std::vector<HeadSpan> spans, double tau) : spans_(std::move(spans)), tau_(tau) {
    require(tau > 0.0, ErrorKind::Usage, "Heads: temperature must be positive");
    std::size_t expect = 0;
    for (const auto& s : spans_) {
      require(s.start == expect && s.width > 0, ErrorKind::Shape, "Heads: spans must partition the width");
      expect += s.width;
    }
    width_ = expect;
  }
  std::string kind() const override { return "Heads"; }
  const std::vector<HeadSpan>& spans() const { return spans_; }

  Tensor<Real> forward(const Tensor<Real>& x, Mode mode, Rng& rng) override {
    require(x.cols() == width_, ErrorKind::Shape, "Heads: width mismatch");
    soft_ = x;
    Tensor<Real> y(x.shape);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      Real* s = soft_.row_ptr(r);
      Real* out = y.row_ptr(r);
      for (const auto& sp : spans_) {
        Real* v = s + sp.start;
        switch (sp.act) {
          case HeadAct::Identity:
            break;
          case HeadAct::Tanh:
            for (std::size_t i = 0; i < sp.width; ++i) v[i] = std::tanh(v[i]);
            break;
          case HeadAct::Softmax:
            softmax_inplace(v, sp.width);
            break;
          case HeadAct::Gumbel:
            for (std::size_t i = 0; i < sp.width; ++i) {
              const double g = mode == Mode::Eval ? 0.0 : gumbel_noise(rng);
              v[i] = static_cast<Real>((v[i] + g) / tau_);
            }
            softmax_inplace(v, sp.width);
            break;
        }
        std::copy(v, v + sp.width, out + sp.start);
        if (sp.act == HeadAct::Gumbel && mode == Mode::Sample) {
          std::size_t k = 0;
          for (std::size_t i = 1; i < sp.width; ++i)
            if (v[i] > v[k]) k = i;
          std::fill(out + sp.start, out + sp.start + sp.width, Real(0));
          out[sp.start + k] = Real(1);
        }
      }
    }
    return y;
  }

  /// Gradients flow through the relaxed values, also for hard samples.
  Tensor<Real> backward(const Tensor<Real>& dy, bool) override {
    this->require_cache(!soft_.empty());
    require(dy.same_shape(soft_), ErrorKind::Shape, "Heads backward: shape mismatch");
    Tensor<Real> dx(dy.shape);
    for (std::size_t r = 0; r < dy.rows(); ++r) {
      const Real* s = soft_.row_ptr(r);
      const Real* g = dy.row_ptr(r);
      Real* d = dx.row_ptr(r);
      for (const auto& sp : spans_) {
        const auto a = sp.start;
        switch (sp.act) {
          case HeadAct::Identity:
            for (std::size_t i = 0; i < sp.width; ++i) d[a + i] = g[a + i];
            break;
          case HeadAct::Tanh:
            for (std::size_t i = 0; i < sp.width; ++i)
              d[a + i] = g[a + i] * (Real(1) - s[a + i] * s[a + i]);
            break;
          case HeadAct::Softmax:
            softmax_backward(s + a, g + a, d + a, sp.width);
            break;
          case HeadAct::Gumbel:
            softmax_backward(s + a, g + a, d + a, sp.width);
            for (std::size_t i = 0; i < sp.width; ++i) d[a + i] /= static_cast<Real>(tau_);
            break;
        }
      }
    }
    return dx;
  }

  /// Relaxed values of the last forward (equal to the output except for hard samples).
  const Tensor<Real>& soft() const { return soft_; }

 private:
  std::vector<HeadSpan> spans_;
  double tau_;
  std::size_t width_ = 0;
  Tensor<Real> soft_;
};

}  // namespace tabfm::nn
