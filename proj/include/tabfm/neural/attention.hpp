#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tabfm/neural/layers.hpp"

namespace tabfm::nn {

/// Per-row normalisation over the feature axis with learned gain and shift.
template <typename Real>
class LayerNorm final : public Layer<Real> {
 public:
  LayerNorm(std::size_t dim, const std::string& name, double eps = 1e-5) : dim_(dim), eps_(eps) {
    gain_ = Param<Real>(name + ".gain", Tensor<Real>(1, dim, Real(1)));
    shift_ = Param<Real>(name + ".shift", Tensor<Real>(1, dim, Real(0)));
  }
  std::string kind() const override { return "LayerNorm"; }

  Tensor<Real> forward(const Tensor<Real>& x, Mode, Rng&) override {
    require(x.cols() == dim_, ErrorKind::Shape, "LayerNorm: width mismatch");
    const std::size_t n = x.rows();
    xhat_ = Tensor<Real>(n, dim_);
    inv_std_.assign(n, Real(0));
    Tensor<Real> y(n, dim_);
    for (std::size_t r = 0; r < n; ++r) {
      const Real* xr = x.row_ptr(r);
      double mean = 0.0, var = 0.0;
      for (std::size_t c = 0; c < dim_; ++c) mean += xr[c];
      mean /= static_cast<double>(dim_);
      for (std::size_t c = 0; c < dim_; ++c) var += (xr[c] - mean) * (xr[c] - mean);
      var /= static_cast<double>(dim_);
      const Real inv = static_cast<Real>(1.0 / std::sqrt(var + eps_));
      inv_std_[r] = inv;
      for (std::size_t c = 0; c < dim_; ++c) {
        const Real h = (xr[c] - static_cast<Real>(mean)) * inv;
        xhat_(r, c) = h;
        y(r, c) = gain_.value.data[c] * h + shift_.value.data[c];
      }
    }
    return y;
  }

  Tensor<Real> backward(const Tensor<Real>& dy, bool accumulate) override {
    this->require_cache(!inv_std_.empty() || xhat_.rows() == 0);
    require(dy.same_shape(xhat_), ErrorKind::Shape, "LayerNorm backward: shape mismatch");
    const std::size_t n = dy.rows();
    Tensor<Real> dx(n, dim_);
    std::vector<Real> g(dim_);
    for (std::size_t r = 0; r < n; ++r) {
      Real sum_g = 0, sum_g_xhat = 0;
      for (std::size_t c = 0; c < dim_; ++c) {
        g[c] = dy(r, c) * gain_.value.data[c];
        sum_g += g[c];
        sum_g_xhat += g[c] * xhat_(r, c);
        if (accumulate) {
          gain_.grad.data[c] += dy(r, c) * xhat_(r, c);
          shift_.grad.data[c] += dy(r, c);
        }
      }
      const Real inv_d = Real(1) / static_cast<Real>(dim_);
      for (std::size_t c = 0; c < dim_; ++c)
        dx(r, c) = inv_std_[r] * (g[c] - inv_d * sum_g - xhat_(r, c) * inv_d * sum_g_xhat);
    }
    return dx;
  }

  std::vector<Param<Real>*> params() override { return {&gain_, &shift_}; }
  const Param<Real>& gain() const { return gain_; }
  const Param<Real>& shift() const { return shift_; }
  double eps() const { return eps_; }

 private:
  std::size_t dim_;
  double eps_;
  Param<Real> gain_, shift_;
  Tensor<Real> xhat_;
  std::vector<Real> inv_std_;
};

/// Multi-head self-attention with a causal mask. Input rows are laid out as
/// consecutive sequences of `seq_len` positions; position t attends to
/// positions 0..t of its own sequence.
template <typename Real>
class CausalSelfAttention final : public Layer<Real> {
 public:
  CausalSelfAttention(std::size_t dim, std::size_t heads, const std::string& name, Rng& init)
      : dim_(dim), heads_(heads), qkv_(dim, 3 * dim, name + ".qkv", init), proj_(dim, dim, name + ".proj", init) {
    require(heads > 0 && dim % heads == 0, ErrorKind::Usage, "attention: heads must divide the width");
  }
  std::string kind() const override { return "CausalSelfAttention"; }

  void set_seq_len(std::size_t t) { seq_len_ = t; }
  std::size_t seq_len() const { return seq_len_; }
  std::size_t heads() const { return heads_; }
  Dense<Real>& qkv() { return qkv_; }
  Dense<Real>& proj() { return proj_; }

  Tensor<Real> forward(const Tensor<Real>& x, Mode mode, Rng& rng) override {
    require(seq_len_ > 0 && x.rows() % seq_len_ == 0, ErrorKind::Shape,
            "attention: rows must be a multiple of the sequence length");
    const std::size_t T = seq_len_, B = x.rows() / T, dh = dim_ / heads_;
    const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
    qkv_out_ = qkv_.forward(x, mode, rng);
    probs_.assign(B * heads_, Tensor<Real>(T, T));
    Tensor<Real> o(x.rows(), dim_);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < heads_; ++h) {
        auto& P = probs_[b * heads_ + h];
        for (std::size_t i = 0; i < T; ++i) {
          const Real* q = qkv_out_.row_ptr(b * T + i) + h * dh;
          for (std::size_t j = 0; j <= i; ++j) {
            const Real* k = qkv_out_.row_ptr(b * T + j) + dim_ + h * dh;
            Real s = 0;
            for (std::size_t e = 0; e < dh; ++e) s += q[e] * k[e];
            P(i, j) = s * scale;
          }
          softmax_inplace(P.row_ptr(i), i + 1);
          Real* out = o.row_ptr(b * T + i) + h * dh;
          for (std::size_t j = 0; j <= i; ++j) {
            const Real* v = qkv_out_.row_ptr(b * T + j) + 2 * dim_ + h * dh;
            for (std::size_t e = 0; e < dh; ++e) out[e] += P(i, j) * v[e];
          }
        }
      }
    return proj_.forward(o, mode, rng);
  }

  Tensor<Real> backward(const Tensor<Real>& dy, bool accumulate) override {
    this->require_cache(!probs_.empty() || qkv_out_.rows() == 0);
    const std::size_t T = seq_len_, B = dy.rows() / T, dh = dim_ / heads_;
    const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
    const auto d_o = proj_.backward(dy, accumulate);
    Tensor<Real> d_qkv(dy.rows(), 3 * dim_);
    std::vector<Real> dp(T), ds(T);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < heads_; ++h) {
        const auto& P = probs_[b * heads_ + h];
        for (std::size_t i = 0; i < T; ++i) {
          const Real* g = d_o.row_ptr(b * T + i) + h * dh;
          for (std::size_t j = 0; j <= i; ++j) {
            const Real* v = qkv_out_.row_ptr(b * T + j) + 2 * dim_ + h * dh;
            Real* dv = d_qkv.row_ptr(b * T + j) + 2 * dim_ + h * dh;
            Real s = 0;
            for (std::size_t e = 0; e < dh; ++e) {
              s += g[e] * v[e];
              dv[e] += P(i, j) * g[e];
            }
            dp[j] = s;
          }
          softmax_backward(P.row_ptr(i), dp.data(), ds.data(), i + 1);
          const Real* q = qkv_out_.row_ptr(b * T + i) + h * dh;
          Real* dq = d_qkv.row_ptr(b * T + i) + h * dh;
          for (std::size_t j = 0; j <= i; ++j) {
            const Real* k = qkv_out_.row_ptr(b * T + j) + dim_ + h * dh;
            Real* dk = d_qkv.row_ptr(b * T + j) + dim_ + h * dh;
            const Real w = ds[j] * scale;
            for (std::size_t e = 0; e < dh; ++e) {
              dq[e] += w * k[e];
              dk[e] += w * q[e];
            }
          }
        }
      }
    return qkv_.backward(d_qkv, accumulate);
  }

  std::vector<Param<Real>*> params() override {
    auto p = qkv_.params();
    for (auto* q : proj_.params()) p.push_back(q);
    return p;
  }

 private:
  std::size_t dim_, heads_, seq_len_ = 0;
  Dense<Real> qkv_, proj_;
  Tensor<Real> qkv_out_;
  std::vector<Tensor<Real>> probs_;
};

}  // namespace tabfm::nn
