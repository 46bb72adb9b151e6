#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/neural/tensor.hpp"

namespace tabfm::nn {

/// In-place softmax over one contiguous block.
template <typename Real>
void softmax_inplace(Real* v, std::size_t n) {
  Real mx = v[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = std::exp(v[i] - mx);
    s += v[i];
  }
  for (std::size_t i = 0; i < n; ++i) v[i] /= s;
}

/// Backward of softmax given its output y: dx = y * (dy - <dy, y>).
template <typename Real>
void softmax_backward(const Real* y, const Real* dy, Real* dx, std::size_t n) {
  Real dot = 0;
  for (std::size_t i = 0; i < n; ++i) dot += dy[i] * y[i];
  for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] * (dy[i] - dot);
}

/// Standard Gumbel noise -log(-log(u)).
inline double gumbel_noise(Rng& rng) { return -std::log(-std::log(rng.uniform_open())); }

struct GumbelSample {
  std::vector<double> soft;   // softmax((logits + g) / tau)
  std::vector<double> value;  // soft, or its argmax one-hot when hard
};

/// Relaxed one-hot draw. In hard mode the returned value is the argmax
/// one-hot while `soft` carries the relaxed sample that gradients use.
inline GumbelSample gumbel_softmax(std::span<const double> logits, double tau, Rng& rng, bool hard) {
  require(tau > 0.0, ErrorKind::Usage, "gumbel_softmax: temperature must be positive");
  require(!logits.empty(), ErrorKind::Shape, "gumbel_softmax: empty logits");
  GumbelSample out;
  out.soft.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out.soft[i] = (logits[i] + gumbel_noise(rng)) / tau;
  softmax_inplace(out.soft.data(), out.soft.size());
  out.value = out.soft;
  if (hard) {
    const auto k = static_cast<std::size_t>(std::max_element(out.soft.begin(), out.soft.end()) -
                                            out.soft.begin());
    std::fill(out.value.begin(), out.value.end(), 0.0);
    out.value[k] = 1.0;
  }
  return out;
}

/// KL(N(mu, diag sigma^2) || N(0, I)) = 1/2 sum(mu^2 + sigma^2 - 1 - ln sigma^2).
template <typename Real>
Real kl_std_normal(std::span<const Real> mu, std::span<const Real> sigma) {
  require(mu.size() == sigma.size(), ErrorKind::Shape, "kl_std_normal: size mismatch");
  Real kl = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    require(sigma[i] > 0, ErrorKind::Data, "kl_std_normal: sigma must be positive");
    const Real s2 = sigma[i] * sigma[i];
    kl += mu[i] * mu[i] + s2 - Real(1) - std::log(s2);
  }
  return kl / Real(2);
}

template <typename Real>
Real tensor_sum(const Tensor<Real>& t) {
  Real s = 0;
  for (Real v : t.data) s += v;
  return s;
}

}  // namespace tabfm::nn
