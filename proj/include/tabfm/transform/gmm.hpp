#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>
#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/data/split.hpp"

namespace tabfm::transform {

/// Gaussian mixture over one numeric column. Slots beyond the selected mode
/// count, and modes pruned for low weight, are inactive (weight 0).
struct GmmParams {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<bool> active;
  double std_floor = 1e-6;

  std::size_t slots() const { return weights.size(); }

  std::vector<std::size_t> active_modes() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < active.size(); ++k)
      if (active[k]) out.push_back(k);
    return out;
  }
  std::size_t n_active() const { return active_modes().size(); }

  void validate() const {
    double total = 0.0;
    for (std::size_t k = 0; k < slots(); ++k)
      if (active[k]) {
        total += weights[k];
        require(stds[k] >= std_floor * (1 - 1e-12), ErrorKind::Data, "gmm: std below floor");
      }
    require(n_active() >= 1 && std::abs(total - 1.0) <= 1e-9, ErrorKind::Data,
            "gmm: active weights must sum to 1");
  }
};

struct GmmOptions {
  std::size_t max_iter = 300;
  double tol = 1e-6;            // mean log-likelihood gain that counts as converged
  double prune_weight = 0.005;  // modes lighter than this are deactivated
  bool select_by_bic = true;    // try 1..K modes and keep the lowest BIC
  std::size_t max_points = 20000;
};

struct GmmFit {
  GmmParams params;
  std::vector<double> log_likelihood;  // mean per-sample LL after each EM step, chosen run
  std::size_t components = 0;          // mode count before pruning
  double bic = 0.0;
};

namespace detail {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

struct EmRun {
  std::vector<double> w, mu, sd;
  std::vector<double> trace;
  double ll = -std::numeric_limits<double>::infinity();
};

inline EmRun run_em(std::span<const double> x, std::size_t k, double floor, std::uint64_t seed,
                    const GmmOptions& opt) {
  const std::size_t n = x.size();
  EmRun run;
  run.w.assign(k, 0.0);
  run.mu.assign(k, 0.0);
  run.sd.assign(k, floor);
  {
    std::vector<std::vector<double>> pts(n, std::vector<double>(1));
    for (std::size_t i = 0; i < n; ++i) pts[i][0] = x[i];
    const auto km = kmeans(pts, k, seed, 50);
    std::vector<double> cnt(k, 0.0), s1(k, 0.0), s2(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = km.assignments[i];
      cnt[c] += 1.0;
      s1[c] += x[i];
    }
    for (std::size_t c = 0; c < k; ++c) run.mu[c] = cnt[c] > 0 ? s1[c] / cnt[c] : km.centroids[c][0];
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = km.assignments[i];
      s2[c] += (x[i] - run.mu[c]) * (x[i] - run.mu[c]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      run.w[c] = std::max(cnt[c], 1e-3) / static_cast<double>(n);
      run.sd[c] = std::max(floor, cnt[c] > 0 ? std::sqrt(s2[c] / cnt[c]) : floor);
    }
    const double tw = std::accumulate(run.w.begin(), run.w.end(), 0.0);
    for (auto& w : run.w) w /= tw;
  }

  std::vector<double> resp(n * k);
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    // E-step
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double lp = run.w[c] > 0 ? std::log(run.w[c]) + log_normal_pdf(x[i], run.mu[c], run.sd[c])
                                       : -std::numeric_limits<double>::infinity();
        resp[i * k + c] = lp;
        mx = std::max(mx, lp);
      }
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        resp[i * k + c] = std::exp(resp[i * k + c] - mx);
        s += resp[i * k + c];
      }
      for (std::size_t c = 0; c < k; ++c) resp[i * k + c] /= s;
      ll += mx + std::log(s);
    }
    ll /= static_cast<double>(n);
    run.trace.push_back(ll);
    run.ll = ll;
    if (it > 0 && ll - prev < opt.tol) break;
    prev = ll;
    // M-step
    for (std::size_t c = 0; c < k; ++c) {
      double nk = 0.0, s1 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nk += resp[i * k + c];
        s1 += resp[i * k + c] * x[i];
      }
      if (nk <= 1e-12) {
        run.w[c] = 0.0;
        continue;
      }
      const double mean = s1 / nk;
      double s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) s2 += resp[i * k + c] * (x[i] - mean) * (x[i] - mean);
      run.w[c] = nk / static_cast<double>(n);
      run.mu[c] = mean;
      run.sd[c] = std::max(floor, std::sqrt(s2 / nk));
    }
  }
  return run;
}

}  // namespace detail

/// EM fit with k-means++ initialisation. With BIC selection on, every mode
/// count 1..K (capped at the number of distinct values) is fitted and the
/// lowest-BIC run kept; light modes are then deactivated and the rest
/// renormalised.
inline GmmFit fit_gmm_traced(std::span<const double> values, std::size_t K, std::uint64_t seed,
                             const GmmOptions& opt = {}) {
  require(!values.empty(), ErrorKind::Data, "fit_gmm: empty input");
  require(K >= 1, ErrorKind::Usage, "fit_gmm: K must be >= 1");
  for (double v : values) require(std::isfinite(v), ErrorKind::Data, "fit_gmm: non-finite value");

  std::vector<double> x(values.begin(), values.end());
  Rng rng(seed);
  if (x.size() > opt.max_points) {
    rng.shuffle(x);
    x.resize(opt.max_points);
  }
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double data_std = std::sqrt(var / n);
  const double floor = std::max(1e-4 * data_std, 1e-6);

  std::vector<double> distinct = x;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  GmmFit fit;
  fit.params.std_floor = floor;
  fit.params.weights.assign(K, 0.0);
  fit.params.means.assign(K, 0.0);
  fit.params.stds.assign(K, floor);
  fit.params.active.assign(K, false);

  if (distinct.size() < 2) {
    fit.params.weights[0] = 1.0;
    fit.params.means[0] = distinct.front();
    fit.params.active[0] = true;
    fit.components = 1;
    return fit;
  }

  const std::size_t kmax = std::min(K, distinct.size());
  std::size_t k_lo = opt.select_by_bic ? 1 : kmax;
  detail::EmRun best;
  double best_bic = std::numeric_limits<double>::infinity();
  for (std::size_t k = k_lo; k <= kmax; ++k) {
    auto run = detail::run_em(x, k, floor, rng.substream("em", k).next_u64(), opt);
    const double bic = -2.0 * n * run.ll + (3.0 * k - 1.0) * std::log(n);
    if (bic < best_bic) {
      best_bic = bic;
      best = std::move(run);
      fit.components = k;
    }
  }
  fit.bic = best_bic;
  fit.log_likelihood = best.trace;

  double kept = 0.0;
  for (std::size_t c = 0; c < best.w.size(); ++c)
    if (best.w[c] >= opt.prune_weight) kept += best.w[c];
  for (std::size_t c = 0; c < best.w.size(); ++c) {
    fit.params.means[c] = best.mu[c];
    fit.params.stds[c] = best.sd[c];
    if (best.w[c] >= opt.prune_weight) {
      fit.params.weights[c] = best.w[c] / kept;
      fit.params.active[c] = true;
    }
  }
  return fit;
}

inline GmmParams fit_gmm(std::span<const double> values, std::size_t K, std::uint64_t seed,
                         const GmmOptions& opt = {}) {
  return fit_gmm_traced(values, K, seed, opt).params;
}

/// Posterior mode probabilities over the active modes, in active-mode order.
inline std::vector<double> mode_responsibilities(const GmmParams& p, double c) {
  const auto modes = p.active_modes();
  std::vector<double> rho(modes.size());
  double total = 0.0;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const auto k = modes[i];
    rho[i] = p.weights[k] * std::exp(detail::log_normal_pdf(c, p.means[k], p.stds[k]));
    total += rho[i];
  }
  if (total > 0.0 && std::isfinite(total)) {
    for (double& r : rho) r /= total;
    return rho;
  }
  std::size_t nearest = 0;
  for (std::size_t i = 1; i < modes.size(); ++i)
    if (std::abs(c - p.means[modes[i]]) < std::abs(c - p.means[modes[nearest]])) nearest = i;
  std::fill(rho.begin(), rho.end(), 0.0);
  rho[nearest] = 1.0;
  return rho;
}

struct NumericCode {
  double alpha = 0.0;
  std::size_t mode = 0;  // index among active modes
};

inline constexpr double kAlphaScale = 4.0;

/// Samples a mode in proportion to its responsibility and normalises the
/// value against it; alpha is clipped to [-1, 1].
inline NumericCode encode_numeric(const GmmParams& p, double c, Rng& rng) {
  require(std::isfinite(c), ErrorKind::Data, "encode_numeric: non-finite value");
  const auto rho = mode_responsibilities(p, c);
  const std::size_t m = rho.size() == 1 ? 0 : rng.categorical(rho);
  const auto k = p.active_modes()[m];
  const double a = (c - p.means[k]) / (kAlphaScale * p.stds[k]);
  return {std::clamp(a, -1.0, 1.0), m};
}

inline double decode_numeric_mode(const GmmParams& p, double alpha, std::size_t mode) {
  const auto modes = p.active_modes();
  require(mode < modes.size(), ErrorKind::Shape, "decode_numeric: mode out of range");
  const auto k = modes[mode];
  return alpha * kAlphaScale * p.stds[k] + p.means[k];
}

inline double decode_numeric(const GmmParams& p, double alpha, std::span<const double> beta) {
  require(beta.size() == p.n_active(), ErrorKind::Shape, "decode_numeric: beta width mismatch");
  std::size_t ones = 0, hot = 0;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (beta[i] == 1.0) {
      ++ones;
      hot = i;
    } else {
      require(beta[i] == 0.0, ErrorKind::Data, "decode_numeric: beta is not one-hot");
    }
  }
  require(ones == 1, ErrorKind::Data, "decode_numeric: beta is not one-hot");
  return decode_numeric_mode(p, alpha, hot);
}

inline nlohmann::json to_json(const GmmParams& p) {
  return {{"weights", p.weights},
          {"means", p.means},
          {"stds", p.stds},
          {"active", p.active},
          {"std_floor", p.std_floor}};
}

inline GmmParams gmm_from_json(const nlohmann::json& j) {
  GmmParams p;
  p.weights = j.at("weights").get<std::vector<double>>();
  p.means = j.at("means").get<std::vector<double>>();
  p.stds = j.at("stds").get<std::vector<double>>();
  p.active = j.at("active").get<std::vector<bool>>();
  p.std_floor = j.at("std_floor").get<double>();
  return p;
}

}  // namespace tabfm::transform
