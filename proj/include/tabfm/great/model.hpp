#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/great/bpe.hpp"
#include "tabfm/neural/attention.hpp"
#include "tabfm/neural/optim.hpp"

namespace tabfm::great {

struct GreatConfig {
  std::size_t dim = 128;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t context = 256;
  std::size_t vocab_size = 2048;
  std::size_t batch = 32;
  double temperature = 0.7;
  std::size_t max_retries = 3;
  nn::AdamConfig adam{3e-4, 0.9, 0.999, 1e-8, 0.0};

  void validate() const {
    require(dim > 0 && heads > 0 && dim % heads == 0, ErrorKind::Usage, "great config: heads must divide dim");
    require(layers > 0 && context >= 2 && batch > 0, ErrorKind::Usage, "great config: bad sizes");
    require(vocab_size >= Vocab::kBase, ErrorKind::Usage, "great config: vocab_size too small");
    require(temperature >= 0, ErrorKind::Usage, "great config: negative temperature");
  }

  nlohmann::json to_json() const {
    return {{"dim", dim},         {"heads", heads},         {"layers", layers},
            {"context", context}, {"vocab_size", vocab_size}, {"batch", batch},
            {"temperature", temperature}, {"max_retries", max_retries}, {"lr", adam.lr},
            {"beta1", adam.beta1}, {"beta2", adam.beta2},   {"weight_decay", adam.weight_decay}};
  }

  static GreatConfig from_json(const nlohmann::json& j) {
    GreatConfig c;
    c.dim = j.value("dim", c.dim);
    c.heads = j.value("heads", c.heads);
    c.layers = j.value("layers", c.layers);
    c.context = j.value("context", c.context);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.batch = j.value("batch", c.batch);
    c.temperature = j.value("temperature", c.temperature);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.weight_decay = j.value("weight_decay", c.adam.weight_decay);
    c.validate();
    return c;
  }
};

/// Decoder-only transformer with learned positions and an output projection
/// tied to the token embedding.
template <typename Real>
class GreatModel {
 public:
  GreatModel(const GreatConfig& cfg, std::size_t vocab, Rng& init) : cfg_(cfg), vocab_(vocab) {
    cfg.validate();
    tok_ = nn::Param<Real>("great.tok", nn::Tensor<Real>(vocab, cfg.dim));
    pos_ = nn::Param<Real>("great.pos", nn::Tensor<Real>(cfg.context, cfg.dim));
    for (auto& v : tok_.value.data) v = static_cast<Real>(init.normal(0.0, 0.02));
    for (auto& v : pos_.value.data) v = static_cast<Real>(init.normal(0.0, 0.02));
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string n = "great.block." + std::to_string(l);
      auto b = std::make_unique<Block>(Block{nn::LayerNorm<Real>(cfg.dim, n + ".ln1"),
                                             nn::CausalSelfAttention<Real>(cfg.dim, cfg.heads, n + ".attn", init),
                                             nn::LayerNorm<Real>(cfg.dim, n + ".ln2"),
                                             nn::Dense<Real>(cfg.dim, 4 * cfg.dim, n + ".fc", init),
                                             nn::Gelu<Real>(),
                                             nn::Dense<Real>(4 * cfg.dim, cfg.dim, n + ".out", init)});
      blocks_.push_back(std::move(b));
    }
    final_ln_ = std::make_unique<nn::LayerNorm<Real>>(cfg.dim, "great.ln_f");
  }

  const GreatConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return vocab_; }

  std::vector<nn::Param<Real>*> params() {
    std::vector<nn::Param<Real>*> p{&tok_, &pos_};
    for (auto& b : blocks_)
      for (nn::Layer<Real>* l : b->layers())
        for (auto* q : l->params()) p.push_back(q);
    for (auto* q : final_ln_->params()) p.push_back(q);
    return p;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

  /// Logits [B*T, V] for B sequences of equal length T.
  nn::Tensor<Real> forward(const std::vector<std::vector<int>>& seqs) {
    require(!seqs.empty(), ErrorKind::Shape, "great: empty batch");
    const std::size_t T = seqs[0].size();
    require(T > 0 && T <= cfg_.context, ErrorKind::Shape,
            "great: sequence length " + std::to_string(T) + " exceeds context " + std::to_string(cfg_.context));
    seqs_ = seqs;
    nn::Tensor<Real> x(seqs.size() * T, cfg_.dim);
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      require(seqs[b].size() == T, ErrorKind::Shape, "great: ragged batch");
      for (std::size_t t = 0; t < T; ++t) {
        const int id = seqs[b][t];
        require(id >= 0 && static_cast<std::size_t>(id) < vocab_, ErrorKind::Data, "great: token out of range");
        Real* xr = x.row_ptr(b * T + t);
        for (std::size_t e = 0; e < cfg_.dim; ++e) xr[e] = tok_.value(id, e) + pos_.value(t, e);
      }
    }
    Rng unused(0);
    for (auto& blk : blocks_) {
      blk->attn.set_seq_len(T);
      auto a = blk->attn.forward(blk->ln1.forward(x, nn::Mode::Train, unused), nn::Mode::Train, unused);
      x.mat() += a.mat();
      auto m = blk->out.forward(
          blk->act.forward(blk->fc.forward(blk->ln2.forward(x, nn::Mode::Train, unused), nn::Mode::Train, unused),
                           nn::Mode::Train, unused),
          nn::Mode::Train, unused);
      x.mat() += m.mat();
    }
    hidden_ = final_ln_->forward(x, nn::Mode::Train, unused);
    nn::Tensor<Real> logits(hidden_.rows(), vocab_);
    logits.mat().noalias() = hidden_.mat() * tok_.value.mat().transpose();
    return logits;
  }

  /// Accumulates parameter gradients for dL/dlogits of the last forward.
  void backward(const nn::Tensor<Real>& d_logits) {
    require(d_logits.rows() == hidden_.rows() && d_logits.cols() == vocab_, ErrorKind::Shape,
            "great backward: shape mismatch");
    tok_.grad.mat().noalias() += d_logits.mat().transpose() * hidden_.mat();
    nn::Tensor<Real> dh(hidden_.rows(), cfg_.dim);
    dh.mat().noalias() = d_logits.mat() * tok_.value.mat();
    auto dx = final_ln_->backward(dh, true);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
      auto& blk = **it;
      auto dm = blk.ln2.backward(blk.fc.backward(blk.act.backward(blk.out.backward(dx, true), true), true), true);
      dx.mat() += dm.mat();
      auto da = blk.ln1.backward(blk.attn.backward(dx, true), true);
      dx.mat() += da.mat();
    }
    const std::size_t T = seqs_[0].size();
    for (std::size_t b = 0; b < seqs_.size(); ++b)
      for (std::size_t t = 0; t < T; ++t) {
        const Real* g = dx.row_ptr(b * T + t);
        for (std::size_t e = 0; e < cfg_.dim; ++e) {
          tok_.grad(seqs_[b][t], e) += g[e];
          pos_.grad(t, e) += g[e];
        }
      }
  }

  /// Mean next-token cross-entropy over non-PAD targets, with gradients
  /// accumulated when `grads` is set.
  double loss(const std::vector<std::vector<int>>& batch, bool grads) {
    std::vector<std::vector<int>> inputs, targets;
    for (const auto& s : batch) {
      require(s.size() >= 2, ErrorKind::Shape, "great: sequence too short");
      inputs.emplace_back(s.begin(), s.end() - 1);
      targets.emplace_back(s.begin() + 1, s.end());
    }
    auto logits = forward(inputs);
    const std::size_t T = inputs[0].size();
    std::size_t count = 0;
    for (const auto& t : targets)
      for (int id : t) count += id != Vocab::kPad;
    require(count > 0, ErrorKind::Data, "great: batch has no targets");
    double total = 0.0;
    nn::Tensor<Real> d(logits.rows(), vocab_);
    for (std::size_t b = 0; b < targets.size(); ++b)
      for (std::size_t t = 0; t < T; ++t) {
        const int y = targets[b][t];
        if (y == Vocab::kPad) continue;
        Real* row = logits.row_ptr(b * T + t);
        nn::softmax_inplace(row, vocab_);
        total -= std::log(std::max(static_cast<double>(row[y]), 1e-30));
        Real* dr = d.row_ptr(b * T + t);
        for (std::size_t v = 0; v < vocab_; ++v) dr[v] = row[v] / static_cast<Real>(count);
        dr[y] -= Real(1) / static_cast<Real>(count);
      }
    if (grads) backward(d);
    return total / static_cast<double>(count);
  }

  /// Incremental decoding state: cached keys and values per layer.
  struct DecodeState {
    std::vector<std::vector<std::vector<Real>>> keys, values;  // [layer][position][dim]
    std::size_t length() const { return keys.empty() ? 0 : keys[0].size(); }
  };

  DecodeState start() const {
    DecodeState s;
    s.keys.resize(cfg_.layers);
    s.values.resize(cfg_.layers);
    return s;
  }

  /// Appends one token and returns the next-token logits. Matches forward()
  /// on the whole prefix up to float rounding.
  std::vector<Real> step(DecodeState& st, int token) const {
    const std::size_t t = st.length(), D = cfg_.dim, H = cfg_.heads, dh = D / H;
    require(t < cfg_.context, ErrorKind::Shape, "great: context exhausted");
    require(token >= 0 && static_cast<std::size_t>(token) < vocab_, ErrorKind::Data, "great: token out of range");
    std::vector<Real> x(D);
    for (std::size_t e = 0; e < D; ++e) x[e] = tok_.value(token, e) + pos_.value(t, e);
    const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      auto& blk = *blocks_[l];
      const auto a = layer_norm(blk.ln1, x);
      const auto qkv = dense(const_cast<nn::Dense<Real>&>(blk.attn.qkv()), a);
      st.keys[l].emplace_back(qkv.begin() + D, qkv.begin() + 2 * D);
      st.values[l].emplace_back(qkv.begin() + 2 * D, qkv.end());
      std::vector<Real> o(D, Real(0)), p(t + 1);
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t j = 0; j <= t; ++j) {
          Real s = 0;
          for (std::size_t e = 0; e < dh; ++e) s += qkv[h * dh + e] * st.keys[l][j][h * dh + e];
          p[j] = s * scale;
        }
        nn::softmax_inplace(p.data(), t + 1);
        for (std::size_t j = 0; j <= t; ++j)
          for (std::size_t e = 0; e < dh; ++e) o[h * dh + e] += p[j] * st.values[l][j][h * dh + e];
      }
      const auto y = dense(const_cast<nn::Dense<Real>&>(blk.attn.proj()), o);
      for (std::size_t e = 0; e < D; ++e) x[e] += y[e];
      auto f = dense(blk.fc, layer_norm(blk.ln2, x));
      for (auto& v : f) {
        const Real u = Real(0.7978845608028654) * (v + Real(0.044715) * v * v * v);
        v = Real(0.5) * v * (Real(1) + std::tanh(u));
      }
      const auto m = dense(blk.out, f);
      for (std::size_t e = 0; e < D; ++e) x[e] += m[e];
    }
    const auto h = layer_norm(*final_ln_, x);
    std::vector<Real> logits(vocab_, Real(0));
    for (std::size_t v = 0; v < vocab_; ++v) {
      Real s = 0;
      for (std::size_t e = 0; e < D; ++e) s += h[e] * tok_.value(v, e);
      logits[v] = s;
    }
    return logits;
  }

 private:
  struct Block {
    nn::LayerNorm<Real> ln1;
    nn::CausalSelfAttention<Real> attn;
    nn::LayerNorm<Real> ln2;
    nn::Dense<Real> fc;
    nn::Gelu<Real> act;
    nn::Dense<Real> out;

    std::vector<nn::Layer<Real>*> layers() { return {&ln1, &attn, &ln2, &fc, &act, &out}; }
  };

  static std::vector<Real> layer_norm(const nn::LayerNorm<Real>& ln, const std::vector<Real>& x) {
    double mean = 0.0, var = 0.0;
    for (Real v : x) mean += v;
    mean /= static_cast<double>(x.size());
    for (Real v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    const Real inv = static_cast<Real>(1.0 / std::sqrt(var + ln.eps()));
    std::vector<Real> y(x.size());
    for (std::size_t c = 0; c < x.size(); ++c)
      y[c] = ln.gain().value.data[c] * (x[c] - static_cast<Real>(mean)) * inv + ln.shift().value.data[c];
    return y;
  }

  static std::vector<Real> dense(nn::Dense<Real>& d, const std::vector<Real>& x) {
    std::vector<Real> y(d.out_dim());
    const auto& w = d.weight().value;
    for (std::size_t o = 0; o < d.out_dim(); ++o) {
      Real s = d.bias().value.data[o];
      const Real* wr = w.row_ptr(o);
      for (std::size_t i = 0; i < d.in_dim(); ++i) s += wr[i] * x[i];
      y[o] = s;
    }
    return y;
  }

  GreatConfig cfg_;
  std::size_t vocab_;
  nn::Param<Real> tok_, pos_;
  std::vector<std::unique_ptr<Block>> blocks_;
  std::unique_ptr<nn::LayerNorm<Real>> final_ln_;
  std::vector<std::vector<int>> seqs_;
  nn::Tensor<Real> hidden_;
};

}  // namespace tabfm::great
