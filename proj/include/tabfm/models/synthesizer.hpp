#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/data/table.hpp"
#include "tabfm/great/great.hpp"
#include "tabfm/models/cond.hpp"
#include "tabfm/models/ctgan.hpp"
#include "tabfm/models/vae.hpp"
#include "tabfm/transform/table_transformer.hpp"

namespace tabfm::models {

enum class Method { CTGAN, TVAE, STVAE, STVAEM, GREAT };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::CTGAN: return "ctgan";
    case Method::TVAE: return "tvae";
    case Method::STVAE: return "stvae";
    case Method::STVAEM: return "stvaem";
    case Method::GREAT: return "great";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  for (auto m : {Method::CTGAN, Method::TVAE, Method::STVAE, Method::STVAEM, Method::GREAT})
    if (to_string(m) == s) return m;
  fail(ErrorKind::Usage, "unknown method '" + s + "' (expected ctgan, tvae, stvae, stvaem or great)");
}

inline bool is_vae(Method m) { return m == Method::TVAE || m == Method::STVAE || m == Method::STVAEM; }

/// Everything needed to rebuild a synthesizer of a given kind.
struct ModelConfig {
  Method method = Method::STVAE;
  VaeConfig vae;
  CtganConfig ctgan;
  great::GreatConfig great;
  std::size_t modes = 10;  // GMM components per numeric column

  nlohmann::json to_json() const {
    return {{"method", to_string(method)}, {"modes", modes}, {"vae", vae.to_json()},
            {"ctgan", ctgan.to_json()},    {"great", great.to_json()}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.method = method_from_string(j.value("method", std::string("stvae")));
    c.modes = j.value("modes", c.modes);
    if (j.contains("vae")) c.vae = VaeConfig::from_json(j.at("vae"));
    if (j.contains("ctgan")) c.ctgan = CtganConfig::from_json(j.at("ctgan"));
    if (j.contains("great")) c.great = great::GreatConfig::from_json(j.at("great"));
    c.validate();
    return c;
  }

  void validate() const {
    require(modes >= 1, ErrorKind::Usage, "model config: modes must be >= 1");
    vae.validate();
    ctgan.validate();
    great.validate();
  }
};

using Params = std::vector<nn::Param<float>*>;
using TensorMap = std::map<std::string, nn::Tensor<float>>;

namespace detail {

inline transform::TableTransformer fit_transformer(const Table& t, std::size_t modes, std::uint64_t seed) {
  transform::TransformOptions opt;
  opt.modes = modes;
  return transform::TableTransformer::fit(t, opt, Rng(seed).substream("gmm").next_u64());
}

inline nn::Tensor<float> to_tensor(const transform::TransformedMatrix& m) {
  nn::Tensor<float> t(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) t.data[i] = static_cast<float>(m.data[i]);
  return t;
}

inline Table decode_tensor(const transform::TableTransformer& tt, const nn::Tensor<float>& enc, std::size_t n) {
  std::vector<double> d(enc.data.begin(), enc.data.end());
  return tt.decode(d, n);
}

inline nn::Tensor<float> gather_rows(const nn::Tensor<float>& src, std::size_t width,
                                     const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
  nn::Tensor<float> out(end - begin, width);
  for (std::size_t i = begin; i < end; ++i)
    std::copy(src.data.begin() + idx[i] * width, src.data.begin() + (idx[i] + 1) * width, out.row_ptr(i - begin));
  return out;
}

}  // namespace detail

/// A trainable generator bound to one table at a time. Re-attaching to a
/// different table keeps the shared body weights and swaps the per-table
/// heads; heads seen earlier are restored from a cache keyed by table name.
class Synthesizer {
 public:
  virtual ~Synthesizer() = default;

  virtual Method method() const = 0;
  virtual Params params() = 0;
  virtual bool is_body(const std::string& name) const = 0;
  /// Mean training loss over one pass of the attached table.
  virtual double train_epoch(Rng& rng) = 0;
  /// NaN when the model has no likelihood-style validation loss.
  virtual double validation_loss(const Table& val, Rng& rng) = 0;
  virtual Table sample(std::size_t n, Rng& rng) = 0;
  /// Table-specific state (transformers, vocabulary) needed to sample again.
  virtual nlohmann::json table_state() const = 0;
  /// Hook run once on the whole pretraining corpus before any attach.
  virtual void prepare_corpus(const std::vector<Table>&) {}
  /// Adopts shared state (e.g. a tokenizer) from a pretrained checkpoint
  /// before the first attach.
  virtual void inherit(const nlohmann::json&) {}

  const ModelConfig& config() const { return cfg_; }
  const std::string& table_name() const { return table_name_; }
  bool attached() const { return attached_; }

  /// Binds to a table. `fit` fixes the encoding (schema, categories, modes);
  /// `train` holds the rows used for training.
  void attach(const Table& fit, const Table& train, std::uint64_t seed) {
    TensorMap body;
    if (attached_) {
      for (auto* p : params()) {
        if (is_body(p->name))
          body[p->name] = p->value;
        else
          head_cache_[table_name_][p->name] = p->value;
      }
    }
    build(fit, train, seed);
    table_name_ = fit.name;
    attached_ = true;
    const auto cached = head_cache_.find(fit.name);
    for (auto* p : params()) {
      if (is_body(p->name)) {
        if (auto it = body.find(p->name); it != body.end()) {
          require(it->second.shape == p->value.shape, ErrorKind::Shape,
                  "body parameter " + p->name + " changed shape between tables");
          p->value = it->second;
        }
      } else {
        forget_moments(p->name);
        if (cached != head_cache_.end())
          if (auto it = cached->second.find(p->name); it != cached->second.end() && it->second.shape == p->value.shape)
            p->value = it->second;
      }
    }
  }

  void attach(const Table& table, std::uint64_t seed) { attach(table, table, seed); }

  /// Rebuilds from saved table state with fresh weights; used before loading
  /// a checkpoint's tensors for sampling.
  void restore(const nlohmann::json& state, std::uint64_t seed) {
    restore_state(state, seed);
    table_name_ = state.at("table").get<std::string>();
    attached_ = true;
  }

  TensorMap snapshot() {
    TensorMap out;
    for (auto* p : params()) out[p->name] = p->value;
    return out;
  }

  /// Copies matching tensors; with `body_only` heads are left untouched.
  /// Returns the number of tensors loaded.
  std::size_t load(const TensorMap& tensors, bool body_only) {
    std::size_t n = 0;
    for (auto* p : params()) {
      if (body_only && !is_body(p->name)) continue;
      auto it = tensors.find(p->name);
      if (it == tensors.end()) {
        require(!body_only, ErrorKind::Data, "checkpoint lacks body parameter " + p->name);
        continue;
      }
      require(it->second.shape == p->value.shape, ErrorKind::Data,
              "checkpoint tensor " + p->name + " has shape " + nn::shape_str(it->second.shape) + ", model expects " +
                  nn::shape_str(p->value.shape));
      p->value = it->second;
      ++n;
    }
    return n;
  }

 protected:
  explicit Synthesizer(ModelConfig cfg) : cfg_(std::move(cfg)) {}
  virtual void build(const Table& fit, const Table& train, std::uint64_t seed) = 0;
  virtual void restore_state(const nlohmann::json& state, std::uint64_t seed) = 0;
  virtual void forget_moments(const std::string& name) = 0;

  /// GMM fits are cached per table so pretraining passes do not refit.
  const transform::TableTransformer& transformer_for(const Table& fit, std::uint64_t seed) {
    const auto key = fit.name + "#" + std::to_string(seed);
    auto it = tt_cache_.find(key);
    if (it == tt_cache_.end()) it = tt_cache_.emplace(key, detail::fit_transformer(fit, cfg_.modes, seed)).first;
    return it->second;
  }

  ModelConfig cfg_;

 private:
  std::string table_name_;
  bool attached_ = false;
  std::map<std::string, TensorMap> head_cache_;
  std::map<std::string, transform::TableTransformer> tt_cache_;
};


class VaeSynth final : public Synthesizer {
 public:
  VaeSynth(ModelConfig cfg, std::map<std::string, std::vector<double>> embeddings = {})
      : Synthesizer(std::move(cfg)), embeddings_(std::move(embeddings)) {
    require(is_vae(cfg_.method), ErrorKind::Usage, "VaeSynth needs a VAE method");
    cfg_.vae.variant = cfg_.method == Method::TVAE    ? VaeVariant::TVAE
                       : cfg_.method == Method::STVAE ? VaeVariant::STVAE
                                                      : VaeVariant::STVAEM;
  }

  Method method() const override { return cfg_.method; }
  Params params() override { return net_ ? net_->params() : Params{}; }
  bool is_body(const std::string& name) const override { return net_->is_body(name); }
  VaeNet<float>& net() { return *net_; }
  const transform::TableTransformer& transformer() const { return tt_; }

  double train_epoch(Rng& rng) override {
    require(train_.rows() > 0, ErrorKind::Data, "vae: no training rows attached");
    const std::size_t n = train_.rows(), B = std::min(cfg_.vae.batch, n);
    const auto order = rng.permutation(n);
    double total = 0.0;
    for (std::size_t begin = 0; begin < n; begin += B) {
      const std::size_t end = std::min(n, begin + B);
      const auto target = detail::gather_rows(train_, tt_.width(), order, begin, end);
      net_->zero_grad();
      const auto res = net_->loss_and_grads(with_signature(target), target, rng);
      opt_.step(net_->params());
      total += res.loss * static_cast<double>(end - begin);
    }
    return total / static_cast<double>(n);
  }

  double validation_loss(const Table& val, Rng& rng) override {
    if (val.n_rows() == 0) return std::numeric_limits<double>::quiet_NaN();
    Rng enc = rng.substream("encode");
    const auto target = detail::to_tensor(tt_.encode(val, enc));
    return net_->loss(with_signature(target), target, rng);
  }

  Table sample(std::size_t n, Rng& rng) override {
    return detail::decode_tensor(tt_, net_->sample_encoded(n, rng), n);
  }

  nlohmann::json table_state() const override {
    return {{"table", tt_.table_name()}, {"transformer", tt_.to_json()}, {"signature", signature_}};
  }

 protected:
  void build(const Table& fit, const Table& train, std::uint64_t seed) override {
    tt_ = transformer_for(fit, seed);
    Rng enc = Rng(seed).substream("encode");
    train_ = detail::to_tensor(tt_.encode(train, enc));
    make_net(seed);
  }

  void restore_state(const nlohmann::json& state, std::uint64_t seed) override {
    tt_ = transform::TableTransformer::from_json(state.at("transformer"));
    train_ = nn::Tensor<float>();
    const auto sig = state.value("signature", std::vector<double>{});
    make_net(seed, &sig);
  }

  void forget_moments(const std::string& name) override { opt_.forget(name); }

 private:
  void make_net(std::uint64_t seed, const std::vector<double>* saved = nullptr) {
    if (saved)
      signature_ = *saved;
    else
      signature_ = cfg_.vae.variant == VaeVariant::STVAEM
                       ? stvaem_signatures(tt_, embeddings_, cfg_.vae.signature_dim)
                       : std::vector<double>{};
    Rng init = Rng(seed).substream("model-init");
    net_ = std::make_unique<VaeNet<float>>(cfg_.vae, tt_.spans(), tt_.width(), signature_.size(), init);
    if (!opt_built_) {
      opt_ = nn::Adam<float>(cfg_.vae.adam);
      opt_built_ = true;
    }
  }

  nn::Tensor<float> with_signature(const nn::Tensor<float>& rows) const {
    if (signature_.empty()) return rows;
    nn::Tensor<float> s(rows.rows(), signature_.size());
    for (std::size_t r = 0; r < rows.rows(); ++r)
      for (std::size_t c = 0; c < signature_.size(); ++c) s(r, c) = static_cast<float>(signature_[c]);
    return nn::concat_cols(rows, s);
  }

  std::map<std::string, std::vector<double>> embeddings_;
  transform::TableTransformer tt_;
  nn::Tensor<float> train_;
  std::vector<double> signature_;
  std::unique_ptr<VaeNet<float>> net_;
  nn::Adam<float> opt_;
  bool opt_built_ = false;
};

class CtganSynth final : public Synthesizer {
 public:
  explicit CtganSynth(ModelConfig cfg) : Synthesizer(std::move(cfg)) {
    require(cfg_.method == Method::CTGAN, ErrorKind::Usage, "CtganSynth needs method ctgan");
  }

  Method method() const override { return Method::CTGAN; }
  Params params() override { return net_ ? net_->params() : Params{}; }
  bool is_body(const std::string& name) const override { return net_->is_body(name); }
  CtganNet<float>& net() { return *net_; }
  const transform::TableTransformer& transformer() const { return tt_; }
  const std::vector<std::vector<double>>& counts() const { return counts_; }

  struct StepLosses {
    double critic = 0, penalty = 0, generator = 0;
  };

  /// One critic update followed by one generator update on fresh batches.
  StepLosses train_batch(Rng& rng) {
    require(data_.rows > 0, ErrorKind::Data, "ctgan: no training rows attached");
    StepLosses out;
    const std::size_t B = cfg_.ctgan.batch;
    for (auto* p : net_->params()) p->zero_grad();
    const auto c = net_->critic_objective(net_->draw_batch(data_, index_, counts_, B, rng), rng);
    critic_opt_.step(net_->critic_params());
    for (auto* p : net_->params()) p->zero_grad();
    const auto g = net_->generator_objective(net_->draw_batch(data_, index_, counts_, B, rng), rng);
    generator_opt_.step(net_->generator_params());
    out.critic = c.loss;
    out.penalty = c.penalty;
    out.generator = g.loss;
    return out;
  }

  /// Enough batches to see roughly every row once.
  double train_epoch(Rng& rng) override {
    const std::size_t steps = std::max<std::size_t>(1, data_.rows / cfg_.ctgan.batch);
    double total = 0.0;
    for (std::size_t s = 0; s < steps; ++s) total += train_batch(rng).generator;
    return total / static_cast<double>(steps);
  }

  double validation_loss(const Table&, Rng&) override { return std::numeric_limits<double>::quiet_NaN(); }

  Table sample(std::size_t n, Rng& rng) override { return sample_conditioned(n, rng, std::nullopt); }

  Table sample_conditioned(std::size_t n, Rng& rng, std::optional<Condition> forced) {
    return detail::decode_tensor(tt_, net_->sample_encoded(n, counts_, rng, forced), n);
  }

  /// Condition for a column name and label of the attached table.
  Condition condition_for(const std::string& column, const std::string& label) const {
    std::size_t i = 0;
    for (const auto& c : tt_.columns()) {
      if (c.numeric) continue;
      if (tt_.schema()[c.column].name == column) {
        for (std::size_t k = 0; k < c.categories.size(); ++k)
          if (c.categories[k] == label) return {i, k};
        fail(ErrorKind::Usage, "no category '" + label + "' in column '" + column + "'");
      }
      ++i;
    }
    fail(ErrorKind::Usage, "no categorical column '" + column + "'");
  }

  nlohmann::json table_state() const override {
    return {{"table", tt_.table_name()}, {"transformer", tt_.to_json()}, {"counts", counts_}};
  }

 protected:
  void build(const Table& fit, const Table& train, std::uint64_t seed) override {
    tt_ = transformer_for(fit, seed);
    Rng enc = Rng(seed).substream("encode");
    data_ = tt_.encode(train, enc);
    make_net(seed);
    index_ = CategoryIndex(net_->layout(), data_);
    counts_ = index_.counts();
  }

  void restore_state(const nlohmann::json& state, std::uint64_t seed) override {
    tt_ = transform::TableTransformer::from_json(state.at("transformer"));
    counts_ = state.at("counts").get<std::vector<std::vector<double>>>();
    data_ = transform::TransformedMatrix{};
    make_net(seed);
  }

  void forget_moments(const std::string& name) override {
    generator_opt_.forget(name);
    critic_opt_.forget(name);
  }

 private:
  void make_net(std::uint64_t seed) {
    Rng init = Rng(seed).substream("model-init");
    net_ = std::make_unique<CtganNet<float>>(cfg_.ctgan, tt_.spans(), tt_.width(), init);
    if (!opt_built_) {
      generator_opt_ = nn::Adam<float>(cfg_.ctgan.adam);
      critic_opt_ = nn::Adam<float>(cfg_.ctgan.adam);
      opt_built_ = true;
    }
  }

  transform::TableTransformer tt_;
  transform::TransformedMatrix data_;
  CategoryIndex index_;
  std::vector<std::vector<double>> counts_;
  std::unique_ptr<CtganNet<float>> net_;
  nn::Adam<float> generator_opt_, critic_opt_;
  bool opt_built_ = false;
};

/// Every weight of the language model is shared across tables; only the
/// schema used to parse generated text is per table.
class GreatSynth final : public Synthesizer {
 public:
  explicit GreatSynth(ModelConfig cfg) : Synthesizer(std::move(cfg)) {
    require(cfg_.method == Method::GREAT, ErrorKind::Usage, "GreatSynth needs method great");
  }

  Method method() const override { return Method::GREAT; }
  Params params() override { return model_ ? model_->params() : Params{}; }
  bool is_body(const std::string&) const override { return true; }
  great::GreatModel<float>& model() { return *model_; }
  const great::Vocab& vocab() const { return *vocab_; }
  double last_validity() const { return last_validity_; }

  void prepare_corpus(const std::vector<Table>& corpus) override {
    std::vector<std::string> sentences;
    for (const auto& t : corpus)
      for (auto& s : great::serialize_table(t, nullptr)) sentences.push_back(std::move(s));
    set_vocab(great::train_bpe(sentences, cfg_.great.vocab_size));
  }

  void inherit(const nlohmann::json& state) override {
    if (state.contains("vocab")) set_vocab(great::Vocab::from_json(state.at("vocab")));
  }

  void set_vocab(great::Vocab v) {
    vocab_ = std::move(v);
    model_.reset();
  }

  double train_epoch(Rng& rng) override {
    require(train_.n_rows() > 0, ErrorKind::Data, "great: no training rows attached");
    auto order = rng.permutation(train_.n_rows());
    std::vector<std::vector<int>> seqs;
    for (auto r : order)
      seqs.push_back(great::encode_sentence(
          *vocab_, transform::serialize_row_text(train_.columns, train_.rows[r], true, &rng)));
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < seqs.size(); begin += cfg_.great.batch) {
      const std::size_t end = std::min(seqs.size(), begin + cfg_.great.batch);
      std::vector<std::vector<int>> batch(seqs.begin() + begin, seqs.begin() + end);
      total += great::great_train_step(*model_, batch, opt_);
      ++batches;
    }
    return total / static_cast<double>(batches);
  }

  double validation_loss(const Table& val, Rng&) override {
    if (val.n_rows() == 0) return std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<int>> seqs;
    for (const auto& s : great::serialize_table(val, nullptr)) seqs.push_back(great::encode_sentence(*vocab_, s));
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t begin = 0; begin < seqs.size(); begin += cfg_.great.batch) {
      const std::size_t end = std::min(seqs.size(), begin + cfg_.great.batch);
      std::vector<std::vector<int>> batch(seqs.begin() + begin, seqs.begin() + end);
      total += model_->loss(great::pad_batch(batch, cfg_.great.context), false) * static_cast<double>(end - begin);
      n += end - begin;
    }
    return total / static_cast<double>(n);
  }

  Table sample(std::size_t n, Rng& rng) override {
    Table schema;
    schema.name = table_name();
    schema.columns = schema_;
    auto res = great::great_generate(*model_, *vocab_, schema, n, rng, cfg_.great.temperature, cfg_.great.max_retries);
    last_validity_ = res.validity();
    return res.table;
  }

  nlohmann::json table_state() const override {
    nlohmann::json schema = nlohmann::json::array();
    for (const auto& m : schema_)
      schema.push_back({{"name", m.name}, {"numerical", m.kind.is_numerical()}, {"categories", m.categories}});
    return {{"table", table_name()}, {"schema", schema}, {"vocab", vocab_->to_json()}};
  }

 protected:
  void build(const Table& fit, const Table& train, std::uint64_t seed) override {
    schema_ = fit.columns;
    train_ = train;
    if (!vocab_) {
      set_vocab(great::train_bpe(great::serialize_table(fit, nullptr), cfg_.great.vocab_size));
    }
    for (const auto& s : great::serialize_table(fit, nullptr))
      require(vocab_->encode(s).size() + 2 <= cfg_.great.context, ErrorKind::Data,
              "great: serialized row of table '" + fit.name + "' does not fit the context length");
    if (!model_) make_model(seed);
  }

  void restore_state(const nlohmann::json& state, std::uint64_t seed) override {
    vocab_ = great::Vocab::from_json(state.at("vocab"));
    schema_.clear();
    for (const auto& s : state.at("schema")) {
      ColumnMeta m;
      m.name = s.at("name").get<std::string>();
      m.kind = s.at("numerical").get<bool>() ? ColumnKind::numerical() : ColumnKind::categorical();
      m.categories = s.at("categories").get<std::vector<std::string>>();
      schema_.push_back(std::move(m));
    }
    train_ = Table{};
    make_model(seed);
  }

  void forget_moments(const std::string& name) override { opt_.forget(name); }

 private:
  void make_model(std::uint64_t seed) {
    Rng init = Rng(seed).substream("model-init");
    model_ = std::make_unique<great::GreatModel<float>>(cfg_.great, vocab_->size(), init);
    opt_ = nn::Adam<float>(cfg_.great.adam);
  }

  std::optional<great::Vocab> vocab_;
  std::vector<ColumnMeta> schema_;
  Table train_;
  std::unique_ptr<great::GreatModel<float>> model_;
  nn::Adam<float> opt_;
  double last_validity_ = 0.0;
};

inline std::unique_ptr<Synthesizer> make_synthesizer(const ModelConfig& cfg,
                                                     const std::map<std::string, std::vector<double>>& embeddings = {}) {
  switch (cfg.method) {
    case Method::CTGAN: return std::make_unique<CtganSynth>(cfg);
    case Method::GREAT: return std::make_unique<GreatSynth>(cfg);
    default: return std::make_unique<VaeSynth>(cfg, embeddings);
  }
}

}  // namespace tabfm::models
