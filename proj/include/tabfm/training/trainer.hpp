#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/data/table.hpp"
#include "tabfm/eval/metrics.hpp"
#include "tabfm/models/synthesizer.hpp"
#include "tabfm/training/checkpoint.hpp"

namespace tabfm::training {

struct TrainConfig {
  std::size_t epochs = 300;      // finetune / scratch
  std::size_t iterations = 100;  // pretraining passes over the corpus
  double wall_clock_seconds = 0;  // 0 disables the budget
  std::size_t patience = 30;
  double min_delta = 1e-4;
  std::size_t ckpt_every = 50;  // CTGAN snapshot interval
  double val_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    require(iterations >= 1, ErrorKind::Usage, "train config: iterations must be >= 1");
    require(patience >= 1, ErrorKind::Usage, "train config: patience must be >= 1");
    require(ckpt_every >= 1, ErrorKind::Usage, "train config: ckpt_every must be >= 1");
    require(val_fraction >= 0 && val_fraction < 1, ErrorKind::Usage, "train config: val_fraction must be in [0, 1)");
    require(min_delta >= 0 && wall_clock_seconds >= 0, ErrorKind::Usage, "train config: negative threshold");
  }

  nlohmann::json to_json() const {
    return {{"epochs", epochs},         {"iterations", iterations}, {"wall_clock_seconds", wall_clock_seconds},
            {"patience", patience},     {"min_delta", min_delta},   {"ckpt_every", ckpt_every},
            {"val_fraction", val_fraction}, {"seed", seed}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.iterations = j.value("iterations", c.iterations);
    c.wall_clock_seconds = j.value("wall_clock_seconds", c.wall_clock_seconds);
    c.patience = j.value("patience", c.patience);
    c.min_delta = j.value("min_delta", c.min_delta);
    c.ckpt_every = j.value("ckpt_every", c.ckpt_every);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based; for pretraining, the iteration
  std::string dataset;
  double train_loss = 0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double val_score = std::numeric_limits<double>::quiet_NaN();  // CTGAN snapshot Overall
};

struct TrainLog {
  std::vector<EpochRecord> records;
  std::optional<std::size_t> best_epoch;
  std::string stop_reason;  // "epochs", "early-stop", "iterations", "wall-clock"

  std::string to_csv() const {
    std::ostringstream os;
    os << "epoch,dataset,train_loss,val_loss,val_score\n";
    auto num = [](double v) {
      if (std::isnan(v)) return std::string();
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      return std::string(buf);
    };
    for (const auto& r : records)
      os << r.epoch << "," << csv::quote(r.dataset) << "," << num(r.train_loss) << "," << num(r.val_loss) << ","
         << num(r.val_score) << "\n";
    return os.str();
  }

  bool budget_exhausted() const { return stop_reason == "wall-clock"; }
};

/// Patience-based early stopping on a loss that should decrease.
class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

  /// Records one epoch; true when training should stop after it.
  bool update(std::size_t epoch, double loss) {
    if (!best_ || loss < best_loss_ - min_delta_) {
      best_ = epoch;
      best_loss_ = loss;
      stale_ = 0;
      improved_ = true;
      return false;
    }
    improved_ = false;
    return ++stale_ >= patience_;
  }

  bool improved() const { return improved_; }
  std::optional<std::size_t> best_epoch() const { return best_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  double min_delta_;
  std::optional<std::size_t> best_;
  double best_loss_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
  bool improved_ = false;
};

struct EarlyStopTrace {
  std::size_t stopped_after = 0;
  std::optional<std::size_t> best_epoch;
};

/// Replays the stopping rule over a list of per-epoch losses.
inline EarlyStopTrace early_stop_trace(const std::vector<double>& losses, std::size_t patience, double min_delta) {
  EarlyStopper s(patience, min_delta);
  EarlyStopTrace t;
  for (std::size_t e = 1; e <= losses.size(); ++e) {
    t.stopped_after = e;
    if (s.update(e, losses[e - 1])) break;
  }
  t.best_epoch = s.best_epoch();
  return t;
}

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
};

namespace detail {

inline std::string corpus_hash(const std::vector<const Table*>& tables) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* t : tables) {
    h = tabfm::detail::fnv1a(t->name, h);
    h = tabfm::detail::fnv1a(to_csv(*t), h);
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Seeded row split into (train, val); val is empty for tiny tables.
inline std::pair<Table, Table> holdout(const Table& t, double fraction, Rng rng) {
  Table train, val;
  train.name = val.name = t.name;
  train.columns = val.columns = t.columns;
  const std::size_t n = t.n_rows();
  std::size_t n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  if (fraction > 0 && n_val == 0 && n >= 2) n_val = 1;
  const auto order = rng.permutation(n);
  std::vector<bool> in_val(n, false);
  for (std::size_t i = 0; i < n_val; ++i) in_val[order[i]] = true;
  // keep original row order inside both parts
  for (std::size_t r = 0; r < n; ++r) (in_val[r] ? val : train).rows.push_back(t.rows[r]);
  return {std::move(train), std::move(val)};
}

class Clock {
 public:
  explicit Clock(double budget) : budget_(budget), start_(std::chrono::steady_clock::now()) {}
  bool exhausted() const {
    if (budget_ <= 0) return false;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count() >= budget_;
  }

 private:
  double budget_;
  std::chrono::steady_clock::time_point start_;
};

inline Checkpoint make_checkpoint(models::Synthesizer& s, const std::vector<const Table*>& data,
                                  const TrainConfig& cfg, std::size_t epoch, const std::string& regime) {
  Checkpoint c;
  c.config = s.config();
  c.state = s.table_state();
  c.tensors = s.snapshot();
  c.provenance = {{"corpus_hash", corpus_hash(data)}, {"seed", cfg.seed}, {"epoch", epoch}, {"regime", regime}};
  return c;
}

/// The shared epoch loop for fine-tuning and training from scratch.
inline TrainLog fit_table(models::Synthesizer& s, const Table& val, const TrainConfig& cfg) {
  TrainLog log;
  const Rng root(cfg.seed);
  Clock clock(cfg.wall_clock_seconds);
  std::optional<models::TensorMap> best;
  log.stop_reason = "epochs";

  if (s.method() == models::Method::CTGAN) {
    double best_score = -1;
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
      if (e > 1 && clock.exhausted()) {
        log.stop_reason = "wall-clock";
        break;
      }
      Rng batch = root.substream("batch", e);
      EpochRecord rec{e, s.table_name(), s.train_epoch(batch)};
      if (e % cfg.ckpt_every == 0 || e == cfg.epochs) {
        if (val.n_rows() > 0) {
          Rng draw = root.substream("sampling", e);
          rec.val_score = eval::table_report(val, s.sample(val.n_rows(), draw)).overall;
        } else {
          rec.val_score = 0;  // nothing to score against: later snapshots win ties
        }
        if (rec.val_score >= best_score) {
          best_score = rec.val_score;
          best = s.snapshot();
          log.best_epoch = e;
        }
      }
      log.records.push_back(rec);
    }
  } else {
    EarlyStopper stopper(cfg.patience, cfg.min_delta);
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
      if (e > 1 && clock.exhausted()) {
        log.stop_reason = "wall-clock";
        break;
      }
      Rng batch = root.substream("batch", e);
      EpochRecord rec{e, s.table_name(), s.train_epoch(batch)};
      // the same stream every epoch so validation losses are comparable
      Rng vr = root.substream("validation");
      rec.val_loss = s.validation_loss(val, vr);
      log.records.push_back(rec);
      const double monitored = std::isnan(rec.val_loss) ? rec.train_loss : rec.val_loss;
      const bool stop = stopper.update(e, monitored);
      if (stopper.improved()) best = s.snapshot();
      if (stop) {
        log.stop_reason = "early-stop";
        break;
      }
    }
    log.best_epoch = stopper.best_epoch();
  }
  if (best) s.load(*best, false);
  return log;
}

}  // namespace detail

/// Shared-body pretraining: every iteration reshuffles the corpus and runs one
/// epoch per table, re-attaching the model (new heads, same body) each time.
inline TrainResult pretrain(const models::ModelConfig& mcfg, const std::vector<Table>& corpus, const TrainConfig& cfg,
                            const std::map<std::string, std::vector<double>>& embeddings = {}) {
  require(!corpus.empty(), ErrorKind::Data, "pretrain: empty corpus");
  cfg.validate();
  mcfg.validate();
  auto s = models::make_synthesizer(mcfg, embeddings);
  s->prepare_corpus(corpus);
  const Rng root(cfg.seed);
  detail::Clock clock(cfg.wall_clock_seconds);
  TrainLog log;
  log.stop_reason = "iterations";
  std::size_t done = 0;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    if (it > 1 && clock.exhausted()) {
      log.stop_reason = "wall-clock";
      break;
    }
    Rng shuffle = root.substream("pretrain-order", it);
    for (auto idx : shuffle.permutation(corpus.size())) {
      const Table& t = corpus[idx];
      // staying on the same table keeps its heads and their optimiser moments
      if (!s->attached() || s->table_name() != t.name) s->attach(t, cfg.seed);
      Rng batch = root.substream("batch", ++done);
      log.records.push_back({it, t.name, s->train_epoch(batch)});
    }
  }
  log.best_epoch = log.records.empty() ? std::nullopt : std::optional(log.records.back().epoch);
  std::vector<const Table*> data;
  for (const auto& t : corpus) data.push_back(&t);
  return {detail::make_checkpoint(*s, data, cfg, log.best_epoch.value_or(0), "pretrained"), log};
}

/// Loads the pretrained body, builds fresh heads for `table` and trains on a
/// 90/10 row split with early stopping (VAE, GReaT) or snapshot selection
/// (CTGAN).
inline TrainResult finetune(const Checkpoint& pretrained, const Table& table, const TrainConfig& cfg,
                            const std::map<std::string, std::vector<double>>& embeddings = {}) {
  cfg.validate();
  require(pretrained.version == kCheckpointVersion, ErrorKind::Format, "finetune: unsupported checkpoint version");
  auto s = models::make_synthesizer(pretrained.config, embeddings);
  s->inherit(pretrained.state);
  auto [train, val] = detail::holdout(table, cfg.val_fraction, Rng(cfg.seed).substream("split"));
  s->attach(table, train, cfg.seed);
  s->load(pretrained.tensors, true);
  auto log = detail::fit_table(*s, val, cfg);
  return {detail::make_checkpoint(*s, {&table}, cfg, log.best_epoch.value_or(0), "pretrained-finetuned"), log};
}

/// As finetune, for a requested method, but from fresh weights.
inline TrainResult train_scratch(const models::ModelConfig& mcfg, const Table& table, const TrainConfig& cfg,
                                 const std::map<std::string, std::vector<double>>& embeddings = {}) {
  cfg.validate();
  mcfg.validate();
  auto s = models::make_synthesizer(mcfg, embeddings);
  auto [train, val] = detail::holdout(table, cfg.val_fraction, Rng(cfg.seed).substream("split"));
  s->attach(table, train, cfg.seed);
  auto log = detail::fit_table(*s, val, cfg);
  return {detail::make_checkpoint(*s, {&table}, cfg, log.best_epoch.value_or(0), "scratch"), log};
}

/// A ready-to-sample synthesizer from a checkpoint.
inline std::unique_ptr<models::Synthesizer> load_synthesizer(const Checkpoint& c, std::uint64_t seed = 0) {
  auto s = models::make_synthesizer(c.config);
  s->restore(c.state, seed);
  s->load(c.tensors, false);
  return s;
}

/// Finetune against a checkpoint whose method must match `expected`.
inline void require_method(const Checkpoint& c, models::Method expected) {
  require(c.config.method == expected, ErrorKind::Data,
          "checkpoint holds a " + models::to_string(c.config.method) + " model, expected " +
              models::to_string(expected));
}

}  // namespace tabfm::training
