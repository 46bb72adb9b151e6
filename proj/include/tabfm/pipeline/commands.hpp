#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabfm/cleaning/cleaning.hpp"
#include "tabfm/core/csv.hpp"
#include "tabfm/data/split.hpp"
#include "tabfm/data/table.hpp"
#include "tabfm/eval/leaderboard.hpp"
#include "tabfm/eval/metrics.hpp"
#include "tabfm/pipeline/config.hpp"
#include "tabfm/training/trainer.hpp"

namespace tabfm::pipeline {

namespace fs = std::filesystem;

inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

inline void log(const std::string& line) {
  std::lock_guard lock(log_mutex());
  std::cerr << "[tabfm] " << line << "\n";
}

/// Fixed directory layout under the work dir.
struct Layout {
  fs::path root;

  explicit Layout(const std::string& work) : root(work) {}
  fs::path cleaned() const { return root / "cleaned"; }
  fs::path splits() const { return root / "splits"; }
  fs::path manifest() const { return splits() / "manifest.json"; }
  fs::path checkpoints() const { return root / "checkpoints"; }
  fs::path samples() const { return root / "samples"; }
  fs::path reports() const { return root / "reports"; }

  fs::path pretrained(const std::string& method) const { return checkpoints() / "pretrained" / (method + ".ckpt"); }
  fs::path checkpoint(const std::string& regime, const std::string& method, const std::string& table) const {
    return checkpoints() / regime / method / (table + ".ckpt");
  }
  fs::path sample(const std::string& regime, const std::string& method, const std::string& table) const {
    return samples() / regime / method / (table + ".csv");
  }
  fs::path report(const std::string& regime, const std::string& method, const std::string& table) const {
    return reports() / "tables" / regime / method / (table + ".json");
  }
};

inline void write_text(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  csv::write_file(path.string(), content);
}

inline nlohmann::json provenance(const RunConfig& cfg) { return {{"config_hash", cfg.hash()}, {"seed", cfg.seed}}; }

/// Writes a CSV artifact plus a `.prov.json` sidecar carrying the provenance.
inline void write_csv_artifact(const fs::path& path, const std::string& csv_text, const RunConfig& cfg) {
  write_text(path, csv_text);
  write_text(fs::path(path.string() + ".prov.json"), provenance(cfg).dump(2) + "\n");
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& path) {
  require(fs::exists(path), ErrorKind::Data, "missing artifact " + path.string());
  try {
    return nlohmann::json::parse(csv::read_file(path.string()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

/// CSV files of a directory in name order.
inline std::vector<fs::path> csv_files(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorKind::Data, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// Parses CSV text forcing each column to a recorded kind instead of
/// re-inferring it, so numeric-looking labels stay categorical.
inline Table table_with_kinds(const std::string& text, const std::string& name, const std::vector<ColumnMeta>& schema) {
  auto records = csv::parse(text);
  require(!records.empty(), ErrorKind::Data, "csv '" + name + "' has no header");
  const auto header = records.front();
  Table t;
  t.name = name;
  for (const auto& h : header) {
    auto it = std::find_if(schema.begin(), schema.end(), [&](const ColumnMeta& m) { return m.name == h; });
    require(it != schema.end(), ErrorKind::Data, "table '" + name + "': unexpected column '" + h + "'");
    ColumnMeta m;
    m.name = h;
    m.kind = it->kind.is_numerical() ? ColumnKind::numerical() : ColumnKind::categorical();
    t.columns.push_back(m);
  }
  require(t.columns.size() == schema.size(), ErrorKind::Data, "table '" + name + "': column set differs from schema");
  for (std::size_t i = 1; i < records.size(); ++i) {
    require(records[i].size() == header.size(), ErrorKind::Data,
            "table '" + name + "': ragged row " + std::to_string(i));
    Row row(header.size());
    for (std::size_t j = 0; j < header.size(); ++j) {
      const auto& cell = records[i][j];
      if (cell.empty()) continue;
      if (t.columns[j].kind.is_numerical()) {
        auto v = csv::parse_number(cell);
        require(v.has_value(), ErrorKind::Data,
                "table '" + name + "': non-numeric value '" + cell + "' in column " + header[j]);
        row[j] = *v;
      } else {
        row[j] = cell;
      }
    }
    t.rows.push_back(std::move(row));
  }
  for (std::size_t j = 0; j < t.columns.size(); ++j) refresh_column_meta(t, j);
  return t;
}

inline nlohmann::json schema_json(const Table& t) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : t.columns) cols.push_back({{"name", c.name}, {"kind", c.kind.is_numerical() ? "numerical" : "categorical"}});
  return cols;
}

inline std::vector<ColumnMeta> schema_from_json(const nlohmann::json& j) {
  std::vector<ColumnMeta> out;
  for (const auto& c : j) {
    ColumnMeta m;
    m.name = c.at("name").get<std::string>();
    m.kind = c.at("kind").get<std::string>() == "numerical" ? ColumnKind::numerical() : ColumnKind::categorical();
    out.push_back(std::move(m));
  }
  return out;
}

/// Reads a CSV with inferred schema, or with the kinds in `schemas` when the
/// table is listed there.
inline Table read_table(const fs::path& path, const nlohmann::json& schemas = nlohmann::json::object()) {
  const auto name = path.stem().string();
  const auto text = csv::read_file(path.string());
  if (schemas.contains(name)) return table_with_kinds(text, name, schema_from_json(schemas.at(name)));
  return infer_schema(parse_csv_table(text, name));
}

// ---------------------------------------------------------------- clean

struct CleanSummary {
  std::size_t inputs = 0, kept = 0, discarded = 0, failed = 0;
  std::vector<cleaning::CleaningReport> reports;
};

inline CleanSummary run_clean(const RunConfig& cfg) {
  const Layout L(cfg.work_dir);
  require(fs::is_directory(cfg.corpus_dir), ErrorKind::Data, "corpus directory not found: " + cfg.corpus_dir);
  const auto files = csv_files(cfg.corpus_dir);
  require(!files.empty(), ErrorKind::Data, "no CSV files in " + cfg.corpus_dir);

  // schemas recorded by an earlier clean keep re-cleaning idempotent
  nlohmann::json prior = nlohmann::json::object();
  if (fs::exists(fs::path(cfg.corpus_dir) / "schemas.json")) prior = read_json(fs::path(cfg.corpus_dir) / "schemas.json");

  CleanSummary sum;
  sum.inputs = files.size();
  std::vector<Table> kept;
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : files) {
    try {
      auto outcome = cleaning::clean_table(read_table(f, prior), cfg.cleaning);
      sum.reports.push_back(outcome.report);
      if (outcome.table) {
        kept.push_back(std::move(*outcome.table));
      } else {
        ++sum.discarded;
      }
    } catch (const Error& e) {
      ++sum.failed;
      failures.push_back({{"file", f.filename().string()}, {"error", e.what()}});
      log("clean: skipping " + f.filename().string() + ": " + e.what());
    }
  }
  require(sum.failed < sum.inputs, ErrorKind::Data, "clean: every input file failed");

  if (fs::exists(L.cleaned()))
    for (const auto& stale : csv_files(L.cleaned())) fs::remove(stale);
  nlohmann::json schemas = nlohmann::json::object(), reports = nlohmann::json::array();
  double cols = 0, rows = 0;
  for (const auto& t : kept) {
    write_text(L.cleaned() / (t.name + ".csv"), to_csv(t));
    schemas[t.name] = schema_json(t);
    cols += static_cast<double>(t.n_cols());
    rows += static_cast<double>(t.n_rows());
  }
  sum.kept = kept.size();
  for (const auto& r : sum.reports) reports.push_back(cleaning::to_json(r));
  write_json(L.cleaned() / "schemas.json", schemas);
  write_json(L.cleaned() / "reports.json", {{"reports", reports}, {"failures", failures}, {"provenance", provenance(cfg)}});
  const double n = kept.empty() ? 1.0 : static_cast<double>(kept.size());
  write_json(L.cleaned() / "stats.json", {{"input_tables", sum.inputs},
                                          {"kept", sum.kept},
                                          {"discarded", sum.discarded},
                                          {"failed", sum.failed},
                                          {"avg_columns", cols / n},
                                          {"avg_rows", rows / n},
                                          {"provenance", provenance(cfg)}});
  log("clean: " + std::to_string(sum.kept) + " kept, " + std::to_string(sum.discarded) + " discarded, " +
      std::to_string(sum.failed) + " failed");
  return sum;
}

/// Every cleaned table, by name.
inline std::map<std::string, Table> load_cleaned(const Layout& L) {
  require(fs::is_directory(L.cleaned()), ErrorKind::Data, "no cleaned corpus under " + L.root.string() + "; run clean");
  const auto schemas = fs::exists(L.cleaned() / "schemas.json") ? read_json(L.cleaned() / "schemas.json")
                                                                 : nlohmann::json::object();
  std::map<std::string, Table> out;
  for (const auto& f : csv_files(L.cleaned())) {
    auto t = read_table(f, schemas);
    out.emplace(t.name, std::move(t));
  }
  require(!out.empty(), ErrorKind::Data, "cleaned corpus is empty");
  return out;
}

// ---------------------------------------------------------------- split

inline DatasetSplit run_split(const RunConfig& cfg) {
  const Layout L(cfg.work_dir);
  const auto tables = load_cleaned(L);
  std::vector<std::string> names;
  std::vector<Table> corpus;
  for (const auto& [name, t] : tables) {
    names.push_back(name);
    corpus.push_back(t);
  }
  DatasetSplit split;
  if (cfg.split.mode == SplitMode::Random) {
    split = random_split(names, cfg.split);
  } else {
    const auto external = cfg.embeddings.empty() ? std::map<std::string, std::vector<double>>{}
                                                 : load_embeddings(cfg.embeddings);
    std::size_t dim = 64;
    if (!external.empty()) dim = external.begin()->second.size();
    split = domain_split(names, embed_names(names, dim, external), cfg.split);
  }
  split.validate(names);
  auto manifest = to_json(split);
  manifest["provenance"] = provenance(cfg);
  write_json(L.manifest(), manifest);
  write_json(L.splits() / "stats.json", to_json(dataset_stats(split, corpus)));
  log("split: " + std::to_string(split.train.size()) + "/" + std::to_string(split.val.size()) + "/" +
      std::to_string(split.test.size()) + " tables");
  return split;
}

inline DatasetSplit load_split(const Layout& L) {
  require(fs::exists(L.manifest()), ErrorKind::Data, "no split manifest at " + L.manifest().string() + "; run split");
  return split_from_json(read_json(L.manifest()));
}

inline std::vector<Table> pick(const std::map<std::string, Table>& tables, const std::vector<std::string>& names) {
  std::vector<Table> out;
  for (const auto& n : names) {
    auto it = tables.find(n);
    require(it != tables.end(), ErrorKind::Data, "split names table '" + n + "' which is not in the cleaned corpus");
    out.push_back(it->second);
  }
  return out;
}

/// Column-name embeddings for STVAEM signatures, when a file is configured.
inline std::map<std::string, std::vector<double>> column_embeddings(const RunConfig& cfg) {
  if (cfg.embeddings.empty()) return {};
  auto all = load_embeddings(cfg.embeddings);
  std::map<std::string, std::vector<double>> out;
  for (auto& [k, v] : all)
    if (v.size() == cfg.model.vae.signature_dim) out.emplace(k, std::move(v));
  return out;
}

// ---------------------------------------------------------------- training

struct TrainOutcome {
  bool budget_exhausted = false;
};

inline void save_run(const fs::path& ckpt_path, const training::TrainResult& r, const RunConfig& cfg) {
  fs::create_directories(ckpt_path.parent_path());
  training::save_checkpoint(r.checkpoint, ckpt_path.string());
  write_csv_artifact(fs::path(ckpt_path).replace_extension(".log.csv"), r.log.to_csv(), cfg);
}

inline TrainOutcome run_pretrain(const RunConfig& cfg, const std::string& method) {
  const Layout L(cfg.work_dir);
  const auto split = load_split(L);
  const auto corpus = pick(load_cleaned(L), split.train);
  log("pretrain " + method + " on " + std::to_string(corpus.size()) + " tables");
  auto r = training::pretrain(cfg.model_for(method), corpus, cfg.train, column_embeddings(cfg));
  save_run(L.pretrained(method), r, cfg);
  return {r.log.budget_exhausted()};
}

/// Validation and test tables, the benchmark's evaluation set.
inline std::vector<std::string> evaluation_tables(const DatasetSplit& s) {
  auto out = s.val;
  out.insert(out.end(), s.test.begin(), s.test.end());
  return out;
}

inline training::TrainResult train_one(const RunConfig& cfg, const std::string& method, const std::string& regime,
                                       const Table& table, const training::Checkpoint* pretrained) {
  if (regime == eval::kFinetuned) {
    require(pretrained != nullptr, ErrorKind::Data, "finetune needs a pretrained checkpoint");
    training::require_method(*pretrained, models::method_from_string(method));
    return training::finetune(*pretrained, table, cfg.train, column_embeddings(cfg));
  }
  return training::train_scratch(cfg.model_for(method), table, cfg.train, column_embeddings(cfg));
}

inline training::Checkpoint load_pretrained(const Layout& L, const std::string& method) {
  const auto path = L.pretrained(method);
  require(fs::exists(path), ErrorKind::Data, "no pretrained checkpoint at " + path.string() + "; run pretrain");
  auto c = training::load_checkpoint(path.string());
  training::require_method(c, models::method_from_string(method));
  return c;
}

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads. Every index runs;
/// the first failure by index is rethrown afterwards.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t k = std::max<std::size_t>(1, std::min(workers, n));
  if (k == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < k; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Finetune or scratch-train each named table (default: validation + test).
inline TrainOutcome run_regime(const RunConfig& cfg, const std::string& method, const std::string& regime,
                               std::vector<std::string> names) {
  const Layout L(cfg.work_dir);
  const auto tables = load_cleaned(L);
  if (names.empty()) names = evaluation_tables(load_split(L));
  const auto targets = pick(tables, names);
  std::optional<training::Checkpoint> pre;
  if (regime == eval::kFinetuned) pre = load_pretrained(L, method);
  std::vector<char> budget(targets.size(), 0);
  parallel_for(targets.size(), cfg.workers, [&](std::size_t i) {
    auto r = train_one(cfg, method, regime, targets[i], pre ? &*pre : nullptr);
    save_run(L.checkpoint(regime, method, targets[i].name), r, cfg);
    budget[i] = r.log.budget_exhausted();
    log(regime + " " + method + " " + targets[i].name + ": " + r.log.stop_reason);
  });
  return {std::find(budget.begin(), budget.end(), 1) != budget.end()};
}

// ---------------------------------------------------------------- sample / evaluate

inline Table sample_checkpoint(const fs::path& ckpt, std::size_t rows, std::uint64_t seed) {
  auto c = training::load_checkpoint(ckpt.string());
  auto s = training::load_synthesizer(c, seed);
  Rng rng = Rng(seed).substream("sampling");
  return s->sample(rows, rng);
}

inline void run_sample(const RunConfig& cfg, const fs::path& ckpt, std::size_t rows, const fs::path& out) {
  const auto t = sample_checkpoint(ckpt, rows, cfg.seed);
  write_csv_artifact(out, to_csv(t), cfg);
  log("sample: " + std::to_string(t.n_rows()) + " rows -> " + out.string());
}

/// Reads a real table (cleaned schema when known) and a synthetic table typed
/// like it.
inline std::pair<Table, Table> read_pair(const fs::path& real_path, const fs::path& syn_path,
                                         const nlohmann::json& schemas = nlohmann::json::object()) {
  auto real = read_table(real_path, schemas);
  auto syn = table_with_kinds(csv::read_file(syn_path.string()), real.name, real.columns);
  return {std::move(real), std::move(syn)};
}

inline eval::TableReport run_evaluate(const RunConfig& cfg, const fs::path& real_path, const fs::path& syn_path,
                                      const fs::path& out) {
  const Layout L(cfg.work_dir);
  const auto schemas = fs::exists(L.cleaned() / "schemas.json") ? read_json(L.cleaned() / "schemas.json")
                                                                 : nlohmann::json::object();
  auto [real, syn] = read_pair(real_path, syn_path, schemas);
  auto report = eval::table_report(real, syn);
  auto j = report.to_json();
  j["provenance"] = provenance(cfg);
  if (!out.empty()) write_json(out, j);
  log("evaluate " + real.name + ": overall " + std::to_string(report.overall));
  return report;
}

// ---------------------------------------------------------------- report

inline std::string split_label(const DatasetSplit& s) { return s.spec.mode == SplitMode::Random ? "random" : "domain"; }

struct ReportSummary {
  eval::Leaderboard leaderboard;
  std::size_t tables = 0;
};

/// Collects every per-table report under reports/tables and renders the
/// leaderboard, per-column and per-pair exports and the loss curves.
inline ReportSummary run_report(const RunConfig& cfg) {
  const Layout L(cfg.work_dir);
  const auto dir = L.reports() / "tables";
  require(fs::is_directory(dir), ErrorKind::Data, "no per-table reports under " + dir.string() + "; run benchmark");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorKind::Data, "no per-table reports under " + dir.string());

  std::vector<std::pair<eval::ReportKey, eval::TableReport>> reports;
  std::ostringstream cols, pairs, curves;
  cols << "split,method,regime,table,column,metric,score\n";
  pairs << "split,method,regime,table,column_a,column_b,metric,score,real,synthetic,delta\n";
  curves << "method,regime,table,epoch,train_loss,val_loss,val_score\n";
  auto num = [](const nlohmann::json& v) {
    if (v.is_null() || !std::isfinite(v.get<double>())) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v.get<double>());
    return std::string(buf);
  };
  for (const auto& f : files) {
    const auto j = read_json(f);
    const auto& k = j.at("key");
    eval::ReportKey key{k.at("split"), k.at("method"), k.at("regime"), k.at("table")};
    const auto& r = j.at("report");
    eval::TableReport rep;
    rep.table = key.table;
    rep.shape = r.at("shape").get<double>();
    if (!r.at("trend").is_null()) rep.trend = r.at("trend").get<double>();
    rep.overall = r.at("overall").get<double>();
    reports.emplace_back(key, rep);
    const std::string prefix = key.split + "," + key.method + "," + key.regime + "," + csv::quote(key.table) + ",";
    for (const auto& c : r.at("columns"))
      cols << prefix << csv::quote(c.at("column").get<std::string>()) << "," << c.at("metric").get<std::string>() << ","
           << num(c.at("score")) << "\n";
    for (const auto& p : r.at("pairs")) {
      auto value = [](const nlohmann::json& v) { return v.is_null() ? std::nan("") : v.get<double>(); };
      const double real = value(p.at("real")), syn = value(p.at("syn"));
      pairs << prefix << csv::quote(p.at("a").get<std::string>()) << "," << csv::quote(p.at("b").get<std::string>())
            << "," << p.at("metric").get<std::string>() << "," << num(p.at("score")) << "," << num(real) << ","
            << num(syn) << "," << num(syn - real) << "\n";
    }
    const auto log_path = fs::path(L.checkpoint(key.regime, key.method, key.table)).replace_extension(".log.csv");
    if (fs::exists(log_path)) {
      auto records = csv::parse(csv::read_file(log_path.string()));
      for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& rec = records[i];
        curves << key.method << "," << key.regime << "," << csv::quote(key.table) << "," << rec.at(0) << ","
               << rec.at(2) << "," << rec.at(3) << "," << rec.at(4) << "\n";
      }
    }
  }
  ReportSummary out;
  out.leaderboard = eval::build_leaderboard(reports);
  out.tables = files.size();
  write_csv_artifact(L.reports() / "leaderboard.csv", out.leaderboard.to_csv(), cfg);
  write_text(L.reports() / "leaderboard.txt", out.leaderboard.to_text());
  write_csv_artifact(L.reports() / "column_scores.csv", cols.str(), cfg);
  write_csv_artifact(L.reports() / "pair_scores.csv", pairs.str(), cfg);
  write_csv_artifact(L.reports() / "loss_curves.csv", curves.str(), cfg);
  log("report: " + std::to_string(files.size()) + " table reports");
  return out;
}

// ---------------------------------------------------------------- benchmark

struct BenchmarkOutcome {
  eval::Leaderboard leaderboard;
  std::vector<std::pair<std::string, std::string>> checkpoint_digests;  // relative path, crc32
  bool budget_exhausted = false;
};

/// The full grid: for each method, pretrain on the training tables (unless a
/// checkpoint exists), then finetune and scratch-train on every validation and
/// test table, sample as many rows as the real table and score the sample.
inline BenchmarkOutcome run_benchmark(const RunConfig& cfg) {
  const Layout L(cfg.work_dir);
  const auto split = load_split(L);
  const auto tables = load_cleaned(L);
  const auto targets = pick(tables, evaluation_tables(split));
  BenchmarkOutcome out;

  struct Task {
    std::string method, regime;
    const Table* table;
  };
  std::vector<Task> tasks;
  std::map<std::string, training::Checkpoint> pretrained;
  for (const auto& method : cfg.methods) {
    if (!fs::exists(L.pretrained(method))) out.budget_exhausted |= run_pretrain(cfg, method).budget_exhausted;
    pretrained.emplace(method, load_pretrained(L, method));
    for (const auto& t : targets)
      for (const auto& regime : {eval::kFinetuned, eval::kScratch}) tasks.push_back({method, regime, &t});
  }

  std::vector<char> budget(tasks.size(), 0);
  parallel_for(tasks.size(), cfg.workers, [&](std::size_t i) {
    const auto& task = tasks[i];
    const auto& t = *task.table;
    auto r = train_one(cfg, task.method, task.regime, t, &pretrained.at(task.method));
    save_run(L.checkpoint(task.regime, task.method, t.name), r, cfg);
    budget[i] = r.log.budget_exhausted();
    // both regimes of a table draw from the same sampling stream
    auto s = training::load_synthesizer(r.checkpoint, cfg.seed);
    Rng rng = Rng(cfg.seed).substream("sampling", tabfm::detail::fnv1a(t.name));
    const auto syn = s->sample(t.n_rows(), rng);
    write_csv_artifact(L.sample(task.regime, task.method, t.name), to_csv(syn), cfg);
    const auto report = eval::table_report(t, syn);
    write_json(L.report(task.regime, task.method, t.name),
               {{"key", {{"split", split_label(split)}, {"method", task.method}, {"regime", task.regime}, {"table", t.name}}},
                {"report", report.to_json()},
                {"provenance", provenance(cfg)}});
    log("benchmark " + task.method + " " + task.regime + " " + t.name + ": overall " + std::to_string(report.overall));
  });
  out.budget_exhausted |= std::find(budget.begin(), budget.end(), 1) != budget.end();
  out.leaderboard = run_report(cfg).leaderboard;

  std::ostringstream digests;
  digests << "checkpoint,crc32\n";
  std::vector<fs::path> ckpts;
  for (const auto& e : fs::recursive_directory_iterator(L.checkpoints()))
    if (e.is_regular_file() && e.path().extension() == ".ckpt") ckpts.push_back(e.path());
  std::sort(ckpts.begin(), ckpts.end());
  for (const auto& p : ckpts) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08x", training::crc32_of(csv::read_file(p.string())));
    const auto rel = fs::relative(p, L.root).generic_string();
    out.checkpoint_digests.emplace_back(rel, buf);
    digests << rel << "," << buf << "\n";
  }
  write_csv_artifact(L.reports() / "checkpoint_digests.csv", digests.str(), cfg);
  return out;
}

}  // namespace tabfm::pipeline
