#include <algorithm>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "CLI11.hpp"
#include "tabfm/pipeline/commands.hpp"

namespace {

using namespace tabfm;

/// `--section.key=value` arguments are configuration overrides, not CLI11
/// options; pull them out before parsing.
std::vector<std::string> take_overrides(std::vector<std::string>& args) {
  std::vector<std::string> overrides, rest;
  for (auto& a : args) {
    const std::string_view v(a);
    const auto eq = v.find('=');
    const auto key = v.substr(0, eq);
    if (v.size() > 2 && v.substr(0, 2) == "--" && eq != std::string_view::npos && key.find('.') != std::string_view::npos) {
      overrides.emplace_back(v.substr(2));
    } else {
      rest.push_back(std::move(a));
    }
  }
  args = std::move(rest);
  return overrides;
}

struct Globals {
  std::string config, work, corpus;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

pipeline::RunConfig resolve(const Globals& g, std::vector<std::string> overrides) {
  if (!g.work.empty()) overrides.push_back("paths.work=" + nlohmann::json(g.work).dump());
  if (!g.corpus.empty()) overrides.push_back("paths.corpus=" + nlohmann::json(g.corpus).dump());
  if (g.seed) overrides.push_back("seed=" + std::to_string(*g.seed));
  if (g.workers) overrides.push_back("benchmark.workers=" + std::to_string(*g.workers));
  return pipeline::load_config(g.config, overrides);
}

int budget_code(bool exhausted) {
  if (exhausted) std::cerr << "tabfm: training budget exhausted; outputs reflect the truncated run\n";
  return exhausted ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  const auto overrides = take_overrides(args);
  std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector

  CLI::App app{"Tabular foundation-model synthesizers: clean, split, train, sample and score."};
  app.name("tabfm");
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--work", g.work, "work directory for all artifacts");
  app.add_option("--corpus", g.corpus, "directory of raw CSV tables");
  app.add_option("--seed", g.seed, "root random seed");
  app.add_option("--workers", g.workers, "parallel benchmark workers")->check(CLI::PositiveNumber);

  auto* clean = app.add_subcommand("clean", "clean every corpus table into <work>/cleaned");
  auto* split = app.add_subcommand("split", "partition cleaned tables into train/val/test");

  std::string method = "stvae";
  std::vector<std::string> tables;
  auto* pretrain = app.add_subcommand("pretrain", "pretrain on the training tables");
  pretrain->add_option("--method", method, "ctgan, tvae, stvae, stvaem or great");
  auto* finetune = app.add_subcommand("finetune", "finetune the pretrained model per table");
  finetune->add_option("--method", method, "ctgan, tvae, stvae, stvaem or great");
  finetune->add_option("--table", tables, "tables to train (default: validation and test)");
  auto* scratch = app.add_subcommand("train-scratch", "train a fresh model per table");
  scratch->add_option("--method", method, "ctgan, tvae, stvae, stvaem or great");
  scratch->add_option("--table", tables, "tables to train (default: validation and test)");

  std::string checkpoint, out, real, synthetic;
  std::size_t rows = 0;
  auto* sample = app.add_subcommand("sample", "draw rows from a checkpoint");
  sample->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  sample->add_option("--rows", rows, "rows to draw (0 writes the header only)")->required();
  sample->add_option("--out", out, "output CSV")->required();

  auto* evaluate = app.add_subcommand("evaluate", "score a synthetic CSV against a real one");
  evaluate->add_option("--real", real, "real table CSV")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--synthetic", synthetic, "synthetic table CSV")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", out, "write the report JSON here");

  auto* benchmark = app.add_subcommand("benchmark", "pretrain, finetune, scratch-train, sample and score");
  auto* report = app.add_subcommand("report", "aggregate per-table reports into the leaderboard");

  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto cfg = resolve(g, overrides);
    if (*clean) {
      pipeline::run_clean(cfg);
    } else if (*split) {
      pipeline::run_split(cfg);
    } else if (*pretrain) {
      return budget_code(pipeline::run_pretrain(cfg, method).budget_exhausted);
    } else if (*finetune) {
      return budget_code(pipeline::run_regime(cfg, method, eval::kFinetuned, tables).budget_exhausted);
    } else if (*scratch) {
      return budget_code(pipeline::run_regime(cfg, method, eval::kScratch, tables).budget_exhausted);
    } else if (*sample) {
      pipeline::run_sample(cfg, checkpoint, rows, out);
    } else if (*evaluate) {
      const auto r = pipeline::run_evaluate(cfg, real, synthetic, out);
      if (out.empty()) std::cout << r.to_json().dump(2) << "\n";
    } else if (*benchmark) {
      const auto b = pipeline::run_benchmark(cfg);
      std::cout << b.leaderboard.to_text();
      return budget_code(b.budget_exhausted);
    } else if (*report) {
      std::cout << pipeline::run_report(cfg).leaderboard.to_text();
    }
    return 0;
  } catch (const tabfm::Error& e) {
    std::cerr << "tabfm: " << e.what() << "\n";
    return tabfm::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "tabfm: " << e.what() << "\n";
    return 2;
  }
}
