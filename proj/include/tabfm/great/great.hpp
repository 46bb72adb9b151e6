#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "tabfm/core/rng.hpp"
#include "tabfm/data/table.hpp"
#include "tabfm/great/bpe.hpp"
#include "tabfm/great/model.hpp"
#include "tabfm/neural/optim.hpp"
#include "tabfm/transform/text.hpp"

namespace tabfm::great {

/// BOS, the sentence tokens, EOS.
inline std::vector<int> encode_sentence(const Vocab& vocab, const std::string& sentence) {
  std::vector<int> ids{Vocab::kBos};
  for (int id : vocab.encode(sentence)) ids.push_back(id);
  ids.push_back(Vocab::kEos);
  return ids;
}

/// Right-pads every sequence with PAD to the longest one.
inline std::vector<std::vector<int>> pad_batch(std::vector<std::vector<int>> seqs, std::size_t context) {
  std::size_t longest = 0;
  for (const auto& s : seqs) longest = std::max(longest, s.size());
  require(longest <= context + 1, ErrorKind::Shape,
          "great: sequence of " + std::to_string(longest) + " tokens exceeds context " + std::to_string(context));
  for (auto& s : seqs) s.resize(longest, Vocab::kPad);
  return seqs;
}

/// One optimisation step on a batch of encoded sentences.
template <typename Real>
double great_train_step(GreatModel<Real>& model, const std::vector<std::vector<int>>& batch, nn::Adam<Real>& opt) {
  model.zero_grad();
  const double loss = model.loss(pad_batch(batch, model.config().context), true);
  opt.step(model.params());
  return loss;
}

/// Every row of the table as a sentence, clause order permuted when rng is given.
inline std::vector<std::string> serialize_table(const Table& table, Rng* rng) {
  std::vector<std::string> out;
  out.reserve(table.n_rows());
  for (const auto& row : table.rows) out.push_back(transform::serialize_row_text(table.columns, row, rng != nullptr, rng));
  return out;
}

struct GenerateResult {
  Table table;
  std::size_t attempted = 0;
  std::size_t parsed = 0;
  std::size_t skipped = 0;  // rows given up after max_retries
  std::vector<std::string> failures;

  double validity() const { return attempted ? static_cast<double>(parsed) / static_cast<double>(attempted) : 0.0; }
};

/// Samples one sentence from BOS until EOS or the context limit.
template <typename Real>
std::vector<int> sample_tokens(const GreatModel<Real>& model, Rng& rng, double temperature) {
  auto st = model.start();
  std::vector<int> out;
  int token = Vocab::kBos;
  const std::size_t V = model.vocab_size();
  while (st.length() < model.config().context) {
    auto logits = model.step(st, token);
    // never emit PAD or BOS
    logits[Vocab::kPad] = logits[Vocab::kBos] = -std::numeric_limits<Real>::infinity();
    if (temperature <= 0) {
      token = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    } else {
      std::vector<double> w(V);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t v = 0; v < V; ++v) mx = std::max(mx, static_cast<double>(logits[v]) / temperature);
      for (std::size_t v = 0; v < V; ++v) w[v] = std::exp(static_cast<double>(logits[v]) / temperature - mx);
      token = static_cast<int>(rng.categorical(w));
    }
    if (token == Vocab::kEos) break;
    out.push_back(token);
  }
  return out;
}

template <typename Real>
GenerateResult great_generate(const GreatModel<Real>& model, const Vocab& vocab, const Table& schema_table,
                              std::size_t n, Rng& rng, double temperature, std::size_t max_retries) {
  GenerateResult res;
  res.table.name = schema_table.name;
  res.table.columns = schema_table.columns;
  for (std::size_t i = 0; i < n; ++i) {
    bool ok = false;
    for (std::size_t attempt = 0; attempt <= max_retries && !ok; ++attempt) {
      ++res.attempted;
      const auto text = vocab.decode(sample_tokens(model, rng, temperature));
      auto parsed = transform::parse_row_text(schema_table.columns, text);
      if (parsed) {
        res.table.rows.push_back(std::move(*parsed.row));
        ++res.parsed;
        ok = true;
      } else {
        res.failures.push_back(parsed.failure);
      }
    }
    if (!ok) ++res.skipped;
  }
  return res;
}

}  // namespace tabfm::great
