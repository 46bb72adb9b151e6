#pragma once

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabfm/core/error.hpp"

namespace tabfm::great {

/// Byte-level BPE vocabulary. Ids 0..255 are raw bytes, then PAD, BOS and EOS,
/// then one id per merge in the order the merges were learned.
class Vocab {
 public:
  static constexpr int kPad = 256;
  static constexpr int kBos = 257;
  static constexpr int kEos = 258;
  static constexpr std::size_t kBase = 259;

  Vocab() {
    for (int b = 0; b < 256; ++b) bytes_.push_back(std::string(1, static_cast<char>(b)));
    bytes_.insert(bytes_.end(), {"", "", ""});
  }

  std::size_t size() const { return bytes_.size(); }
  const std::vector<std::pair<int, int>>& merges() const { return merges_; }
  const std::string& bytes_of(int id) const { return bytes_.at(static_cast<std::size_t>(id)); }
  static bool is_special(int id) { return id >= kPad && id <= kEos; }

  int add_merge(int a, int b) {
    require(!is_special(a) && !is_special(b), ErrorKind::Usage, "bpe: special tokens are never merged");
    const int id = static_cast<int>(bytes_.size());
    merges_.emplace_back(a, b);
    rank_[{a, b}] = id;
    bytes_.push_back(bytes_of(a) + bytes_of(b));
    return id;
  }

  /// Applies merges lowest rank first until none applies.
  std::vector<int> encode(std::string_view text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(c);
    while (ids.size() > 1) {
      int best = -1;
      for (std::size_t i = 0; i + 1 < ids.size(); ++i)
        if (auto it = rank_.find({ids[i], ids[i + 1]}); it != rank_.end() && (best < 0 || it->second < best))
          best = it->second;
      if (best < 0) break;
      const auto [a, b] = merges_[static_cast<std::size_t>(best) - kBase];
      std::vector<int> next;
      next.reserve(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i + 1 < ids.size() && ids[i] == a && ids[i + 1] == b) {
          next.push_back(best);
          ++i;
        } else {
          next.push_back(ids[i]);
        }
      }
      ids = std::move(next);
    }
    return ids;
  }

  /// Concatenated bytes; special tokens contribute nothing.
  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
      require(id >= 0 && static_cast<std::size_t>(id) < size(), ErrorKind::Data, "bpe: token id out of range");
      out += bytes_[static_cast<std::size_t>(id)];
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json m = nlohmann::json::array();
    for (const auto& [a, b] : merges_) m.push_back({a, b});
    return {{"merges", m}};
  }

  static Vocab from_json(const nlohmann::json& j) {
    Vocab v;
    for (const auto& m : j.at("merges")) {
      const int a = m.at(0).get<int>(), b = m.at(1).get<int>();
      require(a >= 0 && b >= 0 && static_cast<std::size_t>(a) < v.size() && static_cast<std::size_t>(b) < v.size(),
              ErrorKind::Format, "bpe: merge refers to an unknown token");
      v.add_merge(a, b);
    }
    return v;
  }

 private:
  std::vector<std::string> bytes_;
  std::vector<std::pair<int, int>> merges_;
  std::map<std::pair<int, int>, int> rank_;
};

/// Greedy byte-pair training. Each round merges the most frequent adjacent
/// pair; ties go to the lexicographically smaller pair of byte strings.
/// Training stops early once no pair occurs at least twice.
inline Vocab train_bpe(const std::vector<std::string>& corpus, std::size_t vocab_size) {
  require(!corpus.empty(), ErrorKind::Usage, "train_bpe: empty corpus");
  require(vocab_size >= Vocab::kBase, ErrorKind::Usage,
          "train_bpe: vocab_size must be at least " + std::to_string(Vocab::kBase));
  Vocab v;
  std::vector<std::vector<int>> seqs;
  for (const auto& s : corpus) {
    std::vector<int> ids;
    for (unsigned char c : s) ids.push_back(c);
    seqs.push_back(std::move(ids));
  }
  while (v.size() < vocab_size) {
    std::map<std::pair<int, int>, std::size_t> counts;
    for (const auto& s : seqs)
      for (std::size_t i = 0; i + 1 < s.size(); ++i) ++counts[{s[i], s[i + 1]}];
    const std::pair<int, int>* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [pair, n] : counts) {
      if (n < best_count || n < 2) continue;
      if (n > best_count || std::pair(v.bytes_of(pair.first), v.bytes_of(pair.second)) <
                                std::pair(v.bytes_of(best->first), v.bytes_of(best->second))) {
        best = &pair;
        best_count = n;
      }
    }
    if (!best) break;
    const auto [a, b] = *best;
    const int id = v.add_merge(a, b);
    for (auto& s : seqs) {
      std::size_t w = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == a && s[i + 1] == b) {
          s[w++] = id;
          ++i;
        } else {
          s[w++] = s[i];
        }
      }
      s.resize(w);
    }
  }
  return v;
}

}  // namespace tabfm::great
