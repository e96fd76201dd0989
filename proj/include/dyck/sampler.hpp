#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dyck/grammar.hpp"
#include "dyck/rng.hpp"

namespace dyck {

// Tally of rule applications across sample_word calls; used for checking
// empirical rule frequencies against the grammar.
struct RuleTally {
  std::vector<uint64_t> pair;  // one counter per bracket type
  uint64_t concat = 0;
  uint64_t epsilon = 0;

  explicit RuleTally(int n = 0) : pair(static_cast<size_t>(n), 0) {}
  uint64_t total() const {
    uint64_t t = concat + epsilon;
    for (uint64_t p : pair) t += p;
    return t;
  }
};

constexpr int kDefaultExpansionBudget = 10000;

// Draws one word by leftmost expansion of S. Returns nullopt (a rejection,
// not an error) when the number of nonterminal rewrites exceeds
// max_expansion; the caller retries, continuing the same rng stream.
inline std::optional<std::vector<TokenId>> sample_word(const Grammar& g, Rng& rng,
                                                       int max_expansion = kDefaultExpansionBudget,
                                                       RuleTally* tally = nullptr) {
  g.validate();
  if (max_expansion <= 0) throw Error("sample_word: max_expansion must be > 0");
  const int n = g.alphabet.n;

  // Work stack of pending symbols, top = leftmost. -1 encodes S; other
  // values are terminal token ids.
  constexpr int kNonterminal = -1;
  std::vector<int> work{kNonterminal};
  std::vector<TokenId> out;
  int rewrites = 0;

  while (!work.empty()) {
    const int sym = work.back();
    work.pop_back();
    if (sym != kNonterminal) {
      out.push_back(sym);
      continue;
    }
    if (++rewrites > max_expansion) return std::nullopt;
    const double u = rng.uniform01();
    if (u < n * g.p_pair) {
      const int type = std::min<int>(n - 1, static_cast<int>(u / g.p_pair));
      if (tally) ++tally->pair[static_cast<size_t>(type)];
      work.push_back(g.alphabet.close_id(type));
      work.push_back(kNonterminal);
      work.push_back(g.alphabet.open_id(type));
    } else if (u < n * g.p_pair + g.p_concat) {
      if (tally) ++tally->concat;
      work.push_back(kNonterminal);
      work.push_back(kNonterminal);
    } else {
      if (tally) ++tally->epsilon;
    }
  }
  return out;
}

}  // namespace dyck
