#pragma once

#include <cmath>

#include "dyck/alphabet.hpp"
#include "dyck/errors.hpp"

namespace dyck {

// PCFG over the single nonterminal S:
//   S -> b_i S b'_i   with probability p_pair, for each of the n pairs
//   S -> S S          with probability p_concat
//   S -> epsilon      with probability p_epsilon
struct Grammar {
  Alphabet alphabet;
  double p_pair = 0.0;
  double p_concat = 0.0;
  double p_epsilon = 0.0;

  void validate() const {
    if (p_pair < 0 || p_concat < 0 || p_epsilon < 0)
      throw Error("Grammar: negative rule probability");
    const double total = alphabet.n * p_pair + p_concat + p_epsilon;
    if (std::abs(total - 1.0) > 1e-12)
      throw Error("Grammar: rule probabilities sum to " + std::to_string(total));
  }
};

// The standard grammar: p_concat = p_epsilon = 0.25 and the remaining 0.5
// split evenly over the n pair rules (0.25 per rule at n = 2).
inline Grammar default_grammar(int n) {
  Grammar g{Alphabet::make(n, false), 0.5 / n, 0.25, 0.25};
  g.validate();
  return g;
}

}  // namespace dyck
