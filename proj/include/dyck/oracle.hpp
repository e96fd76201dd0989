#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "dyck/alphabet.hpp"
#include "dyck/errors.hpp"

namespace dyck {

// 0/1 row over the 2n output symbols (opens 0..n-1, closes n..2n-1).
using KHot = std::vector<uint8_t>;

// Stack of unmatched opening brackets; top is the most recent open.
struct StackState {
  struct Entry {
    int type;
    int pos;
  };
  std::vector<Entry> entries;  // top at back

  bool empty() const { return entries.empty(); }
  int depth() const { return static_cast<int>(entries.size()); }
  const Entry& top() const {
    if (entries.empty()) throw StackUnderflow("top of empty stack");
    return entries.back();
  }
  void push(int type, int pos) { entries.push_back({type, pos}); }
  Entry pop() {
    if (entries.empty()) throw StackUnderflow("pop of empty stack");
    Entry e = entries.back();
    entries.pop_back();
    return e;
  }
};

// Valid-next-symbol set: every open is always legal; the close matching the
// stack top is legal iff the stack is nonempty; no other close is.
inline KHot next_valid_set(const StackState& state, const Alphabet& a) {
  KHot row(static_cast<size_t>(a.output_vocab()), 0);
  for (int i = 0; i < a.n; ++i) row[a.open_id(i)] = 1;
  if (!state.empty()) row[a.close_id(state.top().type)] = 1;
  return row;
}

struct DyckSample {
  std::vector<TokenId> tokens;  // never contains T
  int length = 0;
  int max_depth = 0;
  std::vector<KHot> targets;  // one row per position
};

// Runs the stack over a complete Dyck word, emitting the valid-next set
// after each consumed symbol. Throws InvalidWord on underflow, a stray T,
// or nonzero final depth.
inline DyckSample annotate_targets(const std::vector<TokenId>& tokens, const Alphabet& a) {
  DyckSample s;
  s.tokens = tokens;
  s.length = static_cast<int>(tokens.size());
  StackState st;
  s.targets.reserve(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) {
    const TokenId t = tokens[i];
    if (a.is_open(t)) {
      st.push(a.type_of(t), static_cast<int>(i));
    } else if (a.is_close(t)) {
      if (st.empty())
        throw InvalidWord("unmatched close at position " + std::to_string(i));
      if (st.top().type != a.type_of(t))
        throw InvalidWord("mismatched close at position " + std::to_string(i));
      st.pop();
    } else {
      throw InvalidWord("non-bracket token at position " + std::to_string(i));
    }
    s.max_depth = std::max(s.max_depth, st.depth());
    s.targets.push_back(next_valid_set(st, a));
  }
  if (!st.empty()) throw InvalidWord("word ends at depth " + std::to_string(st.depth()));
  return s;
}

// Head-match function of the stack recognizer: opens push their index and map
// to -1, T (position 0 only) is skipped, a close pops and maps to the new
// stack top, or -1 when the pop empties the stack.
inline std::vector<int> get_match(const std::vector<TokenId>& tokens, const Alphabet& a) {
  std::vector<int> match(tokens.size(), -1);
  std::vector<int> stack;  // open positions, top at back
  for (size_t i = 0; i < tokens.size(); ++i) {
    const TokenId t = tokens[i];
    if (a.is_start(t)) {
      if (i != 0) throw InvalidWord("start symbol at position " + std::to_string(i));
      continue;
    }
    if (a.is_open(t)) {
      stack.push_back(static_cast<int>(i));
    } else {
      if (stack.empty())
        throw StackUnderflow("close at position " + std::to_string(i) + " underflows");
      stack.pop_back();
      if (!stack.empty()) match[i] = stack.back();
    }
  }
  if (!stack.empty()) throw InvalidWord("word ends with unmatched opens");
  return match;
}

// d_p per position: unmatched-open count after consuming each symbol
// (a close that completes a pair reduces the count).
inline std::vector<int> depth_profile(const std::vector<TokenId>& tokens, const Alphabet& a) {
  std::vector<int> depth(tokens.size(), 0);
  int d = 0;
  std::vector<int> types;
  for (size_t i = 0; i < tokens.size(); ++i) {
    const TokenId t = tokens[i];
    if (a.is_open(t)) {
      types.push_back(a.type_of(t));
      ++d;
    } else if (a.is_close(t)) {
      if (d == 0) throw InvalidWord("close underflows at position " + std::to_string(i));
      if (types.back() != a.type_of(t))
        throw InvalidWord("mismatched close at position " + std::to_string(i));
      types.pop_back();
      --d;
    } else {
      throw InvalidWord("non-bracket token at position " + std::to_string(i));
    }
    depth[i] = d;
  }
  if (d != 0) throw InvalidWord("word ends at depth " + std::to_string(d));
  return depth;
}

// Index of the open matching the close at `position`.
inline int matching_open_index(const std::vector<TokenId>& tokens, int position,
                               const Alphabet& a) {
  if (position < 0 || position >= static_cast<int>(tokens.size()) ||
      !a.is_close(tokens[position]))
    throw NotACloser("position " + std::to_string(position));
  std::vector<int> stack;
  for (int i = 0; i <= position; ++i) {
    const TokenId t = tokens[i];
    if (a.is_open(t)) {
      stack.push_back(i);
    } else if (a.is_close(t)) {
      if (stack.empty())
        throw InvalidWord("close underflows at position " + std::to_string(i));
      const int open_pos = stack.back();
      stack.pop_back();
      if (i == position) return open_pos;
    } else {
      throw InvalidWord("non-bracket token at position " + std::to_string(i));
    }
  }
  throw InvalidWord("unreachable");  // loop always returns at i == position
}

// d_h: number of symbols strictly between a close and its matching open.
inline int distance_to_head(const std::vector<TokenId>& tokens, int position,
                            const Alphabet& a) {
  return position - matching_open_index(tokens, position, a) - 1;
}

}  // namespace dyck
