#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "dyck/errors.hpp"

namespace dyck {

using TokenId = int;

// Symbol inventory for a Dyck-n language. Token ids are fixed as:
// opens 0..n-1, closes n..2n-1, and (when present) the starting symbol T
// at id 2n. Output labels reuse ids 0..2n-1; T never appears in outputs.
struct Alphabet {
  int n = 0;
  bool has_start = false;
  std::vector<std::string> open_glyphs;
  std::vector<std::string> close_glyphs;

  static Alphabet make(int n, bool with_start) {
    if (n < 1) throw Error("Alphabet: n must be >= 1");
    static const char* kOpen[4] = {"(", "[", "{", "<"};
    static const char* kClose[4] = {")", "]", "}", ">"};
    Alphabet a;
    a.n = n;
    a.has_start = with_start;
    for (int i = 0; i < n; ++i) {
      if (i < 4) {
        a.open_glyphs.emplace_back(kOpen[i]);
        a.close_glyphs.emplace_back(kClose[i]);
      } else {
        a.open_glyphs.push_back("o" + std::to_string(i + 1));
        a.close_glyphs.push_back("c" + std::to_string(i + 1));
      }
    }
    a.validate();
    return a;
  }

  void validate() const {
    if (static_cast<int>(open_glyphs.size()) != n ||
        static_cast<int>(close_glyphs.size()) != n)
      throw Error("Alphabet: glyph lists must have length n");
    std::unordered_set<std::string> seen;
    for (const auto& g : open_glyphs)
      if (!seen.insert(g).second) throw Error("Alphabet: duplicate glyph " + g);
    for (const auto& g : close_glyphs)
      if (!seen.insert(g).second) throw Error("Alphabet: duplicate glyph " + g);
    if (has_start && !seen.insert("T").second)
      throw Error("Alphabet: start glyph collides");
  }

  int input_vocab() const { return 2 * n + (has_start ? 1 : 0); }
  int output_vocab() const { return 2 * n; }

  TokenId open_id(int type) const { return type; }
  TokenId close_id(int type) const { return n + type; }
  TokenId start_id() const {
    if (!has_start) throw Error("Alphabet: no start symbol");
    return 2 * n;
  }

  bool is_open(TokenId t) const { return t >= 0 && t < n; }
  bool is_close(TokenId t) const { return t >= n && t < 2 * n; }
  bool is_start(TokenId t) const { return has_start && t == 2 * n; }

  // bracket-pair index of an open or close token
  int type_of(TokenId t) const {
    if (is_open(t)) return t;
    if (is_close(t)) return t - n;
    throw Error("Alphabet: token has no bracket type");
  }

  const std::string& glyph(TokenId t) const {
    static const std::string kStart = "T";
    if (is_open(t)) return open_glyphs[t];
    if (is_close(t)) return close_glyphs[t - n];
    if (is_start(t)) return kStart;
    throw UnknownToken("token id " + std::to_string(t));
  }

  // Greedy longest-glyph-first tokenizer; throws UnknownToken on any
  // unrecognized prefix.
  std::vector<TokenId> encode(std::string_view text) const {
    std::vector<std::pair<std::string, TokenId>> table;
    for (int i = 0; i < n; ++i) {
      table.emplace_back(open_glyphs[i], open_id(i));
      table.emplace_back(close_glyphs[i], close_id(i));
    }
    if (has_start) table.emplace_back("T", start_id());
    std::sort(table.begin(), table.end(), [](const auto& a, const auto& b) {
      return a.first.size() > b.first.size();
    });
    std::vector<TokenId> out;
    size_t pos = 0;
    while (pos < text.size()) {
      bool matched = false;
      for (const auto& [g, id] : table) {
        if (text.compare(pos, g.size(), g) == 0) {
          out.push_back(id);
          pos += g.size();
          matched = true;
          break;
        }
      }
      if (!matched)
        throw UnknownToken("unrecognized symbol at offset " + std::to_string(pos) +
                           " in \"" + std::string(text) + "\"");
    }
    return out;
  }

  std::string decode(const std::vector<TokenId>& ids) const {
    std::string s;
    for (TokenId t : ids) s += glyph(t);
    return s;
  }
};

}  // namespace dyck
