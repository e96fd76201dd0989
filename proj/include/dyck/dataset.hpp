#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dyck/oracle.hpp"
#include "dyck/sampler.hpp"
#include "dyck/util.hpp"

namespace dyck {

using json = nlohmann::json;

struct SplitSpec {
  std::string name;
  int count = 0;
  int min_len = 0;
  int max_len = 0;

  void validate() const {
    if (count <= 0) throw Error("SplitSpec " + name + ": count must be > 0");
    if (min_len > max_len) throw Error("SplitSpec " + name + ": min_len > max_len");
  }
};

// The standard corpus: 32k train at length 2-50, 3.2k validation at 52-74,
// and 10k evaluation split evenly over 76-100 and 102-126.
inline std::vector<SplitSpec> paper_splits() {
  return {{"train", 32000, 2, 50},
          {"valid", 3200, 52, 74},
          {"test_a", 5000, 76, 100},
          {"test_b", 5000, 102, 126}};
}

struct SplitRef {
  SplitSpec spec;
  std::string path;  // relative to the manifest directory
  std::string sha256;
};

struct DatasetManifest {
  int language_n = 0;
  double p_pair = 0, p_concat = 0, p_epsilon = 0;
  uint64_t seed = 0;
  std::vector<SplitRef> splits;

  json to_json() const {
    json js;
    js["language_n"] = language_n;
    js["grammar"] = {{"p_pair", p_pair}, {"p_concat", p_concat}, {"p_epsilon", p_epsilon}};
    js["seed"] = seed;
    js["splits"] = json::array();
    for (const auto& s : splits)
      js["splits"].push_back({{"name", s.spec.name},
                              {"count", s.spec.count},
                              {"min_len", s.spec.min_len},
                              {"max_len", s.spec.max_len},
                              {"path", s.path},
                              {"sha256", s.sha256}});
    return js;
  }

  static DatasetManifest from_json(const json& js) {
    DatasetManifest m;
    m.language_n = js.at("language_n").get<int>();
    m.p_pair = js.at("grammar").at("p_pair").get<double>();
    m.p_concat = js.at("grammar").at("p_concat").get<double>();
    m.p_epsilon = js.at("grammar").at("p_epsilon").get<double>();
    m.seed = js.at("seed").get<uint64_t>();
    for (const auto& s : js.at("splits")) {
      SplitRef r;
      r.spec = {s.at("name").get<std::string>(), s.at("count").get<int>(),
                s.at("min_len").get<int>(), s.at("max_len").get<int>()};
      r.path = s.at("path").get<std::string>();
      r.sha256 = s.at("sha256").get<std::string>();
      m.splits.push_back(std::move(r));
    }
    return m;
  }

  void save(const std::string& path) const { write_file(path, to_json().dump(2) + "\n"); }

  static DatasetManifest load(const std::string& path) {
    json js;
    try {
      js = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
      throw ParseError(path + ": " + e.what());
    }
    return from_json(js);
  }

  const SplitRef& split(const std::string& name) const {
    for (const auto& s : splits)
      if (s.spec.name == name) return s;
    throw Error("manifest has no split named " + name);
  }
};

inline std::string sample_to_jsonl(const DyckSample& s, const Alphabet& a) {
  json row;
  row["tokens"] = a.decode(s.tokens);
  json tg = json::array();
  for (const auto& r : s.targets) {
    json bits = json::array();
    for (uint8_t b : r) bits.push_back(static_cast<int>(b));
    tg.push_back(std::move(bits));
  }
  row["targets"] = std::move(tg);
  return row.dump();
}

// Draws one in-band word. Each sample owns a derived rng stream, so
// generation is reproducible sample-by-sample regardless of sharding.
inline DyckSample sample_in_band(const Grammar& g, Rng& rng, int min_len, int max_len,
                                 uint64_t stall_window = 1000000) {
  uint64_t attempts = 0;
  for (;;) {
    auto w = sample_word(g, rng);
    if (w && static_cast<int>(w->size()) >= min_len &&
        static_cast<int>(w->size()) <= max_len && !w->empty())
      return annotate_targets(*w, g.alphabet);
    if (++attempts >= stall_window)
      throw SamplingStalled("no accepted word in band [" + std::to_string(min_len) + "," +
                            std::to_string(max_len) + "] after " +
                            std::to_string(attempts) + " draws");
  }
}

// Generates every split, writes JSONL files plus manifest.json under
// out_dir, and returns the manifest. Fully determined by (n, seed, specs).
inline DatasetManifest build_splits(int n, uint64_t seed, const std::vector<SplitSpec>& specs,
                                    const std::string& out_dir) {
  const Grammar g = default_grammar(n);
  DatasetManifest m;
  m.language_n = n;
  m.p_pair = g.p_pair;
  m.p_concat = g.p_concat;
  m.p_epsilon = g.p_epsilon;
  m.seed = seed;

  std::filesystem::create_directories(out_dir);
  const Rng base(seed);
  for (const auto& spec : specs) {
    spec.validate();
    std::string buf;
    for (int i = 0; i < spec.count; ++i) {
      Rng rng = base.derive(spec.name, static_cast<uint64_t>(i));
      const DyckSample s = sample_in_band(g, rng, spec.min_len, spec.max_len);
      buf += sample_to_jsonl(s, g.alphabet);
      buf += '\n';
    }
    SplitRef ref;
    ref.spec = spec;
    ref.path = spec.name + ".jsonl";
    ref.sha256 = sha256_hex(buf);
    write_file((std::filesystem::path(out_dir) / ref.path).string(), buf);
    m.splits.push_back(std::move(ref));
  }
  m.save((std::filesystem::path(out_dir) / "manifest.json").string());
  return m;
}

// Streaming split reader. Verifies the file hash up front when one is
// expected and re-derives every target row, so silent corruption surfaces
// as HashMismatch / TargetMismatch instead of bad training data.
class SplitReader {
 public:
  explicit SplitReader(const std::string& path,
                       std::optional<std::string> expected_sha = std::nullopt,
                       std::optional<int> language_n = std::nullopt)
      : path_(path), language_n_(language_n) {
    if (expected_sha) {
      const std::string actual = sha256_file(path);
      if (actual != *expected_sha)
        throw HashMismatch(path + ": sha256 " + actual + " != manifest " + *expected_sha);
    }
    in_.open(path, std::ios::binary);
    if (!in_) throw Error("cannot open " + path);
  }

  SplitReader(const DatasetManifest& m, const std::string& split_name,
              const std::string& manifest_dir)
      : SplitReader((std::filesystem::path(manifest_dir) / m.split(split_name).path).string(),
                    m.split(split_name).sha256, m.language_n) {}

  std::optional<DyckSample> next() {
    std::string line;
    for (;;) {
      if (!std::getline(in_, line)) return std::nullopt;
      ++line_no_;
      if (!line.empty()) break;
    }
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path_ + ":" + std::to_string(line_no_) + ": " + e.what());
    }
    if (!row.contains("tokens") || !row.contains("targets"))
      throw ParseError(path_ + ":" + std::to_string(line_no_) + ": missing tokens/targets");
    const auto& stored = row.at("targets");
    if (!language_n_) {
      // infer n from the stored target width (always 2n)
      if (stored.empty()) throw ParseError(path_ + ":" + std::to_string(line_no_) +
                                           ": empty word has no target width");
      language_n_ = static_cast<int>(stored.at(0).size()) / 2;
    }
    const Alphabet a = Alphabet::make(*language_n_, false);
    DyckSample s;
    try {
      s = annotate_targets(a.encode(row.at("tokens").get<std::string>()), a);
    } catch (const Error& e) {
      throw ParseError(path_ + ":" + std::to_string(line_no_) + ": " + e.what());
    }
    if (stored.size() != s.targets.size())
      throw TargetMismatch(path_ + ":" + std::to_string(line_no_) + ": stored " +
                           std::to_string(stored.size()) + " rows, derived " +
                           std::to_string(s.targets.size()));
    for (size_t p = 0; p < s.targets.size(); ++p) {
      const auto& row_p = stored.at(p);
      if (row_p.size() != s.targets[p].size())
        throw TargetMismatch(path_ + ":" + std::to_string(line_no_) + ": position " +
                             std::to_string(p) + " has wrong width");
      for (size_t b = 0; b < s.targets[p].size(); ++b)
        if (row_p.at(b).get<int>() != static_cast<int>(s.targets[p][b]))
          throw TargetMismatch(path_ + ":" + std::to_string(line_no_) + ": position " +
                               std::to_string(p) + " label " + std::to_string(b) +
                               " disagrees with the stack oracle");
    }
    return s;
  }

  std::vector<DyckSample> read_all() {
    std::vector<DyckSample> out;
    while (auto s = next()) out.push_back(std::move(*s));
    return out;
  }

  int language_n() const { return language_n_.value_or(0); }

 private:
  std::string path_;
  std::ifstream in_;
  int line_no_ = 0;
  std::optional<int> language_n_;
};

inline std::vector<DyckSample> load_split(const DatasetManifest& m, const std::string& name,
                                          const std::string& manifest_dir) {
  return SplitReader(m, name, manifest_dir).read_all();
}

struct SplitStats {
  int total = 0;
  std::map<int, int> length_hist;
  std::map<int, int> max_depth_hist;
  std::map<std::pair<int, int>, int> joint;  // (length, max_depth) -> count
  int duplicate_count = 0;
  int all_types_count = 0;                // sequences using all n bracket types
  std::vector<int64_t> per_type_brackets; // bracket occurrences per pair type

  double frac_all_types() const { return total ? double(all_types_count) / total : 0.0; }
  double mean_length() const {
    int64_t sum = 0;
    for (auto [len, c] : length_hist) sum += int64_t(len) * c;
    return total ? double(sum) / total : 0.0;
  }
};

inline SplitStats compute_stats(const std::vector<DyckSample>& samples, int n) {
  SplitStats st;
  st.per_type_brackets.assign(static_cast<size_t>(n), 0);
  const Alphabet a = Alphabet::make(n, false);
  std::set<std::string> seen;
  for (const auto& s : samples) {
    ++st.total;
    ++st.length_hist[s.length];
    ++st.max_depth_hist[s.max_depth];
    ++st.joint[{s.length, s.max_depth}];
    std::vector<bool> used(static_cast<size_t>(n), false);
    for (TokenId t : s.tokens) {
      const int ty = a.type_of(t);
      used[static_cast<size_t>(ty)] = true;
      ++st.per_type_brackets[static_cast<size_t>(ty)];
    }
    bool all = true;
    for (bool u : used) all = all && u;
    if (all) ++st.all_types_count;
    if (!seen.insert(a.decode(s.tokens)).second) ++st.duplicate_count;
  }
  return st;
}

// CSV emission for the length/depth histograms and their joint counts.
inline void write_stats_csv(const SplitStats& st, const std::string& dir,
                            const std::string& split_name) {
  std::string s1 = "length,count\n";
  for (auto [k, v] : st.length_hist) s1 += std::to_string(k) + "," + std::to_string(v) + "\n";
  write_file((std::filesystem::path(dir) / (split_name + "_length_hist.csv")).string(), s1);

  std::string s2 = "max_depth,count\n";
  for (auto [k, v] : st.max_depth_hist) s2 += std::to_string(k) + "," + std::to_string(v) + "\n";
  write_file((std::filesystem::path(dir) / (split_name + "_depth_hist.csv")).string(), s2);

  std::string s3 = "length,max_depth,count\n";
  for (const auto& [k, v] : st.joint)
    s3 += std::to_string(k.first) + "," + std::to_string(k.second) + "," + std::to_string(v) + "\n";
  write_file((std::filesystem::path(dir) / (split_name + "_length_depth.csv")).string(), s3);
}

}  // namespace dyck
