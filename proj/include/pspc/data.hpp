// Copyright 2026 The pspc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// CSV/JSONL readers and writers for counts, preferences, features, trials
// and scores. Lines starting with '#' are comments (provenance headers).

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pspc/aggregate.hpp"
#include "pspc/core.hpp"
#include "pspc/error.hpp"
#include "pspc/pipeline.hpp"

namespace pspc {

namespace detail {

class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  // Next non-empty, non-comment line; false at end of input.
  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError(source_ + ":" + std::to_string(line_no_) + ": " + what);
  }

  std::vector<std::string> fields(const std::string& line, std::size_t expected) const {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      out.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (out.size() != expected)
      fail("expected " + std::to_string(expected) + " fields, got " + std::to_string(out.size()));
    return out;
  }

  void expect_header(const std::string& header) {
    std::string line;
    if (!next(line)) fail("missing header '" + header + "'");
    if (line != header) fail("expected header '" + header + "', got '" + line + "'");
  }

  long long to_int(const std::string& s) const {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) fail("not an integer: '" + s + "'");
    return v;
  }

  double to_double(const std::string& s) const {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      fail("not a number: '" + s + "'");
    }
    if (used != s.size() || !std::isfinite(v)) fail("not a finite number: '" + s + "'");
    return v;
  }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write " + path.string());
  return out;
}

struct PairRow {
  std::string ref;
  int i = 0, j = 0;
};

inline PairRow pair_row(const LineReader& reader, const std::vector<std::string>& f,
                        std::map<std::string, std::set<std::pair<int, int>>>& seen,
                        const std::map<std::string, int>* sizes) {
  PairRow row{f[0], static_cast<int>(reader.to_int(f[1])), static_cast<int>(reader.to_int(f[2]))};
  if (row.ref.empty()) reader.fail("empty ref_id");
  if (row.i < 0 || row.j < 0) reader.fail("negative stimulus index");
  if (row.i == row.j) reader.fail("pair of a stimulus with itself");
  if (sizes) {
    const auto it = sizes->find(row.ref);
    if (it == sizes->end()) reader.fail("unknown reference '" + row.ref + "'");
    if (row.i >= it->second || row.j >= it->second)
      reader.fail("stimulus index outside 0.." + std::to_string(it->second - 1));
  }
  if (!seen[row.ref].insert({std::min(row.i, row.j), std::max(row.i, row.j)}).second)
    reader.fail("duplicate pair " + std::to_string(row.i) + "-" + std::to_string(row.j));
  return row;
}

inline std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace detail

// Header for every written file: `# pspc <version> seed=<seed> config=<hash>`.
inline constexpr std::string_view kToolVersion = "0.1.0";

struct OutputHeader {
  RngSeed seed{};
  std::string config_hash;

  std::string line() const {
    return "# pspc " + std::string(kToolVersion) + " seed=" + std::to_string(seed.seed) +
           " config=" + (config_hash.empty() ? "-" : config_hash);
  }
};

inline std::string config_hash(std::string_view canonical_config) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << hash_string(canonical_config);
  return s.str();
}

// counts.csv: ref_id,i,j,c_ij,c_ji. Without `sizes`, n per reference is the
// largest index seen plus one.
inline std::map<std::string, CountMatrix> parse_counts_csv(std::istream& in, const std::string& source,
                                                           const std::map<std::string, int>* sizes = nullptr) {
  detail::LineReader reader(in, source);
  reader.expect_header("ref_id,i,j,c_ij,c_ji");
  struct Row {
    detail::PairRow pair;
    long long cij, cji;
  };
  std::vector<Row> rows;
  std::map<std::string, std::set<std::pair<int, int>>> seen;
  std::map<std::string, int> n;
  std::string line;
  while (reader.next(line)) {
    const auto f = reader.fields(line, 5);
    const detail::PairRow pair = detail::pair_row(reader, f, seen, sizes);
    const long long cij = reader.to_int(f[3]), cji = reader.to_int(f[4]);
    if (cij < 0 || cji < 0) reader.fail("negative count");
    rows.push_back({pair, cij, cji});
    n[pair.ref] = std::max(n[pair.ref], std::max(pair.i, pair.j) + 1);
  }
  if (sizes)
    for (const auto& [ref, size] : *sizes)
      if (n.count(ref)) n[ref] = size;
  std::map<std::string, CountMatrix> out;
  for (const auto& [ref, size] : n) out.emplace(ref, CountMatrix(static_cast<std::size_t>(size)));
  for (const Row& r : rows) {
    CountMatrix& c = out.at(r.pair.ref);
    c(static_cast<std::size_t>(r.pair.i), static_cast<std::size_t>(r.pair.j)) = r.cij;
    c(static_cast<std::size_t>(r.pair.j), static_cast<std::size_t>(r.pair.i)) = r.cji;
  }
  return out;
}

inline std::map<std::string, CountMatrix> load_counts_csv(const std::filesystem::path& path,
                                                          const std::map<std::string, int>* sizes = nullptr) {
  auto in = detail::open_input(path);
  return parse_counts_csv(in, path.string(), sizes);
}

inline void write_counts_csv(std::ostream& out, const std::map<std::string, CountMatrix>& counts,
                             const std::optional<OutputHeader>& header = std::nullopt) {
  if (header) out << header->line() << '\n';
  out << "ref_id,i,j,c_ij,c_ji\n";
  for (const auto& [ref, c] : counts)
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j) out << ref << ',' << i << ',' << j << ',' << c(i, j) << ',' << c(j, i) << '\n';
}

// Scores used directly as BT scores: p_ij = logistic(scale * (s_i - s_j)).
inline PreferenceMatrix mos_to_pcm(std::span<const double> scores, double scale = 1.0) {
  if (!std::isfinite(scale)) throw ValidationError("scale must be finite");
  for (double s : scores)
    if (!std::isfinite(s)) throw ValidationError("scores must be finite");
  PreferenceMatrix pcm(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = i + 1; j < scores.size(); ++j) pcm.set_pair(i, j, logistic(scale * (scores[i] - scores[j])));
  return pcm;
}

// preferences.csv: ref_id,i,j,p_ij; complements filled, absent pairs stay
// no-data.
inline std::map<std::string, PreferenceMatrix> parse_preference_csv(
    std::istream& in, const std::string& source, const std::map<std::string, int>* sizes = nullptr) {
  detail::LineReader reader(in, source);
  reader.expect_header("ref_id,i,j,p_ij");
  struct Row {
    detail::PairRow pair;
    double p;
  };
  std::vector<Row> rows;
  std::map<std::string, std::set<std::pair<int, int>>> seen;
  std::map<std::string, int> n;
  std::string line;
  while (reader.next(line)) {
    const auto f = reader.fields(line, 4);
    const detail::PairRow pair = detail::pair_row(reader, f, seen, sizes);
    const double p = reader.to_double(f[3]);
    if (!(p >= 0.0 && p <= 1.0)) reader.fail("preference outside [0, 1]: " + f[3]);
    rows.push_back({pair, p});
    n[pair.ref] = std::max(n[pair.ref], std::max(pair.i, pair.j) + 1);
  }
  if (sizes)
    for (const auto& [ref, size] : *sizes)
      if (n.count(ref)) n[ref] = size;
  std::map<std::string, PreferenceMatrix> out;
  for (const auto& [ref, size] : n) out.emplace(ref, PreferenceMatrix(static_cast<std::size_t>(size)));
  for (const Row& r : rows)
    out.at(r.pair.ref).set_pair(static_cast<std::size_t>(r.pair.i), static_cast<std::size_t>(r.pair.j), r.p);
  return out;
}

inline std::map<std::string, PreferenceMatrix> load_preference_csv(const std::filesystem::path& path,
                                                                   const std::map<std::string, int>* sizes = nullptr) {
  auto in = detail::open_input(path);
  return parse_preference_csv(in, path.string(), sizes);
}

inline void write_preference_csv(std::ostream& out, const std::map<std::string, PreferenceMatrix>& pcms,
                                 const std::optional<OutputHeader>& header = std::nullopt) {
  if (header) out << header->line() << '\n';
  out << "ref_id,i,j,p_ij\n";
  for (const auto& [ref, p] : pcms)
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = i + 1; j < p.size(); ++j)
        if (p.has(i, j)) out << ref << ',' << i << ',' << j << ',' << detail::format_double(p(i, j)) << '\n';
}

// stimulus_id is "<ref_id>:<index>", split at the last ':'.
inline std::string stimulus_key(const StimulusId& id) { return id.reference_id + ":" + std::to_string(id.index); }

inline StimulusId parse_stimulus_key(std::string_view key) {
  const auto colon = key.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == key.size())
    throw ValidationError("stimulus_id must look like <ref_id>:<index>, got '" + std::string(key) + "'");
  int index = -1;
  const auto digits = key.substr(colon + 1);
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || index < 0)
    throw ValidationError("bad stimulus index in '" + std::string(key) + "'");
  return {std::string(key.substr(0, colon)), index};
}

inline std::string features_header() {
  std::string h = "stimulus_id";
  for (auto name : kMetricNames) h += "," + std::string(name);
  return h;
}

inline FeatureTable parse_features_csv(std::istream& in, const std::string& source) {
  detail::LineReader reader(in, source);
  reader.expect_header(features_header());
  FeatureTable table;
  std::string line;
  while (reader.next(line)) {
    const auto f = reader.fields(line, kNumMetrics + 1);
    StimulusId id;
    try {
      id = parse_stimulus_key(f[0]);
    } catch (const ValidationError& e) {
      reader.fail(e.what());
    }
    FeatureVector row{};
    for (std::size_t k = 0; k < kNumMetrics; ++k) row[k] = reader.to_double(f[k + 1]);
    if (!table.rows.emplace(id, row).second) reader.fail("duplicate stimulus " + f[0]);
  }
  return table;
}

inline FeatureTable load_features_csv(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_features_csv(in, path.string());
}

inline void write_features_csv(std::ostream& out, const FeatureTable& table,
                               const std::optional<OutputHeader>& header = std::nullopt) {
  if (header) out << header->line() << '\n';
  out << features_header() << '\n';
  for (const auto& [id, row] : table.rows) {
    out << stimulus_key(id);
    for (double v : row) out << ',' << detail::format_double(v);
    out << '\n';
  }
}

// trials.jsonl: {"pair": {"ref_id", "i", "j"}, "winner", "subject",
// "timestamp", "presented_left"[, "idempotency_key", "response_time_ms"]}.
inline nlohmann::json trial_to_json(const TrialRecord& t) {
  nlohmann::json j = {{"pair", {{"ref_id", t.pair.reference_id}, {"i", t.pair.i}, {"j", t.pair.j}}},
                      {"winner", t.winner},
                      {"subject", t.subject},
                      {"timestamp", t.timestamp_ms},
                      {"presented_left", t.presented_left}};
  if (!t.idempotency_key.empty()) j["idempotency_key"] = t.idempotency_key;
  if (t.response_time_ms >= 0) j["response_time_ms"] = t.response_time_ms;
  return j;
}

inline TrialRecord trial_from_json(const nlohmann::json& j, const std::string& default_ref = {}) {
  try {
    const auto& p = j.at("pair");
    const std::string ref = p.contains("ref_id") ? p.at("ref_id").get<std::string>() : default_ref;
    TrialRecord t;
    t.pair = PairId(ref, p.at("i").get<int>(), p.at("j").get<int>());
    t.winner = j.at("winner").get<int>();
    t.subject = j.at("subject").get<std::string>();
    t.timestamp_ms = j.value("timestamp", std::int64_t{0});
    t.presented_left = j.value("presented_left", t.pair.i);
    t.idempotency_key = j.value("idempotency_key", std::string{});
    t.response_time_ms = j.value("response_time_ms", std::int64_t{-1});
    t.validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed trial record: ") + e.what());
  }
}

inline std::vector<TrialRecord> parse_trials_jsonl(std::istream& in, const std::string& source) {
  detail::LineReader reader(in, source);
  std::vector<TrialRecord> out;
  std::string line;
  while (reader.next(line)) {
    try {
      out.push_back(trial_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      reader.fail(e.what());
    } catch (const ValidationError& e) {
      reader.fail(e.what());
    }
  }
  return out;
}

inline std::vector<TrialRecord> load_trials_jsonl(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_trials_jsonl(in, path.string());
}

inline void write_trials_jsonl(std::ostream& out, const std::vector<TrialRecord>& trials) {
  for (const auto& t : trials) out << trial_to_json(t).dump() << '\n';
}

inline void write_scores_csv(std::ostream& out, const std::map<std::string, ScoreEstimate>& scores,
                             const std::optional<OutputHeader>& header = std::nullopt) {
  if (header) out << header->line() << '\n';
  out << "ref_id,stimulus_id,s_hat,pi,sigma_hat\n";
  for (const auto& [ref, est] : scores)
    for (std::size_t i = 0; i < est.s_hat.size(); ++i) {
      out << ref << ',' << stimulus_key({ref, static_cast<int>(i)}) << ',' << detail::format_double(est.s_hat[i])
          << ',' << detail::format_double(est.pi[i]) << ',';
      if (i < est.sigma_hat.size()) out << detail::format_double(est.sigma_hat[i]);
      out << '\n';
    }
}

// Dataset directory: features.csv plus counts.csv (preferred) or
// preferences.csv. Reference sizes come from the feature table.
inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  data.features = load_features_csv(dir / "features.csv");
  std::map<std::string, int> sizes;
  for (const auto& ref : data.features.reference_ids()) sizes[ref] = data.features.stimulus_count(ref);
  for (const auto& [ref, n] : sizes)
    for (int i = 0; i < n; ++i)
      if (!data.features.rows.count({ref, i}))
        throw ValidationError("features.csv lacks stimulus " + stimulus_key({ref, i}));

  if (std::filesystem::exists(dir / "counts.csv")) {
    for (auto& [ref, counts] : load_counts_csv(dir / "counts.csv", &sizes))
      data.references.push_back({ref, build_pcm(counts), std::move(counts)});
  } else if (std::filesystem::exists(dir / "preferences.csv")) {
    for (auto& [ref, pcm] : load_preference_csv(dir / "preferences.csv", &sizes))
      data.references.push_back({ref, std::move(pcm), std::nullopt});
  } else {
    throw ValidationError("dataset " + dir.string() + " has neither counts.csv nor preferences.csv");
  }
  return data;
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& data,
                          const std::optional<OutputHeader>& header = std::nullopt) {
  std::filesystem::create_directories(dir);
  {
    auto out = detail::open_output(dir / "features.csv");
    write_features_csv(out, data.features, header);
  }
  std::map<std::string, CountMatrix> counts;
  std::map<std::string, PreferenceMatrix> pcms;
  for (const auto& ref : data.references) {
    if (ref.counts) counts.emplace(ref.reference_id, *ref.counts);
    else pcms.emplace(ref.reference_id, ref.pcm);
  }
  if (!counts.empty() && !pcms.empty())
    throw ValidationError("dataset mixes count and preference references");
  if (!pcms.empty()) {
    auto out = detail::open_output(dir / "preferences.csv");
    write_preference_csv(out, pcms, header);
  } else {
    auto out = detail::open_output(dir / "counts.csv");
    write_counts_csv(out, counts, header);
  }
}

}  // namespace pspc
