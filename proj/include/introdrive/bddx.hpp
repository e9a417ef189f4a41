#ifndef INTRODRIVE_BDDX_HPP
#define INTRODRIVE_BDDX_HPP

// BDD-X-format annotation files: JSONL with one interval per line,
// `{"video_id", "start_s", "end_s", "description", "justification"}`.
// Parsing attaches line numbers to every error; serialization is canonical
// (alphabetical keys, shortest round-trip floats) so parse/serialize is an
// identity on files this library wrote.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "introdrive/text.hpp"

namespace introdrive {

struct AnnotatedInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string description;
  std::string justification;

  bool operator==(const AnnotatedInterval&) const = default;
};

struct AnnotatedClip {
  std::string video_id;
  std::vector<AnnotatedInterval> intervals;

  bool operator==(const AnnotatedClip&) const = default;
};

inline std::string annotation_line(const std::string& video_id, const AnnotatedInterval& iv) {
  nlohmann::json j;
  j["video_id"] = video_id;
  j["start_s"] = iv.start_s;
  j["end_s"] = iv.end_s;
  j["description"] = iv.description;
  j["justification"] = iv.justification;
  return j.dump();
}

inline void write_annotations(const std::string& path, const std::vector<AnnotatedClip>& clips) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write annotations: " + path);
  for (const auto& clip : clips)
    for (const auto& iv : clip.intervals) out << annotation_line(clip.video_id, iv) << "\n";
  if (!out) throw IoError("short write: " + path);
}

inline std::vector<AnnotatedClip> parse_annotations(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open annotations: " + path);
  std::vector<AnnotatedClip> clips;
  std::map<std::string, std::size_t> clip_index;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + "invalid JSON: " + e.what());
    }
    for (const char* field : {"video_id", "start_s", "end_s", "description", "justification"})
      if (!j.contains(field)) throw ParseError(where + "missing field '" + field + "'");

    AnnotatedInterval iv;
    std::string video_id;
    try {
      video_id = j.at("video_id").get<std::string>();
      iv.start_s = j.at("start_s").get<double>();
      iv.end_s = j.at("end_s").get<double>();
      iv.description = j.at("description").get<std::string>();
      iv.justification = j.at("justification").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + "wrong field type: " + e.what());
    }
    if (!(iv.start_s < iv.end_s))
      throw ParseError(where + "interval start " + format_double(iv.start_s) +
                       " must be before end " + format_double(iv.end_s));
    if (iv.start_s < 0.0) throw ParseError(where + "negative start timestamp");
    if (!std::isfinite(iv.start_s) || !std::isfinite(iv.end_s))
      throw ParseError(where + "non-finite timestamps");
    if (iv.description.empty() || iv.justification.empty())
      throw ParseError(where + "description and justification must be nonempty");

    auto [it, inserted] = clip_index.try_emplace(video_id, clips.size());
    if (inserted) {
      AnnotatedClip c;
      c.video_id = video_id;
      clips.push_back(std::move(c));
    }
    clips[it->second].intervals.push_back(std::move(iv));
  }
  return clips;
}

// ---------------------------------------------------------------------------
// Vocabulary building
// ---------------------------------------------------------------------------

struct VocabBundle {
  Vocabulary descriptions;
  Vocabulary justifications;
  Vocabulary joint;
};

inline VocabBundle build_vocab(const std::vector<AnnotatedClip>& clips, int min_freq = 2) {
  if (clips.empty()) throw ContractError("build_vocab over an empty corpus");
  std::vector<std::string> desc, just, joint;
  for (const auto& c : clips)
    for (const auto& iv : c.intervals) {
      desc.push_back(iv.description);
      just.push_back(iv.justification);
      joint.push_back(iv.description);
      joint.push_back(iv.justification);
    }
  VocabBundle out;
  out.descriptions = Vocabulary::build(desc, min_freq);
  out.justifications = Vocabulary::build(just, min_freq);
  out.joint = Vocabulary::build(joint, min_freq);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset statistics
// ---------------------------------------------------------------------------

/// Suffix stripper covering word families (-s, -ing, -ed, -ly) the way the
/// dataset's word-count tables group them. Intentionally tiny, not a full
/// morphological stemmer.
inline std::string stem(const std::string& token) {
  auto ends_with = [&](const char* suf) {
    const std::size_t n = std::strlen(suf);
    return token.size() > n && token.compare(token.size() - n, n, suf) == 0;
  };
  std::string base = token;
  if (ends_with("ing"))
    base = token.substr(0, token.size() - 3);
  else if (ends_with("ed"))
    base = token.substr(0, token.size() - 2);
  else if (ends_with("ly"))
    base = token.substr(0, token.size() - 2);
  else if (ends_with("s") && !ends_with("ss"))
    base = token.substr(0, token.size() - 1);
  if (base.size() < 3) return token;
  // collapse a doubled final consonant left by -ing/-ed (stopping -> stopp -> stop)
  if (base.size() >= 4 && base[base.size() - 1] == base[base.size() - 2]) {
    const char c = base.back();
    if (c != 'e' && c != 'o' && c != 'a' && c != 'i' && c != 'u' && c != 's')
      base.pop_back();
  }
  return base;
}

struct DatasetStats {
  int n_clips = 0;
  int n_intervals = 0;
  double total_interval_seconds = 0.0;
  std::map<int, int> intervals_per_video_histogram;  // interval count -> videos
  std::vector<std::pair<std::string, int>> top_description_stems;
  std::vector<std::pair<std::string, int>> top_justification_stems;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n_clips"] = n_clips;
    j["n_intervals"] = n_intervals;
    j["total_interval_seconds"] = total_interval_seconds;
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [k, v] : intervals_per_video_histogram) hist[std::to_string(k)] = v;
    j["intervals_per_video"] = hist;
    auto words = [](const std::vector<std::pair<std::string, int>>& v) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& [w, n] : v) arr.push_back({{"word", w}, {"count", n}});
      return arr;
    };
    j["top_description_words"] = words(top_description_stems);
    j["top_justification_words"] = words(top_justification_stems);
    return j;
  }
};

inline DatasetStats stats(const std::vector<AnnotatedClip>& clips, int top_k = 30) {
  DatasetStats out;
  out.n_clips = static_cast<int>(clips.size());
  std::map<std::string, int> desc_counts, just_counts;
  for (const auto& c : clips) {
    out.intervals_per_video_histogram[static_cast<int>(c.intervals.size())] += 1;
    for (const auto& iv : c.intervals) {
      ++out.n_intervals;
      out.total_interval_seconds += iv.end_s - iv.start_s;
      for (const auto& tok : tokenize(iv.description)) ++desc_counts[stem(tok)];
      for (const auto& tok : tokenize(iv.justification)) ++just_counts[stem(tok)];
    }
  }
  auto top = [top_k](const std::map<std::string, int>& counts) {
    std::vector<std::pair<std::string, int>> v(counts.begin(), counts.end());
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (static_cast<int>(v.size()) > top_k) v.resize(top_k);
    return v;
  };
  out.top_description_stems = top(desc_counts);
  out.top_justification_stems = top(just_counts);
  return out;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct DatasetSplit {
  std::vector<std::string> train, val, test;

  nlohmann::json to_json() const {
    return nlohmann::json{{"train", train}, {"val", val}, {"test", test}};
  }
  static DatasetSplit from_json(const nlohmann::json& j) {
    DatasetSplit s;
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    return s;
  }
};

/// Disjoint 80/10/10 split (by default) of the sorted id list, shuffled by
/// the given seed. Union always equals the input set.
inline DatasetSplit make_split(std::vector<std::string> ids, std::uint64_t seed,
                               double train_frac = 0.8, double val_frac = 0.1) {
  if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0)
    throw ContractError("split fractions must satisfy 0 < train, 0 <= val, train+val < 1");
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const std::size_t n = ids.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * n));
  const auto n_val = static_cast<std::size_t>(std::llround(val_frac * n));
  DatasetSplit s;
  s.train.assign(ids.begin(), ids.begin() + n_train);
  s.val.assign(ids.begin() + n_train, ids.begin() + std::min(n, n_train + n_val));
  s.test.assign(ids.begin() + std::min(n, n_train + n_val), ids.end());
  return s;
}

}  // namespace introdrive

#endif
