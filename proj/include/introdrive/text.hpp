#ifndef INTRODRIVE_TEXT_HPP
#define INTRODRIVE_TEXT_HPP

// Tokenization and vocabulary handling shared by the dataset tooling and the
// explanation generator.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "introdrive/common.hpp"

namespace introdrive {

/// Lowercase, strip punctuation, split on whitespace.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char raw : text) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (std::isspace(c)) {
      if (!cur.empty()) {
        tokens.push_back(cur);
        cur.clear();
      }
    }
    // punctuation characters are dropped
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kStart = 1;
  static constexpr int kEnd = 2;
  static constexpr int kUnk = 3;
  static constexpr int kSep = 4;

  Vocabulary() {
    for (const char* t : {"<pad>", "<start>", "<end>", "<unk>", "<sep>"}) push(t);
  }

  /// Frequency-then-lexicographic id assignment keeps ids stable across runs.
  static Vocabulary build(const std::vector<std::string>& sentences, int min_freq = 2) {
    if (sentences.empty()) throw ContractError("vocabulary build over an empty corpus");
    std::map<std::string, int> freq;
    for (const auto& s : sentences)
      for (const auto& tok : tokenize(s)) ++freq[tok];
    std::vector<std::pair<std::string, int>> kept;
    for (const auto& [tok, n] : freq)
      if (n >= min_freq) kept.emplace_back(tok, n);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary v;
    for (const auto& [tok, _] : kept) v.push(tok);
    return v;
  }

  int size() const { return static_cast<int>(id_to_token_.size()); }

  int id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

  const std::string& token(int id) const {
    if (id < 0 || id >= size())
      throw ContractError("token id " + std::to_string(id) + " outside vocabulary");
    return id_to_token_[id];
  }

  std::vector<int> encode(const std::string& sentence) const {
    std::vector<int> ids;
    for (const auto& tok : tokenize(sentence)) ids.push_back(id(tok));
    return ids;
  }

  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int i : ids) {
      if (!out.empty()) out += " ";
      out += token(i);
    }
    return out;
  }

  /// Token-per-line file; line index == id, reserved tokens included.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write vocabulary: " + path);
    for (const auto& t : id_to_token_) out << t << "\n";
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary: " + path);
    Vocabulary v;
    v.id_to_token_.clear();
    v.token_to_id_.clear();
    std::string line;
    while (std::getline(in, line)) v.push(line);
    if (v.size() < 5 || v.id_to_token_[kSep] != "<sep>")
      throw ParseError("vocabulary file missing reserved tokens: " + path);
    return v;
  }

 private:
  void push(const std::string& token) {
    token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(token);
  }

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

/// Target word-id sequence "description <sep> explanation <end>".
inline std::vector<int> encode_target(const Vocabulary& vocab, const std::string& description,
                                      const std::string& justification) {
  std::vector<int> ids = vocab.encode(description);
  ids.push_back(Vocabulary::kSep);
  for (int id : vocab.encode(justification)) ids.push_back(id);
  ids.push_back(Vocabulary::kEnd);
  return ids;
}

}  // namespace introdrive

#endif
