#pragma once

// Conventional reference system: cosine scoring over externally computed
// speaker embeddings, EER-threshold calibration, and a cascaded
// text-dependent baseline (speaker score + transcript match).
//
// Embeddings file: one line per utterance, "<id> <v1> <v2> ... <vdim>".
// Transcripts file: one line per utterance, "<id>\t<text>".

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "svbench/errors.hpp"
#include "svbench/metrics.hpp"
#include "svbench/pair_sampler.hpp"
#include "svbench/response_parser.hpp"
#include "svbench/util.hpp"

namespace svbench {

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, std::vector<double>>& entries() const { return entries_; }

  void insert(const std::string& id, std::vector<double> v) {
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_) throw DimensionMismatch(id, v.size(), dim_);
    for (double x : v)
      if (!std::isfinite(x)) throw NonFiniteValue(id);
    entries_[id] = std::move(v);
  }

  const std::vector<double>& at(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw MissingEmbedding(id);
    return it->second;
  }

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

 private:
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<double>> entries_;
};

inline EmbeddingTable parse_embeddings(std::string_view text) {
  EmbeddingTable table;
  for (auto& [line_no, line] : util::nonblank_lines(text)) {
    std::istringstream in(line);
    std::string id;
    in >> id;
    std::vector<double> v;
    std::string tok;
    while (in >> tok) {
      char* end = nullptr;
      const double x = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size())
        throw IoError("embeddings line " + std::to_string(line_no) + ": '" + tok + "' is not a number");
      v.push_back(x);
    }
    if (v.empty()) throw IoError("embeddings line " + std::to_string(line_no) + ": no components");
    table.insert(id, std::move(v));
  }
  if (table.size() == 0) throw IoError("embeddings file is empty");
  return table;
}

inline EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  return parse_embeddings(util::read_file(path));
}

inline void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& t) {
  std::string out;
  char buf[40];
  for (const auto& [id, v] : t.entries()) {
    out += id;
    for (double x : v) {
      std::snprintf(buf, sizeof buf, " %.17g", x);
      out += buf;
    }
    out += "\n";
  }
  util::write_file(path, out);
}

inline std::unordered_map<std::string, std::string> load_transcripts(const std::filesystem::path& path) {
  std::unordered_map<std::string, std::string> out;
  for (auto& [line_no, line] : util::nonblank_lines(util::read_file(path))) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw IoError("transcripts line " + std::to_string(line_no) + ": expected id<TAB>text");
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline double cosine_score(const EmbeddingTable& t, const TrialPair& pair) {
  const auto& a = t.at(pair.enroll);
  const auto& b = t.at(pair.test);
  auto is_zero = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  };
  if (is_zero(a)) throw ZeroVector(pair.enroll);
  if (is_zero(b)) throw ZeroVector(pair.test);
  return std::clamp(cosine(a, b), -1.0, 1.0);
}

inline std::vector<ScoredTrial> score_pairs(const EmbeddingTable& t, const std::vector<TrialPair>& pairs) {
  std::vector<ScoredTrial> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({cosine_score(t, p), p.label_same_speaker});
  return out;
}

/// Threshold at the equal-error operating point of the development trials.
inline double calibrate_threshold(const std::vector<ScoredTrial>& dev) { return eer(dev).threshold; }

/// Lowercase, ASCII punctuation removed, whitespace collapsed.
inline std::string normalize_transcript(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::ispunct(c)) continue;
    if (std::isspace(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
  }
  return out;
}

/// Speaker-only predictions: same iff score >= threshold.
inline std::vector<Prediction> threshold_predictions(const EmbeddingTable& t, const std::vector<TrialPair>& pairs,
                                                     double threshold) {
  std::vector<Prediction> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    Prediction p;
    p.index = i;
    p.enroll = pairs[i].enroll;
    p.test = pairs[i].test;
    const double s = cosine_score(t, pairs[i]);
    p.same_speaker = s >= threshold ? SpeakerVerdict::same : SpeakerVerdict::different;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", s);
    p.raw_text = buf;
    out.push_back(std::move(p));
  }
  return out;
}

/// Speaker decision from the thresholded score; content decision from an
/// exact match between the normalized hypothesis transcript of the test
/// utterance and the normalized target text.
inline std::vector<Prediction> cascaded_td(const EmbeddingTable& t,
                                           const std::unordered_map<std::string, std::string>& transcripts,
                                           const std::vector<TrialPair>& pairs, double threshold) {
  auto out = threshold_predictions(t, pairs, threshold);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    auto it = transcripts.find(pair.test);
    if (it == transcripts.end()) throw MissingTranscript(pair.test);
    if (!pair.target_text) throw MissingTargetText();
    out[i].content_match =
        normalize_transcript(it->second) == normalize_transcript(*pair.target_text) ? ContentVerdict::yes : ContentVerdict::no;
  }
  return out;
}

}  // namespace svbench
