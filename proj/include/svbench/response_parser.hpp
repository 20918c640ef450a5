#pragma once

// Free-text answer parsing. Both parsers are total: every input maps to a
// verdict, and text that matches no rule maps to `invalid`.
//
// Text is normalized first (ASCII lowercase, non-alphanumerics to spaces,
// whitespace collapsed), so matching is token based: "someone" never matches
// "one".
//
// TI precedence:
//   count rule      any of two/2/multiple/several/three..ten/3..10  -> different
//                   else any of one/1/single                        -> same
//   identity rule   different/differ/distinct                       -> different
//                   same, negated by not/no/never/n't within 3 words -> different
//                   same                                            -> same
// Concat-style strategies try the count rule first, then the identity rule;
// separate and mix try the identity rule first.

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "svbench/audio.hpp"
#include "svbench/prompt_dataset.hpp"
#include "svbench/provenance.hpp"
#include "svbench/util.hpp"

namespace svbench {

enum class SpeakerVerdict { same, different, invalid };
enum class ContentVerdict { yes, no, invalid };

inline std::string_view to_string(SpeakerVerdict v) {
  switch (v) {
    case SpeakerVerdict::same: return "same";
    case SpeakerVerdict::different: return "different";
    case SpeakerVerdict::invalid: return "invalid";
  }
  return "invalid";
}

inline std::string_view to_string(ContentVerdict v) {
  switch (v) {
    case ContentVerdict::yes: return "yes";
    case ContentVerdict::no: return "no";
    case ContentVerdict::invalid: return "invalid";
  }
  return "invalid";
}

inline std::optional<SpeakerVerdict> parse_speaker_verdict(std::string_view s) {
  for (auto v : {SpeakerVerdict::same, SpeakerVerdict::different, SpeakerVerdict::invalid})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

inline std::optional<ContentVerdict> parse_content_verdict(std::string_view s) {
  for (auto v : {ContentVerdict::yes, ContentVerdict::no, ContentVerdict::invalid})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

/// Normalization used by both parsers; idempotent.
inline std::string normalize_answer(std::string_view text) { return util::normalize_words(text); }

namespace detail {

inline bool contains_any(const std::vector<std::string>& words, std::initializer_list<std::string_view> keys) {
  return std::any_of(words.begin(), words.end(), [&](const std::string& w) {
    return std::find(keys.begin(), keys.end(), w) != keys.end();
  });
}

inline SpeakerVerdict count_rule(const std::vector<std::string>& words) {
  if (contains_any(words, {"two", "2", "multiple", "several", "three", "four", "five", "six", "seven", "eight", "nine",
                           "ten", "3", "4", "5", "6", "7", "8", "9", "10"}))
    return SpeakerVerdict::different;
  if (contains_any(words, {"one", "1", "single"})) return SpeakerVerdict::same;
  return SpeakerVerdict::invalid;
}

inline SpeakerVerdict identity_rule(const std::vector<std::string>& words) {
  if (contains_any(words, {"different", "differ", "differs", "distinct"})) return SpeakerVerdict::different;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i] != "same") continue;
    for (std::size_t back = 1; back <= 3 && back <= i; ++back) {
      const auto& w = words[i - back];
      if (w == "not" || w == "no" || w == "never" || w == "t") return SpeakerVerdict::different;
    }
    return SpeakerVerdict::same;
  }
  return SpeakerVerdict::invalid;
}

inline std::optional<bool> field_after(const std::vector<std::string>& words, std::string_view key) {
  for (std::size_t i = 0; i + 1 < words.size(); ++i) {
    if (words[i] != key) continue;
    if (words[i + 1] == "yes") return true;
    if (words[i + 1] == "no") return false;
  }
  return std::nullopt;
}

}  // namespace detail

inline SpeakerVerdict parse_ti(std::string_view text, Strategy strategy) {
  const auto words = util::split_words(normalize_answer(text));
  if (is_concat_style(strategy)) {
    if (auto v = detail::count_rule(words); v != SpeakerVerdict::invalid) return v;
    return detail::identity_rule(words);
  }
  if (auto v = detail::identity_rule(words); v != SpeakerVerdict::invalid) return v;
  return detail::count_rule(words);
}

struct TdVerdict {
  SpeakerVerdict same_speaker = SpeakerVerdict::invalid;
  ContentVerdict content_match = ContentVerdict::invalid;

  friend bool operator==(const TdVerdict&, const TdVerdict&) = default;
};

/// Extracts "Speaker: Yes/No" and "Content: Yes/No"; each missing field is
/// invalid on its own.
inline TdVerdict parse_td(std::string_view text) {
  const auto words = util::split_words(normalize_answer(text));
  TdVerdict v;
  if (auto s = detail::field_after(words, "speaker")) v.same_speaker = *s ? SpeakerVerdict::same : SpeakerVerdict::different;
  if (auto c = detail::field_after(words, "content")) v.content_match = *c ? ContentVerdict::yes : ContentVerdict::no;
  return v;
}

struct Prediction {
  std::size_t index = 0;
  std::string enroll;
  std::string test;
  SpeakerVerdict same_speaker = SpeakerVerdict::invalid;
  std::optional<ContentVerdict> content_match;
  std::string raw_text;
  std::string error;  // transport failure, if any

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

inline Prediction predict(const DatasetExample& e, std::string_view text) {
  Prediction p;
  p.index = e.index;
  p.enroll = e.pair.enroll;
  p.test = e.pair.test;
  p.raw_text = std::string(text);
  if (e.task == Task::td) {
    const auto v = parse_td(text);
    p.same_speaker = v.same_speaker;
    p.content_match = v.content_match;
  } else {
    p.same_speaker = parse_ti(text, e.strategy);
  }
  return p;
}

inline nlohmann::ordered_json prediction_to_json(const Prediction& p) {
  nlohmann::ordered_json j;
  j["index"] = p.index;
  j["enroll"] = p.enroll;
  j["test"] = p.test;
  j["same_speaker"] = std::string(to_string(p.same_speaker));
  if (p.content_match) j["content_match"] = std::string(to_string(*p.content_match));
  j["raw_text"] = p.raw_text;
  if (!p.error.empty()) j["error"] = p.error;
  return j;
}

inline Prediction prediction_from_json(const nlohmann::json& j, std::size_t line) {
  auto fail = [line](const std::string& what) { return IoError("predictions line " + std::to_string(line) + ": " + what); };
  Prediction p;
  try {
    p.index = j.value("index", std::size_t{0});
    p.enroll = j.at("enroll").get<std::string>();
    p.test = j.at("test").get<std::string>();
    auto s = parse_speaker_verdict(j.at("same_speaker").get<std::string>());
    if (!s) throw fail("bad same_speaker verdict");
    p.same_speaker = *s;
    if (j.contains("content_match")) {
      auto c = parse_content_verdict(j["content_match"].get<std::string>());
      if (!c) throw fail("bad content_match verdict");
      p.content_match = *c;
    }
    p.raw_text = j.value("raw_text", std::string());
    p.error = j.value("error", std::string());
  } catch (const nlohmann::json::exception& ex) {
    throw fail(ex.what());
  }
  return p;
}

struct PredictionsFile {
  std::optional<Provenance> meta;
  std::vector<Prediction> predictions;
};

inline void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds,
                              const Provenance& meta) {
  std::string out = meta.line();
  for (const auto& p : preds) out += prediction_to_json(p).dump() + "\n";
  util::write_file(path, out);
}

inline PredictionsFile read_predictions(const std::filesystem::path& path) {
  auto lines = parse_json_lines(util::read_file(path), "predictions");
  PredictionsFile out{lines.meta, {}};
  for (auto& [line, j] : lines.rows) out.predictions.push_back(prediction_from_json(j, line));
  return out;
}

}  // namespace svbench
