#pragma once

// Prompt rendering and instruction-dataset emission.
//
// A prompt is an ordered list of typed segments (text or audio). Templates
// are plain strings with {audio1}, {audio2} and {target_text} placeholders;
// the text around each audio placeholder becomes its own (trimmed) text
// segment.

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "svbench/audio.hpp"
#include "svbench/errors.hpp"
#include "svbench/pair_sampler.hpp"
#include "svbench/provenance.hpp"
#include "svbench/util.hpp"

namespace svbench {

enum class Task { ti, td };

inline std::string_view to_string(Task t) { return t == Task::ti ? "ti" : "td"; }

inline std::optional<Task> parse_task(std::string_view s) {
  if (s == "ti") return Task::ti;
  if (s == "td") return Task::td;
  return std::nullopt;
}

namespace prompts {

inline constexpr std::string_view kSeparateQuestion =
    "Please determine whether the above two audio segments are from the same speaker or different speakers.";
inline constexpr std::string_view kCountQuestion =
    "Please determine how many speakers are present in this audio segment.";
inline constexpr std::string_view kMixQuestion =
    "This audio segment is composed of two audio tracks mixed together. Please determine whether these two "
    "audio tracks are from the same speaker or different speakers.";

inline constexpr std::string_view kSeparateTemplate =
    "Audio 1: {audio1} Audio 2: {audio2} Please determine whether the above two audio segments are from the "
    "same speaker or different speakers.";
inline constexpr std::string_view kConcatTemplate =
    "{audio1} Please determine how many speakers are present in this audio segment.";
inline constexpr std::string_view kMixTemplate =
    "{audio1} This audio segment is composed of two audio tracks mixed together. Please determine whether these "
    "two audio tracks are from the same speaker or different speakers.";
inline constexpr std::string_view kTdTemplate =
    "Enrollment Audio: {audio1} Test Audio: {audio2} Whether the Test and Enrollment correspond to the same "
    "speaker and whether the Test matches a specified \"{target_text}\".";

}  // namespace prompts

struct PromptTemplate {
  Strategy strategy = Strategy::concat_silence;
  Task task = Task::ti;
  std::string text;

  /// Number of audio slots the template expects.
  std::size_t audio_slots() const {
    return (text.find("{audio1}") != std::string::npos ? 1 : 0) + (text.find("{audio2}") != std::string::npos ? 1 : 0);
  }
};

/// Text-dependent prompts always use two labeled slots (enrollment, test),
/// whatever strategy is requested.
inline PromptTemplate default_template(Strategy strategy, Task task) {
  if (task == Task::td) return {Strategy::separate, Task::td, std::string(prompts::kTdTemplate)};
  switch (strategy) {
    case Strategy::separate: return {strategy, task, std::string(prompts::kSeparateTemplate)};
    case Strategy::concat:
    case Strategy::concat_silence: return {strategy, task, std::string(prompts::kConcatTemplate)};
    case Strategy::mix: return {strategy, task, std::string(prompts::kMixTemplate)};
  }
  return {strategy, task, std::string(prompts::kConcatTemplate)};
}

/// Audio layout actually used for a (strategy, task) combination.
inline Strategy effective_strategy(Strategy strategy, Task task) {
  return task == Task::td ? Strategy::separate : strategy;
}

struct Segment {
  enum class Kind { text, audio };
  Kind kind = Kind::text;
  std::string text;        // text segments
  std::string audio_path;  // audio segments: reference to the assembled file
  std::string wav_base64;  // audio segments: optional inline payload

  static Segment make_text(std::string t) { return {Kind::text, std::move(t), {}, {}}; }
  static Segment make_audio(std::string path) { return {Kind::audio, {}, std::move(path), {}}; }

  friend bool operator==(const Segment&, const Segment&) = default;
};

inline nlohmann::ordered_json segment_to_json(const Segment& s) {
  nlohmann::ordered_json j;
  if (s.kind == Segment::Kind::text) {
    j["type"] = "text";
    j["text"] = s.text;
  } else {
    j["type"] = "audio";
    if (!s.wav_base64.empty()) {
      j["wav_base64"] = s.wav_base64;
    } else {
      j["path"] = s.audio_path;
    }
  }
  return j;
}

inline Segment segment_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) throw IoError("segment without a type");
  const auto type = j["type"].get<std::string>();
  if (type == "text") {
    if (!j.contains("text") || !j["text"].is_string()) throw IoError("text segment without text");
    return Segment::make_text(j["text"].get<std::string>());
  }
  if (type == "audio") {
    Segment s = Segment::make_audio(j.value("path", std::string()));
    s.wav_base64 = j.value("wav_base64", std::string());
    if (s.audio_path.empty() && s.wav_base64.empty()) throw IoError("audio segment without path or payload");
    return s;
  }
  throw IoError("unknown segment type '" + type + "'");
}

/// Expands a template into segments. `audio_refs` fills {audio1}, {audio2} in order.
inline std::vector<Segment> render_template(const PromptTemplate& tpl, std::span<const std::string> audio_refs,
                                            const std::optional<std::string>& target_text) {
  std::string text = tpl.text;
  if (const auto at = text.find("{target_text}"); at != std::string::npos) {
    if (!target_text) throw MissingTargetText();
    text.replace(at, std::string_view("{target_text}").size(), *target_text);
  }
  std::vector<Segment> out;
  std::size_t pos = 0;
  std::size_t next_ref = 0;
  auto flush_text = [&](std::string_view chunk) {
    std::string t = util::trim(chunk);
    if (!t.empty()) out.push_back(Segment::make_text(std::move(t)));
  };
  for (;;) {
    const auto a1 = text.find("{audio1}", pos);
    const auto a2 = text.find("{audio2}", pos);
    const auto at = std::min(a1, a2);
    if (at == std::string::npos) break;
    flush_text(std::string_view(text).substr(pos, at - pos));
    if (next_ref >= audio_refs.size())
      throw InvalidArgument("template needs more audio references than the " + std::to_string(audio_refs.size()) +
                            " supplied");
    out.push_back(Segment::make_audio(audio_refs[next_ref++]));
    pos = at + std::string_view("{audio1}").size();
  }
  flush_text(std::string_view(text).substr(pos));
  return out;
}

/// Interleaved model input for one pair. `audio_refs` are the assembled files
/// for the pair (two for separate and text-dependent layouts, one otherwise).
inline std::vector<Segment> render_prompt(const TrialPair& pair, Strategy strategy, Task task,
                                          std::span<const std::string> audio_refs) {
  if (task == Task::td && !pair.target_text) throw MissingTargetText();
  return render_template(default_template(strategy, task), audio_refs,
                         task == Task::td ? pair.target_text : std::nullopt);
}

inline std::string td_target(bool same_speaker, bool content_match) {
  return std::string("Speaker: ") + (same_speaker ? "Yes" : "No") + ", Content: " + (content_match ? "Yes" : "No");
}

/// Training target. Concat-style TI answers are a speaker count ("one"/"two");
/// separate and mix questions are answered "same"/"different".
inline std::string target_for(const TrialPair& pair, Strategy strategy, Task task) {
  if (task == Task::td) {
    if (!pair.label_content_match) throw InvalidArgument("text-dependent pair without label_content_match");
    return td_target(pair.label_same_speaker, *pair.label_content_match);
  }
  if (is_concat_style(strategy)) return pair.label_same_speaker ? "one" : "two";
  return pair.label_same_speaker ? "same" : "different";
}

struct DecodedTarget {
  bool same_speaker = false;
  std::optional<bool> content_match;
};

/// Exact inverse of target_for over its image.
inline std::optional<DecodedTarget> decode_target(std::string_view target) {
  if (target == "one" || target == "same") return DecodedTarget{true, std::nullopt};
  if (target == "two" || target == "different") return DecodedTarget{false, std::nullopt};
  for (bool s : {true, false})
    for (bool c : {true, false})
      if (target == td_target(s, c)) return DecodedTarget{s, c};
  return std::nullopt;
}

struct DatasetExample {
  std::size_t index = 0;
  std::string id;
  Strategy strategy = Strategy::concat_silence;
  Task task = Task::ti;
  std::vector<Segment> inputs;
  std::string target;
  TrialPair pair;
};

/// Request/example id for the pair at `index`; shared by every stage.
inline std::string example_id(std::size_t index) { return util::zero_pad(index, 6); }

inline nlohmann::ordered_json example_to_json(const DatasetExample& e) {
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["index"] = e.index;
  j["strategy"] = std::string(to_string(e.strategy));
  j["task"] = std::string(to_string(e.task));
  auto inputs = nlohmann::ordered_json::array();
  for (const auto& s : e.inputs) inputs.push_back(segment_to_json(s));
  j["inputs"] = std::move(inputs);
  j["target"] = e.target;
  j["pair"] = pair_to_json(e.pair);
  return j;
}

inline DatasetExample example_from_json(const nlohmann::json& j, std::size_t line) {
  auto fail = [line](const std::string& what) { return IoError("dataset line " + std::to_string(line) + ": " + what); };
  if (!j.is_object()) throw fail("expected an object");
  DatasetExample e;
  try {
    e.id = j.at("id").get<std::string>();
    e.index = j.at("index").get<std::size_t>();
    auto s = parse_strategy(j.at("strategy").get<std::string>());
    auto t = parse_task(j.at("task").get<std::string>());
    if (!s || !t) throw fail("unknown strategy or task");
    e.strategy = *s;
    e.task = *t;
    for (const auto& seg : j.at("inputs")) e.inputs.push_back(segment_from_json(seg));
    e.target = j.value("target", std::string());
    e.pair = pair_from_json(j.at("pair"), line);
  } catch (const nlohmann::json::exception& ex) {
    throw fail(ex.what());
  }
  return e;
}

struct EmitOptions {
  /// Directory holding the assembled audio, relative to the dataset file.
  std::string audio_dir = "audio";
  bool inline_audio = false;
  Provenance provenance;
};

inline DatasetExample make_example(const TrialPair& pair, std::size_t index, Strategy strategy, Task task,
                                   const std::string& audio_dir) {
  const Strategy layout = effective_strategy(strategy, task);
  std::vector<std::string> refs;
  for (const auto& name : assembled_file_names(index, layout))
    refs.push_back(audio_dir.empty() ? name : audio_dir + "/" + name);
  DatasetExample e;
  e.index = index;
  e.id = example_id(index);
  e.strategy = layout;
  e.task = task;
  e.inputs = render_prompt(pair, layout, task, refs);
  e.target = target_for(pair, layout, task);
  e.pair = pair;
  return e;
}

/// Writes one example per line, in input order. Returns the number written.
inline std::size_t emit_ft_dataset(const std::vector<TrialPair>& pairs, Strategy strategy, Task task,
                                   const std::filesystem::path& out, const EmitOptions& opts = {}) {
  const auto base = out.has_parent_path() ? out.parent_path() : std::filesystem::path(".");
  std::string text = opts.provenance.line();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    DatasetExample e = make_example(pairs[i], i, strategy, task, opts.audio_dir);
    if (opts.inline_audio) {
      for (auto& seg : e.inputs) {
        if (seg.kind != Segment::Kind::audio) continue;
        seg.wav_base64 = util::base64_encode(util::read_file(base / seg.audio_path));
      }
    }
    text += example_to_json(e).dump() + "\n";
  }
  util::write_file(out, text);
  return pairs.size();
}

struct DatasetFile {
  std::optional<Provenance> meta;
  std::vector<DatasetExample> examples;
};

inline DatasetFile read_dataset(const std::filesystem::path& path) {
  auto lines = parse_json_lines(util::read_file(path), "dataset");
  DatasetFile out{lines.meta, {}};
  for (auto& [line, j] : lines.rows) out.examples.push_back(example_from_json(j, line));
  return out;
}

}  // namespace svbench
