#pragma once

// Corpus manifests: one UtteranceRecord per line (JSONL) or per CSV row.
//
// Required fields: utterance_id, speaker_id, audio_path, duration_s.
// Optional attributes that are absent, null, or empty are "unset"; unknown
// fields are carried through untouched in UtteranceRecord::extras.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "svbench/errors.hpp"
#include "svbench/util.hpp"

namespace svbench {

enum class Gender { male, female, unknown };

inline std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::male: return "male";
    case Gender::female: return "female";
    case Gender::unknown: return "unknown";
  }
  return "unknown";
}

inline std::optional<Gender> parse_gender(std::string_view s) {
  const std::string n = util::normalize_words(s);
  if (n == "male" || n == "m") return Gender::male;
  if (n == "female" || n == "f") return Gender::female;
  if (n.empty() || n == "unknown") return Gender::unknown;
  return std::nullopt;
}

struct UtteranceRecord {
  std::string utterance_id;
  std::string speaker_id;
  std::string audio_path;
  double duration_s = 0.0;
  Gender gender = Gender::unknown;
  std::optional<int> age_years;
  std::optional<std::string> language;
  std::optional<std::string> dialect;
  std::optional<std::string> device;
  std::optional<std::string> distance;
  std::optional<std::string> scene;
  std::optional<std::string> transcript;
  nlohmann::json extras = nlohmann::json::object();

  bool eligible() const { return duration_s > 0.0; }

  friend bool operator==(const UtteranceRecord&, const UtteranceRecord&) = default;
};

enum class ManifestFormat { jsonl, csv };

inline std::optional<ManifestFormat> parse_manifest_format(std::string_view s) {
  if (s == "jsonl" || s == "json") return ManifestFormat::jsonl;
  if (s == "csv") return ManifestFormat::csv;
  return std::nullopt;
}

/// Format implied by the file extension; JSONL unless it ends in ".csv".
inline ManifestFormat manifest_format_for(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? ManifestFormat::csv : ManifestFormat::jsonl;
}

/// A validated, immutable set of utterances. Safe to share across threads.
class Manifest {
 public:
  Manifest(std::vector<UtteranceRecord> records, std::string source_name,
           std::filesystem::path base_dir = {})
      : records_(std::move(records)),
        source_name_(std::move(source_name)),
        base_dir_(std::move(base_dir)) {
    if (records_.empty()) throw InvalidArgument("manifest '" + source_name_ + "' has no records");
    by_id_.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (!by_id_.emplace(records_[i].utterance_id, i).second)
        throw DuplicateId(records_[i].utterance_id);
    }
  }

  const std::vector<UtteranceRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const std::string& source_name() const { return source_name_; }
  const std::filesystem::path& base_dir() const { return base_dir_; }

  const UtteranceRecord* find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &records_[it->second];
  }

  const UtteranceRecord& at(std::string_view id) const {
    if (const auto* r = find(id)) return *r;
    throw InvalidArgument("utterance '" + std::string(id) + "' not in manifest '" + source_name_ + "'");
  }

  /// Relative audio paths resolve against the manifest's directory.
  std::filesystem::path audio_path(const UtteranceRecord& r) const {
    std::filesystem::path p(r.audio_path);
    if (p.is_absolute() || base_dir_.empty()) return p;
    return (base_dir_ / p).lexically_normal();
  }

 private:
  std::vector<UtteranceRecord> records_;
  std::string source_name_;
  std::filesystem::path base_dir_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

namespace detail {

inline constexpr std::string_view kManifestFields[] = {
    "utterance_id", "speaker_id", "audio_path", "duration_s", "gender",  "age_years",
    "language",     "dialect",    "device",     "distance",   "scene",   "transcript"};

inline bool is_known_field(std::string_view key) {
  for (auto f : kManifestFields)
    if (f == key) return true;
  return false;
}

inline std::optional<std::string>* optional_string_field(UtteranceRecord& r, std::string_view key) {
  if (key == "language") return &r.language;
  if (key == "dialect") return &r.dialect;
  if (key == "device") return &r.device;
  if (key == "distance") return &r.distance;
  if (key == "scene") return &r.scene;
  if (key == "transcript") return &r.transcript;
  return nullptr;
}

inline double parse_duration(std::size_t row, std::string_view text) {
  const std::string t = util::trim(text);
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw MalformedRow(row, "duration_s '" + t + "' is not a number");
  }
  if (used != t.size()) throw MalformedRow(row, "duration_s '" + t + "' is not a number");
  return v;
}

inline void check_duration(std::size_t row, double d) {
  if (!std::isfinite(d) || d < 0) throw MalformedRow(row, "duration_s must be finite and >= 0");
}

inline int parse_age(std::size_t row, std::string_view text) {
  const std::string t = util::trim(text);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos || t.size() > 4)
    throw MalformedRow(row, "age_years '" + t + "' is not a nonnegative integer");
  return std::stoi(t);
}

inline UtteranceRecord record_from_json(std::size_t row, const nlohmann::json& j) {
  if (!j.is_object()) throw MalformedRow(row, "expected a JSON object");
  UtteranceRecord r;
  auto required_string = [&](const char* key) -> std::string {
    if (!j.contains(key) || j[key].is_null()) throw MissingField(row, key);
    if (!j[key].is_string()) throw MalformedRow(row, std::string(key) + " must be a string");
    std::string v = j[key].get<std::string>();
    if (v.empty()) throw MissingField(row, key);
    return v;
  };
  r.utterance_id = required_string("utterance_id");
  r.speaker_id = required_string("speaker_id");
  r.audio_path = required_string("audio_path");
  if (!j.contains("duration_s") || j["duration_s"].is_null()) throw MissingField(row, "duration_s");
  if (j["duration_s"].is_number()) {
    r.duration_s = j["duration_s"].get<double>();
  } else if (j["duration_s"].is_string()) {
    r.duration_s = parse_duration(row, j["duration_s"].get<std::string>());
  } else {
    throw MalformedRow(row, "duration_s must be a number");
  }
  check_duration(row, r.duration_s);

  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const auto& v = it.value();
    if (key == "utterance_id" || key == "speaker_id" || key == "audio_path" || key == "duration_s")
      continue;
    if (!is_known_field(key)) {
      r.extras[key] = v;
      continue;
    }
    if (v.is_null()) continue;
    if (key == "gender") {
      if (!v.is_string()) throw MalformedRow(row, "gender must be a string");
      auto g = parse_gender(v.get<std::string>());
      if (!g) throw MalformedRow(row, "gender '" + v.get<std::string>() + "' not in {male, female, unknown}");
      r.gender = *g;
    } else if (key == "age_years") {
      if (v.is_number_unsigned()) {
        r.age_years = v.get<int>();
      } else if (v.is_number_integer() && v.get<long long>() >= 0) {
        r.age_years = static_cast<int>(v.get<long long>());
      } else if (v.is_string()) {
        if (!util::trim(v.get<std::string>()).empty()) r.age_years = parse_age(row, v.get<std::string>());
      } else {
        throw MalformedRow(row, "age_years must be a nonnegative integer");
      }
    } else if (auto* field = optional_string_field(r, key)) {
      if (!v.is_string()) throw MalformedRow(row, key + " must be a string");
      if (!v.get<std::string>().empty()) *field = v.get<std::string>();
    }
  }
  return r;
}

inline nlohmann::ordered_json record_to_json(const UtteranceRecord& r) {
  nlohmann::ordered_json j;
  j["utterance_id"] = r.utterance_id;
  j["speaker_id"] = r.speaker_id;
  j["audio_path"] = r.audio_path;
  j["duration_s"] = r.duration_s;
  if (r.gender != Gender::unknown) j["gender"] = std::string(to_string(r.gender));
  if (r.age_years) j["age_years"] = *r.age_years;
  const std::pair<const char*, const std::optional<std::string>*> opts[] = {
      {"language", &r.language}, {"dialect", &r.dialect},   {"device", &r.device},
      {"distance", &r.distance}, {"scene", &r.scene},       {"transcript", &r.transcript}};
  for (auto& [key, val] : opts)
    if (*val) j[key] = **val;
  for (auto it = r.extras.begin(); it != r.extras.end(); ++it) j[it.key()] = it.value();
  return j;
}

// RFC 4180 reader: quoted fields may contain separators, quotes ("") and newlines.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    bool blank = row.size() == 1 && row[0].empty();
    if (!blank) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
    } else if (c == '\r') {
      // swallowed; CRLF line endings
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw MalformedRow(rows.size() + 1, "unterminated quoted field");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::vector<UtteranceRecord> records_from_csv(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) return {};
  const auto& header = rows.front();
  std::vector<UtteranceRecord> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::size_t row_no = r;
    const auto& cells = rows[r];
    if (cells.size() != header.size())
      throw MalformedRow(row_no, "expected " + std::to_string(header.size()) + " columns, got " +
                                     std::to_string(cells.size()));
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (cells[c].empty()) continue;
      j[util::trim(header[c])] = cells[c];
    }
    out.push_back(record_from_json(row_no, j));
  }
  return out;
}

}  // namespace detail

inline Manifest parse_manifest(std::string_view text, ManifestFormat format, std::string source_name,
                               std::filesystem::path base_dir = {}) {
  std::vector<UtteranceRecord> records;
  if (format == ManifestFormat::csv) {
    records = detail::records_from_csv(text);
  } else {
    std::size_t row = 0;
    for (auto& [line_no, line] : util::nonblank_lines(text)) {
      (void)line_no;
      ++row;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) throw MalformedRow(row, "invalid JSON");
      records.push_back(detail::record_from_json(row, j));
    }
  }
  return Manifest(std::move(records), std::move(source_name), std::move(base_dir));
}

inline Manifest load_manifest(const std::filesystem::path& path, ManifestFormat format) {
  return parse_manifest(util::read_file(path), format, path.stem().string(),
                        path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  return load_manifest(path, manifest_format_for(path));
}

inline std::string serialize_manifest(const Manifest& m, ManifestFormat format) {
  std::string out;
  if (format == ManifestFormat::jsonl) {
    for (const auto& r : m.records()) out += detail::record_to_json(r).dump() + "\n";
    return out;
  }
  std::vector<std::string> columns(std::begin(detail::kManifestFields), std::end(detail::kManifestFields));
  std::map<std::string, int> extra_keys;
  for (const auto& r : m.records())
    for (auto it = r.extras.begin(); it != r.extras.end(); ++it) extra_keys[it.key()] = 0;
  for (auto& [k, _] : extra_keys) columns.push_back(k);
  for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + detail::csv_escape(columns[c]);
  out += "\n";
  for (const auto& r : m.records()) {
    const auto j = detail::record_to_json(r);
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out += ",";
      if (!j.contains(columns[c])) continue;
      const auto& v = j[columns[c]];
      out += detail::csv_escape(v.is_string() ? v.get<std::string>() : v.dump());
    }
    out += "\n";
  }
  return out;
}

inline void write_manifest(const Manifest& m, const std::filesystem::path& path, ManifestFormat format) {
  util::write_file(path, serialize_manifest(m, format));
}

using SpeakerIndex = std::map<std::string, std::vector<UtteranceRecord>>;

/// Buckets records by speaker. Every record lands in exactly one bucket and
/// buckets keep manifest order.
inline SpeakerIndex index_by_speaker(const Manifest& m) {
  SpeakerIndex index;
  for (const auto& r : m.records()) index[r.speaker_id].push_back(r);
  return index;
}

/// Concatenates manifests from several corpora into one. Relative audio
/// paths are rebased so each still resolves after the merge.
inline Manifest merge_manifests(const std::vector<Manifest>& ms) {
  if (ms.empty()) throw InvalidArgument("no manifests to merge");
  if (ms.size() == 1) return ms.front();
  std::vector<UtteranceRecord> records;
  std::string name;
  for (const auto& m : ms) {
    if (!name.empty()) name += "+";
    name += m.source_name();
    for (auto r : m.records()) {
      r.audio_path = m.audio_path(r).string();
      records.push_back(std::move(r));
    }
  }
  return Manifest(std::move(records), std::move(name));
}

}  // namespace svbench
