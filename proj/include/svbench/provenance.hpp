#pragma once

// Every line-delimited output starts with a metadata record:
//   {"_meta":{"config_hash":"...","seed":7,"tool":"sv-bench","version":"..."}}
// Readers skip it transparently.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "svbench/util.hpp"

namespace svbench {

using json = nlohmann::json;

struct Provenance {
  std::optional<std::uint64_t> seed;
  std::string config_hash;

  /// Hash over the canonical (key-sorted) serialization of a stage config.
  static Provenance of(const json& config, std::optional<std::uint64_t> seed) {
    return Provenance{seed, util::fnv1a_hex(config.dump())};
  }

  json to_json() const {
    json meta = {{"tool", std::string(kToolName)},
                 {"version", std::string(kToolVersion)},
                 {"config_hash", config_hash}};
    meta["seed"] = seed ? json(*seed) : json(nullptr);
    return json{{"_meta", meta}};
  }

  std::string line() const { return to_json().dump() + "\n"; }

  static std::optional<Provenance> from_json(const json& j) {
    if (!j.is_object() || !j.contains("_meta")) return std::nullopt;
    const json& m = j["_meta"];
    Provenance p;
    if (m.contains("seed") && m["seed"].is_number_unsigned()) p.seed = m["seed"].get<std::uint64_t>();
    if (m.contains("config_hash") && m["config_hash"].is_string())
      p.config_hash = m["config_hash"].get<std::string>();
    return p;
  }
};

/// A parsed line-delimited JSON file: optional leading metadata plus records
/// tagged with their 1-based line numbers.
struct JsonLines {
  std::optional<Provenance> meta;
  std::vector<std::pair<std::size_t, json>> rows;
};

inline JsonLines parse_json_lines(std::string_view text, std::string_view what) {
  JsonLines out;
  bool first = true;
  for (auto& [line_no, line] : util::nonblank_lines(text)) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw IoError(std::string(what) + " line " + std::to_string(line_no) + ": invalid JSON");
    if (first) {
      first = false;
      if (auto p = Provenance::from_json(j)) {
        out.meta = std::move(p);
        continue;
      }
    }
    out.rows.emplace_back(line_no, std::move(j));
  }
  return out;
}

}  // namespace svbench
