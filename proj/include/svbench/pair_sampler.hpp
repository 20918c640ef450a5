#pragma once

// Trial-pair construction: dimension-constrained evaluation pairs, rule-based
// hard training pairs, random pairs and text-dependent pairs. Every sampler is
// a pure function of (manifest, spec, seed).
//
// Pair rules per dimension (positive = same speaker, negative = different):
//
//   dimension      eligible records       positive rule          negative rule
//   gender         gender known           any                    same gender
//   language       language set           different language     same language
//   age            age set                |age gap| > min gap    |age gap| <= min gap
//   device         device set             different device       same device
//   dialect        dialect set            any                    same dialect
//   distance       distance set           different distance     same distance
//   duration_lt2   duration in [0, 2)     any                    any
//   duration_2to6  duration in [2, 6]     any                    any
//   duration_gt6   duration in (6, inf)   any                    any
//   scene_same     scene set              same scene             same scene
//   scene_diff     scene set              different scene        different scene
//   random         all                    any                    any
//
// Only records with duration_s > 0 are ever sampled.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "svbench/errors.hpp"
#include "svbench/manifest.hpp"
#include "svbench/provenance.hpp"
#include "svbench/random.hpp"
#include "svbench/util.hpp"

namespace svbench {

enum class Dimension {
  gender,
  language,
  age,
  device,
  dialect,
  distance,
  duration_lt2,
  duration_2to6,
  duration_gt6,
  scene_same,
  scene_diff,
  random,
};

inline constexpr std::array<Dimension, 12> kAllDimensions = {
    Dimension::gender,       Dimension::language,      Dimension::age,
    Dimension::device,       Dimension::dialect,       Dimension::distance,
    Dimension::duration_lt2, Dimension::duration_2to6, Dimension::duration_gt6,
    Dimension::scene_same,   Dimension::scene_diff,    Dimension::random};

inline std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::gender: return "gender";
    case Dimension::language: return "language";
    case Dimension::age: return "age";
    case Dimension::device: return "device";
    case Dimension::dialect: return "dialect";
    case Dimension::distance: return "distance";
    case Dimension::duration_lt2: return "duration_lt2";
    case Dimension::duration_2to6: return "duration_2to6";
    case Dimension::duration_gt6: return "duration_gt6";
    case Dimension::scene_same: return "scene_same";
    case Dimension::scene_diff: return "scene_diff";
    case Dimension::random: return "random";
  }
  return "random";
}

inline std::optional<Dimension> parse_dimension(std::string_view s) {
  for (auto d : kAllDimensions)
    if (to_string(d) == s) return d;
  return std::nullopt;
}

inline bool in_duration_bucket(Dimension d, double seconds) {
  switch (d) {
    case Dimension::duration_lt2: return seconds < 2.0;
    case Dimension::duration_2to6: return seconds >= 2.0 && seconds <= 6.0;
    case Dimension::duration_gt6: return seconds > 6.0;
    default: return true;
  }
}

struct TrialPair {
  std::string enroll;
  std::string test;
  bool label_same_speaker = false;
  Dimension dimension = Dimension::random;
  std::optional<bool> label_content_match;
  std::optional<std::string> target_text;

  friend bool operator==(const TrialPair&, const TrialPair&) = default;
};

struct SamplingSpec {
  Dimension dimension = Dimension::random;
  std::size_t n_pairs = 0;
  std::uint64_t seed = 0;
  int age_gap_min_years = 10;
  bool allow_replacement = false;
  /// Candidate spaces whose size bound is at most this are enumerated and
  /// sampled exactly; larger ones fall back to rejection sampling.
  std::uint64_t enumeration_cap = 10'000'000;
};

namespace detail {

inline bool has_attribute(Dimension d, const UtteranceRecord& r) {
  switch (d) {
    case Dimension::gender: return r.gender != Gender::unknown;
    case Dimension::language: return r.language.has_value();
    case Dimension::age: return r.age_years.has_value();
    case Dimension::device: return r.device.has_value();
    case Dimension::dialect: return r.dialect.has_value();
    case Dimension::distance: return r.distance.has_value();
    case Dimension::scene_same:
    case Dimension::scene_diff: return r.scene.has_value();
    default: return true;
  }
}

inline bool eligible_for(Dimension d, const UtteranceRecord& r) {
  return r.eligible() && has_attribute(d, r) && in_duration_bucket(d, r.duration_s);
}

/// Rule check for two records already known to be eligible for d.
inline bool rule_holds(Dimension d, const UtteranceRecord& a, const UtteranceRecord& b, bool same_speaker,
                       int age_gap) {
  switch (d) {
    case Dimension::gender: return same_speaker || a.gender == b.gender;
    case Dimension::language: return same_speaker ? a.language != b.language : a.language == b.language;
    case Dimension::age: {
      const int gap = std::abs(*a.age_years - *b.age_years);
      return same_speaker ? gap > age_gap : gap <= age_gap;
    }
    case Dimension::device: return same_speaker ? a.device != b.device : a.device == b.device;
    case Dimension::dialect: return same_speaker || a.dialect == b.dialect;
    case Dimension::distance: return same_speaker ? a.distance != b.distance : a.distance == b.distance;
    case Dimension::scene_same: return a.scene == b.scene;
    case Dimension::scene_diff: return a.scene != b.scene;
    default: return true;
  }
}

inline std::string_view required_attribute(Dimension d) {
  switch (d) {
    case Dimension::gender: return "gender";
    case Dimension::language: return "language";
    case Dimension::age: return "age_years";
    case Dimension::device: return "device";
    case Dimension::dialect: return "dialect";
    case Dimension::distance: return "distance";
    case Dimension::scene_same:
    case Dimension::scene_diff: return "scene";
    default: return "";
  }
}

struct IndexPair {
  std::uint32_t a;
  std::uint32_t b;
};

/// Candidate pool over a fixed list of eligible records sorted by utterance_id.
class PairPool {
 public:
  using Rule = std::function<bool(const UtteranceRecord&, const UtteranceRecord&, bool)>;

  PairPool(std::vector<const UtteranceRecord*> records, Rule rule)
      : records_(std::move(records)), rule_(std::move(rule)) {
    std::sort(records_.begin(), records_.end(),
              [](const auto* x, const auto* y) { return x->utterance_id < y->utterance_id; });
    std::map<std::string_view, std::uint32_t> speaker_ids;
    speaker_.reserve(records_.size());
    for (const auto* r : records_) {
      auto [it, _] = speaker_ids.emplace(r->speaker_id, static_cast<std::uint32_t>(speaker_ids.size()));
      speaker_.push_back(it->second);
    }
    groups_.resize(speaker_ids.size());
    for (std::uint32_t i = 0; i < records_.size(); ++i) groups_[speaker_[i]].push_back(i);
    for (const auto& g : groups_) {
      const std::uint64_t s = g.size();
      same_bound_ += s * (s - (s > 0 ? 1 : 0)) / 2;
      if (s >= 2) multi_.insert(multi_.end(), g.begin(), g.end());
    }
    std::sort(multi_.begin(), multi_.end());
    const std::uint64_t n = records_.size();
    cross_bound_ = n * (n - (n > 0 ? 1 : 0)) / 2 - same_bound_;
  }

  const std::vector<const UtteranceRecord*>& records() const { return records_; }
  std::size_t speaker_count() const { return groups_.size(); }

  /// Draws k distinct (or, with replacement, independent) unordered pairs of
  /// the requested class, each oriented by a coin flip.
  std::vector<IndexPair> draw(bool same_speaker, std::size_t k, const SamplingSpec& spec, Rng& rng,
                              std::string_view label) const {
    if (k == 0) return {};
    const std::uint64_t bound = same_speaker ? same_bound_ : cross_bound_;
    std::vector<IndexPair> chosen;
    if (bound <= spec.enumeration_cap) {
      std::vector<IndexPair> cands = enumerate(same_speaker);
      if (cands.empty() || (!spec.allow_replacement && cands.size() < k))
        throw InsufficientCandidates(std::string(label), k, cands.size());
      if (spec.allow_replacement) {
        chosen.reserve(k);
        for (std::size_t i = 0; i < k; ++i) chosen.push_back(cands[rng.below(cands.size())]);
      } else {
        rng.sample_prefix(cands, k);
        chosen = std::move(cands);
      }
    } else {
      chosen = reject(same_speaker, k, spec, rng, label);
    }
    for (auto& p : chosen)
      if (rng.coin()) std::swap(p.a, p.b);
    return chosen;
  }

 private:
  bool accept(std::uint32_t i, std::uint32_t j, bool same_speaker) const {
    if ((speaker_[i] == speaker_[j]) != same_speaker) return false;
    return rule_(*records_[i], *records_[j], same_speaker);
  }

  std::vector<IndexPair> enumerate(bool same_speaker) const {
    std::vector<IndexPair> out;
    if (same_speaker) {
      for (const auto& g : groups_)
        for (std::size_t x = 0; x < g.size(); ++x)
          for (std::size_t y = x + 1; y < g.size(); ++y)
            if (accept(g[x], g[y], true)) out.push_back({g[x], g[y]});
      std::sort(out.begin(), out.end(),
                [](const IndexPair& p, const IndexPair& q) { return p.a != q.a ? p.a < q.a : p.b < q.b; });
    } else {
      const auto n = static_cast<std::uint32_t>(records_.size());
      for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = i + 1; j < n; ++j)
          if (accept(i, j, false)) out.push_back({i, j});
    }
    return out;
  }

  std::vector<IndexPair> reject(bool same_speaker, std::size_t k, const SamplingSpec& spec, Rng& rng,
                                std::string_view label) const {
    std::vector<IndexPair> out;
    out.reserve(k);
    std::unordered_set<std::uint64_t> seen;
    const std::uint64_t budget = 100ULL * k;
    const std::size_t n = records_.size();
    for (std::uint64_t attempt = 0; attempt < budget && out.size() < k; ++attempt) {
      std::uint32_t i;
      std::uint32_t j;
      if (same_speaker) {
        if (multi_.empty()) break;
        i = multi_[rng.below(multi_.size())];
        const auto& g = groups_[speaker_[i]];
        j = g[rng.below(g.size())];
        if (i == j) continue;
      } else {
        if (n < 2) break;
        i = static_cast<std::uint32_t>(rng.below(n));
        j = static_cast<std::uint32_t>(rng.below(n));
        if (i == j) continue;
      }
      if (i > j) std::swap(i, j);
      if (!accept(i, j, same_speaker)) continue;
      if (!spec.allow_replacement && !seen.insert((std::uint64_t{i} << 32) | j).second) continue;
      out.push_back({i, j});
    }
    if (out.size() < k) throw InsufficientCandidates(std::string(label), k, out.size());
    return out;
  }

  std::vector<const UtteranceRecord*> records_;
  Rule rule_;
  std::vector<std::uint32_t> speaker_;
  std::vector<std::vector<std::uint32_t>> groups_;
  std::vector<std::uint32_t> multi_;  // records whose speaker has >= 2 eligible records
  std::uint64_t same_bound_ = 0;
  std::uint64_t cross_bound_ = 0;
};

inline void check_even(std::size_t n, std::size_t divisor, std::string_view what) {
  if (n == 0 || n % divisor != 0)
    throw InvalidArgument(std::string(what) + ": pair count " + std::to_string(n) + " must be a positive multiple of " +
                          std::to_string(divisor));
}

inline TrialPair make_pair(const PairPool& pool, IndexPair p, bool same, Dimension d) {
  TrialPair t;
  t.enroll = pool.records()[p.a]->utterance_id;
  t.test = pool.records()[p.b]->utterance_id;
  t.label_same_speaker = same;
  t.dimension = d;
  return t;
}

}  // namespace detail

/// Evaluation pairs for one dimension: n_pairs/2 positives and n_pairs/2
/// negatives, each satisfying the dimension's rule, in seeded order.
inline std::vector<TrialPair> sample_eval_pairs(const Manifest& m, const SamplingSpec& spec) {
  const Dimension d = spec.dimension;
  detail::check_even(spec.n_pairs, 2, to_string(d));
  if (spec.age_gap_min_years <= 0) throw InvalidArgument("age_gap_min_years must be positive");

  const auto& records = m.records();
  if (d != Dimension::random &&
      std::none_of(records.begin(), records.end(), [d](const auto& r) { return detail::has_attribute(d, r); }))
    throw MissingAttribute(std::string(to_string(d)) + " (" + std::string(detail::required_attribute(d)) + ")");

  std::vector<const UtteranceRecord*> eligible;
  for (const auto& r : records)
    if (detail::eligible_for(d, r)) eligible.push_back(&r);

  const int gap = spec.age_gap_min_years;
  detail::PairPool pool(std::move(eligible), [d, gap](const auto& a, const auto& b, bool same) {
    return detail::rule_holds(d, a, b, same, gap);
  });

  Rng rng(spec.seed);
  const std::size_t half = spec.n_pairs / 2;
  std::vector<TrialPair> out;
  out.reserve(spec.n_pairs);
  for (auto p : pool.draw(true, half, spec, rng, to_string(d))) out.push_back(detail::make_pair(pool, p, true, d));
  for (auto p : pool.draw(false, half, spec, rng, to_string(d))) out.push_back(detail::make_pair(pool, p, false, d));
  rng.shuffle(out);
  return out;
}

/// Uniform same-speaker and cross-speaker pairs with no attribute constraints.
inline std::vector<TrialPair> sample_random_pairs(const Manifest& m, std::size_t n, std::uint64_t seed) {
  SamplingSpec spec;
  spec.dimension = Dimension::random;
  spec.n_pairs = n;
  spec.seed = seed;
  return sample_eval_pairs(m, spec);
}

struct HardSamplingOptions {
  int age_gap_min_years = 10;
  std::uint64_t enumeration_cap = 10'000'000;
};

/// Splits `units` across weighted dimensions by largest remainder; ties break
/// toward the earlier dimension.
inline std::map<Dimension, std::size_t> allocate_by_weight(const std::map<Dimension, double>& mix,
                                                           std::size_t units) {
  double total = 0;
  for (auto& [d, w] : mix) {
    if (!std::isfinite(w) || w < 0) throw InvalidArgument("weight for '" + std::string(to_string(d)) + "' must be >= 0");
    total += w;
  }
  if (!(total > 0)) throw InvalidArgument("dimension weights must sum to a positive value");
  std::map<Dimension, std::size_t> alloc;
  std::vector<std::pair<double, Dimension>> remainders;
  std::size_t assigned = 0;
  for (auto& [d, w] : mix) {
    if (w == 0) continue;
    const double quota = static_cast<double>(units) * w / total;
    const auto whole = static_cast<std::size_t>(std::floor(quota));
    alloc[d] = whole;
    assigned += whole;
    remainders.emplace_back(quota - static_cast<double>(whole), d);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  for (std::size_t i = 0; assigned < units && i < remainders.size(); ++i, ++assigned) ++alloc[remainders[i].second];
  return alloc;
}

/// Rule-based hard training pairs drawn across dimensions in proportion to
/// `mix`. Each dimension block is balanced, so the whole output is too.
inline std::vector<TrialPair> sample_hard_training_pairs(const std::vector<Manifest>& ms,
                                                         const std::map<Dimension, double>& mix,
                                                         std::size_t n_total, std::uint64_t seed,
                                                         const HardSamplingOptions& opts = {}) {
  detail::check_even(n_total, 2, "hard sampling");
  const Manifest merged = merge_manifests(ms);
  const auto alloc = allocate_by_weight(mix, n_total / 2);
  std::vector<TrialPair> out;
  out.reserve(n_total);
  std::size_t blocks = 0;
  for (auto& [d, units] : alloc) {
    if (units == 0) continue;
    SamplingSpec spec;
    spec.dimension = d;
    spec.n_pairs = 2 * units;
    spec.seed = seed;
    spec.age_gap_min_years = opts.age_gap_min_years;
    spec.enumeration_cap = opts.enumeration_cap;
    auto block = sample_eval_pairs(merged, spec);
    out.insert(out.end(), block.begin(), block.end());
    ++blocks;
  }
  if (blocks > 1) {
    Rng rng(derive_seed(seed, 0x6d6978));
    rng.shuffle(out);
  }
  return out;
}

enum class TdGrid {
  uniform,   // n/4 pairs in each (speaker, content) cell
  marginal,  // n/2 per speaker label and n/2 per content label, cells free
};

inline std::optional<TdGrid> parse_td_grid(std::string_view s) {
  if (s == "uniform") return TdGrid::uniform;
  if (s == "marginal") return TdGrid::marginal;
  return std::nullopt;
}

/// Text-dependent pairs. Content-positive pairs target the test utterance's
/// own transcript; content-negative pairs target a different transcript string.
inline std::vector<TrialPair> build_td_pairs(const Manifest& m, std::size_t n, std::uint64_t seed,
                                             TdGrid grid = TdGrid::uniform, std::uint64_t enumeration_cap = 10'000'000) {
  detail::check_even(n, grid == TdGrid::uniform ? 4 : 2, "text-dependent pairs");
  std::vector<const UtteranceRecord*> eligible;
  for (const auto& r : m.records())
    if (r.eligible() && r.transcript) eligible.push_back(&r);
  if (std::none_of(m.records().begin(), m.records().end(), [](const auto& r) { return r.transcript.has_value(); }))
    throw MissingAttribute("transcript");

  std::vector<std::string> texts;
  for (const auto* r : eligible) texts.push_back(*r->transcript);
  std::sort(texts.begin(), texts.end());
  texts.erase(std::unique(texts.begin(), texts.end()), texts.end());
  if (texts.size() < 2) throw InsufficientCandidates("td content", n / 2, 0);

  detail::PairPool pool(std::move(eligible), [](const auto&, const auto&, bool) { return true; });
  SamplingSpec spec;
  spec.dimension = Dimension::random;
  spec.n_pairs = n;
  spec.seed = seed;
  spec.enumeration_cap = enumeration_cap;

  Rng rng(seed);
  std::vector<TrialPair> pos;
  std::vector<TrialPair> neg;
  for (auto p : pool.draw(true, n / 2, spec, rng, "td"))
    pos.push_back(detail::make_pair(pool, p, true, Dimension::random));
  for (auto p : pool.draw(false, n / 2, spec, rng, "td"))
    neg.push_back(detail::make_pair(pool, p, false, Dimension::random));

  auto assign_content = [&](TrialPair& t, bool match) {
    const std::string& own = *m.at(t.test).transcript;
    t.label_content_match = match;
    if (match) {
      t.target_text = own;
      return;
    }
    const auto own_pos = static_cast<std::size_t>(std::lower_bound(texts.begin(), texts.end(), own) - texts.begin());
    auto r = static_cast<std::size_t>(rng.below(texts.size() - 1));
    if (r >= own_pos) ++r;
    t.target_text = texts[r];
  };

  std::vector<TrialPair> out;
  out.reserve(n);
  if (grid == TdGrid::uniform) {
    for (auto* group : {&pos, &neg}) {
      rng.shuffle(*group);
      for (std::size_t i = 0; i < group->size(); ++i) assign_content((*group)[i], i < group->size() / 2);
      out.insert(out.end(), group->begin(), group->end());
    }
  } else {
    out = std::move(pos);
    out.insert(out.end(), neg.begin(), neg.end());
    rng.shuffle(out);
    for (std::size_t i = 0; i < out.size(); ++i) assign_content(out[i], i < out.size() / 2);
  }
  rng.shuffle(out);
  return out;
}

// ------------------------------------------------------------------ pairs file

inline nlohmann::ordered_json pair_to_json(const TrialPair& p) {
  nlohmann::ordered_json j;
  j["enroll"] = p.enroll;
  j["test"] = p.test;
  j["label_same_speaker"] = p.label_same_speaker;
  j["dimension"] = std::string(to_string(p.dimension));
  if (p.label_content_match) j["label_content_match"] = *p.label_content_match;
  if (p.target_text) j["target_text"] = *p.target_text;
  return j;
}

inline TrialPair pair_from_json(const nlohmann::json& j, std::size_t line) {
  auto fail = [line](const std::string& what) {
    return IoError("pairs line " + std::to_string(line) + ": " + what);
  };
  if (!j.is_object()) throw fail("expected an object");
  TrialPair p;
  if (!j.contains("enroll") || !j["enroll"].is_string()) throw fail("missing enroll");
  if (!j.contains("test") || !j["test"].is_string()) throw fail("missing test");
  if (!j.contains("label_same_speaker") || !j["label_same_speaker"].is_boolean()) throw fail("missing label_same_speaker");
  p.enroll = j["enroll"].get<std::string>();
  p.test = j["test"].get<std::string>();
  p.label_same_speaker = j["label_same_speaker"].get<bool>();
  const auto dim = j.contains("dimension") && j["dimension"].is_string()
                       ? parse_dimension(j["dimension"].get<std::string>())
                       : std::optional<Dimension>(Dimension::random);
  if (!dim) throw fail("unknown dimension");
  p.dimension = *dim;
  if (j.contains("label_content_match") && j["label_content_match"].is_boolean())
    p.label_content_match = j["label_content_match"].get<bool>();
  if (j.contains("target_text") && j["target_text"].is_string()) p.target_text = j["target_text"].get<std::string>();
  return p;
}

struct PairsFile {
  std::optional<Provenance> meta;
  std::vector<TrialPair> pairs;
};

inline std::string serialize_pairs(const std::vector<TrialPair>& pairs, const Provenance& meta) {
  std::string out = meta.line();
  for (const auto& p : pairs) out += pair_to_json(p).dump() + "\n";
  return out;
}

inline void write_pairs(const std::filesystem::path& path, const std::vector<TrialPair>& pairs, const Provenance& meta) {
  util::write_file(path, serialize_pairs(pairs, meta));
}

inline PairsFile read_pairs(const std::filesystem::path& path) {
  auto lines = parse_json_lines(util::read_file(path), "pairs");
  PairsFile out{lines.meta, {}};
  out.pairs.reserve(lines.rows.size());
  for (auto& [line, j] : lines.rows) out.pairs.push_back(pair_from_json(j, line));
  return out;
}

}  // namespace svbench
