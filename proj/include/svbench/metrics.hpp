#pragma once

// Accuracy, text-dependent joint metrics, EER, and report rendering.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "svbench/errors.hpp"
#include "svbench/pair_sampler.hpp"
#include "svbench/response_parser.hpp"
#include "svbench/util.hpp"

namespace svbench {

enum class InvalidPolicy { invalid_as_wrong, exclude_invalid };

inline std::string_view to_string(InvalidPolicy p) {
  return p == InvalidPolicy::invalid_as_wrong ? "invalid_as_wrong" : "exclude_invalid";
}

inline std::optional<InvalidPolicy> parse_policy(std::string_view s) {
  if (s == "invalid_as_wrong") return InvalidPolicy::invalid_as_wrong;
  if (s == "exclude_invalid") return InvalidPolicy::exclude_invalid;
  return std::nullopt;
}

struct Confusion {
  std::size_t tp = 0;  // same speaker, predicted same
  std::size_t tn = 0;  // different speakers, predicted different
  std::size_t fp = 0;  // different speakers, predicted same
  std::size_t fn = 0;  // same speaker, predicted different

  std::size_t total() const { return tp + tn + fp + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct DimensionStats {
  std::size_t n = 0;
  Confusion confusion;
  std::size_t invalid_count = 0;

  std::size_t correct() const { return confusion.tp + confusion.tn; }
  /// Trials that enter the accuracy denominator under the report's policy.
  std::size_t scored() const { return confusion.total(); }
  double accuracy() const {
    return scored() == 0 ? std::numeric_limits<double>::quiet_NaN()
                         : static_cast<double>(correct()) / static_cast<double>(scored());
  }
};

struct TdStats {
  std::size_t n = 0;
  std::size_t speaker_correct = 0;
  std::size_t content_correct = 0;
  std::size_t joint_correct = 0;

  double spk_acc() const { return ratio(speaker_correct); }
  double txt_acc() const { return ratio(content_correct); }
  double joint_acc() const { return ratio(joint_correct); }

 private:
  double ratio(std::size_t k) const {
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(k) / static_cast<double>(n);
  }
};

struct EvaluationReport {
  std::map<Dimension, DimensionStats> per_dimension;
  std::optional<TdStats> td;
  InvalidPolicy policy = InvalidPolicy::invalid_as_wrong;
  std::map<std::string, std::string> metadata;
};

namespace detail {

/// Pairs each trial with its prediction by (enroll, test); repeated keys match
/// in order of appearance.
inline std::vector<const Prediction*> align(const std::vector<Prediction>& predictions,
                                            const std::vector<TrialPair>& pairs) {
  std::map<std::pair<std::string_view, std::string_view>, std::deque<const Prediction*>> by_ref;
  for (const auto& p : predictions) by_ref[{p.enroll, p.test}].push_back(&p);
  std::vector<const Prediction*> out;
  out.reserve(pairs.size());
  for (const auto& t : pairs) {
    auto it = by_ref.find({t.enroll, t.test});
    if (it == by_ref.end() || it->second.empty())
      throw AlignmentError("no prediction for pair (" + t.enroll + ", " + t.test + ")");
    out.push_back(it->second.front());
    it->second.pop_front();
  }
  for (const auto& [key, rest] : by_ref)
    if (!rest.empty())
      throw AlignmentError("prediction for (" + std::string(key.first) + ", " + std::string(key.second) +
                           ") has no matching pair");
  return out;
}

}  // namespace detail

inline EvaluationReport accuracy(const std::vector<Prediction>& predictions, const std::vector<TrialPair>& pairs,
                                 InvalidPolicy policy = InvalidPolicy::invalid_as_wrong) {
  const auto aligned = detail::align(predictions, pairs);
  EvaluationReport report;
  report.policy = policy;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& t = pairs[i];
    auto& s = report.per_dimension[t.dimension];
    ++s.n;
    auto verdict = aligned[i]->same_speaker;
    if (verdict == SpeakerVerdict::invalid) {
      ++s.invalid_count;
      if (policy == InvalidPolicy::exclude_invalid) continue;
      verdict = t.label_same_speaker ? SpeakerVerdict::different : SpeakerVerdict::same;
    }
    const bool said_same = verdict == SpeakerVerdict::same;
    if (t.label_same_speaker) {
      ++(said_same ? s.confusion.tp : s.confusion.fn);
    } else {
      ++(said_same ? s.confusion.fp : s.confusion.tn);
    }
  }
  return report;
}

/// Speaker, content and joint (both correct) accuracy. Invalid fields count as wrong.
inline TdStats td_metrics(const std::vector<Prediction>& predictions, const std::vector<TrialPair>& pairs) {
  const auto aligned = detail::align(predictions, pairs);
  TdStats s;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& t = pairs[i];
    if (!t.label_content_match)
      throw InvalidArgument("pair (" + t.enroll + ", " + t.test + ") has no content label");
    const auto& p = *aligned[i];
    const bool spk_ok = p.same_speaker == (t.label_same_speaker ? SpeakerVerdict::same : SpeakerVerdict::different);
    const bool txt_ok = p.content_match == (*t.label_content_match ? ContentVerdict::yes : ContentVerdict::no);
    ++s.n;
    s.speaker_correct += spk_ok;
    s.content_correct += txt_ok;
    s.joint_correct += spk_ok && txt_ok;
  }
  return s;
}

struct ScoredTrial {
  double score = 0.0;
  bool target = false;  // same speaker
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// Equal error rate for "accept when score >= threshold".
///
/// Candidate thresholds are the lowest score (everything accepted), the
/// midpoints between consecutive distinct scores, and a value just above the
/// highest score (everything rejected). FAR falls and FRR rises along that
/// sequence; the EER is where they cross, interpolating linearly in
/// (threshold, FAR, FRR) between the two candidates that bracket the crossing.
inline EerResult eer(std::vector<ScoredTrial> trials) {
  std::size_t n_target = 0;
  for (const auto& t : trials) {
    if (!std::isfinite(t.score)) throw InvalidArgument("scores must be finite");
    n_target += t.target;
  }
  const std::size_t n_nontarget = trials.size() - n_target;
  if (n_target == 0 || n_nontarget == 0) throw DegenerateLabels();
  std::sort(trials.begin(), trials.end(), [](const auto& a, const auto& b) { return a.score < b.score; });

  std::vector<double> levels;
  std::vector<std::size_t> targets_at;
  std::vector<std::size_t> nontargets_at;
  for (const auto& t : trials) {
    if (levels.empty() || t.score != levels.back()) {
      levels.push_back(t.score);
      targets_at.push_back(0);
      nontargets_at.push_back(0);
    }
    ++(t.target ? targets_at.back() : nontargets_at.back());
  }

  const std::size_t m = levels.size();
  auto threshold_at = [&](std::size_t k) {
    if (k == 0) return levels.front();
    if (k == m) return std::nextafter(levels.back(), std::numeric_limits<double>::infinity());
    return 0.5 * levels[k - 1] + 0.5 * levels[k];
  };

  const double P = static_cast<double>(n_target);
  const double N = static_cast<double>(n_nontarget);
  std::size_t rejected_target = 0;  // trials strictly below the candidate threshold
  std::size_t rejected_nontarget = 0;
  double prev_far = 1.0;
  double prev_frr = 0.0;
  double prev_t = levels.front();
  for (std::size_t k = 0; k <= m; ++k) {
    if (k > 0) {
      rejected_target += targets_at[k - 1];
      rejected_nontarget += nontargets_at[k - 1];
    }
    const double t = threshold_at(k);
    const double far = static_cast<double>(n_nontarget - rejected_nontarget) / N;
    const double frr = static_cast<double>(rejected_target) / P;
    const double d = far - frr;
    if (d == 0) return {far, t};
    if (d < 0) {
      const double d_prev = prev_far - prev_frr;
      const double alpha = d_prev / (d_prev - d);
      return {prev_far + alpha * (far - prev_far), prev_t + alpha * (t - prev_t)};
    }
    prev_far = far;
    prev_frr = frr;
    prev_t = t;
  }
  return {0.0, prev_t};  // not reached: the last candidate has FAR 0 and FRR 1
}

// ------------------------------------------------------------------ rendering

inline constexpr std::array<std::pair<Dimension, std::string_view>, 11> kReportColumns = {{
    {Dimension::gender, "Gender"},
    {Dimension::language, "Lang"},
    {Dimension::age, "Age"},
    {Dimension::device, "Device"},
    {Dimension::dialect, "Dialect"},
    {Dimension::distance, "Distance"},
    {Dimension::duration_lt2, "Dur. <2s"},
    {Dimension::duration_2to6, "Dur. 2-6s"},
    {Dimension::duration_gt6, "Dur. >6s"},
    {Dimension::scene_same, "Same Scene"},
    {Dimension::scene_diff, "Different Scene"},
}};

enum class ReportFormat { tsv, markdown };

inline std::optional<ReportFormat> parse_report_format(std::string_view s) {
  if (s == "tsv") return ReportFormat::tsv;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  return std::nullopt;
}

inline constexpr std::string_view kEmptyCell = "\xE2\x80\x94";  // em dash

inline std::string render_report(const EvaluationReport& r, ReportFormat format) {
  std::vector<std::pair<Dimension, std::string_view>> columns(kReportColumns.begin(), kReportColumns.end());
  if (r.per_dimension.count(Dimension::random)) columns.emplace_back(Dimension::random, "Random");

  const bool md = format == ReportFormat::markdown;
  auto row = [&](std::string_view label, auto&& cell) {
    std::string line = md ? "| " + std::string(label) : std::string(label);
    for (auto& [d, _] : columns) {
      line += md ? " | " : "\t";
      auto it = r.per_dimension.find(d);
      line += it == r.per_dimension.end() || it->second.n == 0 ? std::string(kEmptyCell) : cell(it->second);
    }
    return line + (md ? " |\n" : "\n");
  };

  std::string out;
  for (auto& [k, v] : r.metadata) out += md ? "<!-- " + k + ": " + v + " -->\n" : "# " + k + "\t" + v + "\n";

  std::string header = md ? "| Metric" : "Metric";
  for (auto& [_, name] : columns) header += (md ? " | " : "\t") + std::string(name);
  out += header + (md ? " |\n" : "\n");
  if (md) {
    out += "|---";
    for (std::size_t c = 0; c < columns.size(); ++c) out += "|---:";
    out += "|\n";
  }
  out += row("Accuracy (%)", [](const DimensionStats& s) {
    return s.scored() == 0 ? std::string(kEmptyCell) : util::percent_2dp(s.correct(), s.scored());
  });
  out += row("Invalid (%)", [](const DimensionStats& s) { return util::percent_2dp(s.invalid_count, s.n); });
  out += row("Pairs", [](const DimensionStats& s) { return std::to_string(s.n); });

  if (r.td) {
    const auto& td = *r.td;
    auto cell = [&](std::size_t k) { return td.n == 0 ? std::string(kEmptyCell) : util::percent_2dp(k, td.n); };
    out += "\n";
    if (md) {
      out += "| Spk Acc (%) | Txt Acc (%) | Acc (%) | Pairs |\n|---:|---:|---:|---:|\n";
      out += "| " + cell(td.speaker_correct) + " | " + cell(td.content_correct) + " | " + cell(td.joint_correct) +
             " | " + std::to_string(td.n) + " |\n";
    } else {
      out += "Spk Acc (%)\tTxt Acc (%)\tAcc (%)\tPairs\n";
      out += cell(td.speaker_correct) + "\t" + cell(td.content_correct) + "\t" + cell(td.joint_correct) + "\t" +
             std::to_string(td.n) + "\n";
    }
  }
  return out;
}

inline nlohmann::ordered_json report_to_json(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["policy"] = std::string(to_string(r.policy));
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  for (auto& [k, v] : r.metadata) meta[k] = v;
  j["metadata"] = meta;
  nlohmann::ordered_json dims = nlohmann::ordered_json::object();
  for (auto& [d, s] : r.per_dimension) {
    nlohmann::ordered_json e;
    e["n"] = s.n;
    e["accuracy"] = s.scored() == 0 ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(s.accuracy());
    e["confusion"] = {{"tp", s.confusion.tp}, {"tn", s.confusion.tn}, {"fp", s.confusion.fp}, {"fn", s.confusion.fn}};
    e["invalid_count"] = s.invalid_count;
    dims[std::string(to_string(d))] = e;
  }
  j["per_dimension"] = dims;
  if (r.td) {
    j["td"] = {{"n", r.td->n},
               {"spk_acc", r.td->spk_acc()},
               {"txt_acc", r.td->txt_acc()},
               {"joint_acc", r.td->joint_acc()}};
  }
  return j;
}

}  // namespace svbench
