#pragma once

// Stage functions shared by the CLI subcommands, and run_pipeline(), which
// chains them: pairs -> assemble -> dataset -> infer -> parse -> report.
//
// Each stage reads and writes files only, so any stage can be rerun on its
// own. Every output carries a provenance record (tool version, seed, config
// hash).

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "svbench/audio.hpp"
#include "svbench/errors.hpp"
#include "svbench/inference.hpp"
#include "svbench/manifest.hpp"
#include "svbench/metrics.hpp"
#include "svbench/pair_sampler.hpp"
#include "svbench/prompt_dataset.hpp"
#include "svbench/provenance.hpp"
#include "svbench/response_parser.hpp"
#include "svbench/util.hpp"

namespace svbench {

namespace fs = std::filesystem;

/// Worker count, overridden by SV_BENCH_WORKERS when set to a positive integer.
inline std::size_t resolve_workers(std::size_t requested) {
  if (const char* env = std::getenv("SV_BENCH_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return requested == 0 ? 1 : requested;
}

// ------------------------------------------------------------------ pairs

enum class PairMode { eval, hard, random, td };

inline std::string_view to_string(PairMode m) {
  switch (m) {
    case PairMode::eval: return "eval";
    case PairMode::hard: return "hard";
    case PairMode::random: return "random";
    case PairMode::td: return "td";
  }
  return "eval";
}

inline std::optional<PairMode> parse_pair_mode(std::string_view s) {
  for (auto m : {PairMode::eval, PairMode::hard, PairMode::random, PairMode::td})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

struct PairsStage {
  std::vector<fs::path> manifests;
  PairMode mode = PairMode::eval;
  /// eval: pair count per dimension; hard: relative weight per dimension.
  std::map<Dimension, double> dimensions;
  /// Total for hard, random and td modes.
  std::size_t n_pairs = 0;
  std::uint64_t seed = 0;
  int age_gap_min_years = 10;
  bool allow_replacement = false;
  TdGrid td_grid = TdGrid::uniform;
  std::uint64_t enumeration_cap = 10'000'000;

  nlohmann::json describe() const {
    nlohmann::json dims = nlohmann::json::object();
    for (auto& [d, v] : dimensions) dims[std::string(to_string(d))] = v;
    nlohmann::json names = nlohmann::json::array();
    for (const auto& m : manifests) names.push_back(m.filename().string());
    return {{"stage", "pairs"},
            {"manifests", names},
            {"mode", std::string(to_string(mode))},
            {"dimensions", dims},
            {"n_pairs", n_pairs},
            {"seed", seed},
            {"age_gap_min_years", age_gap_min_years},
            {"allow_replacement", allow_replacement},
            {"td_grid", td_grid == TdGrid::uniform ? "uniform" : "marginal"}};
  }
};

inline std::vector<Manifest> load_manifests(const std::vector<fs::path>& paths) {
  if (paths.empty()) throw ConfigError("at least one manifest is required");
  std::vector<Manifest> out;
  for (const auto& p : paths) out.push_back(load_manifest(p));
  return out;
}

inline std::vector<TrialPair> build_pairs(const PairsStage& cfg, const std::vector<Manifest>& ms) {
  switch (cfg.mode) {
    case PairMode::eval: {
      const Manifest merged = merge_manifests(ms);
      std::vector<TrialPair> out;
      for (auto& [d, count] : cfg.dimensions) {
        if (count <= 0) continue;
        SamplingSpec spec;
        spec.dimension = d;
        spec.n_pairs = static_cast<std::size_t>(count);
        spec.seed = cfg.seed;
        spec.age_gap_min_years = cfg.age_gap_min_years;
        spec.allow_replacement = cfg.allow_replacement;
        spec.enumeration_cap = cfg.enumeration_cap;
        auto block = sample_eval_pairs(merged, spec);
        out.insert(out.end(), block.begin(), block.end());
      }
      if (out.empty()) throw ConfigError("eval mode needs at least one dimension with a positive pair count");
      return out;
    }
    case PairMode::hard:
      return sample_hard_training_pairs(ms, cfg.dimensions, cfg.n_pairs, cfg.seed,
                                        {cfg.age_gap_min_years, cfg.enumeration_cap});
    case PairMode::random: return sample_random_pairs(merge_manifests(ms), cfg.n_pairs, cfg.seed);
    case PairMode::td: return build_td_pairs(merge_manifests(ms), cfg.n_pairs, cfg.seed, cfg.td_grid, cfg.enumeration_cap);
  }
  return {};
}

inline Provenance run_pairs_stage(const PairsStage& cfg, const fs::path& out) {
  const auto pairs = build_pairs(cfg, load_manifests(cfg.manifests));
  const auto meta = Provenance::of(cfg.describe(), cfg.seed);
  write_pairs(out, pairs, meta);
  return meta;
}

// ------------------------------------------------------------------ assemble

struct AssembleStage {
  std::vector<fs::path> manifests;
  fs::path pairs;
  fs::path out_dir;
  Strategy strategy = Strategy::concat_silence;
  Task task = Task::ti;
  AssemblyOptions options;
  std::size_t workers = 1;
};

/// Writes the assembled audio for every pair; returns the number of files written.
inline std::size_t run_assemble_stage(const AssembleStage& cfg) {
  const Manifest merged = merge_manifests(load_manifests(cfg.manifests));
  const auto pairs = read_pairs(cfg.pairs).pairs;
  const Strategy layout = effective_strategy(cfg.strategy, cfg.task);
  fs::create_directories(cfg.out_dir);

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> written{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (;;) {
      {
        std::lock_guard lock(failure_mu);
        if (failure) return;
      }
      const std::size_t i = next.fetch_add(1);
      if (i >= pairs.size()) return;
      try {
        const auto assembled = assemble(pairs[i], layout, merged, cfg.options);
        const auto names = assembled_file_names(i, layout);
        for (std::size_t k = 0; k < names.size(); ++k) write_wav(cfg.out_dir / names[k], assembled.parts[k]);
        written += names.size();
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min(resolve_workers(cfg.workers), std::max<std::size_t>(pairs.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return written.load();
}

// ------------------------------------------------------------------ dataset

struct DatasetStage {
  fs::path pairs;
  fs::path out;
  Strategy strategy = Strategy::concat_silence;
  Task task = Task::ti;
  std::string audio_dir = "audio";
  bool inline_audio = false;
};

inline std::size_t run_dataset_stage(const DatasetStage& cfg) {
  const auto pf = read_pairs(cfg.pairs);
  const nlohmann::json describe = {{"stage", "dataset"},
                                   {"upstream", pf.meta ? pf.meta->config_hash : ""},
                                   {"strategy", std::string(to_string(cfg.strategy))},
                                   {"task", std::string(to_string(cfg.task))},
                                   {"inline_audio", cfg.inline_audio}};
  EmitOptions opts;
  opts.audio_dir = cfg.audio_dir;
  opts.inline_audio = cfg.inline_audio;
  opts.provenance = Provenance::of(describe, pf.meta ? pf.meta->seed : std::nullopt);
  return emit_ft_dataset(pf.pairs, cfg.strategy, cfg.task, cfg.out, opts);
}

// ------------------------------------------------------------------ infer / parse

struct InferStage {
  fs::path dataset;
  fs::path out;
  std::string endpoint;
  BatchOptions batch;
  AudioTransport transport = AudioTransport::inline_base64;
};

struct InferSummary {
  std::size_t requests = 0;
  std::size_t failures = 0;
  double mean_latency_ms = 0.0;
};

inline InferSummary run_infer_stage(const InferStage& cfg) {
  const auto ds = read_dataset(cfg.dataset);
  const auto base = cfg.dataset.has_parent_path() ? cfg.dataset.parent_path() : fs::path(".");
  const auto requests = build_requests(ds, base, cfg.transport);
  const auto responses = run_batch(requests, cfg.endpoint, cfg.batch);
  const nlohmann::json describe = {{"stage", "infer"}, {"upstream", ds.meta ? ds.meta->config_hash : ""}};
  write_responses(cfg.out, responses, Provenance::of(describe, ds.meta ? ds.meta->seed : std::nullopt));
  InferSummary s;
  s.requests = responses.size();
  for (const auto& r : responses) {
    s.failures += !r.ok();
    s.mean_latency_ms += r.latency_ms;
  }
  if (s.requests) s.mean_latency_ms /= static_cast<double>(s.requests);
  return s;
}

struct ParseStage {
  fs::path dataset;
  fs::path responses;
  fs::path out;
};

inline std::vector<Prediction> run_parse_stage(const ParseStage& cfg) {
  const auto ds = read_dataset(cfg.dataset);
  const auto rf = read_responses(cfg.responses);
  auto preds = parse_responses(ds, rf.responses);
  const nlohmann::json describe = {{"stage", "parse"}, {"upstream", rf.meta ? rf.meta->config_hash : ""}};
  write_predictions(cfg.out, preds, Provenance::of(describe, rf.meta ? rf.meta->seed : std::nullopt));
  return preds;
}

// ------------------------------------------------------------------ report

struct ReportStage {
  fs::path pairs;
  fs::path predictions;
  fs::path out;  // rendered table; a JSON twin is written next to it
  ReportFormat format = ReportFormat::markdown;
  InvalidPolicy policy = InvalidPolicy::invalid_as_wrong;
  std::map<std::string, std::string> metadata;
};

inline EvaluationReport build_report(const std::vector<TrialPair>& pairs, const std::vector<Prediction>& preds,
                                     InvalidPolicy policy) {
  EvaluationReport r = accuracy(preds, pairs, policy);
  const bool td = !pairs.empty() && std::all_of(pairs.begin(), pairs.end(), [](const auto& p) {
    return p.label_content_match.has_value();
  });
  if (td) r.td = td_metrics(preds, pairs);
  return r;
}

inline EvaluationReport run_report_stage(const ReportStage& cfg) {
  const auto pf = read_pairs(cfg.pairs);
  const auto pr = read_predictions(cfg.predictions);
  EvaluationReport r = build_report(pf.pairs, pr.predictions, cfg.policy);
  r.metadata = cfg.metadata;
  r.metadata["tool"] = std::string(kToolName) + " " + std::string(kToolVersion);
  r.metadata["policy"] = std::string(to_string(cfg.policy));
  if (pf.meta) {
    if (pf.meta->seed) r.metadata["seed"] = std::to_string(*pf.meta->seed);
    r.metadata["pairs_config_hash"] = pf.meta->config_hash;
  }
  util::write_file(cfg.out, render_report(r, cfg.format));
  auto json_out = cfg.out;
  json_out.replace_extension(".json");
  util::write_file(json_out, report_to_json(r).dump(2) + "\n");
  return r;
}

// ------------------------------------------------------------------ full run

struct MockSettings {
  double error_rate = 0.0;
  Phrasing phrasing = Phrasing::canonical;
  std::uint64_t seed = 0;
};

struct RunConfig {
  PairsStage pairs;
  Strategy strategy = Strategy::concat_silence;
  Task task = Task::ti;
  double silence_s = 1.0;
  double duration_tolerance_s = 0.1;
  /// "mock" runs an in-process mock model; anything else is a /v1/answer URL.
  std::string endpoint = "mock";
  MockSettings mock;
  BatchOptions batch;
  std::size_t workers = 1;
  InvalidPolicy policy = InvalidPolicy::invalid_as_wrong;
  ReportFormat format = ReportFormat::markdown;
  fs::path output_dir;
  bool overwrite = false;

  /// Canonical description used for the config hash. Output location and the
  /// overwrite flag are excluded so relocated reruns hash identically.
  nlohmann::json describe() const {
    return {{"pairs", pairs.describe()},
            {"strategy", std::string(to_string(strategy))},
            {"task", std::string(to_string(task))},
            {"silence_s", silence_s},
            {"endpoint", endpoint},
            {"mock", {{"error_rate", mock.error_rate},
                      {"phrasing", mock.phrasing == Phrasing::canonical ? "canonical" : "verbose"},
                      {"seed", mock.seed}}},
            {"policy", std::string(to_string(policy))}};
  }
};

namespace detail {

template <typename T>
T required(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("config: missing '") + key + "'");
  try {
    return j[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: '") + key + "' has the wrong type");
  }
}

template <typename T>
T optional_value(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: '") + key + "' has the wrong type");
  }
}

template <typename E, typename Parse>
E parse_enum(const nlohmann::json& j, const char* key, E fallback, Parse parse) {
  if (!j.contains(key)) return fallback;
  const auto s = optional_value<std::string>(j, key, "");
  auto v = parse(s);
  if (!v) throw ConfigError(std::string("config: unknown ") + key + " '" + s + "'");
  return *v;
}

}  // namespace detail

/// Parses a JSON run configuration. Relative paths resolve against `base_dir`
/// (normally the config file's directory).
inline RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  RunConfig c;
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };

  if (!j.contains("manifests") || !j["manifests"].is_array() || j["manifests"].empty())
    throw ConfigError("config: 'manifests' must list at least one manifest path");
  for (const auto& m : j["manifests"]) {
    if (!m.is_string()) throw ConfigError("config: manifest paths must be strings");
    c.pairs.manifests.push_back(resolve(m.get<std::string>()));
  }
  c.pairs.mode = detail::parse_enum(j, "mode", PairMode::eval, parse_pair_mode);
  if (j.contains("dimensions")) {
    if (!j["dimensions"].is_object()) throw ConfigError("config: 'dimensions' must map dimension -> count/weight");
    for (auto it = j["dimensions"].begin(); it != j["dimensions"].end(); ++it) {
      auto d = parse_dimension(it.key());
      if (!d) throw ConfigError("config: unknown dimension '" + it.key() + "'");
      if (!it.value().is_number()) throw ConfigError("config: dimension '" + it.key() + "' needs a number");
      c.pairs.dimensions[*d] = it.value().get<double>();
    }
  }
  c.pairs.n_pairs = detail::optional_value<std::size_t>(j, "n_pairs", 0);
  c.pairs.seed = detail::required<std::uint64_t>(j, "seed");
  c.pairs.age_gap_min_years = detail::optional_value<int>(j, "age_gap_min_years", 10);
  c.pairs.allow_replacement = detail::optional_value<bool>(j, "allow_replacement", false);
  c.pairs.td_grid = detail::parse_enum(j, "td_grid", TdGrid::uniform, parse_td_grid);
  c.strategy = detail::parse_enum(j, "strategy", Strategy::concat_silence, parse_strategy);
  c.task = detail::parse_enum(j, "task", c.pairs.mode == PairMode::td ? Task::td : Task::ti, parse_task);
  c.silence_s = detail::optional_value<double>(j, "silence_s", 1.0);
  c.duration_tolerance_s = detail::optional_value<double>(j, "duration_tolerance_s", 0.1);
  c.endpoint = detail::optional_value<std::string>(j, "endpoint", "mock");
  if (j.contains("mock")) {
    const auto& m = j["mock"];
    c.mock.error_rate = detail::optional_value<double>(m, "error_rate", 0.0);
    c.mock.phrasing = detail::parse_enum(m, "phrasing", Phrasing::canonical, parse_phrasing);
    c.mock.seed = detail::optional_value<std::uint64_t>(m, "seed", c.pairs.seed);
  } else {
    c.mock.seed = c.pairs.seed;
  }
  c.batch.max_in_flight = detail::optional_value<std::size_t>(j, "max_in_flight", 4);
  c.batch.timeout_s = detail::optional_value<double>(j, "timeout_s", 60.0);
  c.batch.attempts = detail::optional_value<int>(j, "attempts", 3);
  c.workers = detail::optional_value<std::size_t>(j, "workers", 1);
  c.policy = detail::parse_enum(j, "policy", InvalidPolicy::invalid_as_wrong, parse_policy);
  c.format = detail::parse_enum(j, "format", ReportFormat::markdown, parse_report_format);
  c.output_dir = resolve(detail::required<std::string>(j, "output_dir"));
  c.overwrite = detail::optional_value<bool>(j, "overwrite", false);
  return c;
}

inline RunConfig load_run_config(const fs::path& path) {
  auto j = nlohmann::json::parse(util::read_file(path), nullptr, false);
  if (j.is_discarded()) throw ConfigError("config '" + path.string() + "' is not valid JSON");
  return parse_run_config(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

/// Checks everything that can be checked before any work starts.
inline void validate(const RunConfig& c) {
  if (c.pairs.manifests.empty()) throw ConfigError("config: no manifests");
  for (const auto& m : c.pairs.manifests)
    if (!fs::exists(m)) throw ConfigError("config: manifest '" + m.string() + "' does not exist");
  if (c.pairs.mode == PairMode::eval && c.pairs.dimensions.empty())
    throw ConfigError("config: eval mode needs 'dimensions'");
  if (c.pairs.mode == PairMode::hard && c.pairs.dimensions.empty())
    throw ConfigError("config: hard mode needs 'dimensions' weights");
  if (c.pairs.mode != PairMode::eval && c.pairs.n_pairs == 0)
    throw ConfigError("config: mode '" + std::string(to_string(c.pairs.mode)) + "' needs 'n_pairs'");
  if (c.task == Task::td && c.pairs.mode != PairMode::td)
    throw ConfigError("config: task 'td' requires mode 'td'");
  if (!(c.mock.error_rate >= 0 && c.mock.error_rate <= 1)) throw ConfigError("config: mock.error_rate must lie in [0, 1]");
  if (c.output_dir.empty()) throw ConfigError("config: output_dir is required");
  if (!c.overwrite && fs::exists(c.output_dir) && !fs::is_empty(c.output_dir))
    throw ConfigError("output directory '" + c.output_dir.string() + "' is not empty; set overwrite to replace it");
}

struct RunOutputs {
  fs::path pairs;
  fs::path audio_dir;
  fs::path dataset;
  fs::path responses;
  fs::path predictions;
  fs::path report;

  static RunOutputs in(const fs::path& dir, ReportFormat format) {
    return {dir / "pairs.jsonl",     dir / "audio",           dir / "dataset.jsonl",
            dir / "responses.jsonl", dir / "predictions.jsonl", dir / (format == ReportFormat::markdown ? "report.md" : "report.tsv")};
  }
};

template <typename F>
auto run_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

/// Runs every stage in order. Throws ConfigError before any work if the
/// configuration is invalid, and StageError naming the failing stage otherwise.
inline EvaluationReport run_pipeline(const RunConfig& c) {
  validate(c);
  const auto out = RunOutputs::in(c.output_dir, c.format);
  if (c.overwrite && fs::exists(out.audio_dir)) fs::remove_all(out.audio_dir);
  fs::create_directories(c.output_dir);

  run_stage("pairs", [&] { return run_pairs_stage(c.pairs, out.pairs); });

  run_stage("assemble", [&] {
    AssembleStage a;
    a.manifests = c.pairs.manifests;
    a.pairs = out.pairs;
    a.out_dir = out.audio_dir;
    a.strategy = c.strategy;
    a.task = c.task;
    a.options.silence_s = c.silence_s;
    a.options.duration_tolerance_s = c.duration_tolerance_s;
    a.workers = c.workers;
    return run_assemble_stage(a);
  });

  run_stage("dataset", [&] {
    DatasetStage d;
    d.pairs = out.pairs;
    d.out = out.dataset;
    d.strategy = c.strategy;
    d.task = c.task;
    return run_dataset_stage(d);
  });

  run_stage("infer", [&] {
    InferStage s;
    s.dataset = out.dataset;
    s.out = out.responses;
    s.batch = c.batch;
    if (c.endpoint != "mock") {
      s.endpoint = c.endpoint;
      return run_infer_stage(s);
    }
    MockServerOptions mo;
    mo.error_rate = c.mock.error_rate;
    mo.seed = c.mock.seed;
    mo.phrasing = c.mock.phrasing;
    mo.default_strategy = effective_strategy(c.strategy, c.task);
    mo.default_task = c.task;
    MockServer server(read_pairs(out.pairs).pairs, mo);
    server.start();
    s.endpoint = server.url();
    return run_infer_stage(s);
  });

  run_stage("parse", [&] { return run_parse_stage({out.dataset, out.responses, out.predictions}); });

  return run_stage("report", [&] {
    ReportStage r;
    r.pairs = out.pairs;
    r.predictions = out.predictions;
    r.out = out.report;
    r.format = c.format;
    r.policy = c.policy;
    r.metadata["config_hash"] = util::fnv1a_hex(c.describe().dump());
    r.metadata["strategy"] = std::string(to_string(effective_strategy(c.strategy, c.task)));
    r.metadata["task"] = std::string(to_string(c.task));
    return run_report_stage(r);
  });
}

}  // namespace svbench
