#pragma once

// Model transport over the /v1/answer protocol, plus a deterministic mock
// model (mock_oracle) and an HTTP server that serves it.
//
// Request:  POST {endpoint}/v1/answer
//           {"request_id": str,
//            "segments": [{"type":"text","text":str} | {"type":"audio","wav_base64":str}
//                         | {"type":"audio","path":str}],
//            "params": {...}}
// Response: HTTP 200 with {"request_id": str, "text": str}. Any other status
//           is a failure for that request.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "svbench/errors.hpp"
#include "svbench/pair_sampler.hpp"
#include "svbench/prompt_dataset.hpp"
#include "svbench/provenance.hpp"
#include "svbench/response_parser.hpp"
#include "svbench/random.hpp"
#include "svbench/util.hpp"

namespace svbench {

inline constexpr std::string_view kAnswerPath = "/v1/answer";

struct InferenceRequest {
  std::string request_id;
  Strategy strategy = Strategy::concat_silence;
  Task task = Task::ti;
  std::vector<Segment> segments;
  nlohmann::json decode_params = nlohmann::json::object();
};

struct InferenceResponse {
  std::string request_id;
  std::string text;
  double latency_ms = 0.0;
  std::string error;  // empty on success

  bool ok() const { return error.empty(); }
};

enum class AudioTransport { inline_base64, path };

/// Builds one request per dataset example. Audio paths are resolved against
/// `dataset_dir`; inline mode embeds the WAV bytes as base64.
inline std::vector<InferenceRequest> build_requests(const DatasetFile& dataset, const std::filesystem::path& dataset_dir,
                                                    AudioTransport transport = AudioTransport::inline_base64,
                                                    const nlohmann::json& decode_params = nlohmann::json::object()) {
  std::vector<InferenceRequest> out;
  out.reserve(dataset.examples.size());
  for (const auto& e : dataset.examples) {
    InferenceRequest r;
    r.request_id = e.id;
    r.strategy = e.strategy;
    r.task = e.task;
    r.decode_params = decode_params;
    for (auto seg : e.inputs) {
      if (seg.kind == Segment::Kind::audio && seg.wav_base64.empty()) {
        const auto full = (dataset_dir / seg.audio_path).lexically_normal();
        if (transport == AudioTransport::inline_base64) {
          seg.wav_base64 = util::base64_encode(util::read_file(full));
        } else {
          seg.audio_path = std::filesystem::absolute(full).string();
        }
      }
      r.segments.push_back(std::move(seg));
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline nlohmann::json request_body(const InferenceRequest& r) {
  nlohmann::json segments = nlohmann::json::array();
  for (const auto& s : r.segments) segments.push_back(nlohmann::json(segment_to_json(s)));
  nlohmann::json params = r.decode_params.is_object() ? r.decode_params : nlohmann::json::object();
  params["strategy"] = std::string(to_string(r.strategy));
  params["task"] = std::string(to_string(r.task));
  return {{"request_id", r.request_id}, {"segments", std::move(segments)}, {"params", std::move(params)}};
}

struct Endpoint {
  std::string scheme_host_port;  // e.g. "http://127.0.0.1:8080"
  std::string path_prefix;       // e.g. "" or "/models/kimi"

  static Endpoint parse(std::string_view url) {
    const auto scheme = url.find("://");
    if (scheme == std::string_view::npos) throw InvalidArgument("endpoint URL needs a scheme: '" + std::string(url) + "'");
    const auto path = url.find('/', scheme + 3);
    Endpoint e;
    e.scheme_host_port = std::string(url.substr(0, path));
    if (path != std::string_view::npos) {
      e.path_prefix = std::string(url.substr(path));
      while (!e.path_prefix.empty() && e.path_prefix.back() == '/') e.path_prefix.pop_back();
    }
    return e;
  }
};

struct BatchOptions {
  std::size_t max_in_flight = 4;
  double timeout_s = 60.0;
  int attempts = 3;
  /// First retry waits this long; each further retry doubles it.
  std::chrono::milliseconds backoff{200};
};

namespace detail {

struct AttemptResult {
  std::optional<std::string> text;
  std::string error;
  bool connection_failure = false;
};

inline AttemptResult attempt_once(httplib::Client& client, const std::string& path, const std::string& body,
                                  const std::string& request_id) {
  auto res = client.Post(path, body, "application/json");
  if (!res) {
    const auto err = res.error();
    return {std::nullopt, "transport: " + httplib::to_string(err),
            err == httplib::Error::Connection || err == httplib::Error::ConnectionTimeout};
  }
  if (res->status != 200) return {std::nullopt, "server error: HTTP " + std::to_string(res->status), false};
  auto j = nlohmann::json::parse(res->body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("text") || !j["text"].is_string())
    return {std::nullopt, "malformed response body", false};
  if (j.contains("request_id") && j["request_id"] != request_id) return {std::nullopt, "response request_id mismatch", false};
  return {j["text"].get<std::string>(), {}, false};
}

}  // namespace detail

/// Sends every request with at most `max_in_flight` outstanding at once.
/// Responses come back in input order. A request that still fails after all
/// attempts yields an error-marked response; if the endpoint cannot be
/// reached before any request has succeeded, throws EndpointUnreachable.
inline std::vector<InferenceResponse> run_batch(const std::vector<InferenceRequest>& requests, std::string_view endpoint,
                                                const BatchOptions& opts = {}) {
  if (opts.max_in_flight == 0) throw InvalidArgument("max_in_flight must be positive");
  if (opts.attempts <= 0) throw InvalidArgument("attempts must be positive");
  const Endpoint ep = Endpoint::parse(endpoint);
  const std::string path = ep.path_prefix + std::string(kAnswerPath);

  std::vector<InferenceResponse> out(requests.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> any_success{false};
  std::atomic<bool> unreachable{false};
  std::string unreachable_detail;
  std::mutex detail_mu;

  const auto timeout = std::chrono::microseconds(static_cast<std::int64_t>(opts.timeout_s * 1e6));
  auto worker = [&] {
    httplib::Client client(ep.scheme_host_port);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    client.set_keep_alive(true);
    client.set_tcp_nodelay(true);
    for (;;) {
      if (unreachable.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= requests.size()) return;
      const auto& req = requests[i];
      const std::string body = request_body(req).dump();
      auto& resp = out[i];
      resp.request_id = req.request_id;
      const auto start = std::chrono::steady_clock::now();
      detail::AttemptResult result;
      for (int a = 0; a < opts.attempts; ++a) {
        if (a > 0) std::this_thread::sleep_for(opts.backoff * (1LL << (a - 1)));
        result = detail::attempt_once(client, path, body, req.request_id);
        if (result.text) break;
      }
      resp.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      if (result.text) {
        resp.text = std::move(*result.text);
        any_success.store(true);
      } else {
        resp.error = result.error;
        if (result.connection_failure && !any_success.load()) {
          std::lock_guard lock(detail_mu);
          unreachable_detail = result.error;
          unreachable.store(true);
        }
      }
    }
  };

  const std::size_t n_workers = std::min(opts.max_in_flight, std::max<std::size_t>(requests.size(), 1));
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (unreachable.load() && !any_success.load())
    throw EndpointUnreachable("endpoint " + std::string(endpoint) + " unreachable: " + unreachable_detail);
  return out;
}

// ------------------------------------------------------------------ responses file

inline void write_responses(const std::filesystem::path& path, const std::vector<InferenceResponse>& responses,
                            const Provenance& meta) {
  std::string out = meta.line();
  for (const auto& r : responses) {
    nlohmann::ordered_json j;
    j["request_id"] = r.request_id;
    j["text"] = r.text;
    if (!r.ok()) j["error"] = r.error;
    out += j.dump() + "\n";
  }
  util::write_file(path, out);
}

struct ResponsesFile {
  std::optional<Provenance> meta;
  std::vector<InferenceResponse> responses;
};

inline ResponsesFile read_responses(const std::filesystem::path& path) {
  auto lines = parse_json_lines(util::read_file(path), "responses");
  ResponsesFile out{lines.meta, {}};
  for (auto& [line, j] : lines.rows) {
    if (!j.is_object() || !j.contains("request_id") || !j["request_id"].is_string())
      throw IoError("responses line " + std::to_string(line) + ": missing request_id");
    InferenceResponse r;
    r.request_id = j["request_id"].get<std::string>();
    r.text = j.value("text", std::string());
    r.error = j.value("error", std::string());
    out.responses.push_back(std::move(r));
  }
  return out;
}

/// Joins responses to dataset examples by id. A missing or failed response
/// becomes an invalid prediction carrying the error.
inline std::vector<Prediction> parse_responses(const DatasetFile& dataset, const std::vector<InferenceResponse>& responses) {
  std::unordered_map<std::string, const InferenceResponse*> by_id;
  for (const auto& r : responses) by_id.emplace(r.request_id, &r);
  std::vector<Prediction> out;
  out.reserve(dataset.examples.size());
  for (const auto& e : dataset.examples) {
    auto it = by_id.find(e.id);
    if (it == by_id.end() || !it->second->ok()) {
      Prediction p = predict(e, "");
      p.same_speaker = SpeakerVerdict::invalid;
      if (e.task == Task::td) p.content_match = ContentVerdict::invalid;
      p.error = it == by_id.end() ? "missing response" : it->second->error;
      out.push_back(std::move(p));
      continue;
    }
    out.push_back(predict(e, it->second->text));
  }
  return out;
}

// ------------------------------------------------------------------ mock model

enum class Phrasing { canonical, verbose };

inline std::optional<Phrasing> parse_phrasing(std::string_view s) {
  if (s == "canonical") return Phrasing::canonical;
  if (s == "verbose") return Phrasing::verbose;
  return std::nullopt;
}

namespace mock_phrases {

inline constexpr std::array<std::string_view, 3> kCountSame = {
    "There is only one speaker in this audio segment.", "I hear a single speaker throughout the recording.", "One."};
inline constexpr std::array<std::string_view, 3> kCountDifferent = {
    "There are two speakers present in this audio segment.", "I can hear 2 different voices.", "Two speakers."};
inline constexpr std::array<std::string_view, 3> kIdentitySame = {
    "The two audio segments are from the same speaker.", "Both recordings come from the same person.", "Same speaker."};
inline constexpr std::array<std::string_view, 3> kIdentityDifferent = {
    "The two audio segments are from different speakers.", "They are not from the same speaker.",
    "Different speakers."};
inline constexpr std::array<std::string_view, 3> kTdFormats = {
    "After comparing the recordings - Speaker: {s}; Content: {c}.", "speaker: {s} content: {c}",
    "Result => SPEAKER: {S} | CONTENT: {C}"};

}  // namespace mock_phrases

/// The mock model's answer for the pair at `index`. Each label field is flipped
/// independently with probability error_rate; the draw depends only on
/// (seed, index), so concurrent serving stays deterministic.
inline std::string mock_answer(const TrialPair& pair, std::size_t index, Task task, Strategy strategy, double error_rate,
                               std::uint64_t seed, Phrasing phrasing) {
  Rng rng(derive_seed(seed, index));
  const bool flip_speaker = rng.bernoulli(error_rate);
  const bool flip_content = rng.bernoulli(error_rate);
  const std::size_t variant = static_cast<std::size_t>(rng.below(3));
  const bool same = pair.label_same_speaker != flip_speaker;

  if (task == Task::td) {
    const bool content = pair.label_content_match.value_or(false) != flip_content;
    if (phrasing == Phrasing::canonical) return td_target(same, content);
    std::string t(mock_phrases::kTdFormats[variant]);
    auto put = [&t](std::string_view key, std::string_view value) {
      if (auto at = t.find(key); at != std::string::npos) t.replace(at, key.size(), value);
    };
    put("{s}", same ? "Yes" : "No");
    put("{c}", content ? "Yes" : "No");
    put("{S}", same ? "YES" : "NO");
    put("{C}", content ? "YES" : "NO");
    return t;
  }
  if (is_concat_style(strategy)) {
    if (phrasing == Phrasing::canonical) return same ? "one" : "two";
    return std::string(same ? mock_phrases::kCountSame[variant] : mock_phrases::kCountDifferent[variant]);
  }
  if (phrasing == Phrasing::canonical) return same ? "same" : "different";
  return std::string(same ? mock_phrases::kIdentitySame[variant] : mock_phrases::kIdentityDifferent[variant]);
}

/// Ground-truth answers with random label flips, one response per pair,
/// request ids matching the dataset's example ids.
inline std::vector<InferenceResponse> mock_oracle(const std::vector<TrialPair>& pairs, Task task, double error_rate,
                                                  std::uint64_t seed, Phrasing phrasing = Phrasing::canonical,
                                                  Strategy strategy = Strategy::concat_silence) {
  if (!(error_rate >= 0.0 && error_rate <= 1.0)) throw InvalidArgument("error_rate must lie in [0, 1]");
  std::vector<InferenceResponse> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    out.push_back({example_id(i), mock_answer(pairs[i], i, task, strategy, error_rate, seed, phrasing), 0.0, {}});
  return out;
}

struct MockServerOptions {
  double error_rate = 0.0;
  std::uint64_t seed = 0;
  Phrasing phrasing = Phrasing::canonical;
  /// Used when a request does not name its own strategy/task in params.
  Strategy default_strategy = Strategy::concat_silence;
  std::optional<Task> default_task;
  /// Answer every request with HTTP 500.
  bool fail_all = false;
  /// Artificial per-request service time.
  std::chrono::milliseconds delay{0};
  std::size_t threads = 32;
};

/// /v1/answer server backed by mock_answer. Owns its listener thread.
class MockServer {
 public:
  MockServer(std::vector<TrialPair> pairs, MockServerOptions opts) : pairs_(std::move(pairs)), opts_(opts) {
    for (std::size_t i = 0; i < pairs_.size(); ++i) index_.emplace(example_id(i), i);
    const bool any_td = std::any_of(pairs_.begin(), pairs_.end(), [](const auto& p) { return p.target_text.has_value(); });
    task_ = opts_.default_task.value_or(any_td ? Task::td : Task::ti);
    const std::size_t threads = opts_.threads;
    server_.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    server_.set_tcp_nodelay(true);
    server_.Post(std::string(kAnswerPath), [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); });
  }

  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  ~MockServer() { stop(); }

  /// Binds (port 0 picks a free port) and starts serving in the background.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw IoError("mock server could not bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stop() is called elsewhere.
  void serve_forever(const std::string& host, int port) {
    if (!server_.listen(host, port)) throw IoError("mock server could not listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::size_t max_concurrent() const { return max_concurrent_.load(); }
  std::size_t requests_seen() const { return requests_seen_.load(); }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    const std::size_t now = ++in_flight_;
    std::size_t prev = max_concurrent_.load();
    while (now > prev && !max_concurrent_.compare_exchange_weak(prev, now)) {
    }
    ++requests_seen_;
    if (opts_.delay.count() > 0) std::this_thread::sleep_for(opts_.delay);
    respond(req, res);
    --in_flight_;
  }

  void respond(const httplib::Request& req, httplib::Response& res) {
    auto reply = [&res](int status, const nlohmann::json& body) {
      res.status = status;
      res.set_content(body.dump(), "application/json");
    };
    if (opts_.fail_all) return reply(500, {{"error", "configured to fail"}});
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("request_id") || !body["request_id"].is_string() ||
        !body.contains("segments") || !body["segments"].is_array())
      return reply(400, {{"error", "malformed request body"}});
    for (const auto& seg : body["segments"]) {
      if (!seg.is_object() || !seg.contains("type")) return reply(400, {{"error", "malformed segment"}});
      if (seg["type"] == "audio" && seg.contains("wav_base64") &&
          (!seg["wav_base64"].is_string() || !util::base64_decode(seg["wav_base64"].get<std::string>())))
        return reply(400, {{"error", "malformed base64 audio"}});
    }
    const auto id = body["request_id"].get<std::string>();
    auto it = index_.find(id);
    if (it == index_.end()) return reply(404, {{"error", "unknown request_id"}});
    Strategy strategy = opts_.default_strategy;
    Task task = task_;
    if (body.contains("params") && body["params"].is_object()) {
      const auto& params = body["params"];
      if (params.contains("strategy") && params["strategy"].is_string())
        if (auto s = parse_strategy(params["strategy"].get<std::string>())) strategy = *s;
      if (params.contains("task") && params["task"].is_string())
        if (auto t = parse_task(params["task"].get<std::string>())) task = *t;
    }
    const std::string text =
        mock_answer(pairs_[it->second], it->second, task, strategy, opts_.error_rate, opts_.seed, opts_.phrasing);
    reply(200, {{"request_id", id}, {"text", text}});
  }

  std::vector<TrialPair> pairs_;
  MockServerOptions opts_;
  Task task_ = Task::ti;
  std::unordered_map<std::string, std::size_t> index_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> max_concurrent_{0};
  std::atomic<std::size_t> requests_seen_{0};
};

}  // namespace svbench
