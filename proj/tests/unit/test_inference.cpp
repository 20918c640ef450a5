#include <gtest/gtest.h>

#include <cmath>

#include "support/fixtures.hpp"
#include "svbench/inference.hpp"

using namespace svbench;

namespace {

std::vector<TrialPair> toy_pairs(std::size_t n, bool td = false) {
  std::vector<TrialPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    TrialPair p;
    p.enroll = "e" + std::to_string(i);
    p.test = "t" + std::to_string(i);
    p.label_same_speaker = i % 3 == 0;
    if (td) {
      p.label_content_match = i % 2 == 0;
      p.target_text = "hello";
    }
    out.push_back(p);
  }
  return out;
}

std::vector<InferenceRequest> requests_for(std::size_t n, Strategy s = Strategy::concat_silence) {
  std::vector<InferenceRequest> out;
  for (std::size_t i = 0; i < n; ++i) {
    InferenceRequest r;
    r.request_id = example_id(i);
    r.strategy = s;
    r.segments = {Segment::make_audio("x.wav"), Segment::make_text("how many?")};
    out.push_back(r);
  }
  return out;
}

BatchOptions fast() {
  BatchOptions o;
  o.timeout_s = 5;
  o.attempts = 2;
  o.backoff = std::chrono::milliseconds(1);
  return o;
}

int post(const std::string& url, const std::string& body) {
  httplib::Client c(url);
  auto res = c.Post(std::string(kAnswerPath), body, "application/json");
  return res ? res->status : -1;
}

}  // namespace

TEST(MockServer, AnswersComeBackInOrder) {
  const auto pairs = toy_pairs(10);
  MockServer server(pairs, {});
  server.start();
  const auto responses = run_batch(requests_for(10), server.url(), fast());
  ASSERT_EQ(responses.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(responses[i].request_id, example_id(i));
    EXPECT_TRUE(responses[i].ok()) << responses[i].error;
    const auto expected = pairs[i].label_same_speaker ? SpeakerVerdict::same : SpeakerVerdict::different;
    EXPECT_EQ(parse_ti(responses[i].text, Strategy::concat_silence), expected);
  }
  EXPECT_EQ(server.requests_seen(), 10u);
}

TEST(MockServer, FailingServerYieldsErrorMarkedResponses) {
  MockServerOptions o;
  o.fail_all = true;
  MockServer server(toy_pairs(3), o);
  server.start();
  const auto responses = run_batch(requests_for(3), server.url(), fast());
  ASSERT_EQ(responses.size(), 3u);
  for (const auto& r : responses) {
    EXPECT_FALSE(r.ok());
    EXPECT_TRUE(r.text.empty());
  }
  EXPECT_EQ(server.requests_seen(), 6u);  // two attempts each
}

TEST(MockServer, ConcurrencyIsBounded) {
  MockServerOptions o;
  o.delay = std::chrono::milliseconds(30);
  MockServer server(toy_pairs(24), o);
  server.start();
  auto opts = fast();
  opts.max_in_flight = 4;
  const auto responses = run_batch(requests_for(24), server.url(), opts);
  for (const auto& r : responses) EXPECT_TRUE(r.ok());
  EXPECT_LE(server.max_concurrent(), 4u);
  EXPECT_GE(server.max_concurrent(), 2u);
}

TEST(MockServer, RejectsMalformedRequests) {
  MockServer server(toy_pairs(2), {});
  server.start();
  EXPECT_EQ(post(server.url(), "not json"), 400);
  EXPECT_EQ(post(server.url(), R"({"request_id":"000000"})"), 400);
  EXPECT_EQ(post(server.url(), R"({"request_id":"000000","segments":[{"type":"audio","wav_base64":"@@@"}]})"), 400);
  EXPECT_EQ(post(server.url(), R"({"request_id":"999999","segments":[]})"), 404);
  EXPECT_EQ(post(server.url(), R"({"request_id":"000001","segments":[]})"), 200);
}

TEST(MockServer, UnknownIdsBecomeFailedResponses) {
  MockServer server(toy_pairs(2), {});
  server.start();
  const auto responses = run_batch(requests_for(4), server.url(), fast());
  EXPECT_TRUE(responses[0].ok());
  EXPECT_TRUE(responses[1].ok());
  EXPECT_FALSE(responses[2].ok());
  EXPECT_FALSE(responses[3].ok());
}

TEST(RunBatch, UnreachableEndpointThrows) {
  auto opts = fast();
  opts.timeout_s = 1;
  EXPECT_THROW(run_batch(requests_for(3), "http://127.0.0.1:1", opts), EndpointUnreachable);
  EXPECT_THROW(run_batch(requests_for(1), "not a url", opts), InvalidArgument);
  opts.max_in_flight = 0;
  EXPECT_THROW(run_batch(requests_for(1), "http://127.0.0.1:1", opts), InvalidArgument);
}

TEST(RunBatch, PathPrefixIsHonoured) {
  httplib::Server s;
  s.Post("/models/a/v1/answer", [](const httplib::Request& req, httplib::Response& res) {
    const auto j = nlohmann::json::parse(req.body);
    res.set_content(nlohmann::json{{"request_id", j["request_id"]}, {"text", "one"}}.dump(), "application/json");
  });
  const int port = s.bind_to_any_port("127.0.0.1");
  std::thread t([&] { s.listen_after_bind(); });
  s.wait_until_ready();
  const auto r = run_batch(requests_for(2), "http://127.0.0.1:" + std::to_string(port) + "/models/a", fast());
  s.stop();
  t.join();
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[1].text, "one");
}

TEST(MockAnswer, ErrorRateExtremes) {
  const auto pairs = toy_pairs(300);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const bool same = pairs[i].label_same_speaker;
    const auto truth = same ? SpeakerVerdict::same : SpeakerVerdict::different;
    const auto flipped = same ? SpeakerVerdict::different : SpeakerVerdict::same;
    EXPECT_EQ(parse_ti(mock_answer(pairs[i], i, Task::ti, Strategy::mix, 0.0, 9, Phrasing::canonical), Strategy::mix), truth);
    EXPECT_EQ(parse_ti(mock_answer(pairs[i], i, Task::ti, Strategy::mix, 1.0, 9, Phrasing::canonical), Strategy::mix), flipped);
  }
  EXPECT_THROW(mock_oracle(pairs, Task::ti, 1.5, 1), InvalidArgument);
}

TEST(MockAnswer, DependsOnlyOnSeedAndIndex) {
  const auto pairs = toy_pairs(50, true);
  const auto a = mock_oracle(pairs, Task::td, 0.3, 42, Phrasing::verbose);
  const auto b = mock_oracle(pairs, Task::td, 0.3, 42, Phrasing::verbose);
  const auto c = mock_oracle(pairs, Task::td, 0.3, 43, Phrasing::verbose);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(a[i].text, b[i].text);
    differ += a[i].text != c[i].text;
    EXPECT_EQ(mock_answer(pairs[i], i, Task::td, Strategy::separate, 0.3, 42, Phrasing::verbose), a[i].text);
  }
  EXPECT_GT(differ, 0u);
}

TEST(MockAnswer, FlipRateIsNearTheConfiguredRate) {
  const auto pairs = toy_pairs(4000);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto v = parse_ti(mock_answer(pairs[i], i, Task::ti, Strategy::concat, 0.2, 7, Phrasing::canonical), Strategy::concat);
    wrong += (v == SpeakerVerdict::same) != pairs[i].label_same_speaker;
  }
  const double sigma = std::sqrt(0.2 * 0.8 / 4000);
  EXPECT_NEAR(double(wrong) / 4000, 0.2, 4 * sigma);
}

TEST(Responses, FileRoundTripAndParsing) {
  svtest::TempDir dir;
  std::vector<InferenceResponse> rs = {{"000000", "one", 1.5, ""}, {"000002", "", 0.0, "HTTP 500"}};
  write_responses(dir / "r.jsonl", rs, Provenance::of(nlohmann::json::object(), 1));
  const auto back = read_responses(dir / "r.jsonl");
  ASSERT_EQ(back.responses.size(), 2u);
  EXPECT_EQ(back.responses[0].text, "one");
  EXPECT_EQ(back.responses[1].error, "HTTP 500");

  DatasetFile ds;
  for (std::size_t i = 0; i < 3; ++i) ds.examples.push_back(make_example(toy_pairs(3)[i], i, Strategy::concat, Task::ti, "audio"));
  const auto preds = parse_responses(ds, back.responses);
  ASSERT_EQ(preds.size(), 3u);
  EXPECT_EQ(preds[0].same_speaker, SpeakerVerdict::same);
  EXPECT_EQ(preds[1].same_speaker, SpeakerVerdict::invalid);
  EXPECT_FALSE(preds[1].error.empty());
  EXPECT_EQ(preds[2].same_speaker, SpeakerVerdict::invalid);
  EXPECT_EQ(preds[2].error, "HTTP 500");
}

TEST(Cli, InferReportsPartialFailureWithExitCode3) {
  svtest::TempDir dir;
  const auto pairs = toy_pairs(6);
  EmitOptions eo;
  emit_ft_dataset(pairs, Strategy::concat_silence, Task::ti, dir / "ds.jsonl", eo);
  std::vector<TrialPair> known(pairs.begin(), pairs.begin() + 3);
  MockServer server(known, {});
  server.start();
  const std::string common = "infer --dataset '" + (dir / "ds.jsonl").string() + "' --endpoint " + server.url() +
                             " --transport path --attempts 1 --out '" + (dir / "r.jsonl").string() + "'";
  EXPECT_EQ(svtest::run_cli(common + " --predictions '" + (dir / "p.jsonl").string() + "'", dir / "log.txt"), 3);
  EXPECT_EQ(read_responses(dir / "r.jsonl").responses.size(), 6u);
  EXPECT_EQ(read_predictions(dir / "p.jsonl").predictions.size(), 6u);

  MockServer full(pairs, {});
  full.start();
  EXPECT_EQ(svtest::run_cli("infer --dataset '" + (dir / "ds.jsonl").string() + "' --endpoint " + full.url() +
                            " --transport path --out '" + (dir / "r2.jsonl").string() + "'"),
            0);
  EXPECT_EQ(svtest::run_cli("infer --dataset '" + (dir / "ds.jsonl").string() +
                            "' --endpoint http://127.0.0.1:1 --timeout 1 --transport path --out '" +
                            (dir / "r3.jsonl").string() + "'"),
            1);
}
