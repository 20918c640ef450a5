#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <random>
#include <regex>

#include "support/fixtures.hpp"
#include "support/metric_oracles.hpp"
#include "svbench/baseline.hpp"

using namespace svbench;
using BigFloat = boost::multiprecision::cpp_dec_float_50;

namespace {

double reference_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  BigFloat dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += BigFloat(a[i]) * BigFloat(b[i]);
    na += BigFloat(a[i]) * BigFloat(a[i]);
    nb += BigFloat(b[i]) * BigFloat(b[i]);
  }
  return static_cast<double>(dot / (sqrt(na) * sqrt(nb)));
}

TrialPair pair(std::string e, std::string t, bool same) {
  TrialPair p;
  p.enroll = std::move(e);
  p.test = std::move(t);
  p.label_same_speaker = same;
  return p;
}

std::string oracle_normalize(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  s = std::regex_replace(s, std::regex("[[:punct:]]"), "");
  s = std::regex_replace(s, std::regex("[[:space:]]+"), " ");
  s = std::regex_replace(s, std::regex("^ | $"), "");
  return s;
}

}  // namespace

TEST(Embeddings, ParseExample) {
  const auto t = parse_embeddings("u1 0.1 0.2 0.3 0.4\nu2 1 0 0 0\n\n");
  EXPECT_EQ(t.dim(), 4u);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t.at("u1"), (std::vector<double>{0.1, 0.2, 0.3, 0.4}));
  EXPECT_THROW(parse_embeddings("u1 0.1 0.2 0.3 0.4\nu2 1 0 0\n"), DimensionMismatch);
  EXPECT_THROW(parse_embeddings("u1 0.1 nan\n"), NonFiniteValue);
  EXPECT_THROW(parse_embeddings("u1 0.1 inf\n"), NonFiniteValue);
  EXPECT_THROW(parse_embeddings("u1 0.1 abc\n"), IoError);
  EXPECT_THROW(parse_embeddings("u1\n"), IoError);
  EXPECT_THROW(parse_embeddings(""), IoError);
  EXPECT_THROW(t.at("nobody"), MissingEmbedding);
}

TEST(Embeddings, FileRoundTripIsExact) {
  svtest::TempDir dir;
  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd;
  EmbeddingTable t(16);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> v(16);
    for (auto& x : v) x = nd(gen) * 1e-3;
    t.insert("spk" + std::to_string(i), v);
  }
  write_embeddings(dir / "e.txt", t);
  EXPECT_EQ(load_embeddings(dir / "e.txt"), t);
}

TEST(Cosine, Examples) {
  EmbeddingTable t;
  t.insert("a", {1, 2, 3});
  t.insert("b", {1, 2, 3});
  t.insert("c", {-3, 0, 1});
  t.insert("z", {0, 0, 0});
  EXPECT_DOUBLE_EQ(cosine_score(t, pair("a", "b", true)), 1.0);
  EXPECT_DOUBLE_EQ(cosine_score(t, pair("a", "c", false)), 0.0);
  EXPECT_THROW(cosine_score(t, pair("a", "z", false)), ZeroVector);
  EXPECT_THROW(cosine_score(t, pair("a", "q", false)), MissingEmbedding);
}

TEST(Cosine, MatchesExtendedPrecisionReference) {
  std::mt19937_64 gen(64);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> a(64), b(64);
    for (auto& x : a) x = nd(gen);
    for (auto& x : b) x = nd(gen) + (trial % 2 ? 0.5 * a[&x - b.data()] : 0.0);
    EXPECT_NEAR(cosine(a, b), reference_cosine(a, b), 1e-12);
  }
}

TEST(Cosine, ScaleInvariance) {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  EmbeddingTable t, scaled;
  std::vector<TrialPair> pairs;
  for (int i = 0; i < 30; ++i) {
    std::vector<double> v(32);
    for (auto& x : v) x = nd(gen);
    t.insert(std::to_string(i), v);
    const double k = scale(gen);
    for (auto& x : v) x *= k;
    scaled.insert(std::to_string(i), v);
    if (i > 0) pairs.push_back(pair(std::to_string(i - 1), std::to_string(i), i % 2 == 0));
  }
  for (const auto& p : pairs) EXPECT_NEAR(cosine_score(t, p), cosine_score(scaled, p), 1e-12);
  for (double thr : {-0.2, 0.0, 0.1}) {
    const auto a = threshold_predictions(t, pairs, thr);
    const auto b = threshold_predictions(scaled, pairs, thr);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const double s = cosine_score(t, pairs[i]);
      if (std::abs(s - thr) > 1e-9) {
        EXPECT_EQ(a[i].same_speaker, b[i].same_speaker);
      }
    }
  }
}

TEST(Calibration, Examples) {
  EXPECT_DOUBLE_EQ(calibrate_threshold({{0.9, true}, {0.8, true}, {0.1, false}, {0.2, false}}), 0.5);
  const std::vector<ScoredTrial> overlap = {{0.6, true}, {0.2, true}, {0.4, false}, {0.8, false}};
  EXPECT_DOUBLE_EQ(calibrate_threshold(overlap), svtest::brute_force_eer(overlap).threshold);
  EXPECT_THROW(calibrate_threshold({{0.3, true}}), DegenerateLabels);
}

TEST(Calibration, ThresholdBalancesErrorsOnDev) {
  std::mt19937_64 gen(21);
  std::normal_distribution<double> nd;
  for (int inst = 0; inst < 50; ++inst) {
    std::vector<ScoredTrial> dev;
    for (int i = 0; i < 400; ++i) dev.push_back({nd(gen) + (i % 2 ? 1.5 : 0.0), i % 2 == 1});
    const double thr = calibrate_threshold(dev);
    double fa = 0, fr = 0;
    for (const auto& t : dev) {
      if (t.target && t.score < thr) ++fr;
      if (!t.target && t.score >= thr) ++fa;
    }
    // Rates at the interpolated threshold straddle the EER within one trial.
    EXPECT_LE(std::abs(fa - fr), 2.0) << inst;
  }
}

TEST(CascadedTd, MatchesRuleOracle) {
  std::mt19937_64 gen(40);
  std::normal_distribution<double> nd;
  const auto& sentences = svtest::transcript_sentences();
  EmbeddingTable t;
  std::unordered_map<std::string, std::string> hyp;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> v(8);
    for (auto& x : v) x = nd(gen);
    t.insert("u" + std::to_string(i), v);
    std::string h = sentences[i % 6];
    if (i % 3 == 0) h = "  " + h + "!!";
    if (i % 4 == 0) h[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(h[0])));
    hyp["u" + std::to_string(i)] = h;
  }
  std::vector<TrialPair> pairs;
  for (int k = 0; k < 40; ++k) {
    auto p = pair("u" + std::to_string(gen() % 20), "u" + std::to_string(gen() % 20), gen() % 2);
    p.target_text = sentences[gen() % 6];
    p.label_content_match = false;
    pairs.push_back(p);
  }
  const double thr = 0.1;
  const auto preds = cascaded_td(t, hyp, pairs, thr);
  ASSERT_EQ(preds.size(), 40u);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double s = reference_cosine(t.at(pairs[i].enroll), t.at(pairs[i].test));
    EXPECT_EQ(preds[i].same_speaker, s >= thr ? SpeakerVerdict::same : SpeakerVerdict::different);
    const bool match = oracle_normalize(hyp[pairs[i].test]) == oracle_normalize(*pairs[i].target_text);
    matches += match;
    EXPECT_EQ(preds[i].content_match, match ? ContentVerdict::yes : ContentVerdict::no) << i;
  }
  EXPECT_GT(matches, 0u);
  EXPECT_LT(matches, 40u);

  hyp.erase(pairs[0].test);
  EXPECT_THROW(cascaded_td(t, hyp, pairs, thr), MissingTranscript);
}

TEST(CascadedTd, Normalization) {
  EXPECT_EQ(normalize_transcript("  Hello,   World! "), "hello world");
  EXPECT_EQ(normalize_transcript("it's\tfine."), "its fine");
  EXPECT_EQ(normalize_transcript(""), "");
}

TEST(Transcripts, LoadTabSeparated) {
  svtest::TempDir dir;
  util::write_file(dir / "t.tsv", "u1\thello there\nu2\tgood morning, all\n");
  const auto m = load_transcripts(dir / "t.tsv");
  EXPECT_EQ(m.at("u2"), "good morning, all");
  util::write_file(dir / "bad.tsv", "u1 hello\n");
  EXPECT_THROW(load_transcripts(dir / "bad.tsv"), IoError);
}
