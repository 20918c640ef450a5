#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "svbench/provenance.hpp"
#include "svbench/random.hpp"
#include "svbench/util.hpp"

using namespace svbench;

TEST(Percent, RoundsHalfAwayFromZero) {
  EXPECT_EQ(util::percent_2dp(702, 1000), "70.20");
  EXPECT_EQ(util::percent_2dp(1, 3), "33.33");
  EXPECT_EQ(util::percent_2dp(2, 3), "66.67");
  EXPECT_EQ(util::percent_2dp(1, 80000), "0.00");   // 0.00125 %
  EXPECT_EQ(util::percent_2dp(1, 40000), "0.00");   // 0.0025 % rounds down below the half
  EXPECT_EQ(util::percent_2dp(1, 20000), "0.01");   // 0.005 % is exactly half
  EXPECT_EQ(util::percent_2dp(0, 7), "0.00");
  EXPECT_EQ(util::percent_2dp(7, 7), "100.00");
  EXPECT_EQ(util::percent_2dp(0.702), "70.20");
  EXPECT_EQ(util::percent_2dp(1.0), "100.00");
}

TEST(Percent, MatchesRationalOracle) {
  // 100 * k / n to two decimals: compare hundredths against floor((10000k + n/2) / n)
  // computed by a different route (long division with remainder check).
  for (std::uint64_t n = 1; n <= 300; ++n)
    for (std::uint64_t k = 0; k <= n; ++k) {
      const std::uint64_t q = 10000 * k / n;
      const std::uint64_t r = 10000 * k % n;
      const std::uint64_t hundredths = q + (2 * r >= n ? 1 : 0);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%llu.%02llu", (unsigned long long)(hundredths / 100),
                    (unsigned long long)(hundredths % 100));
      ASSERT_EQ(util::percent_2dp(k, n), buf) << k << "/" << n;
    }
}

TEST(Words, NormalizeAndSplit) {
  EXPECT_EQ(util::normalize_words("  Speaker: YES,\tContent:no!! "), "speaker yes content no");
  EXPECT_EQ(util::normalize_words(""), "");
  EXPECT_EQ(util::normalize_words("caf\xC3\xA9"), "caf");
  const auto w = util::split_words("a bb ccc");
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[2], "ccc");
  EXPECT_TRUE(util::split_words("").empty());
}

TEST(Lines, NonblankWithNumbers) {
  const auto lines = util::nonblank_lines("a\r\n\n  \nb\n");
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0].first, 1u);
  EXPECT_EQ(lines[0].second, "a");
  EXPECT_EQ(lines[1].first, 4u);
}

TEST(Base64, KnownVectors) {
  const std::map<std::string, std::string> rfc = {
      {"", ""}, {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"}, {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="},
      {"foobar", "Zm9vYmFy"}};
  for (auto& [plain, enc] : rfc) {
    EXPECT_EQ(util::base64_encode(plain), enc);
    EXPECT_EQ(util::base64_decode(enc), plain);
  }
}

TEST(Base64, RejectsMalformed) {
  for (const char* bad : {"Zg=", "Z===", "Zm9v!", "Zg==Zg==", "Z=g=", "Zm9v\n"})
    EXPECT_FALSE(util::base64_decode(bad).has_value()) << bad;
}

TEST(Base64, RoundTripRandomBytes) {
  std::mt19937 gen(3);
  for (int len = 0; len < 200; ++len) {
    std::string s(static_cast<std::size_t>(len), '\0');
    for (auto& c : s) c = static_cast<char>(gen() & 0xff);
    ASSERT_EQ(util::base64_decode(util::base64_encode(s)), s);
  }
}

TEST(Fnv, KnownValues) {
  EXPECT_EQ(util::fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(util::fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Rng, ReproducibleAndSeedSensitive) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    (void)c.next();
  }
  EXPECT_NE(Rng(42).next(), Rng(43).next());
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}

TEST(Rng, MatchesStandardEngineSequence) {
  // The engine itself is pinned by the standard: the 10000th output of a
  // default-seeded mt19937_64 is 9981545732273789042.
  Rng r(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = r.next();
  EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, BelowIsUniform) {
  Rng r(7);
  constexpr int kBins = 6;
  constexpr int kDraws = 60000;
  int counts[kBins] = {};
  for (int i = 0; i < kDraws; ++i) ++counts[r.below(kBins)];
  double chi2 = 0;
  for (int c : counts) chi2 += (c - kDraws / kBins) * (c - kDraws / kBins) / double(kDraws / kBins);
  EXPECT_LT(chi2, 20.5);  // chi-square, 5 dof, p = 0.001
}

TEST(Rng, SamplePrefixIsASubset) {
  Rng r(9);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  r.sample_prefix(v, 10);
  ASSERT_EQ(v.size(), 10u);
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 10u);
}

TEST(Provenance, LineRoundTrip) {
  const auto p = Provenance::of(json{{"b", 1}, {"a", 2}}, 7);
  const auto parsed = parse_json_lines(p.line() + "{\"x\":1}\n\n", "test");
  ASSERT_TRUE(parsed.meta.has_value());
  EXPECT_EQ(parsed.meta->seed, 7u);
  EXPECT_EQ(parsed.meta->config_hash, p.config_hash);
  ASSERT_EQ(parsed.rows.size(), 1u);
  EXPECT_EQ(parsed.rows[0].first, 2u);
  // Key order does not change the hash.
  EXPECT_EQ(Provenance::of(json{{"a", 2}, {"b", 1}}, 7).config_hash, p.config_hash);
}

TEST(Provenance, InvalidJsonLineIsAnIoError) {
  EXPECT_THROW(parse_json_lines("{\"a\":1}\nnot json\n", "test"), IoError);
}
