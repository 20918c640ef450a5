#pragma once

// Shared test fixtures: synthetic corpora with generator-side bookkeeping,
// audio fixtures, and scratch directories.

#include <stdlib.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "svbench/audio.hpp"
#include "svbench/manifest.hpp"

namespace svtest {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string templ = (fs::temp_directory_path() / "svbench-XXXXXX").string();
    if (!mkdtemp(templ.data())) throw std::runtime_error("mkdtemp failed");
    path_ = templ;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

struct CorpusOptions {
  int speakers = 20;
  int utts_per_speaker = 10;
  std::uint32_t seed = 1;
  bool with_transcripts = true;
  int transcript_pool = 24;
  int sample_rate_hz = 8000;
};

/// Generated corpus plus the ground truth the generator used.
struct SyntheticCorpus {
  std::vector<svbench::UtteranceRecord> records;
  std::map<std::string, std::vector<std::string>> utterances_of;  // speaker -> utterance ids, generation order
  std::map<std::string, std::string> speaker_of;
  int sample_rate_hz = 8000;

  svbench::Manifest manifest(const fs::path& base_dir = {}) const {
    return svbench::Manifest(records, "synthetic", base_dir);
  }
};

inline const std::vector<std::string>& transcript_sentences() {
  static const std::vector<std::string> s = [] {
    const char* subjects[] = {"the quick fox", "a quiet river", "my old friend", "the morning train",
                              "every small bird", "that red kite"};
    const char* verbs[] = {"crosses the field", "waits by the door", "sings at dawn", "turns to the left"};
    std::vector<std::string> out;
    for (auto* a : subjects)
      for (auto* b : verbs) out.push_back(std::string(a) + " " + b);
    return out;
  }();
  return s;
}

/// Every speaker mixes languages, devices, distances, scenes, ages spread
/// over a 12-year window, and durations from all three buckets, so each
/// dimension has both positive and negative candidates.
inline SyntheticCorpus make_corpus(const CorpusOptions& o = {}) {
  static const char* kLanguages[] = {"en", "zh", "fr"};
  static const char* kDialects[] = {"north", "south", "east", "west"};
  static const char* kDevices[] = {"phone", "laptop", "headset"};
  static const char* kDistances[] = {"near", "mid", "far"};
  static const char* kScenes[] = {"studio", "street", "office", "home", "car"};
  static const double kDurations[] = {0.6, 1.2, 1.9, 2.0, 3.5, 6.0, 6.5, 8.0};

  std::mt19937 gen(o.seed);
  auto pick = [&gen](int n) { return std::uniform_int_distribution<int>(0, n - 1)(gen); };
  const auto& sentences = transcript_sentences();
  const int pool = std::min<int>(o.transcript_pool, static_cast<int>(sentences.size()));

  SyntheticCorpus c;
  c.sample_rate_hz = o.sample_rate_hz;
  for (int s = 0; s < o.speakers; ++s) {
    char spk[16];
    std::snprintf(spk, sizeof spk, "spk%04d", s);
    const auto gender = s % 2 == 0 ? svbench::Gender::male : svbench::Gender::female;
    const int base_age = 20 + pick(40);
    const int lang_a = pick(3);
    const int lang_b = (lang_a + 1 + pick(2)) % 3;
    const std::string dialect = kDialects[pick(4)];
    for (int u = 0; u < o.utts_per_speaker; ++u) {
      char utt[32];
      std::snprintf(utt, sizeof utt, "%s-u%03d", spk, u);
      svbench::UtteranceRecord r;
      r.utterance_id = utt;
      r.speaker_id = spk;
      r.audio_path = std::string("wav/") + utt + ".wav";
      // Round-robin over the three buckets keeps every speaker in each one.
      const int bucket = u % 3;
      const double* choices = bucket == 0 ? kDurations : bucket == 1 ? kDurations + 3 : kDurations + 6;
      const int n_choices = bucket == 0 ? 3 : bucket == 1 ? 3 : 2;
      r.duration_s = choices[pick(n_choices)];
      r.gender = gender;
      r.age_years = base_age + 6 * ((u / 3) % 3);
      r.language = kLanguages[u % 2 == 0 ? lang_a : lang_b];
      r.dialect = dialect;
      r.device = kDevices[pick(3)];
      r.distance = kDistances[pick(3)];
      r.scene = kScenes[pick(5)];
      if (o.with_transcripts) r.transcript = sentences[static_cast<std::size_t>(pick(pool))];
      c.utterances_of[spk].push_back(r.utterance_id);
      c.speaker_of[r.utterance_id] = spk;
      c.records.push_back(std::move(r));
    }
  }
  return c;
}

inline svbench::Waveform sine(double freq_hz, double seconds, int rate, double amplitude = 12000.0,
                              double phase = 0.0) {
  svbench::Waveform w;
  w.sample_rate_hz = rate;
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = static_cast<std::int16_t>(
        std::lround(amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / rate + phase)));
  return w;
}

/// Writes one WAV per record (tone pitch keyed by speaker) under `dir`, and a
/// JSONL manifest at dir/manifest.jsonl. Returns the manifest path.
inline fs::path write_corpus(const SyntheticCorpus& c, const fs::path& dir) {
  fs::create_directories(dir / "wav");
  int k = 0;
  std::map<std::string, double> pitch;
  for (auto& [spk, _] : c.utterances_of) pitch[spk] = 110.0 + 7.0 * (k++ % 60);
  for (const auto& r : c.records)
    svbench::write_wav(dir / r.audio_path, sine(pitch[r.speaker_id], r.duration_s, c.sample_rate_hz, 8000.0));
  const auto path = dir / "manifest.jsonl";
  svbench::write_manifest(c.manifest(dir), path, svbench::ManifestFormat::jsonl);
  return path;
}

#ifdef SVBENCH_CLI
/// Runs the sv-bench binary with `args` (already shell-quoted where needed).
/// Returns the exit status, or -1 if it did not exit normally.
inline int run_cli(const std::string& args, const fs::path& log = {}) {
  std::ostringstream cmd;
  cmd << "'" << SVBENCH_CLI << "' " << args;
  if (!log.empty()) cmd << " >'" << log.string() << "' 2>&1";
  else cmd << " >/dev/null 2>&1";
  const int status = std::system(cmd.str().c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

}  // namespace svtest
