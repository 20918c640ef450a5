#pragma once

// Waveform I/O (RIFF WAV, 16-bit PCM, mono) and the four pair layouts:
// separate, concat, concat with silence, and overlay mix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "svbench/errors.hpp"
#include "svbench/manifest.hpp"
#include "svbench/pair_sampler.hpp"
#include "svbench/util.hpp"

namespace svbench {

struct Waveform {
  std::vector<std::int16_t> samples;
  int sample_rate_hz = 16000;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }

  friend bool operator==(const Waveform&, const Waveform&) = default;
};

enum class Strategy { separate, concat, concat_silence, mix };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::separate: return "separate";
    case Strategy::concat: return "concat";
    case Strategy::concat_silence: return "concat_silence";
    case Strategy::mix: return "mix";
  }
  return "separate";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  for (auto v : {Strategy::separate, Strategy::concat, Strategy::concat_silence, Strategy::mix})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

/// Concat-style strategies present one combined utterance and ask for a speaker count.
inline bool is_concat_style(Strategy s) { return s == Strategy::concat || s == Strategy::concat_silence; }

// ------------------------------------------------------------------ WAV codec

namespace detail {

inline std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}
inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

inline Waveform decode_wav(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw CorruptHeader("missing RIFF/WAVE signature");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const unsigned char* chunk = p + pos;
    const std::uint32_t size = detail::le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > n) throw CorruptHeader("truncated fmt chunk");
      format = detail::le16(p + body);
      channels = detail::le16(p + body + 2);
      rate = detail::le32(p + body + 4);
      bits = detail::le16(p + body + 14);
      if (format == 0xFFFE && size >= 26) format = detail::le16(p + body + 24);  // extensible: sub-format GUID
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw CorruptHeader("data chunk before fmt chunk");
      if (body + size > n) throw CorruptHeader("truncated data chunk");
      data = p + body;
      data_size = size;
      break;
    }
    if (body + size > n) throw CorruptHeader("truncated chunk");
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw CorruptHeader("missing fmt chunk");
  if (channels != 1) throw NotMono(channels);
  if (format != 1) throw UnsupportedFormat("only PCM WAV is supported (format tag " + std::to_string(format) + ")");
  if (bits != 16) throw UnsupportedFormat("only 16-bit samples are supported, got " + std::to_string(bits));
  if (rate == 0 || rate > static_cast<std::uint32_t>(std::numeric_limits<int>::max()))
    throw CorruptHeader("invalid sample rate");
  if (data == nullptr) throw CorruptHeader("missing data chunk");
  if (data_size < 2) throw UnsupportedFormat("audio has no samples");

  Waveform w;
  w.sample_rate_hz = static_cast<int>(rate);
  w.samples.resize(data_size / 2);
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = static_cast<std::int16_t>(detail::le16(data + 2 * i));
  return w;
}

inline std::string encode_wav(const Waveform& w) {
  if (w.sample_rate_hz <= 0) throw InvalidArgument("sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put32(out, 16);
  detail::put16(out, 1);
  detail::put16(out, 1);
  detail::put32(out, static_cast<std::uint32_t>(w.sample_rate_hz));
  detail::put32(out, static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  detail::put16(out, 2);
  detail::put16(out, 16);
  out += "data";
  detail::put32(out, data_bytes);
  for (auto s : w.samples) detail::put16(out, static_cast<std::uint16_t>(s));
  return out;
}

inline Waveform read_wav(const std::filesystem::path& path) { return decode_wav(util::read_file(path)); }

inline void write_wav(const std::filesystem::path& path, const Waveform& w) { util::write_file(path, encode_wav(w)); }

// ------------------------------------------------------------------ assembly

/// a1, then round(silence_s * rate) zero samples, then a2.
inline Waveform concat(const Waveform& a1, const Waveform& a2, double silence_s = 0.0) {
  if (a1.sample_rate_hz != a2.sample_rate_hz) throw SampleRateMismatch(a1.sample_rate_hz, a2.sample_rate_hz);
  if (!std::isfinite(silence_s) || silence_s < 0) throw InvalidArgument("silence duration must be >= 0");
  const auto gap = static_cast<std::size_t>(std::llround(silence_s * a1.sample_rate_hz));
  Waveform out;
  out.sample_rate_hz = a1.sample_rate_hz;
  out.samples.reserve(a1.size() + gap + a2.size());
  out.samples.insert(out.samples.end(), a1.samples.begin(), a1.samples.end());
  out.samples.insert(out.samples.end(), gap, 0);
  out.samples.insert(out.samples.end(), a2.samples.begin(), a2.samples.end());
  return out;
}

/// Sample-wise average of the two signals, both starting at offset 0; the
/// shorter one is zero-padded at the tail. Averaging cannot clip.
inline Waveform mix(const Waveform& a1, const Waveform& a2) {
  if (a1.sample_rate_hz != a2.sample_rate_hz) throw SampleRateMismatch(a1.sample_rate_hz, a2.sample_rate_hz);
  Waveform out;
  out.sample_rate_hz = a1.sample_rate_hz;
  out.samples.resize(std::max(a1.size(), a2.size()));
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const int s1 = i < a1.size() ? a1.samples[i] : 0;
    const int s2 = i < a2.size() ? a2.samples[i] : 0;
    const int sum = s1 + s2;
    int avg = sum / 2;
    if (sum % 2 != 0) avg += sum > 0 ? 1 : -1;  // half away from zero
    out.samples[i] = static_cast<std::int16_t>(avg);
  }
  return out;
}

struct AssembledAudio {
  Strategy strategy = Strategy::separate;
  std::vector<Waveform> parts;  // two for separate, one otherwise
  std::string enroll_id;
  std::string test_id;
};

inline AssembledAudio assemble_waveforms(const Waveform& a1, const Waveform& a2, Strategy strategy,
                                         double silence_s = 1.0) {
  AssembledAudio out;
  out.strategy = strategy;
  switch (strategy) {
    case Strategy::separate:
      if (a1.sample_rate_hz != a2.sample_rate_hz) throw SampleRateMismatch(a1.sample_rate_hz, a2.sample_rate_hz);
      out.parts = {a1, a2};
      break;
    case Strategy::concat: out.parts = {concat(a1, a2, 0.0)}; break;
    case Strategy::concat_silence: out.parts = {concat(a1, a2, silence_s)}; break;
    case Strategy::mix: out.parts = {mix(a1, a2)}; break;
  }
  return out;
}

struct AssemblyOptions {
  double silence_s = 1.0;
  /// Decoded length must match the manifest's duration_s within this many
  /// seconds; negative disables the check.
  double duration_tolerance_s = 0.1;
};

inline Waveform load_utterance(const Manifest& m, std::string_view id, double tolerance_s) {
  const auto& rec = m.at(id);
  Waveform w = read_wav(m.audio_path(rec));
  if (tolerance_s >= 0 && std::abs(w.duration_s() - rec.duration_s) > tolerance_s)
    throw DurationMismatch("utterance '" + rec.utterance_id + "': manifest says " + std::to_string(rec.duration_s) +
                           " s, audio has " + std::to_string(w.duration_s()) + " s");
  return w;
}

inline AssembledAudio assemble(const TrialPair& pair, Strategy strategy, const Manifest& m,
                               const AssemblyOptions& opts = {}) {
  const Waveform a1 = load_utterance(m, pair.enroll, opts.duration_tolerance_s);
  const Waveform a2 = load_utterance(m, pair.test, opts.duration_tolerance_s);
  AssembledAudio out = assemble_waveforms(a1, a2, strategy, opts.silence_s);
  out.enroll_id = pair.enroll;
  out.test_id = pair.test;
  return out;
}

/// Stable file names for the assembled audio of the pair at `index`:
/// "000012.wav" for single-part layouts, "000012_1.wav"/"000012_2.wav" for separate.
inline std::vector<std::string> assembled_file_names(std::size_t index, Strategy strategy) {
  const std::string stem = util::zero_pad(index, 6);
  if (strategy == Strategy::separate) return {stem + "_1.wav", stem + "_2.wav"};
  return {stem + ".wav"};
}

}  // namespace svbench
