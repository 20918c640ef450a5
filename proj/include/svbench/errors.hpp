#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace svbench {

/// Base of every error raised by the library. Catch this at stage boundaries.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------- manifest

class DuplicateId : public Error {
 public:
  explicit DuplicateId(std::string id)
      : Error("duplicate utterance_id '" + id + "'"), id_(std::move(id)) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class MissingField : public Error {
 public:
  MissingField(std::size_t row, std::string field)
      : Error("row " + std::to_string(row) + ": missing required field '" + field + "'"),
        row_(row),
        field_(std::move(field)) {}
  std::size_t row() const { return row_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t row_;
  std::string field_;
};

class MalformedRow : public Error {
 public:
  MalformedRow(std::size_t row, const std::string& detail)
      : Error("row " + std::to_string(row) + ": " + detail), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

// ---------------------------------------------------------------- sampling

class InsufficientCandidates : public Error {
 public:
  InsufficientCandidates(std::string dimension, std::size_t needed, std::size_t available)
      : Error("dimension '" + dimension + "': needed " + std::to_string(needed) +
              " pairs but only " + std::to_string(available) + " available"),
        dimension_(std::move(dimension)),
        needed_(needed),
        available_(available) {}
  const std::string& dimension() const { return dimension_; }
  std::size_t needed() const { return needed_; }
  std::size_t available() const { return available_; }

 private:
  std::string dimension_;
  std::size_t needed_;
  std::size_t available_;
};

class MissingAttribute : public Error {
 public:
  explicit MissingAttribute(std::string what)
      : Error("required attribute unset on every record: " + what), what_(std::move(what)) {}
  const std::string& attribute() const { return what_; }

 private:
  std::string what_;
};

// ---------------------------------------------------------------- audio

class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

class NotMono : public Error {
 public:
  explicit NotMono(int channels)
      : Error("expected mono audio, got " + std::to_string(channels) + " channels") {}
};

class CorruptHeader : public Error {
 public:
  using Error::Error;
};

class SampleRateMismatch : public Error {
 public:
  SampleRateMismatch(int r1, int r2)
      : Error("sample rate mismatch: " + std::to_string(r1) + " Hz vs " + std::to_string(r2) +
              " Hz"),
        r1_(r1),
        r2_(r2) {}
  int first() const { return r1_; }
  int second() const { return r2_; }

 private:
  int r1_;
  int r2_;
};

class DurationMismatch : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------- prompts / inference

class MissingTargetText : public Error {
 public:
  MissingTargetText() : Error("text-dependent prompt requires a target_text") {}
};

class EndpointUnreachable : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------- metrics / baseline

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class DegenerateLabels : public Error {
 public:
  DegenerateLabels() : Error("scores need at least one positive and one negative trial") {}
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(const std::string& id, std::size_t got, std::size_t expected)
      : Error("embedding '" + id + "' has " + std::to_string(got) + " components, expected " +
              std::to_string(expected)) {}
};

class NonFiniteValue : public Error {
 public:
  explicit NonFiniteValue(const std::string& id)
      : Error("embedding '" + id + "' has a non-finite component") {}
};

class MissingEmbedding : public Error {
 public:
  explicit MissingEmbedding(const std::string& id) : Error("no embedding for '" + id + "'") {}
};

class ZeroVector : public Error {
 public:
  explicit ZeroVector(const std::string& id) : Error("embedding '" + id + "' is all zeros") {}
};

class MissingTranscript : public Error {
 public:
  explicit MissingTranscript(const std::string& id) : Error("no transcript for '" + id + "'") {}
};

// ---------------------------------------------------------------- pipeline

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Wraps a failure with the name of the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace svbench
