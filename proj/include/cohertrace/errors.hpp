#pragma once

#include <stdexcept>
#include <string>

namespace cohertrace {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// corpus_io
class MissingField : public Error {
 public:
  using Error::Error;
};
class RatingOutOfRange : public Error {
 public:
  RatingOutOfRange(std::string transcript_id, const std::string& detail)
      : Error("rating out of range for '" + transcript_id + "': " + detail),
        transcript_id_(std::move(transcript_id)) {}
  const std::string& transcript_id() const noexcept { return transcript_id_; }

 private:
  std::string transcript_id_;
};
class DuplicateId : public Error {
 public:
  using Error::Error;
};
class EmptyCorpus : public Error {
 public:
  using Error::Error;
};
class ItemOutOfRange : public Error {
 public:
  ItemOutOfRange(std::string item, const std::string& detail)
      : Error(item + ": " + detail), item_(std::move(item)) {}
  const std::string& item() const noexcept { return item_; }

 private:
  std::string item_;
};
class SchemeMismatch : public Error {
 public:
  using Error::Error;
};
class InvalidTranscript : public Error {
 public:
  using Error::Error;
};

// perplexity
class NoScorableTokens : public Error {
 public:
  using Error::Error;
};
class EmptyAfterTokenization : public Error {
 public:
  using Error::Error;
};
class InvalidSeries : public Error {
 public:
  using Error::Error;
};

/// Failure reported by, or while talking to, a log-probability backend.
/// The transcript id is attached by the scoring layer once it is known.
class BackendError : public Error {
 public:
  enum class Kind { Transport, Protocol, ServerReported, Local };

  BackendError(Kind kind, std::string message)
      : Error(message), kind_(kind), message_(std::move(message)) {
    rebuild();
  }

  Kind kind() const noexcept { return kind_; }
  bool retryable() const noexcept { return kind_ == Kind::Transport; }
  const std::string& transcript_id() const noexcept { return transcript_id_; }
  void set_transcript_id(std::string id) {
    transcript_id_ = std::move(id);
    rebuild();
  }
  const char* what() const noexcept override { return full_.c_str(); }

 private:
  void rebuild() {
    static constexpr const char* kNames[] = {"transport", "protocol", "server", "backend"};
    full_ = std::string(kNames[static_cast<int>(kind_)]) + " error";
    if (!transcript_id_.empty()) full_ += " (transcript '" + transcript_id_ + "')";
    full_ += ": " + message_;
  }

  Kind kind_;
  std::string message_;
  std::string transcript_id_;
  std::string full_;
};

class CacheIO : public Error {
 public:
  using Error::Error;
};

// stats
class LengthMismatch : public Error {
 public:
  using Error::Error;
};
class DegenerateInput : public Error {
 public:
  using Error::Error;
};
class UndefinedKappa : public Error {
 public:
  using Error::Error;
};
class MixedWindowSizes : public Error {
 public:
  using Error::Error;
};

// synth_corpus
class TooFewTopics : public Error {
 public:
  using Error::Error;
};

// sweep
class ConfigError : public Error {
 public:
  using Error::Error;
};
class UnknownWindow : public Error {
 public:
  using Error::Error;
};

}  // namespace cohertrace
