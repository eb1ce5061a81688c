#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cohertrace/backend.hpp"
#include "cohertrace/corpus_io.hpp"
#include "cohertrace/logprob_series.hpp"

namespace cohertrace {

inline constexpr std::size_t kDefaultWindowSizes[] = {8, 16, 32, 64, 128};

/// A sliding window of `size` tokens moved one token at a time.
class WindowSpec {
 public:
  /// Throws Error when size < 2.
  explicit WindowSpec(std::size_t size);

  std::size_t size() const noexcept { return size_; }
  static constexpr std::size_t stride() noexcept { return 1; }

  auto operator<=>(const WindowSpec&) const = default;

 private:
  std::size_t size_;
};

std::vector<WindowSpec> window_specs(std::span<const std::size_t> sizes);

/// Half-open token range [begin, end).
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const noexcept { return end - begin; }
  bool operator==(const TokenSpan&) const = default;
};

struct WindowProfile {
  WindowSpec window{2};
  std::vector<double> values;
  std::vector<TokenSpan> spans;
  bool fallback_global = false;
};

enum class Aggregate { Max, Mean };

struct WindowAggregate {
  double max_ppl = 0.0;
  double mean_ppl = 0.0;
  std::size_t n_windows = 0;
  bool fallback_global = false;
};

struct TranscriptScore {
  std::string transcript_id;
  std::string backend_id;
  double global_ppl = 0.0;
  std::map<WindowSpec, WindowAggregate> per_window;
};

/// exp(-mean of the defined logprobs). Throws NoScorableTokens when there are
/// none.
double perplexity_from_logprobs(const LogProbSeries& series);
double perplexity_from_logprobs(std::span<const double> defined_logprobs);

/// Window spans for a sequence of `n_tokens`, or std::nullopt when the
/// sequence is shorter than the window (the caller falls back to the global
/// perplexity).
std::optional<std::vector<TokenSpan>> window_positions(std::size_t n_tokens, WindowSpec spec);

/// Bounds the number of concurrently scored windows (and therefore the number
/// of in-flight backend requests). 1 runs serially.
struct ParallelOptions {
  int max_in_flight = 1;
};

/// Normalizes and tokenizes `text` with the backend. Throws
/// EmptyAfterTokenization if nothing remains.
std::vector<std::string> tokenize_for_scoring(std::string_view text, const LogProbBackend& backend);

double global_perplexity(std::string_view text, const LogProbBackend& backend);
double global_perplexity_tokens(std::span<const std::string> tokens, const LogProbBackend& backend);

WindowProfile sliding_window_profile(std::string_view text, const LogProbBackend& backend, WindowSpec spec,
                                     ParallelOptions options = {});

/// Profile over an already tokenized transcript. `global_ppl`, when given, is
/// used as the fallback value instead of rescoring the whole sequence.
WindowProfile sliding_window_profile_tokens(std::span<const std::string> tokens, const LogProbBackend& backend,
                                            WindowSpec spec, ParallelOptions options = {},
                                            std::optional<double> global_ppl = std::nullopt);

double aggregate_profile(const WindowProfile& profile, Aggregate mode);

struct ScoredTranscript {
  TranscriptScore score;
  /// Only the window sizes asked for in `keep_profiles`.
  std::map<WindowSpec, WindowProfile> profiles;
};

/// Global perplexity plus max/mean window aggregates for every spec. Backend
/// errors are rethrown with the transcript id attached.
TranscriptScore score_transcript(const Transcript& transcript, const LogProbBackend& backend,
                                 std::span<const WindowSpec> specs, ParallelOptions options = {});

ScoredTranscript score_transcript_with_profiles(const Transcript& transcript, const LogProbBackend& backend,
                                                std::span<const WindowSpec> specs,
                                                std::span<const WindowSpec> keep_profiles,
                                                ParallelOptions options = {});

}  // namespace cohertrace
