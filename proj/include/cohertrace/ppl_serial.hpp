#pragma once

// Straight-line reference implementations of the window scoring kernels.
// They share no code with the parallel path beyond the backend call and are
// used by the tests and the benchmark as the baseline.

#include <span>
#include <string>

#include "cohertrace/ppl.hpp"

namespace cohertrace::serial {

double perplexity(const LogProbSeries& series);

WindowProfile sliding_window_profile_tokens(std::span<const std::string> tokens, const LogProbBackend& backend,
                                            WindowSpec spec);

TranscriptScore score_transcript(const Transcript& transcript, const LogProbBackend& backend,
                                 std::span<const WindowSpec> specs);

}  // namespace cohertrace::serial
