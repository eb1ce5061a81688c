#include "cohertrace/ppl_serial.hpp"

#include <cmath>

#include "cohertrace/errors.hpp"

namespace cohertrace::serial {

double perplexity(const LogProbSeries& series) {
  long double sum = 0.0L;
  std::size_t count = 0;
  for (std::size_t i = series.undefined_prefix; i < series.logprobs.size(); ++i) {
    sum += static_cast<long double>(series.logprobs[i]);
    ++count;
  }
  if (count == 0) throw NoScorableTokens("no defined logprobs to score");
  return static_cast<double>(std::exp(-(sum / static_cast<long double>(count))));
}

WindowProfile sliding_window_profile_tokens(std::span<const std::string> tokens, const LogProbBackend& backend,
                                            WindowSpec spec) {
  WindowProfile profile;
  profile.window = spec;
  const std::size_t n = tokens.size();
  const std::size_t w = spec.size();
  if (n < w) {
    profile.fallback_global = true;
    profile.values.push_back(serial::perplexity(backend.score(tokens)));
    profile.spans.push_back({0, n});
    return profile;
  }
  for (std::size_t start = 0; start + w <= n; ++start) {
    profile.values.push_back(serial::perplexity(backend.score(tokens.subspan(start, w))));
    profile.spans.push_back({start, start + w});
  }
  return profile;
}

TranscriptScore score_transcript(const Transcript& transcript, const LogProbBackend& backend,
                                 std::span<const WindowSpec> specs) {
  TranscriptScore score;
  score.transcript_id = transcript.id;
  score.backend_id = backend.backend_id();
  const auto tokens = backend.tokenize(normalize_text(transcript.text));
  if (tokens.empty()) throw EmptyAfterTokenization("transcript '" + transcript.id + "' has no tokens");
  score.global_ppl = serial::perplexity(backend.score(tokens));
  for (const auto& spec : specs) {
    const auto profile = serial::sliding_window_profile_tokens(tokens, backend, spec);
    WindowAggregate agg;
    agg.n_windows = profile.values.size();
    agg.fallback_global = profile.fallback_global;
    agg.max_ppl = profile.values.front();
    double sum = 0.0;
    for (double v : profile.values) {
      if (v > agg.max_ppl) agg.max_ppl = v;
      sum += v;
    }
    agg.mean_ppl = sum / static_cast<double>(profile.values.size());
    score.per_window[spec] = agg;
  }
  return score;
}

}  // namespace cohertrace::serial
