#include "cohertrace/ppl.hpp"

#include <algorithm>
#include <cmath>

#include "cohertrace/errors.hpp"
#include "cohertrace/parallel.hpp"

namespace cohertrace {

void validate_series(const LogProbSeries& series) {
  if (series.logprobs.size() != series.tokens.size()) {
    throw InvalidSeries("logprobs length " + std::to_string(series.logprobs.size()) + " != tokens length " +
                        std::to_string(series.tokens.size()));
  }
  if (series.undefined_prefix > series.tokens.size()) throw InvalidSeries("undefined prefix longer than series");
  for (std::size_t i = 0; i < series.logprobs.size(); ++i) {
    const double lp = series.logprobs[i];
    if (i < series.undefined_prefix) {
      if (!std::isnan(lp)) throw InvalidSeries("undefined entry " + std::to_string(i) + " carries a value");
    } else if (!std::isfinite(lp) && lp != -HUGE_VAL) {
      throw InvalidSeries("logprob " + std::to_string(i) + " is not a number");
    } else if (lp > 0.0) {
      throw InvalidSeries("logprob " + std::to_string(i) + " is positive");
    }
  }
}

WindowSpec::WindowSpec(std::size_t size) : size_(size) {
  if (size < 2) throw Error("window size must be >= 2, got " + std::to_string(size));
}

std::vector<WindowSpec> window_specs(std::span<const std::size_t> sizes) {
  std::vector<WindowSpec> out;
  out.reserve(sizes.size());
  for (auto s : sizes) out.emplace_back(s);
  return out;
}

double perplexity_from_logprobs(std::span<const double> defined_logprobs) {
  if (defined_logprobs.empty()) throw NoScorableTokens("no defined logprobs to score");
  long double sum = 0.0L;
  for (double lp : defined_logprobs) sum += static_cast<long double>(lp);
  return static_cast<double>(std::exp(-(sum / static_cast<long double>(defined_logprobs.size()))));
}

double perplexity_from_logprobs(const LogProbSeries& series) {
  return perplexity_from_logprobs(series.defined());
}

std::optional<std::vector<TokenSpan>> window_positions(std::size_t n_tokens, WindowSpec spec) {
  if (n_tokens < spec.size()) return std::nullopt;
  std::vector<TokenSpan> spans;
  spans.reserve(n_tokens - spec.size() + 1);
  for (std::size_t i = 0; i + spec.size() <= n_tokens; ++i) spans.push_back({i, i + spec.size()});
  return spans;
}

std::vector<std::string> tokenize_for_scoring(std::string_view text, const LogProbBackend& backend) {
  auto tokens = backend.tokenize(normalize_text(text));
  if (tokens.empty()) throw EmptyAfterTokenization("text has no tokens under " + backend.backend_id());
  return tokens;
}

double global_perplexity_tokens(std::span<const std::string> tokens, const LogProbBackend& backend) {
  if (tokens.empty()) throw EmptyAfterTokenization("empty token sequence");
  return perplexity_from_logprobs(backend.score(tokens));
}

double global_perplexity(std::string_view text, const LogProbBackend& backend) {
  const auto tokens = tokenize_for_scoring(text, backend);
  return global_perplexity_tokens(tokens, backend);
}

WindowProfile sliding_window_profile_tokens(std::span<const std::string> tokens, const LogProbBackend& backend,
                                            WindowSpec spec, ParallelOptions options,
                                            std::optional<double> global_ppl) {
  if (tokens.empty()) throw EmptyAfterTokenization("empty token sequence");
  WindowProfile profile;
  profile.window = spec;
  auto spans = window_positions(tokens.size(), spec);
  if (!spans) {
    profile.fallback_global = true;
    profile.values = {global_ppl ? *global_ppl : global_perplexity_tokens(tokens, backend)};
    profile.spans = {{0, tokens.size()}};
    return profile;
  }
  profile.spans = std::move(*spans);
  profile.values.assign(profile.spans.size(), 0.0);
  parallel_for(profile.spans.size(), options.max_in_flight, [&](std::size_t i) {
    const auto& s = profile.spans[i];
    profile.values[i] = perplexity_from_logprobs(backend.score(tokens.subspan(s.begin, s.length())));
  });
  return profile;
}

WindowProfile sliding_window_profile(std::string_view text, const LogProbBackend& backend, WindowSpec spec,
                                     ParallelOptions options) {
  const auto tokens = tokenize_for_scoring(text, backend);
  return sliding_window_profile_tokens(tokens, backend, spec, options);
}

double aggregate_profile(const WindowProfile& profile, Aggregate mode) {
  if (profile.values.empty()) throw Error("aggregate_profile: empty profile");
  if (mode == Aggregate::Max) return *std::max_element(profile.values.begin(), profile.values.end());
  double sum = 0.0;
  for (double v : profile.values) sum += v;
  return sum / static_cast<double>(profile.values.size());
}

ScoredTranscript score_transcript_with_profiles(const Transcript& transcript, const LogProbBackend& backend,
                                                std::span<const WindowSpec> specs,
                                                std::span<const WindowSpec> keep_profiles,
                                                ParallelOptions options) {
  if (specs.empty()) throw Error("score_transcript: no window specs");
  ScoredTranscript out;
  out.score.transcript_id = transcript.id;
  out.score.backend_id = backend.backend_id();
  try {
    const auto tokens = tokenize_for_scoring(transcript.text, backend);
    out.score.global_ppl = global_perplexity_tokens(tokens, backend);
    for (const auto& spec : specs) {
      auto profile = sliding_window_profile_tokens(tokens, backend, spec, options, out.score.global_ppl);
      WindowAggregate agg;
      agg.max_ppl = aggregate_profile(profile, Aggregate::Max);
      agg.mean_ppl = aggregate_profile(profile, Aggregate::Mean);
      agg.n_windows = profile.values.size();
      agg.fallback_global = profile.fallback_global;
      out.score.per_window[spec] = agg;
      if (std::find(keep_profiles.begin(), keep_profiles.end(), spec) != keep_profiles.end()) {
        out.profiles.emplace(spec, std::move(profile));
      }
    }
  } catch (BackendError& e) {
    e.set_transcript_id(transcript.id);
    throw;
  } catch (const NoScorableTokens& e) {
    throw NoScorableTokens("transcript '" + transcript.id + "': " + e.what());
  } catch (const EmptyAfterTokenization& e) {
    throw EmptyAfterTokenization("transcript '" + transcript.id + "': " + e.what());
  }
  return out;
}

TranscriptScore score_transcript(const Transcript& transcript, const LogProbBackend& backend,
                                 std::span<const WindowSpec> specs, ParallelOptions options) {
  return score_transcript_with_profiles(transcript, backend, specs, {}, options).score;
}

}  // namespace cohertrace
