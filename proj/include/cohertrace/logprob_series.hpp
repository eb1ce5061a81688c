#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cohertrace {

/// Per-token natural-log conditional probabilities aligned with `tokens`.
///
/// Entries before `undefined_prefix` have no conditional probability (the
/// leading tokens of a sequence scored without a BOS token); they hold NaN in
/// `logprobs` and are excluded from every perplexity.
struct LogProbSeries {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  std::size_t undefined_prefix = 0;
  std::string backend_id;

  std::size_t size() const noexcept { return tokens.size(); }
  bool is_defined(std::size_t i) const noexcept { return i >= undefined_prefix; }

  /// The scorable entries.
  std::span<const double> defined() const noexcept {
    if (undefined_prefix >= logprobs.size()) return {};
    return std::span<const double>(logprobs).subspan(undefined_prefix);
  }
};

/// Throws InvalidSeries on misalignment, a positive or non-finite defined
/// entry, or a non-NaN entry inside the undefined prefix.
void validate_series(const LogProbSeries& series);

}  // namespace cohertrace
