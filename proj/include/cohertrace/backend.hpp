#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cohertrace/logprob_series.hpp"

namespace cohertrace {

/// A deterministic source of token log-probabilities.
///
/// Implementations must be safe to call concurrently. `score` must return a
/// series aligned 1:1 with its input whose undefined entries, if any, form a
/// prefix, and whose defined entries are <= 0.
class LogProbBackend {
 public:
  virtual ~LogProbBackend() = default;

  /// Stable identity: model, version, and tokenizer.
  virtual std::string backend_id() const = 0;
  virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
  /// Scores exactly `tokens`; the model sees no other context.
  virtual LogProbSeries score(std::span<const std::string> tokens) const = 0;
};

using BackendPtr = std::shared_ptr<const LogProbBackend>;

}  // namespace cohertrace
