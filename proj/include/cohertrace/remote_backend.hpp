#pragma once

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cohertrace/backend.hpp"

namespace cohertrace {

/// GET /v1/info payload.
struct RemoteInfo {
  std::string backend_id;
  long long max_tokens = 0;
  bool has_bos = false;
};

/// Parses and validates a POST /v1/score response body. When
/// `expected_tokens` is given the echoed tokens must match it. Throws
/// BackendError(Protocol) on any violation of the wire contract.
LogProbSeries parse_score_response(std::string_view body,
                                   std::optional<std::span<const std::string>> expected_tokens = std::nullopt);

RemoteInfo parse_info_response(std::string_view body);

/// Request bodies as sent on the wire.
std::string score_request_for_text(std::string_view text);
std::string score_request_for_tokens(std::span<const std::string> tokens);

struct RemoteTimeouts {
  std::chrono::milliseconds connect{5000};
  std::chrono::milliseconds read{300000};
};

/// Client for a scoring server (e.g. a neural model behind the logprob
/// server). Transport failures are retried up to 3 attempts with 250 ms then
/// 500 ms backoff; protocol and server-reported errors are not retried.
class RemoteBackend final : public LogProbBackend {
 public:
  using Timeouts = RemoteTimeouts;

  static constexpr int kMaxAttempts = 3;
  static constexpr std::chrono::milliseconds kInitialBackoff{250};

  /// `base_url` like "http://127.0.0.1:8080". Fetches /v1/info eagerly.
  explicit RemoteBackend(std::string base_url, Timeouts timeouts = {});

  std::string backend_id() const override { return info_.backend_id; }
  const RemoteInfo& info() const noexcept { return info_; }

  /// Server-side tokenization (one scoring request).
  std::vector<std::string> tokenize(std::string_view text) const override;
  LogProbSeries score(std::span<const std::string> tokens) const override;
  LogProbSeries score_text(std::string_view text) const;

 private:
  std::string post_score(const std::string& body) const;
  std::string get_info() const;

  std::string base_url_;
  Timeouts timeouts_;
  RemoteInfo info_;
};

}  // namespace cohertrace
