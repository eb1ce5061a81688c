#include "cohertrace/remote_backend.hpp"

#include <cmath>
#include <limits>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cohertrace/errors.hpp"

namespace cohertrace {

namespace {

using nlohmann::json;

[[noreturn]] void protocol_error(const std::string& what) {
  throw BackendError(BackendError::Kind::Protocol, what);
}

json parse_json(std::string_view body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    protocol_error(std::string("response is not JSON: ") + e.what());
  }
}

std::string error_message(const httplib::Result& res) {
  try {
    auto doc = json::parse(res->body);
    if (doc.is_object() && doc.contains("error") && doc["error"].is_string()) return doc["error"].get<std::string>();
  } catch (const json::exception&) {
  }
  return res->body.empty() ? "HTTP " + std::to_string(res->status) : res->body;
}

template <class Call>
std::string with_retries(const std::string& what, Call&& call) {
  auto backoff = RemoteBackend::kInitialBackoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return call();
    } catch (const BackendError& e) {
      if (!e.retryable() || attempt >= RemoteBackend::kMaxAttempts) {
        if (e.retryable()) {
          throw BackendError(BackendError::Kind::Transport,
                             what + ": giving up after " + std::to_string(attempt) + " attempts: " + e.what());
        }
        throw;
      }
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

void check_status(const httplib::Result& res, const std::string& what) {
  if (!res) {
    throw BackendError(BackendError::Kind::Transport, what + ": " + httplib::to_string(res.error()));
  }
  const int status = res->status;
  if (status == 200) return;
  if (status == 502 || status == 503 || status == 504) {
    throw BackendError(BackendError::Kind::Transport, what + ": HTTP " + std::to_string(status));
  }
  throw BackendError(BackendError::Kind::ServerReported,
                     what + ": HTTP " + std::to_string(status) + ": " + error_message(res));
}

}  // namespace

std::string score_request_for_text(std::string_view text) {
  return json{{"text", std::string(text)}, {"echo_tokens", true}}.dump();
}

std::string score_request_for_tokens(std::span<const std::string> tokens) {
  return json{{"tokens", std::vector<std::string>(tokens.begin(), tokens.end())}, {"echo_tokens", true}}.dump();
}

LogProbSeries parse_score_response(std::string_view body, std::optional<std::span<const std::string>> expected_tokens) {
  const json doc = parse_json(body);
  if (!doc.is_object()) protocol_error("response is not an object");
  for (const char* key : {"backend_id", "tokens", "logprobs", "bos_prepended"}) {
    if (!doc.contains(key)) protocol_error(std::string("response lacks '") + key + "'");
  }
  if (!doc["backend_id"].is_string()) protocol_error("backend_id is not a string");
  if (!doc["tokens"].is_array() || !doc["logprobs"].is_array()) protocol_error("tokens/logprobs must be arrays");
  if (!doc["bos_prepended"].is_boolean()) protocol_error("bos_prepended is not a boolean");

  LogProbSeries series;
  series.backend_id = doc["backend_id"].get<std::string>();
  const auto& toks = doc["tokens"];
  const auto& lps = doc["logprobs"];
  if (toks.size() != lps.size()) {
    protocol_error("tokens length " + std::to_string(toks.size()) + " != logprobs length " + std::to_string(lps.size()));
  }
  const bool bos = doc["bos_prepended"].get<bool>();
  series.tokens.reserve(toks.size());
  series.logprobs.reserve(lps.size());
  bool seen_defined = false;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (!toks[i].is_string()) protocol_error("token " + std::to_string(i) + " is not a string");
    series.tokens.push_back(toks[i].get<std::string>());
    const auto& lp = lps[i];
    if (lp.is_null()) {
      if (seen_defined) protocol_error("null logprob at " + std::to_string(i) + " after a defined entry");
      if (bos) protocol_error("null logprob although bos_prepended is true");
      series.logprobs.push_back(std::numeric_limits<double>::quiet_NaN());
      ++series.undefined_prefix;
      continue;
    }
    if (!lp.is_number()) protocol_error("logprob " + std::to_string(i) + " is not a number");
    const double v = lp.get<double>();
    if (!std::isfinite(v)) protocol_error("logprob " + std::to_string(i) + " is not finite");
    if (v > 0.0) protocol_error("logprob " + std::to_string(i) + " is positive");
    seen_defined = true;
    series.logprobs.push_back(v);
  }
  if (expected_tokens) {
    const auto& exp = *expected_tokens;
    if (exp.size() != series.tokens.size() || !std::equal(exp.begin(), exp.end(), series.tokens.begin())) {
      protocol_error("echoed tokens differ from the request");
    }
  }
  return series;
}

RemoteInfo parse_info_response(std::string_view body) {
  const json doc = parse_json(body);
  if (!doc.is_object() || !doc.contains("backend_id") || !doc["backend_id"].is_string() ||
      !doc.contains("max_tokens") || !doc["max_tokens"].is_number_integer() || !doc.contains("has_bos") ||
      !doc["has_bos"].is_boolean()) {
    protocol_error("malformed /v1/info response");
  }
  RemoteInfo info;
  info.backend_id = doc["backend_id"].get<std::string>();
  info.max_tokens = doc["max_tokens"].get<long long>();
  info.has_bos = doc["has_bos"].get<bool>();
  if (info.backend_id.empty()) protocol_error("empty backend_id");
  return info;
}

RemoteBackend::RemoteBackend(std::string base_url, Timeouts timeouts)
    : base_url_(std::move(base_url)), timeouts_(timeouts) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  info_ = parse_info_response(get_info());
}

std::string RemoteBackend::get_info() const {
  return with_retries("GET /v1/info", [&] {
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeouts_.connect);
    client.set_read_timeout(timeouts_.read);
    auto res = client.Get("/v1/info");
    check_status(res, "GET /v1/info");
    return res->body;
  });
}

std::string RemoteBackend::post_score(const std::string& body) const {
  return with_retries("POST /v1/score", [&] {
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeouts_.connect);
    client.set_read_timeout(timeouts_.read);
    auto res = client.Post("/v1/score", body, "application/json");
    check_status(res, "POST /v1/score");
    return res->body;
  });
}

LogProbSeries RemoteBackend::score_text(std::string_view text) const {
  auto series = parse_score_response(post_score(score_request_for_text(text)));
  if (series.backend_id != info_.backend_id) {
    protocol_error("response backend_id '" + series.backend_id + "' != '" + info_.backend_id + "'");
  }
  return series;
}

std::vector<std::string> RemoteBackend::tokenize(std::string_view text) const {
  return score_text(text).tokens;
}

LogProbSeries RemoteBackend::score(std::span<const std::string> tokens) const {
  auto series = parse_score_response(post_score(score_request_for_tokens(tokens)), tokens);
  if (series.backend_id != info_.backend_id) {
    protocol_error("response backend_id '" + series.backend_id + "' != '" + info_.backend_id + "'");
  }
  return series;
}

}  // namespace cohertrace
