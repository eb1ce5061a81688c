#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cohertrace/backend.hpp"
#include "cohertrace/hash.hpp"

namespace cohertrace {

/// Persistent content-addressed store of backend results in one append-only
/// file.
///
/// File layout (all integers little-endian):
///
///     header  "CTCACHE1"
///     record  u32 'CREC' | u8 kind | key[32] | u64 payload_len | payload | checksum[8]
///
/// kind 1 holds logprobs (a double array, NaN for undefined entries); kind 2
/// holds a tokenization (u32 count, then u32-length-prefixed strings). The
/// checksum is the first 8 bytes of SHA-256 over kind, key and payload. A
/// later record with the same key and kind supersedes earlier ones, which is
/// how corrupt entries are overwritten. Records failing their checksum are
/// reported as misses. A structurally broken tail is truncated on open.
class ScoreCache {
 public:
  enum class Kind : std::uint8_t { LogProbs = 1, Tokens = 2 };

  /// Opens or creates the cache. Throws CacheIO when the file is unusable.
  static std::shared_ptr<ScoreCache> open(const std::filesystem::path& path);

  /// SHA-256 of backend_id || 0x00 || tokens joined with 0x1F.
  static Digest score_key(std::string_view backend_id, std::span<const std::string> tokens);
  /// SHA-256 of backend_id || 0x00 || 0x1E || text.
  static Digest tokenize_key(std::string_view backend_id, std::string_view text);

  /// std::nullopt on a miss or a corrupt record.
  std::optional<std::vector<double>> get_logprobs(const Digest& key);
  void put_logprobs(const Digest& key, std::span<const double> logprobs);
  std::optional<std::vector<std::string>> get_tokens(const Digest& key);
  void put_tokens(const Digest& key, std::span<const std::string> tokens);

  std::size_t entries() const;
  std::size_t corrupt_reads() const noexcept { return corrupt_reads_.load(); }
  const std::filesystem::path& path() const noexcept { return path_; }

  /// Rewrites the file keeping only the live, intact records.
  void compact();

  ScoreCache(const ScoreCache&) = delete;
  ScoreCache& operator=(const ScoreCache&) = delete;

 private:
  struct Location {
    std::uint64_t payload_offset = 0;
    std::uint64_t payload_len = 0;
  };
  using IndexKey = std::pair<Kind, Digest>;

  explicit ScoreCache(std::filesystem::path path);
  void load_index();
  std::optional<std::string> read_payload(Kind kind, const Digest& key);
  void append(Kind kind, const Digest& key, std::string_view payload);

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::fstream file_;
  std::uint64_t end_ = 0;
  std::map<IndexKey, Location> index_;
  std::atomic<std::size_t> corrupt_reads_{0};
};

/// Serves tokenizations and scores from the cache, filling it on misses.
/// backend_id passes through unchanged. Cache I/O failures are logged and the
/// wrapped backend answers directly.
class CachedBackend final : public LogProbBackend {
 public:
  CachedBackend(BackendPtr inner, std::shared_ptr<ScoreCache> cache);

  std::string backend_id() const override { return id_; }
  std::vector<std::string> tokenize(std::string_view text) const override;
  LogProbSeries score(std::span<const std::string> tokens) const override;

 private:
  void degrade(const std::exception& e) const;

  BackendPtr inner_;
  std::shared_ptr<ScoreCache> cache_;
  std::string id_;
  mutable std::atomic<bool> warned_{false};
};

std::shared_ptr<const LogProbBackend> cached(BackendPtr backend, std::shared_ptr<ScoreCache> cache);

/// Counts calls reaching the wrapped backend.
class CountingBackend final : public LogProbBackend {
 public:
  explicit CountingBackend(BackendPtr inner) : inner_(std::move(inner)) {}

  std::string backend_id() const override { return inner_->backend_id(); }
  std::vector<std::string> tokenize(std::string_view text) const override {
    ++tokenize_calls_;
    return inner_->tokenize(text);
  }
  LogProbSeries score(std::span<const std::string> tokens) const override {
    ++score_calls_;
    return inner_->score(tokens);
  }

  std::size_t score_calls() const noexcept { return score_calls_.load(); }
  std::size_t tokenize_calls() const noexcept { return tokenize_calls_.load(); }
  std::size_t calls() const noexcept { return score_calls() + tokenize_calls(); }

 private:
  BackendPtr inner_;
  mutable std::atomic<std::size_t> score_calls_{0};
  mutable std::atomic<std::size_t> tokenize_calls_{0};
};

}  // namespace cohertrace
