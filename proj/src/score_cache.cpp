#include "cohertrace/score_cache.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "cohertrace/errors.hpp"
#include "log.hpp"

namespace cohertrace {

static_assert(std::endian::native == std::endian::little, "cache files are written little-endian");

namespace {

constexpr std::string_view kHeader = "CTCACHE1";
constexpr std::uint32_t kRecordMarker = 0x43455243;  // "CREC"
constexpr std::size_t kChecksumLen = 8;
constexpr std::size_t kRecordHead = 4 + 1 + 32 + 8;
constexpr char kKeySeparator = '\x00';
constexpr char kTokenSeparator = '\x1F';
constexpr char kTextMarker = '\x1E';

template <class T>
void append_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T read_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

std::string checksum(ScoreCache::Kind kind, const Digest& key, std::string_view payload) {
  std::string buf;
  buf.reserve(1 + key.size() + payload.size());
  buf.push_back(static_cast<char>(kind));
  buf.append(reinterpret_cast<const char*>(key.data()), key.size());
  buf.append(payload);
  const auto d = sha256(buf);
  return std::string(reinterpret_cast<const char*>(d.data()), kChecksumLen);
}

std::string encode_tokens(std::span<const std::string> tokens) {
  std::string out;
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(tokens.size()));
  for (const auto& t : tokens) {
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.size()));
    out.append(t);
  }
  return out;
}

std::optional<std::vector<std::string>> decode_tokens(std::string_view payload) {
  if (payload.size() < 4) return std::nullopt;
  const auto n = read_le<std::uint32_t>(payload.data());
  std::size_t pos = 4;
  std::vector<std::string> tokens;
  tokens.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (pos + 4 > payload.size()) return std::nullopt;
    const auto len = read_le<std::uint32_t>(payload.data() + pos);
    pos += 4;
    if (pos + len > payload.size()) return std::nullopt;
    tokens.emplace_back(payload.substr(pos, len));
    pos += len;
  }
  if (pos != payload.size()) return std::nullopt;
  return tokens;
}

}  // namespace

ScoreCache::ScoreCache(std::filesystem::path path) : path_(std::move(path)) {}

std::shared_ptr<ScoreCache> ScoreCache::open(const std::filesystem::path& path) {
  std::shared_ptr<ScoreCache> cache(new ScoreCache(path));
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream create(path, std::ios::binary);
    if (!create) throw CacheIO("cannot create cache file " + path.string());
    create.write(kHeader.data(), static_cast<std::streamsize>(kHeader.size()));
    if (!create) throw CacheIO("cannot write cache header to " + path.string());
  }
  cache->file_.open(path, std::ios::in | std::ios::out | std::ios::binary);
  if (!cache->file_) throw CacheIO("cannot open cache file " + path.string());
  cache->load_index();
  return cache;
}

void ScoreCache::load_index() {
  const auto size = std::filesystem::file_size(path_);
  std::string header(kHeader.size(), '\0');
  file_.seekg(0);
  file_.read(header.data(), static_cast<std::streamsize>(header.size()));
  if (!file_ || header != kHeader) throw CacheIO(path_.string() + " is not a score cache");

  std::uint64_t pos = kHeader.size();
  char head[kRecordHead];
  while (pos < size) {
    if (pos + kRecordHead > size) break;
    file_.seekg(static_cast<std::streamoff>(pos));
    file_.read(head, kRecordHead);
    if (!file_) break;
    const auto marker = read_le<std::uint32_t>(head);
    const auto kind = static_cast<Kind>(static_cast<std::uint8_t>(head[4]));
    const auto payload_len = read_le<std::uint64_t>(head + 4 + 1 + 32);
    if (marker != kRecordMarker || (kind != Kind::LogProbs && kind != Kind::Tokens) ||
        payload_len > size - pos - kRecordHead || pos + kRecordHead + payload_len + kChecksumLen > size) {
      break;
    }
    Digest key;
    std::memcpy(key.data(), head + 5, key.size());
    index_[{kind, key}] = Location{pos + kRecordHead, payload_len};
    pos += kRecordHead + payload_len + kChecksumLen;
  }
  file_.clear();
  if (pos < size) {
    detail::warn("score cache " + path_.string() + ": discarding " + std::to_string(size - pos) +
                 " unreadable trailing bytes");
    file_.close();
    std::error_code ec;
    std::filesystem::resize_file(path_, pos, ec);
    if (ec) throw CacheIO("cannot truncate " + path_.string() + ": " + ec.message());
    file_.open(path_, std::ios::in | std::ios::out | std::ios::binary);
    if (!file_) throw CacheIO("cannot reopen cache file " + path_.string());
  }
  end_ = pos;
}

Digest ScoreCache::score_key(std::string_view backend_id, std::span<const std::string> tokens) {
  std::string buf(backend_id);
  buf.push_back(kKeySeparator);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) buf.push_back(kTokenSeparator);
    buf.append(tokens[i]);
  }
  return sha256(buf);
}

Digest ScoreCache::tokenize_key(std::string_view backend_id, std::string_view text) {
  std::string buf(backend_id);
  buf.push_back(kKeySeparator);
  buf.push_back(kTextMarker);
  buf.append(text);
  return sha256(buf);
}

std::optional<std::string> ScoreCache::read_payload(Kind kind, const Digest& key) {
  std::lock_guard lock(mutex_);
  auto it = index_.find({kind, key});
  if (it == index_.end()) return std::nullopt;
  const auto loc = it->second;
  std::string payload(loc.payload_len, '\0');
  std::string stored(kChecksumLen, '\0');
  file_.seekg(static_cast<std::streamoff>(loc.payload_offset));
  file_.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  file_.read(stored.data(), static_cast<std::streamsize>(stored.size()));
  if (!file_) {
    file_.clear();
    throw CacheIO("read failed on " + path_.string());
  }
  if (stored != checksum(kind, key, payload)) {
    ++corrupt_reads_;
    detail::warn("score cache " + path_.string() + ": checksum mismatch, entry will be recomputed");
    return std::nullopt;
  }
  return payload;
}

void ScoreCache::append(Kind kind, const Digest& key, std::string_view payload) {
  std::string record;
  record.reserve(kRecordHead + payload.size() + kChecksumLen);
  append_le<std::uint32_t>(record, kRecordMarker);
  record.push_back(static_cast<char>(kind));
  record.append(reinterpret_cast<const char*>(key.data()), key.size());
  append_le<std::uint64_t>(record, payload.size());
  record.append(payload);
  record.append(checksum(kind, key, payload));

  std::lock_guard lock(mutex_);
  file_.seekp(static_cast<std::streamoff>(end_));
  file_.write(record.data(), static_cast<std::streamsize>(record.size()));
  file_.flush();
  if (!file_) {
    file_.clear();
    throw CacheIO("write failed on " + path_.string());
  }
  index_[{kind, key}] = Location{end_ + kRecordHead, payload.size()};
  end_ += record.size();
}

std::optional<std::vector<double>> ScoreCache::get_logprobs(const Digest& key) {
  auto payload = read_payload(Kind::LogProbs, key);
  if (!payload || payload->size() % sizeof(double) != 0) return std::nullopt;
  std::vector<double> values(payload->size() / sizeof(double));
  if (!values.empty()) std::memcpy(values.data(), payload->data(), payload->size());
  return values;
}

void ScoreCache::put_logprobs(const Digest& key, std::span<const double> logprobs) {
  std::string payload(logprobs.size() * sizeof(double), '\0');
  if (!logprobs.empty()) std::memcpy(payload.data(), logprobs.data(), payload.size());
  append(Kind::LogProbs, key, payload);
}

std::optional<std::vector<std::string>> ScoreCache::get_tokens(const Digest& key) {
  auto payload = read_payload(Kind::Tokens, key);
  if (!payload) return std::nullopt;
  return decode_tokens(*payload);
}

void ScoreCache::put_tokens(const Digest& key, std::span<const std::string> tokens) {
  append(Kind::Tokens, key, encode_tokens(tokens));
}

std::size_t ScoreCache::entries() const {
  std::lock_guard lock(mutex_);
  return index_.size();
}

void ScoreCache::compact() {
  std::vector<std::pair<IndexKey, std::string>> live;
  {
    std::vector<IndexKey> keys;
    {
      std::lock_guard lock(mutex_);
      for (const auto& [k, loc] : index_) keys.push_back(k);
    }
    for (const auto& k : keys) {
      if (auto payload = read_payload(k.first, k.second)) live.emplace_back(k, std::move(*payload));
    }
  }
  std::lock_guard lock(mutex_);
  auto tmp = path_;
  tmp += ".compact";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CacheIO("cannot write " + tmp.string());
    out.write(kHeader.data(), static_cast<std::streamsize>(kHeader.size()));
    index_.clear();
    std::uint64_t pos = kHeader.size();
    for (const auto& [k, payload] : live) {
      std::string record;
      append_le<std::uint32_t>(record, kRecordMarker);
      record.push_back(static_cast<char>(k.first));
      record.append(reinterpret_cast<const char*>(k.second.data()), k.second.size());
      append_le<std::uint64_t>(record, payload.size());
      record.append(payload);
      record.append(checksum(k.first, k.second, payload));
      out.write(record.data(), static_cast<std::streamsize>(record.size()));
      index_[k] = Location{pos + kRecordHead, payload.size()};
      pos += record.size();
    }
    end_ = pos;
    if (!out) throw CacheIO("short write to " + tmp.string());
  }
  file_.close();
  std::filesystem::rename(tmp, path_);
  file_.open(path_, std::ios::in | std::ios::out | std::ios::binary);
  if (!file_) throw CacheIO("cannot reopen cache file " + path_.string());
}

CachedBackend::CachedBackend(BackendPtr inner, std::shared_ptr<ScoreCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {
  if (!inner_) throw Error("CachedBackend: null backend");
  id_ = inner_->backend_id();
}

void CachedBackend::degrade(const std::exception& e) const {
  if (!warned_.exchange(true)) detail::warn(std::string("cache disabled for this call: ") + e.what());
}

std::vector<std::string> CachedBackend::tokenize(std::string_view text) const {
  if (!cache_) return inner_->tokenize(text);
  const auto key = ScoreCache::tokenize_key(id_, text);
  try {
    if (auto hit = cache_->get_tokens(key)) return std::move(*hit);
  } catch (const CacheIO& e) {
    degrade(e);
  }
  auto tokens = inner_->tokenize(text);
  try {
    cache_->put_tokens(key, tokens);
  } catch (const CacheIO& e) {
    degrade(e);
  }
  return tokens;
}

LogProbSeries CachedBackend::score(std::span<const std::string> tokens) const {
  if (!cache_) return inner_->score(tokens);
  const auto key = ScoreCache::score_key(id_, tokens);
  try {
    if (auto hit = cache_->get_logprobs(key); hit && hit->size() == tokens.size()) {
      LogProbSeries series;
      series.tokens.assign(tokens.begin(), tokens.end());
      series.logprobs = std::move(*hit);
      while (series.undefined_prefix < series.logprobs.size() && std::isnan(series.logprobs[series.undefined_prefix])) {
        ++series.undefined_prefix;
      }
      series.backend_id = id_;
      return series;
    }
  } catch (const CacheIO& e) {
    degrade(e);
  }
  auto series = inner_->score(tokens);
  try {
    cache_->put_logprobs(key, series.logprobs);
  } catch (const CacheIO& e) {
    degrade(e);
  }
  return series;
}

std::shared_ptr<const LogProbBackend> cached(BackendPtr backend, std::shared_ptr<ScoreCache> cache) {
  return std::make_shared<CachedBackend>(std::move(backend), std::move(cache));
}

}  // namespace cohertrace
