#include "cohertrace/ngram_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>

#include "cohertrace/errors.hpp"
#include "cohertrace/hash.hpp"
#include "io_util.hpp"

namespace cohertrace {

static_assert(std::endian::native == std::endian::little, "model files are written little-endian");

namespace {

using TokenId = ReferenceNgramModel::TokenId;

constexpr std::string_view kMagic = "CTNGRAM1";

std::string pack(std::span<const TokenId> ids) {
  std::string key(ids.size() * sizeof(TokenId), '\0');
  if (!ids.empty()) std::memcpy(key.data(), ids.data(), key.size());
  return key;
}

std::span<const TokenId> tail(std::span<const TokenId> context, int order) {
  const auto keep = std::min<std::size_t>(context.size(), static_cast<std::size_t>(order - 1));
  return context.last(keep);
}

class Writer {
 public:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void put_raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string get_string() { return get_bytes(get<std::uint32_t>()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw Error("ngram model: truncated file");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::string> ngram_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

TokenId ReferenceNgramModel::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

std::vector<TokenId> ReferenceNgramModel::ids_of(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id_of(t));
  return ids;
}

const ReferenceNgramModel::ContextCounts* ReferenceNgramModel::find_context(std::span<const TokenId> context) const {
  const auto ctx = tail(context, order_);
  const auto& table = tables_[ctx.size()];
  auto it = table.find(pack(ctx));
  return it == table.end() ? nullptr : &it->second;
}

std::uint64_t ReferenceNgramModel::count(std::span<const TokenId> context, TokenId next) const {
  const auto* c = find_context(context);
  if (!c) return 0;
  auto it = c->followers.find(next);
  return it == c->followers.end() ? 0 : it->second;
}

std::uint64_t ReferenceNgramModel::context_total(std::span<const TokenId> context) const {
  const auto* c = find_context(context);
  return c ? c->total : 0;
}

double ReferenceNgramModel::probability(std::span<const TokenId> context, TokenId next) const {
  const double v = static_cast<double>(vocabulary_.size());
  const auto* c = find_context(context);
  double num = alpha_;
  double den = alpha_ * v;
  if (c) {
    if (auto it = c->followers.find(next); it != c->followers.end()) num += static_cast<double>(it->second);
    den += static_cast<double>(c->total);
  }
  return num / den;
}

std::vector<double> ReferenceNgramModel::distribution(std::span<const TokenId> context) const {
  const auto* c = find_context(context);
  const double den = alpha_ * static_cast<double>(vocabulary_.size()) + (c ? static_cast<double>(c->total) : 0.0);
  std::vector<double> p(vocabulary_.size(), alpha_ / den);
  if (c) {
    for (const auto& [id, n] : c->followers) p[id] = (static_cast<double>(n) + alpha_) / den;
  }
  return p;
}

LogProbSeries ReferenceNgramModel::score(std::span<const std::string> tokens) const {
  if (tokens.empty()) throw Error("ngram_score: empty token sequence");
  LogProbSeries series;
  series.tokens.assign(tokens.begin(), tokens.end());
  series.logprobs.reserve(tokens.size());
  const auto ids = ids_of(tokens);
  const std::span<const TokenId> all(ids);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    series.logprobs.push_back(std::log(probability(all.first(i), ids[i])));
  }
  return series;
}

std::string ReferenceNgramModel::serialize() const {
  Writer w;
  w.put_raw(kMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(order_));
  w.put<double>(alpha_);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(vocabulary_.size()));
  for (const auto& t : vocabulary_) w.put_string(t);
  for (const auto& table : tables_) {
    std::map<std::string, const ContextCounts*> sorted;
    for (const auto& [key, counts] : table) sorted.emplace(key, &counts);
    w.put<std::uint64_t>(sorted.size());
    for (const auto& [key, counts] : sorted) {
      w.put_string(key);
      w.put<std::uint64_t>(counts->total);
      std::map<TokenId, std::uint64_t> followers(counts->followers.begin(), counts->followers.end());
      w.put<std::uint32_t>(static_cast<std::uint32_t>(followers.size()));
      for (const auto& [id, n] : followers) {
        w.put<TokenId>(id);
        w.put<std::uint64_t>(n);
      }
    }
  }
  return w.take();
}

ReferenceNgramModel ReferenceNgramModel::deserialize(std::string_view bytes) {
  Reader r(bytes);
  if (r.get_bytes(kMagic.size()) != kMagic) throw Error("ngram model: bad magic");
  ReferenceNgramModel m;
  m.order_ = static_cast<int>(r.get<std::uint32_t>());
  m.alpha_ = r.get<double>();
  if (m.order_ < 1 || m.order_ > 16 || !(m.alpha_ > 0.0)) throw Error("ngram model: bad header");
  const auto v = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < v; ++i) {
    m.vocabulary_.push_back(r.get_string());
    m.index_.emplace(m.vocabulary_.back(), i);
  }
  if (v < 2 || m.vocabulary_[kUnkId] != kUnk || m.vocabulary_[kEosId] != kEos) {
    throw Error("ngram model: missing special symbols");
  }
  m.tables_.resize(static_cast<std::size_t>(m.order_));
  for (auto& table : m.tables_) {
    const auto n_contexts = r.get<std::uint64_t>();
    for (std::uint64_t c = 0; c < n_contexts; ++c) {
      auto key = r.get_string();
      ContextCounts counts;
      counts.total = r.get<std::uint64_t>();
      const auto n_followers = r.get<std::uint32_t>();
      for (std::uint32_t f = 0; f < n_followers; ++f) {
        const auto id = r.get<TokenId>();
        const auto n = r.get<std::uint64_t>();
        if (id >= v) throw Error("ngram model: token id out of range");
        counts.followers.emplace(id, n);
      }
      table.emplace(std::move(key), std::move(counts));
    }
  }
  if (!r.done()) throw Error("ngram model: trailing bytes");
  return m;
}

void ReferenceNgramModel::save(const std::filesystem::path& path) const {
  detail::write_file_atomic(path, serialize());
}

ReferenceNgramModel ReferenceNgramModel::load(const std::filesystem::path& path) {
  return deserialize(detail::read_file(path));
}

std::string ReferenceNgramModel::fingerprint() const { return to_hex(sha256(serialize()), 12); }

ReferenceNgramModel ngram_train(std::span<const std::string> corpus_text, int order, double alpha,
                                std::uint64_t vocab_min_count) {
  if (order < 1) throw Error("ngram_train: order must be >= 1");
  if (!(alpha > 0.0)) throw Error("ngram_train: alpha must be > 0");

  std::vector<std::vector<std::string>> sequences;
  std::map<std::string, std::uint64_t> raw_counts;
  for (const auto& text : corpus_text) {
    auto toks = ngram_tokenize(text);
    if (toks.empty()) continue;
    for (const auto& t : toks) ++raw_counts[t];
    sequences.push_back(std::move(toks));
  }
  if (sequences.empty()) throw EmptyCorpus("ngram_train: no tokens in training corpus");

  ReferenceNgramModel m;
  m.order_ = order;
  m.alpha_ = alpha;
  m.vocabulary_ = {std::string(ReferenceNgramModel::kUnk), std::string(ReferenceNgramModel::kEos)};
  for (const auto& [tok, n] : raw_counts) {
    if (n >= vocab_min_count && tok != ReferenceNgramModel::kUnk && tok != ReferenceNgramModel::kEos) {
      m.vocabulary_.push_back(tok);
    }
  }
  for (TokenId i = 0; i < m.vocabulary_.size(); ++i) m.index_.emplace(m.vocabulary_[i], i);

  m.tables_.resize(static_cast<std::size_t>(order));
  for (const auto& seq : sequences) {
    auto ids = m.ids_of(seq);
    ids.push_back(ReferenceNgramModel::kEosId);
    const std::span<const TokenId> all(ids);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto longest = std::min<std::size_t>(i, static_cast<std::size_t>(order - 1));
      for (std::size_t len = 0; len <= longest; ++len) {
        auto& counts = m.tables_[len][pack(all.subspan(i - len, len))];
        ++counts.total;
        ++counts.followers[ids[i]];
      }
    }
  }
  return m;
}

NgramBackend::NgramBackend(std::shared_ptr<const ReferenceNgramModel> model) : model_(std::move(model)) {
  if (!model_) throw Error("NgramBackend: null model");
  id_ = "ref-ngram-o" + std::to_string(model_->order()) + "-a" + detail::format_double(model_->alpha()) + "@" +
        model_->fingerprint();
}

std::vector<std::string> NgramBackend::tokenize(std::string_view text) const { return ngram_tokenize(text); }

LogProbSeries NgramBackend::score(std::span<const std::string> tokens) const {
  auto series = model_->score(tokens);
  series.backend_id = id_;
  return series;
}

}  // namespace cohertrace
