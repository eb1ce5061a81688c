#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cohertrace/backend.hpp"

namespace cohertrace {

/// Whitespace tokenization with ASCII lowercasing; the reference model's
/// tokenizer.
std::vector<std::string> ngram_tokenize(std::string_view text);

/// Add-alpha smoothed n-gram model over a closed vocabulary.
///
/// Position i of a scored sequence is conditioned on the previous
/// min(i, order - 1) tokens of that sequence, so sequence-initial positions
/// use the shorter-context tables and nothing is left undefined. Every
/// conditional distribution is
///
///     P(w | h) = (c(h, w) + alpha) / (c(h) + alpha * |V|)
///
/// where c(h) counts every follower of h, including the end-of-sequence
/// symbol, so each distribution sums to one over the vocabulary.
class ReferenceNgramModel {
 public:
  using TokenId = std::uint32_t;

  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kEos = "</s>";
  static constexpr TokenId kUnkId = 0;
  static constexpr TokenId kEosId = 1;

  struct ContextCounts {
    std::uint64_t total = 0;
    std::unordered_map<TokenId, std::uint64_t> followers;
    bool operator==(const ContextCounts&) const = default;
  };
  /// Packed context ids -> counts, one table per context length.
  using Table = std::unordered_map<std::string, ContextCounts>;

  int order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }
  std::size_t vocab_size() const noexcept { return vocabulary_.size(); }
  const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }
  const std::vector<Table>& tables() const noexcept { return tables_; }

  /// UNK for out-of-vocabulary tokens.
  TokenId id_of(std::string_view token) const;
  std::vector<TokenId> ids_of(std::span<const std::string> tokens) const;

  /// Only the last order-1 ids of `context` are used.
  std::uint64_t count(std::span<const TokenId> context, TokenId next) const;
  std::uint64_t context_total(std::span<const TokenId> context) const;
  double probability(std::span<const TokenId> context, TokenId next) const;
  /// P(. | context) for every vocabulary id, in id order.
  std::vector<double> distribution(std::span<const TokenId> context) const;

  /// Natural-log probabilities, every entry defined.
  LogProbSeries score(std::span<const std::string> tokens) const;

  std::string serialize() const;
  static ReferenceNgramModel deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static ReferenceNgramModel load(const std::filesystem::path& path);

  /// Content hash of the serialized model.
  std::string fingerprint() const;

  bool operator==(const ReferenceNgramModel&) const = default;

 private:
  friend ReferenceNgramModel ngram_train(std::span<const std::string>, int, double, std::uint64_t);

  const ContextCounts* find_context(std::span<const TokenId> context) const;

  int order_ = 1;
  double alpha_ = 1.0;
  std::vector<std::string> vocabulary_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<Table> tables_;
};

/// Each string is one training sequence; EOS is appended to each.
/// Tokens seen fewer than `vocab_min_count` times map to UNK.
ReferenceNgramModel ngram_train(std::span<const std::string> corpus_text, int order, double alpha,
                                std::uint64_t vocab_min_count = 1);

/// The reference model as a scoring backend.
class NgramBackend final : public LogProbBackend {
 public:
  explicit NgramBackend(std::shared_ptr<const ReferenceNgramModel> model);

  std::string backend_id() const override { return id_; }
  std::vector<std::string> tokenize(std::string_view text) const override;
  LogProbSeries score(std::span<const std::string> tokens) const override;

  const ReferenceNgramModel& model() const noexcept { return *model_; }

 private:
  std::shared_ptr<const ReferenceNgramModel> model_;
  std::string id_;
};

}  // namespace cohertrace
