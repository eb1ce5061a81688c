#include <doctest.h>

#include <cmath>
#include <random>

#include "cohertrace/errors.hpp"
#include "cohertrace/ngram_model.hpp"
#include "cohertrace/ppl.hpp"
#include "support.hpp"

using namespace cohertrace;
using TokenId = ReferenceNgramModel::TokenId;

namespace {

// Smoothed probability by scanning the raw training sentences.
double oracle_probability(const std::vector<std::vector<std::string>>& sentences, std::size_t vocab, double alpha,
                          const std::vector<std::string>& history, const std::string& next) {
  double c_hw = 0, c_h = 0;
  for (auto s : sentences) {
    s.push_back("</s>");
    for (std::size_t i = history.size(); i < s.size(); ++i) {
      if (!std::equal(history.begin(), history.end(), s.begin() + static_cast<long>(i - history.size()))) continue;
      c_h += 1;
      c_hw += s[i] == next;
    }
  }
  return (c_hw + alpha) / (c_h + alpha * static_cast<double>(vocab));
}

std::vector<std::string> random_sentences(std::mt19937_64& rng, std::size_t count) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(testing::random_text(rng, 1 + rng() % 12, 9));
  return out;
}

}  // namespace

TEST_SUITE("ngram") {

TEST_CASE("tokenizer lowercases and splits on whitespace") {
  CHECK(ngram_tokenize("  The CAT\tsat\n") == std::vector<std::string>{"the", "cat", "sat"});
  CHECK(ngram_tokenize("").empty());
}

TEST_CASE("hand-computed bigram probabilities") {
  const std::vector<std::string> corpus{"a b a b"};
  const auto m = ngram_train(corpus, 2, 1.0);
  CHECK(m.vocab_size() == 4);
  CHECK(m.vocabulary()[0] == "<unk>");
  CHECK(m.vocabulary()[1] == "</s>");
  const auto a = m.id_of("a"), b = m.id_of("b");
  const std::vector<TokenId> ctx_a{a}, ctx_b{b};
  CHECK(m.count(ctx_a, b) == 2);
  CHECK(m.context_total(ctx_a) == 2);
  CHECK(m.probability(ctx_a, b) == 0.5);
  CHECK(m.probability(ctx_b, a) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("unseen context is uniform") {
  const std::vector<std::string> corpus{"a b a b"};
  const auto m = ngram_train(corpus, 2, 1.0);
  const std::vector<TokenId> unk{ReferenceNgramModel::kUnkId};
  for (TokenId id = 0; id < 4; ++id) CHECK(m.probability(unk, id) == 0.25);
}

TEST_CASE("score uses unigram first then bigram") {
  const std::vector<std::string> corpus{"a b a b"};
  auto model = std::make_shared<const ReferenceNgramModel>(ngram_train(corpus, 2, 1.0));
  const std::vector<std::string> toks{"a", "b"};
  const auto s = model->score(toks);
  REQUIRE(s.logprobs.size() == 2);
  CHECK(s.undefined_prefix == 0);
  // unigram: count(a)=2 out of 5 tokens (a b a b </s>), V=4 -> 3/9.
  CHECK(s.logprobs[0] == doctest::Approx(std::log(3.0 / 9.0)).epsilon(1e-15));
  CHECK(s.logprobs[1] == doctest::Approx(std::log(0.5)).epsilon(1e-15));

  const std::vector<std::string> single{"a"};
  CHECK(model->score(single).logprobs.size() == 1);

  const std::vector<std::string> unknown{"zz", "yy"};
  const auto u = model->score(unknown);
  CHECK(std::isfinite(u.logprobs[0]));
  CHECK(std::isfinite(u.logprobs[1]));
}

TEST_CASE("min_count maps rare words to UNK") {
  const std::vector<std::string> corpus{"a a b", "a c"};
  const auto m = ngram_train(corpus, 2, 0.5, 2);
  CHECK(m.vocab_size() == 3);
  CHECK(m.id_of("b") == ReferenceNgramModel::kUnkId);
  CHECK(m.id_of("a") != ReferenceNgramModel::kUnkId);
}

TEST_CASE("empty corpus is rejected") {
  CHECK_THROWS_AS(ngram_train(std::vector<std::string>{}, 2, 1.0), EmptyCorpus);
  CHECK_THROWS_AS(ngram_train(std::vector<std::string>{"  "}, 2, 1.0), EmptyCorpus);
}

TEST_CASE("probabilities match a counting oracle") {
  std::mt19937_64 rng(21);
  for (int order : {1, 2, 3}) {
    const auto corpus = random_sentences(rng, 30);
    std::vector<std::vector<std::string>> sentences;
    for (const auto& c : corpus) sentences.push_back(ngram_tokenize(c));
    const auto m = ngram_train(corpus, order, 0.3);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t k = rng() % static_cast<std::size_t>(order);
      std::vector<std::string> hist;
      for (std::size_t i = 0; i < k; ++i) hist.push_back("w" + std::to_string(rng() % 9));
      const auto next = m.vocabulary()[1 + rng() % (m.vocab_size() - 1)];
      const auto ids = m.ids_of(hist);
      CHECK(m.probability(ids, m.id_of(next)) ==
            doctest::Approx(oracle_probability(sentences, m.vocab_size(), 0.3, hist, next)).epsilon(1e-14));
    }
  }
}

TEST_CASE("distributions sum to one") {
  std::mt19937_64 rng(4);
  const auto m = ngram_train(random_sentences(rng, 40), 3, 0.01);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<TokenId> ctx;
    for (std::size_t i = 0, k = rng() % 3; i < k; ++i) ctx.push_back(static_cast<TokenId>(rng() % m.vocab_size()));
    const auto p = m.distribution(ctx);
    double sum = 0;
    for (double x : p) sum += x;
    CHECK(std::fabs(sum - 1.0) <= 1e-9);
    for (TokenId id = 0; id < m.vocab_size(); ++id) CHECK(p[id] == m.probability(ctx, id));
  }
}

TEST_CASE("serialization round trip and bit-exact retraining") {
  std::mt19937_64 rng(9);
  const auto corpus = random_sentences(rng, 50);
  const auto m1 = ngram_train(corpus, 3, 0.25);
  const auto m2 = ngram_train(corpus, 3, 0.25);
  CHECK(m1 == m2);
  CHECK(m1.serialize() == m2.serialize());
  CHECK(m1.fingerprint() == m2.fingerprint());

  testing::TempDir dir;
  m1.save(dir / "m.bin");
  const auto loaded = ReferenceNgramModel::load(dir / "m.bin");
  CHECK(loaded == m1);

  const auto other = ngram_train(corpus, 3, 0.5);
  CHECK(other.fingerprint() != m1.fingerprint());
  CHECK_THROWS_AS(ReferenceNgramModel::deserialize("nope"), Error);
}

TEST_CASE("backend id names order, alpha and fingerprint") {
  const std::vector<std::string> corpus{"a b a b"};
  auto model = std::make_shared<const ReferenceNgramModel>(ngram_train(corpus, 2, 1.0));
  NgramBackend b(model);
  CHECK(b.backend_id().rfind("ref-ngram-o2-a1@", 0) == 0);
  CHECK(b.backend_id().size() == std::string("ref-ngram-o2-a1@").size() + 12);
  CHECK(b.tokenize("A b") == std::vector<std::string>{"a", "b"});
}

}
