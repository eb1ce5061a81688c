#pragma once

// Test doubles, temp directories and independent oracles. Nothing here calls
// into the library's numeric code.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cohertrace/backend.hpp"
#include "cohertrace/errors.hpp"
#include "cohertrace/hash.hpp"

namespace testing {

using cohertrace::LogProbSeries;

inline std::filesystem::path data_dir() { return COHERTRACE_DATA_DIR; }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("cohertrace-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::string> split_ws(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

// Every token has probability 1/V; no context dependence.
class UniformBackend : public cohertrace::LogProbBackend {
 public:
  explicit UniformBackend(double vocab) : vocab_(vocab) {}
  std::string backend_id() const override { return "uniform-" + std::to_string(vocab_); }
  std::vector<std::string> tokenize(std::string_view text) const override { return split_ws(std::string(text)); }
  LogProbSeries score(std::span<const std::string> tokens) const override {
    LogProbSeries s;
    s.backend_id = backend_id();
    s.tokens.assign(tokens.begin(), tokens.end());
    s.logprobs.assign(tokens.size(), std::log(1.0 / vocab_));
    return s;
  }

 private:
  double vocab_;
};

// Deterministic, context-dependent logprobs derived from a hash of the
// previous and current token. Optionally leaves the first position undefined,
// like a causal model with no beginning-of-sequence token.
class HashBackend : public cohertrace::LogProbBackend {
 public:
  explicit HashBackend(bool undefined_first = false, std::string id = "hash") : undefined_first_(undefined_first), id_(std::move(id)) {}
  std::string backend_id() const override { return id_; }
  std::vector<std::string> tokenize(std::string_view text) const override { return split_ws(std::string(text)); }
  LogProbSeries score(std::span<const std::string> tokens) const override {
    ++calls;
    LogProbSeries s;
    s.backend_id = id_;
    s.tokens.assign(tokens.begin(), tokens.end());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i == 0 && undefined_first_) {
        s.logprobs.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const auto d = cohertrace::sha256((i ? tokens[i - 1] : std::string("^")) + "|" + tokens[i]);
      s.logprobs.push_back(-0.05 - 6.0 * (d[0] / 255.0));
    }
    s.undefined_prefix = undefined_first_ && !tokens.empty() ? 1 : 0;
    return s;
  }

  mutable std::atomic<int> calls{0};

 private:
  bool undefined_first_;
  std::string id_;
};

// Throws a backend error on any scoring call that contains `poison`.
class PoisonBackend : public HashBackend {
 public:
  explicit PoisonBackend(std::string poison) : HashBackend(false, "poison"), poison_(std::move(poison)) {}
  LogProbSeries score(std::span<const std::string> tokens) const override {
    if (std::find(tokens.begin(), tokens.end(), poison_) != tokens.end()) {
      throw cohertrace::BackendError(cohertrace::BackendError::Kind::ServerReported, "refused");
    }
    return HashBackend::score(tokens);
  }

 private:
  std::string poison_;
};

inline std::string random_text(std::mt19937_64& rng, std::size_t n_tokens, std::size_t vocab = 30) {
  std::string out;
  for (std::size_t i = 0; i < n_tokens; ++i) {
    if (i) out.push_back(' ');
    out += "w" + std::to_string(rng() % vocab);
  }
  return out;
}

// ---- oracles --------------------------------------------------------------

// Geometric mean of inverse probabilities, accumulated factor by factor in
// long double.
inline long double oracle_geomean_inverse(std::span<const double> logprobs) {
  const long double n = static_cast<long double>(logprobs.size());
  long double product = 1.0L;
  for (double lp : logprobs) product *= std::pow(1.0L / std::exp(static_cast<long double>(lp)), 1.0L / n);
  return product;
}

// Rank of v[i]: 1 + #smaller + (#equal - 1) / 2, by direct counting.
inline std::vector<long double> oracle_ranks(std::span<const double> v) {
  std::vector<long double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (double b : v) {
      less += b < v[i];
      equal += b == v[i];
    }
    r[i] = 1.0L + static_cast<long double>(less) + (static_cast<long double>(equal) - 1.0L) / 2.0L;
  }
  return r;
}

inline long double oracle_pearson(const std::vector<long double>& a, const std::vector<long double>& b) {
  const long double n = static_cast<long double>(a.size());
  long double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  long double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline long double oracle_spearman(std::span<const double> x, std::span<const double> y) {
  return oracle_pearson(oracle_ranks(x), oracle_ranks(y));
}

// Two-sided permutation p-value by enumerating every ordering of y's values.
inline double oracle_exact_p(std::span<const double> x, std::span<const double> y) {
  const long double observed = std::fabs(oracle_spearman(x, y));
  std::vector<std::size_t> perm(y.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::size_t hits = 0, total = 0;
  std::vector<double> yp(y.size());
  do {
    for (std::size_t i = 0; i < perm.size(); ++i) yp[i] = y[perm[i]];
    hits += std::fabs(oracle_spearman(x, yp)) >= observed - 1e-9L;
    ++total;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(hits) / static_cast<double>(total);
}

// Ties drawn from a small integer range.
inline std::vector<double> random_tied(std::mt19937_64& rng, std::size_t n, int levels) {
  std::vector<double> v(n);
  for (auto& a : v) a = static_cast<double>(rng() % static_cast<std::uint64_t>(levels));
  return v;
}

}  // namespace testing
