#include "cohertrace/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "cohertrace/errors.hpp"

namespace cohertrace {

namespace {

// |rho| values within this distance of the observed |rho| count as reaching it.
constexpr double kPermutationTolerance = 1e-9;

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw LengthMismatch("spearman: lengths " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  if (x.size() < 3) throw DegenerateInput("spearman: need at least 3 pairs");
}

std::vector<double> centered(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - mean;
  return out;
}

double sum_squares(std::span<const double> v) {
  double s = 0.0;
  for (double a : v) s += a * a;
  return s;
}

}  // namespace

std::string_view to_string(PValueMethod method) {
  return method == PValueMethod::ExactPermutation ? "EXACT_PERMUTATION" : "T_APPROX";
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // Positions i..j-1 (0-based) share rank mean(i+1 .. j).
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto cx = centered(average_ranks(x));
  const auto cy = centered(average_ranks(y));
  const double sxx = sum_squares(cx);
  const double syy = sum_squares(cy);
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInput("spearman: constant input");
  double sxy = 0.0;
  for (std::size_t i = 0; i < cx.size(); ++i) sxy += cx[i] * cy[i];
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

PValue spearman_pvalue(double rho, std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const std::size_t n = x.size();
  if (n <= kExactPermutationMaxN) {
    const auto cx = centered(average_ranks(x));
    const auto cy = centered(average_ranks(y));
    const double denom = std::sqrt(sum_squares(cx) * sum_squares(cy));
    if (denom == 0.0) throw DegenerateInput("spearman: constant input");
    const double threshold = std::abs(rho) - kPermutationTolerance;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t total = 0;
    std::size_t extreme = 0;
    do {
      double sxy = 0.0;
      for (std::size_t i = 0; i < n; ++i) sxy += cx[i] * cy[perm[i]];
      if (std::abs(sxy / denom) >= threshold) ++extreme;
      ++total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return {static_cast<double>(extreme) / static_cast<double>(total), PValueMethod::ExactPermutation};
  }
  const double r = std::abs(rho);
  if (r >= 1.0) return {0.0, PValueMethod::TApprox};
  const double df = static_cast<double>(n - 2);
  const double t = r * std::sqrt(df / (1.0 - r * r));
  const boost::math::students_t dist(df);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
  return {std::clamp(p, 0.0, 1.0), PValueMethod::TApprox};
}

CorrelationResult spearman_test(std::span<const double> x, std::span<const double> y) {
  CorrelationResult out;
  out.rho = spearman_rho(x, y);
  out.n = x.size();
  const auto p = spearman_pvalue(out.rho, x, y);
  out.p_value = p.p;
  out.method = p.method;
  out.stars = significance_stars(out.p_value);
  return out;
}

std::string significance_stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

double weighted_kappa(std::span<const int> rater1, std::span<const int> rater2, std::span<const int> categories,
                      KappaWeighting weighting) {
  if (rater1.size() != rater2.size()) {
    throw LengthMismatch("kappa: lengths " + std::to_string(rater1.size()) + " and " + std::to_string(rater2.size()));
  }
  if (rater1.size() < 2) throw Error("kappa: need at least 2 rated items");
  const std::size_t k = categories.size();
  if (k < 2) throw UndefinedKappa("kappa: fewer than two categories");

  auto position = [&](int value) {
    auto it = std::find(categories.begin(), categories.end(), value);
    if (it == categories.end()) throw Error("kappa: rating " + std::to_string(value) + " is not a category");
    return static_cast<std::size_t>(it - categories.begin());
  };

  const double n = static_cast<double>(rater1.size());
  std::vector<double> observed(k * k, 0.0);
  std::vector<double> row(k, 0.0);
  std::vector<double> col(k, 0.0);
  for (std::size_t i = 0; i < rater1.size(); ++i) {
    const auto a = position(rater1[i]);
    const auto b = position(rater2[i]);
    observed[a * k + b] += 1.0 / n;
    row[a] += 1.0 / n;
    col[b] += 1.0 / n;
  }

  const double span = static_cast<double>(k - 1);
  double weighted_observed = 0.0;
  double weighted_expected = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double d = std::abs(static_cast<double>(i) - static_cast<double>(j)) / span;
      const double w = weighting == KappaWeighting::Linear ? d : d * d;
      weighted_observed += w * observed[i * k + j];
      weighted_expected += w * row[i] * col[j];
    }
  }
  if (weighted_expected == 0.0) throw UndefinedKappa("kappa: no expected disagreement");
  return 1.0 - weighted_observed / weighted_expected;
}

std::map<std::string, std::vector<ProfileBand>> profile_band(std::span<const WindowProfile> profiles,
                                                             std::span<const std::string> group_keys) {
  if (profiles.empty()) throw Error("profile_band: no profiles");
  if (profiles.size() != group_keys.size()) throw LengthMismatch("profile_band: one group key per profile");
  const auto window = profiles.front().window;
  for (const auto& p : profiles) {
    if (p.window != window) throw MixedWindowSizes("profile_band: profiles use different window sizes");
  }

  std::map<std::string, std::vector<const WindowProfile*>> groups;
  for (std::size_t i = 0; i < profiles.size(); ++i) groups[group_keys[i]].push_back(&profiles[i]);

  std::map<std::string, std::vector<ProfileBand>> out;
  for (const auto& [key, members] : groups) {
    std::size_t longest = 0;
    for (const auto* p : members) longest = std::max(longest, p->values.size());
    auto& bands = out[key];
    bands.reserve(longest);
    for (std::size_t idx = 0; idx < longest; ++idx) {
      ProfileBand band;
      band.index = idx;
      double sum = 0.0;
      for (const auto* p : members) {
        if (idx < p->values.size()) {
          sum += p->values[idx];
          ++band.n;
        }
      }
      band.mean = sum / static_cast<double>(band.n);
      if (band.n >= 2) {
        double ss = 0.0;
        for (const auto* p : members) {
          if (idx < p->values.size()) ss += (p->values[idx] - band.mean) * (p->values[idx] - band.mean);
        }
        const double sd = std::sqrt(ss / static_cast<double>(band.n - 1));
        const double half = kNormal975 * sd / std::sqrt(static_cast<double>(band.n));
        band.ci_low = band.mean - half;
        band.ci_high = band.mean + half;
      }
      bands.push_back(band);
    }
  }
  return out;
}

}  // namespace cohertrace
