#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cohertrace/ppl.hpp"

namespace cohertrace {

enum class PValueMethod { TApprox, ExactPermutation };

std::string_view to_string(PValueMethod method);

/// Largest n for which p-values come from full permutation enumeration.
inline constexpr std::size_t kExactPermutationMaxN = 8;

struct CorrelationResult {
  double rho = 0.0;
  std::size_t n = 0;
  double p_value = 1.0;
  PValueMethod method = PValueMethod::TApprox;
  std::string stars;
};

/// 1-based ranks; tied values share the average of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of the average-rank vectors. Throws LengthMismatch,
/// or DegenerateInput when n < 3 or either input is constant.
double spearman_rho(std::span<const double> x, std::span<const double> y);

struct PValue {
  double p = 1.0;
  PValueMethod method = PValueMethod::TApprox;
};

/// Two-sided p-value for `rho` observed on (x, y). For n <= 8 this is the
/// exact fraction of the n! permutations of y whose |rho| reaches the
/// observed |rho|; above that, Student's t with n - 2 degrees of freedom on
/// t = rho * sqrt((n - 2) / (1 - rho^2)).
PValue spearman_pvalue(double rho, std::span<const double> x, std::span<const double> y);

/// rho, p and stars in one call.
CorrelationResult spearman_test(std::span<const double> x, std::span<const double> y);

/// "***" below 0.01, "**" below 0.05, "*" below 0.1, otherwise "".
std::string significance_stars(double p);

inline constexpr std::string_view kSignificanceLegend = "***p<0.01, **p<0.05, *p<0.1";

enum class KappaWeighting { Linear, Quadratic };

/// Weighted Cohen's kappa, 1 - sum(w * O) / sum(w * E), with disagreement
/// weights |i - j| / (k - 1) or ((i - j) / (k - 1))^2 over category positions.
double weighted_kappa(std::span<const int> rater1, std::span<const int> rater2, std::span<const int> categories,
                      KappaWeighting weighting = KappaWeighting::Linear);

/// Mean window perplexity at one window index across a group of profiles.
struct ProfileBand {
  std::size_t index = 0;
  double mean = 0.0;
  /// Normal-approximation 95% bounds; absent when fewer than two profiles
  /// reach this index.
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  std::size_t n = 0;
};

inline constexpr double kNormal975 = 1.96;

/// Groups profiles by `group_keys` (parallel to `profiles`) and returns, per
/// group, one band entry per window index reached by any of its profiles.
/// Throws MixedWindowSizes when the profiles use different windows.
std::map<std::string, std::vector<ProfileBand>> profile_band(std::span<const WindowProfile> profiles,
                                                             std::span<const std::string> group_keys);

}  // namespace cohertrace
