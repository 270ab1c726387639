#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace grpboost {

double normal_cdf(double x);
double normal_pdf(double x);
double ilogit(double x);

/// Empirical quantile with linear interpolation between order statistics
/// (R's type 7). Every quantile in the library goes through here.
double quantile_type7(std::span<const double> values, double prob);
/// Same, for data already sorted ascending.
double quantile_type7_sorted(std::span<const double> sorted, double prob);

double mean(std::span<const double> values);
/// Sample standard deviation (n - 1 denominator).
double sample_sd(std::span<const double> values);

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; derives independent stream seeds from (root, index).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

}  // namespace grpboost
