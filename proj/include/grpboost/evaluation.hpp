#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grpboost/boosting.hpp"
#include "grpboost/spatial.hpp"

namespace grpboost {

struct RocResult {
  double auc = 0.0;
  /// One point per distinct score threshold, from (0, 0) to (1, 1).
  std::vector<double> fpr;
  std::vector<double> tpr;
  std::vector<double> thresholds;
};

/// AUC from the Mann-Whitney statistic, ties counted one half.
RocResult roc_auc(std::span<const int> labels, std::span<const double> scores);

struct ScoreReport {
  std::string metric;
  double value = 0.0;
  std::vector<double> contributions;
  std::optional<double> p_value;
  std::size_t n_perm = 0;
};

ScoreReport brier(std::span<const int> indicators, std::span<const double> probabilities);

/// One-sided paired sign-flip test of "A has lower mean than B". With
/// d_i = B_i - A_i, p = (1 + #{sign-flipped sum of d >= observed}) / (1 + n_perm).
/// p = 1 when all differences vanish or n_perm = 0.
double permutation_test(std::span<const double> a, std::span<const double> b, std::size_t n_perm,
                        std::uint64_t seed);

struct QQTable {
  std::vector<double> probs;      // plotting positions i / (n + 1)
  std::vector<double> model;      // GPD(1, xi) quantiles
  std::vector<double> empirical;  // sorted scaled excesses
  std::vector<double> lower;
  std::vector<double> upper;
  double fraction_inside() const;
  /// Number of points above the band among the top `tail` order statistics.
  std::size_t upper_exits(std::size_t tail) const;
};

/// QQ of excesses e_i, each with its own GPD scale a_i, after scaling to
/// e_i / a_i ~ GPD(1, xi). Bands are pointwise `level` intervals of sorted
/// samples drawn from the fitted GPDs and scaled the same way.
QQTable qq_tail(std::span<const double> excesses, std::span<const double> scales, double xi,
                std::size_t n_boot, double level, std::uint64_t seed);

/// GPD(scale, xi) quantile function.
double gpd_quantile(double p, double scale, double xi);

struct ExtremogramPair {
  int s1 = 0;
  int s2 = 0;
  double distance = 0.0;
  double estimate = 0.0;
  std::size_t n_cond = 0;
};

/// Empirical Pr(Y(s2) > u_q(s2) | Y(s1) > u_q(s1)) over the given fields for
/// every pair s1 < s2, u_q the per-point type-7 quantile. Needs 20 fields.
std::vector<ExtremogramPair> extremogram(const std::vector<std::vector<double>>& fields, const Grid& grid,
                                         double q, double theta_scale = 0.0);

struct ExtremogramBin {
  double lo = 0.0;
  double hi = 0.0;
  double mean = 0.0;
  std::size_t n_pairs = 0;
};

/// Averages pair estimates in equal-width distance bins over [0, max_distance].
std::vector<ExtremogramBin> bin_extremogram(const std::vector<ExtremogramPair>& pairs, std::size_t n_bins,
                                            double max_distance);

struct ShapAttribution {
  double base = 0.0;
  std::vector<double> phi;
};

/// Cover-weighted mean output of a tree.
double tree_expected_value(const RegressionTree& tree);

/// Path-dependent TreeSHAP, summed over trees and scaled by the learning
/// rate. base + sum(phi) equals the ensemble prediction.
ShapAttribution tree_shap(const TreeEnsemble& ensemble, std::span<const double> x);

/// Mean |phi| per grid point over the selected rows. feature_point maps a
/// feature index to a grid id, or -1 for features not tied to a point.
std::vector<double> region_shap_summary(const std::vector<ShapAttribution>& attributions,
                                        std::span<const int> feature_point, std::size_t n_points,
                                        std::span<const std::size_t> rows);

/// Indices whose score is at or above the (1 - fraction) type-7 quantile.
std::vector<std::size_t> top_fraction(std::span<const double> scores, double fraction);

// ---------------------------------------------------------------------------
// Parameter-recovery study

struct StudyConfig {
  std::size_t n_reps = 20;
  int grid_nx = 10;
  int grid_ny = 5;
  double spacing = 0.5;
  std::size_t n_days = 272;
  std::size_t n_predictors = 242;
  double alpha = 1.0;
  double theta_scale = 0.0;
  int vecchia_k = 20;
  /// Predictor columns driving theta_extent.
  std::array<std::size_t, 2> driver_columns{40, 170};
  TrainConfig train;
  std::size_t early_iteration = 5;
  /// Grid-id pairs for which pi_t(s1, s2) is reported.
  std::vector<std::pair<int, int>> pairs{{0, 1}, {0, 22}};
  std::uint64_t seed = 7;

  StudyConfig();
};

/// theta_extent = 0.2 + 2.8 ilogit(1.5 x_a - 1.2 tanh(1.5 x_b)).
double study_driver(double xa, double xb);

struct StudyIteration {
  std::size_t n_trees = 0;
  /// estimate[pair][day][rep]
  std::vector<std::vector<std::vector<double>>> estimate;
  double coverage = 0.0;          // fraction of (pair, day) with truth in the IQR over reps
  double median_abs_bias = 0.0;   // median over (pair, day) of |mean over reps - truth|
};

struct StudyReport {
  std::vector<double> theta_true;            // per day
  std::vector<std::vector<double>> pi_true;  // [pair][day]
  StudyIteration early;
  StudyIteration late;
  double seconds = 0.0;
};

StudyReport simulation_study(const StudyConfig& config);

/// Synthetic smooth predictor fields: n_days x n_cols, columns laid out on a
/// 22-wide lattice.
FeatureMatrix synthetic_z500(std::size_t n_days, std::size_t n_cols, std::uint64_t seed);

}  // namespace grpboost
