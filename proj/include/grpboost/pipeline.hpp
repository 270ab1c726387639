#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "grpboost/boosting.hpp"
#include "grpboost/brown_resnick.hpp"
#include "grpboost/evt_losses.hpp"
#include "grpboost/io.hpp"

namespace grpboost {

/// Weighted mean of each day's field over the region; uniform weights when
/// none are given. y is days x grid points.
std::vector<double> risk_series(const Eigen::MatrixXd& y, std::span<const int> region,
                                std::span<const double> weights = {});

/// Full-length risk weights: 1/|region| on the region, 0 elsewhere.
std::vector<double> region_weights(std::span<const int> region, std::size_t n_points);

struct ThresholdSpec {
  double risk_level = 0.95;
  double u = 0.0;
  double q_prime = 0.0;
  std::vector<int> region;
  std::vector<double> b;
  std::vector<double> m;
  std::vector<double> sigma_hat;
  std::vector<double> xi_hat;
  std::vector<std::size_t> n_excess;
  /// Row indices (into the matrix given to select_thresholds) with r_t >= u.
  std::vector<std::size_t> exceedance_days;

  nlohmann::json to_json() const;
  static ThresholdSpec from_json(const nlohmann::json& j);
};

/// u = type-7 quantile of the risk series at risk_level; b_d = q'-quantile of
/// y_d over exceedance days with q' found by bisection so that r(b) = u;
/// m_d = max(largest excess, -sigma_hat_d / xi_hat_d when xi_hat_d < 0) from
/// per-point GPD fits of the positive excesses.
/// Needs at least 100 days.
ThresholdSpec select_thresholds(const Eigen::MatrixXd& y, std::span<const int> region,
                                double risk_level = 0.95);

/// b(q'): per-point q'-quantiles of y over the given days.
std::vector<double> marginal_quantiles(const Eigen::MatrixXd& y, std::span<const std::size_t> days, double q);

/// Which variables feed each sub-model and how soil moisture is aggregated.
struct PredictorSchema {
  std::string response = "t2m";
  std::string z500 = "z500";
  std::string sm = "sm";
  std::vector<int> region;
  std::array<std::vector<int>, 4> rectangles;

  std::vector<std::string> occurrence_names(std::size_t n_points) const;
  std::vector<std::string> intensity_names(std::size_t n_points) const;
  std::vector<std::string> dependence_names(std::size_t n_points) const;

  nlohmann::json to_json() const;
  static PredictorSchema from_json(const nlohmann::json& j);
};

/// Splits the bounding box of the grid at the midpoints of x and y into four
/// axis-aligned rectangles: (x low, y low), (x high, y low), (x low, y high),
/// (x high, y high). Points on a midpoint go to the high side.
std::array<std::vector<int>, 4> quadrant_partition(const Grid& grid);

PredictorSchema make_schema(const Grid& grid, std::vector<int> region, std::string response = "t2m",
                            std::string z500 = "z500", std::string sm = "sm");

/// Z500 field + mean SM over the target region, one row per day.
FeatureMatrix occurrence_features(const GriddedDataset& ds, const PredictorSchema& schema,
                                  std::span<const std::size_t> days);
/// Z500 field + the four rectangle SM means, one row per day. An empty
/// rectangle gives NaN.
FeatureMatrix dependence_features(const GriddedDataset& ds, const PredictorSchema& schema,
                                  std::span<const std::size_t> days);

struct PointDay {
  std::size_t point = 0;
  std::size_t day = 0;
};

/// Z500 field + local SM + lat + lon (y and x when the grid has no lon/lat).
FeatureMatrix intensity_features(const GriddedDataset& ds, const PredictorSchema& schema,
                                 std::span<const PointDay> rows);

struct FitConfig {
  double risk_level = 0.95;
  double xi = -0.3;
  double alpha = 1.27;
  double theta_scale = -0.07;
  int vecchia_k = 20;
  /// Scale used to standardise to z. The GPD scale keeps every observation
  /// inside the support; kExpTheta follows the displayed transform literally.
  ZScale z_scale = ZScale::kGpdScale;
  /// Estimate alpha and theta_scale by a grid search on the predictor-free
  /// model instead of using the values above.
  bool prefit_dependence = false;
  TrainConfig occurrence;
  TrainConfig intensity;
  /// Leaf weights capped at 1 by default; see TrainConfig::max_delta_step.
  TrainConfig dependence = [] {
    TrainConfig t;
    t.max_delta_step = 1.0;
    return t;
  }();
  std::size_t n_folds = 5;
  /// With CV the TrainConfig n_trees is the largest count considered.
  bool cross_validate = true;
  std::uint64_t seed = 1;
};

struct SubModelBundle {
  static constexpr const char* kFormat = "grpboost-bundle/1";

  TreeEnsemble occurrence;
  TreeEnsemble intensity;
  TreeEnsemble dependence;
  ThresholdSpec thresholds;
  PredictorSchema schema;
  Grid grid;
  double xi = -0.3;
  double alpha = 1.27;
  double theta_scale = -0.07;
  int vecchia_k = 20;
  ZScale z_scale = ZScale::kExpTheta;
  std::uint64_t seed = 1;
  std::vector<std::string> train_days;

  nlohmann::json to_json() const;
  static SubModelBundle from_json(const nlohmann::json& j);
  std::string dump() const;
  static SubModelBundle parse(const std::string& text);
};

struct StageReport {
  std::string name;
  std::size_t n_rows = 0;
  std::size_t n_trees = 0;
  std::optional<CvResult> cv;
  BoostTrace trace;
};

struct FitResult {
  SubModelBundle bundle;
  std::vector<StageReport> stages;
  /// Standardised fields of the exceedance training days.
  std::vector<std::vector<double>> z;
};

/// Sequential fit: thresholds, occurrence on all days, intensity on rows with
/// y > b of exceedance days, transform to z with the intensity predictions,
/// dependence. train_days indexes ds.days (all days when empty).
FitResult fit_all(const GriddedDataset& ds, const PredictorSchema& schema, const FitConfig& config,
                  std::span<const std::size_t> train_days = {});

/// Grid search plus one refinement pass over (alpha, theta_scale) for the
/// predictor-free dependence model. Returns {alpha, theta_scale, theta_extent}.
std::array<double, 3> prefit_dependence(const Grid& grid, const std::vector<std::vector<double>>& z,
                                        int vecchia_k);

struct DayPrediction {
  double p_occurrence = 0.0;
  std::vector<double> theta_int;
  double theta_extent = 0.0;
};

/// Pure function of the bundle and the day's predictors.
DayPrediction predict_day(const SubModelBundle& bundle, const GriddedDataset& ds, std::size_t day);

/// Scale field used to map between z and the data scale.
std::vector<double> day_scale(const SubModelBundle& bundle, const DayPrediction& prediction);

GrpParams day_grp_params(const SubModelBundle& bundle, const DayPrediction& prediction,
                         std::optional<double> override_extent = {});

struct ScenarioSet {
  std::vector<std::vector<double>> fields;
  std::vector<double> risk;  // target-region average of each field
  SimulationStats stats;
};

ScenarioSet generate_scenarios(const SubModelBundle& bundle, const DayPrediction& prediction, std::size_t n,
                               std::uint64_t seed, std::optional<double> override_extent = {});

}  // namespace grpboost
