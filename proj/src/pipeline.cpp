#include "grpboost/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "grpboost/error.hpp"
#include "grpboost/stats.hpp"

namespace grpboost {

using nlohmann::json;

std::vector<double> risk_series(const Eigen::MatrixXd& y, std::span<const int> region,
                                std::span<const double> weights) {
  if (region.empty()) throw DataError("risk functional: empty target region");
  if (!weights.empty() && weights.size() != region.size()) throw DataError("risk weights do not match the region");
  for (int id : region) {
    if (id < 0 || id >= y.cols()) throw DataError("target region id " + std::to_string(id) + " not on the grid");
  }
  std::vector<double> r(static_cast<std::size_t>(y.rows()));
  for (Eigen::Index t = 0; t < y.rows(); ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < region.size(); ++i) {
      const double w = weights.empty() ? 1.0 / static_cast<double>(region.size()) : weights[i];
      s += w * y(t, region[i]);
    }
    r[static_cast<std::size_t>(t)] = s;
  }
  return r;
}

std::vector<double> region_weights(std::span<const int> region, std::size_t n_points) {
  std::vector<double> w(n_points, 0.0);
  for (int id : region) w[static_cast<std::size_t>(id)] = 1.0 / static_cast<double>(region.size());
  return w;
}

std::vector<double> marginal_quantiles(const Eigen::MatrixXd& y, std::span<const std::size_t> days, double q) {
  std::vector<double> b(static_cast<std::size_t>(y.cols()));
  std::vector<double> col(days.size());
  for (Eigen::Index d = 0; d < y.cols(); ++d) {
    for (std::size_t i = 0; i < days.size(); ++i) col[i] = y(static_cast<Eigen::Index>(days[i]), d);
    b[static_cast<std::size_t>(d)] = quantile_type7(col, q);
  }
  return b;
}

// ---------------------------------------------------------------------------

json ThresholdSpec::to_json() const {
  return json{{"risk_level", risk_level}, {"u", u},           {"q_prime", q_prime},
              {"region", region},         {"b", b},           {"m", m},
              {"sigma_hat", sigma_hat},   {"xi_hat", xi_hat}, {"n_excess", n_excess},
              {"exceedance_days", exceedance_days}};
}

ThresholdSpec ThresholdSpec::from_json(const json& j) {
  ThresholdSpec s;
  s.risk_level = j.at("risk_level").get<double>();
  s.u = j.at("u").get<double>();
  s.q_prime = j.at("q_prime").get<double>();
  s.region = j.at("region").get<std::vector<int>>();
  s.b = j.at("b").get<std::vector<double>>();
  s.m = j.at("m").get<std::vector<double>>();
  s.sigma_hat = j.at("sigma_hat").get<std::vector<double>>();
  s.xi_hat = j.at("xi_hat").get<std::vector<double>>();
  s.n_excess = j.at("n_excess").get<std::vector<std::size_t>>();
  s.exceedance_days = j.at("exceedance_days").get<std::vector<std::size_t>>();
  return s;
}

ThresholdSpec select_thresholds(const Eigen::MatrixXd& y, std::span<const int> region, double risk_level) {
  if (y.rows() < 100) throw DataError("threshold selection needs at least 100 days, got " + std::to_string(y.rows()));
  if (!(risk_level > 0.0 && risk_level < 1.0)) throw ConfigError("risk_level must lie in (0, 1)");
  ThresholdSpec spec;
  spec.risk_level = risk_level;
  spec.region.assign(region.begin(), region.end());
  const auto r = risk_series(y, region);
  spec.u = quantile_type7(r, risk_level);
  for (std::size_t t = 0; t < r.size(); ++t) {
    if (r[t] >= spec.u) spec.exceedance_days.push_back(t);
  }

  // Per-point sorted values over exceedance days, so b(q') is cheap.
  const auto D = static_cast<std::size_t>(y.cols());
  std::vector<std::vector<double>> sorted(D);
  for (std::size_t d = 0; d < D; ++d) {
    for (auto t : spec.exceedance_days) sorted[d].push_back(y(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)));
    std::sort(sorted[d].begin(), sorted[d].end());
  }
  auto b_at = [&](double q) {
    std::vector<double> b(D);
    for (std::size_t d = 0; d < D; ++d) b[d] = quantile_type7_sorted(sorted[d], q);
    return b;
  };
  auto r_of = [&](const std::vector<double>& b) {
    double s = 0.0;
    for (int id : region) s += b[static_cast<std::size_t>(id)];
    return s / static_cast<double>(region.size());
  };
  const double tol = 1e-9 * (1.0 + std::abs(spec.u));
  const double f0 = r_of(b_at(0.0)) - spec.u;
  const double f1 = r_of(b_at(1.0)) - spec.u;
  if (f1 - f0 <= tol && std::abs(f0) <= tol) {
    spec.q_prime = risk_level;
  } else if (f0 > tol) {
    // u sits below every exceedance-day risk, as with a one-point region.
    spec.q_prime = 0.0;
  } else if (f1 < -tol) {
    throw NumericError("threshold bisection does not bracket u = " + format_double(spec.u) +
                       ": r(b) ranges over [" + format_double(f0 + spec.u) + ", " + format_double(f1 + spec.u) + "]");
  } else {
    double lo = 0.0, hi = 1.0, q = 0.5;
    for (int it = 0; it < 200; ++it) {
      q = 0.5 * (lo + hi);
      const double f = r_of(b_at(q)) - spec.u;
      if (std::abs(f) <= tol) break;
      if (f < 0.0) {
        lo = q;
      } else {
        hi = q;
      }
    }
    spec.q_prime = q;
  }
  spec.b = b_at(spec.q_prime);

  spec.m.resize(D);
  spec.sigma_hat.resize(D);
  spec.xi_hat.resize(D);
  spec.n_excess.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    std::vector<double> ex;
    for (double v : sorted[d]) {
      if (v > spec.b[d]) ex.push_back(v - spec.b[d]);
    }
    spec.n_excess[d] = ex.size();
    if (ex.size() < 2) throw DataError("grid point " + std::to_string(d) + " has fewer than 2 excesses over b");
    GpdFit fit;
    try {
      fit = gpd_mle(ex);
    } catch (const DataError& e) {
      throw DataError("grid point " + std::to_string(d) + ": " + e.what());
    }
    spec.sigma_hat[d] = fit.sigma;
    spec.xi_hat[d] = fit.xi;
    // Upper bound of the excesses: the fitted endpoint -sigma/xi when the
    // fit is bounded, never below the largest observed excess.
    spec.m[d] = ex.back();
    if (fit.xi < 0.0) spec.m[d] = std::max(spec.m[d], -fit.sigma / fit.xi);
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Predictors

std::array<std::vector<int>, 4> quadrant_partition(const Grid& grid) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& p : grid.points()) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const double xm = 0.5 * (x0 + x1), ym = 0.5 * (y0 + y1);
  std::array<std::vector<int>, 4> out;
  for (const auto& p : grid.points()) {
    const int q = (p.x >= xm ? 1 : 0) + (p.y >= ym ? 2 : 0);
    out[static_cast<std::size_t>(q)].push_back(p.id);
  }
  return out;
}

PredictorSchema make_schema(const Grid& grid, std::vector<int> region, std::string response, std::string z500,
                            std::string sm) {
  PredictorSchema s;
  s.response = std::move(response);
  s.z500 = std::move(z500);
  s.sm = std::move(sm);
  s.region = std::move(region);
  s.rectangles = quadrant_partition(grid);
  return s;
}

namespace {

std::vector<std::string> z500_names(const std::string& var, std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t d = 0; d < n; ++d) names.push_back(var + "_" + std::to_string(d));
  return names;
}

double mean_over(const Eigen::MatrixXd& m, Eigen::Index t, std::span<const int> ids) {
  if (ids.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (int id : ids) s += m(t, id);
  return s / static_cast<double>(ids.size());
}

void check_day(const GriddedDataset& ds, std::size_t day) {
  if (day >= ds.n_days()) throw DataError("predictor day index " + std::to_string(day) + " out of range");
}

}  // namespace

std::vector<std::string> PredictorSchema::occurrence_names(std::size_t n) const {
  auto names = z500_names(z500, n);
  names.push_back(sm + "_region");
  return names;
}

std::vector<std::string> PredictorSchema::intensity_names(std::size_t n) const {
  auto names = z500_names(z500, n);
  names.push_back(sm + "_local");
  names.push_back("lat");
  names.push_back("lon");
  return names;
}

std::vector<std::string> PredictorSchema::dependence_names(std::size_t n) const {
  auto names = z500_names(z500, n);
  for (int r = 0; r < 4; ++r) names.push_back(sm + "_rect" + std::to_string(r));
  return names;
}

json PredictorSchema::to_json() const {
  json rect = json::array();
  for (const auto& r : rectangles) rect.push_back(r);
  return json{{"response", response}, {"z500", z500}, {"sm", sm}, {"region", region}, {"rectangles", rect}};
}

PredictorSchema PredictorSchema::from_json(const json& j) {
  PredictorSchema s;
  s.response = j.at("response").get<std::string>();
  s.z500 = j.at("z500").get<std::string>();
  s.sm = j.at("sm").get<std::string>();
  s.region = j.at("region").get<std::vector<int>>();
  const auto& rect = j.at("rectangles");
  if (rect.size() != 4) throw DataError("schema needs four rectangles");
  for (std::size_t r = 0; r < 4; ++r) s.rectangles[r] = rect[r].get<std::vector<int>>();
  return s;
}

FeatureMatrix occurrence_features(const GriddedDataset& ds, const PredictorSchema& schema,
                                  std::span<const std::size_t> days) {
  const auto& z = ds.variable(schema.z500);
  const auto& sm = ds.variable(schema.sm);
  const std::size_t D = ds.grid.size();
  FeatureMatrix x(days.size(), D + 1, schema.occurrence_names(D));
  for (std::size_t i = 0; i < days.size(); ++i) {
    check_day(ds, days[i]);
    const auto t = static_cast<Eigen::Index>(days[i]);
    for (std::size_t d = 0; d < D; ++d) x(i, d) = z(t, static_cast<Eigen::Index>(d));
    x(i, D) = mean_over(sm, t, schema.region);
  }
  return x;
}

FeatureMatrix dependence_features(const GriddedDataset& ds, const PredictorSchema& schema,
                                  std::span<const std::size_t> days) {
  const auto& z = ds.variable(schema.z500);
  const auto& sm = ds.variable(schema.sm);
  const std::size_t D = ds.grid.size();
  FeatureMatrix x(days.size(), D + 4, schema.dependence_names(D));
  for (std::size_t i = 0; i < days.size(); ++i) {
    check_day(ds, days[i]);
    const auto t = static_cast<Eigen::Index>(days[i]);
    for (std::size_t d = 0; d < D; ++d) x(i, d) = z(t, static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < 4; ++r) x(i, D + r) = mean_over(sm, t, schema.rectangles[r]);
  }
  return x;
}

FeatureMatrix intensity_features(const GriddedDataset& ds, const PredictorSchema& schema,
                                 std::span<const PointDay> rows) {
  const auto& z = ds.variable(schema.z500);
  const auto& sm = ds.variable(schema.sm);
  const std::size_t D = ds.grid.size();
  FeatureMatrix x(rows.size(), D + 3, schema.intensity_names(D));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check_day(ds, rows[i].day);
    const auto t = static_cast<Eigen::Index>(rows[i].day);
    for (std::size_t d = 0; d < D; ++d) x(i, d) = z(t, static_cast<Eigen::Index>(d));
    const auto& p = ds.grid[rows[i].point];
    x(i, D) = sm(t, static_cast<Eigen::Index>(rows[i].point));
    x(i, D + 1) = p.lat.value_or(p.y);
    x(i, D + 2) = p.lon.value_or(p.x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Bundle

namespace {

std::string zscale_name(ZScale s) { return s == ZScale::kExpTheta ? "exp_theta" : "gpd_scale"; }

ZScale zscale_from(const std::string& s) {
  if (s == "exp_theta") return ZScale::kExpTheta;
  if (s == "gpd_scale") return ZScale::kGpdScale;
  throw ConfigError("unknown z scale convention '" + s + "'");
}

json grid_json(const Grid& g) {
  json pts = json::array();
  for (const auto& p : g.points()) {
    json jp{{"id", p.id}, {"x", p.x}, {"y", p.y}};
    if (p.lon) jp["lon"] = *p.lon;
    if (p.lat) jp["lat"] = *p.lat;
    pts.push_back(jp);
  }
  return pts;
}

Grid grid_from(const json& j) {
  std::vector<GridPoint> pts;
  for (const auto& jp : j) {
    GridPoint p;
    p.id = jp.at("id").get<int>();
    p.x = jp.at("x").get<double>();
    p.y = jp.at("y").get<double>();
    if (jp.contains("lon")) p.lon = jp["lon"].get<double>();
    if (jp.contains("lat")) p.lat = jp["lat"].get<double>();
    pts.push_back(p);
  }
  return Grid(std::move(pts));
}

}  // namespace

json SubModelBundle::to_json() const {
  return json{{"format", kFormat},
              {"occurrence", occurrence.to_json()},
              {"intensity", intensity.to_json()},
              {"dependence", dependence.to_json()},
              {"thresholds", thresholds.to_json()},
              {"schema", schema.to_json()},
              {"grid", grid_json(grid)},
              {"xi", xi},
              {"alpha", alpha},
              {"theta_scale", theta_scale},
              {"vecchia_k", vecchia_k},
              {"z_scale", zscale_name(z_scale)},
              {"seed", seed},
              {"train_days", train_days}};
}

SubModelBundle SubModelBundle::from_json(const json& j) {
  if (j.value("format", std::string()) != kFormat) {
    throw DataError("not a " + std::string(kFormat) + " document");
  }
  SubModelBundle b;
  b.occurrence = TreeEnsemble::from_json(j.at("occurrence"));
  b.intensity = TreeEnsemble::from_json(j.at("intensity"));
  b.dependence = TreeEnsemble::from_json(j.at("dependence"));
  b.thresholds = ThresholdSpec::from_json(j.at("thresholds"));
  b.schema = PredictorSchema::from_json(j.at("schema"));
  b.grid = grid_from(j.at("grid"));
  b.xi = j.at("xi").get<double>();
  b.alpha = j.at("alpha").get<double>();
  b.theta_scale = j.at("theta_scale").get<double>();
  b.vecchia_k = j.at("vecchia_k").get<int>();
  b.z_scale = zscale_from(j.at("z_scale").get<std::string>());
  b.seed = j.at("seed").get<std::uint64_t>();
  b.train_days = j.at("train_days").get<std::vector<std::string>>();
  return b;
}

std::string SubModelBundle::dump() const { return to_json().dump(1) + "\n"; }

SubModelBundle SubModelBundle::parse(const std::string& text) {
  try {
    return from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed bundle: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

TreeEnsemble fit_stage(const std::string& name, const FeatureMatrix& x, const LossAdapter& loss,
                       TrainConfig tc, const FitConfig& config, std::uint64_t stage, StageReport& report) {
  report.name = name;
  report.n_rows = loss.size();
  tc.seed = derive_seed(config.seed, stage);
  const auto rows = all_rows(loss.size());
  try {
    if (config.cross_validate) {
      report.cv = cross_validate(rows, x, loss, tc, config.n_folds);
      tc.n_trees = static_cast<int>(report.cv->selected_n_trees);
    }
    auto ens = boost(rows, x, loss, tc, &report.trace);
    report.n_trees = ens.trees.size();
    return ens;
  } catch (const Error& e) {
    const std::string msg = "stage " + name + ": " + e.what();
    switch (e.kind()) {
      case ErrorKind::kConfig: throw ConfigError(msg);
      case ErrorKind::kData: throw DataError(msg);
      case ErrorKind::kNumeric: throw NumericError(msg);
    }
    throw;
  }
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace

std::array<double, 3> prefit_dependence(const Grid& grid, const std::vector<std::vector<double>>& z,
                                        int vecchia_k) {
  const auto rows = all_rows(z.size());
  auto evaluate = [&](double alpha, double theta_scale, double& extent) {
    auto score = std::make_shared<GradientScore>(grid, alpha, theta_scale, vecchia_k);
    DependenceLoss loss(score, z);
    extent = init_estimate(loss, rows);
    std::vector<double> pred(rows.size(), extent);
    return total_loss(loss, rows, pred);
  };
  double best = std::numeric_limits<double>::infinity();
  std::array<double, 3> out{1.0, 0.0, 0.0};
  auto scan = [&](const std::vector<double>& alphas, const std::vector<double>& scales) {
    for (double a : alphas) {
      for (double s : scales) {
        double extent = 0.0;
        double v = std::numeric_limits<double>::infinity();
        try {
          v = evaluate(a, s, extent);
        } catch (const Error&) {
          continue;
        }
        if (v < best) {
          best = v;
          out = {a, s, extent};
        }
      }
    }
  };
  std::vector<double> alphas, scales;
  for (int i = 0; i < 8; ++i) alphas.push_back(0.25 + 0.25 * i);
  for (int i = -4; i <= 4; ++i) scales.push_back(0.125 * i);
  scan(alphas, scales);
  const double a0 = out[0], s0 = out[1];
  alphas.clear();
  scales.clear();
  for (int i = -2; i <= 2; ++i) {
    const double a = a0 + 0.0625 * i;
    if (a > 0.0 && a < 2.0) alphas.push_back(a);
    scales.push_back(s0 + 0.03125 * i);
  }
  scan(alphas, scales);
  return out;
}

FitResult fit_all(const GriddedDataset& ds, const PredictorSchema& schema, const FitConfig& config,
                  std::span<const std::size_t> train_days) {
  std::vector<std::size_t> days(train_days.begin(), train_days.end());
  if (days.empty()) days = all_rows(ds.n_days());
  const auto& yall = ds.variable(schema.response);
  const Eigen::MatrixXd y = rows_of(yall, days);
  const std::size_t D = ds.grid.size();

  FitResult result;
  auto& bundle = result.bundle;
  bundle.grid = ds.grid;
  bundle.schema = schema;
  bundle.xi = config.xi;
  bundle.vecchia_k = std::min<int>(config.vecchia_k, static_cast<int>(D) - 1);
  bundle.z_scale = config.z_scale;
  bundle.seed = config.seed;
  for (auto t : days) bundle.train_days.push_back(format_date(ds.days[t]));

  // Thresholds; exceedance days are re-expressed as dataset indices.
  bundle.thresholds = select_thresholds(y, schema.region, config.risk_level);
  auto& thr = bundle.thresholds;
  for (auto& t : thr.exceedance_days) t = days[t];
  const auto& exc = thr.exceedance_days;

  // Occurrence
  {
    const auto r = risk_series(y, schema.region);
    std::vector<int> labels(days.size());
    for (std::size_t i = 0; i < days.size(); ++i) labels[i] = r[i] >= thr.u ? 1 : 0;
    const auto x = occurrence_features(ds, schema, days);
    OccurrenceLoss loss(labels);
    StageReport rep;
    bundle.occurrence = fit_stage("occurrence", x, loss, config.occurrence, config, 1, rep);
    result.stages.push_back(std::move(rep));
  }

  // Intensity
  {
    std::vector<PointDay> keys;
    std::vector<IntensityRow> rows;
    for (std::size_t i = 0; i < exc.size(); ++i) {
      const auto t = static_cast<Eigen::Index>(exc[i]);
      for (std::size_t d = 0; d < D; ++d) {
        const double v = yall(t, static_cast<Eigen::Index>(d));
        if (v > thr.b[d]) {
          keys.push_back({d, exc[i]});
          rows.push_back({d, i, v, thr.b[d], thr.m[d], config.xi});
        }
      }
    }
    const auto x = intensity_features(ds, schema, keys);
    IntensityLoss loss(std::move(rows));
    StageReport rep;
    bundle.intensity = fit_stage("intensity", x, loss, config.intensity, config, 2, rep);
    result.stages.push_back(std::move(rep));
  }

  // Standardise with the intensity predictions.
  {
    std::vector<PointDay> keys;
    for (auto t : exc) {
      for (std::size_t d = 0; d < D; ++d) keys.push_back({d, t});
    }
    const auto x = intensity_features(ds, schema, keys);
    for (std::size_t i = 0; i < exc.size(); ++i) {
      std::vector<double> yt(D), th(D);
      for (std::size_t d = 0; d < D; ++d) {
        yt[d] = yall(static_cast<Eigen::Index>(exc[i]), static_cast<Eigen::Index>(d));
        th[d] = bundle.intensity.predict(x.row(i * D + d));
      }
      result.z.push_back(transform_to_z(yt, thr.b, th, config.xi, thr.m, config.z_scale));
    }
  }

  // Dependence
  {
    bundle.alpha = config.alpha;
    bundle.theta_scale = config.theta_scale;
    if (config.prefit_dependence) {
      const auto p = prefit_dependence(ds.grid, result.z, bundle.vecchia_k);
      bundle.alpha = p[0];
      bundle.theta_scale = p[1];
    }
    auto score = std::make_shared<GradientScore>(ds.grid, bundle.alpha, bundle.theta_scale, bundle.vecchia_k);
    DependenceLoss loss(score, result.z);
    const auto x = dependence_features(ds, schema, exc);
    StageReport rep;
    bundle.dependence = fit_stage("dependence", x, loss, config.dependence, config, 3, rep);
    result.stages.push_back(std::move(rep));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Prediction and scenarios

DayPrediction predict_day(const SubModelBundle& bundle, const GriddedDataset& ds, std::size_t day) {
  if (!(ds.grid == bundle.grid)) throw DataError("dataset grid does not match the bundle grid");
  const std::size_t D = bundle.grid.size();
  const std::array<std::size_t, 1> one{day};
  DayPrediction out;
  const auto xo = occurrence_features(ds, bundle.schema, one);
  out.p_occurrence = ilogit(bundle.occurrence.predict(xo.row(0)));
  std::vector<PointDay> keys;
  for (std::size_t d = 0; d < D; ++d) keys.push_back({d, day});
  const auto xi = intensity_features(ds, bundle.schema, keys);
  out.theta_int.resize(D);
  for (std::size_t d = 0; d < D; ++d) out.theta_int[d] = bundle.intensity.predict(xi.row(d));
  const auto xd = dependence_features(ds, bundle.schema, one);
  out.theta_extent = bundle.dependence.predict(xd.row(0));
  return out;
}

std::vector<double> day_scale(const SubModelBundle& bundle, const DayPrediction& prediction) {
  std::vector<double> s(prediction.theta_int.size());
  for (std::size_t d = 0; d < s.size(); ++d) {
    s[d] = bundle.z_scale == ZScale::kExpTheta
               ? std::exp(prediction.theta_int[d])
               : gpd_scale(prediction.theta_int[d], bundle.thresholds.m[d], bundle.xi);
    if (!(s[d] > 0.0)) throw NumericError("nonpositive scale at grid point " + std::to_string(d));
  }
  return s;
}

GrpParams day_grp_params(const SubModelBundle& bundle, const DayPrediction& prediction,
                         std::optional<double> override_extent) {
  GrpParams p;
  p.grid = bundle.grid;
  p.variogram = {bundle.alpha, override_extent.value_or(prediction.theta_extent), bundle.theta_scale};
  p.threshold = bundle.thresholds.b;
  p.scale = day_scale(bundle, prediction);
  p.xi = bundle.xi;
  p.risk_weights = region_weights(bundle.thresholds.region, bundle.grid.size());
  p.u = bundle.thresholds.u;
  return p;
}

ScenarioSet generate_scenarios(const SubModelBundle& bundle, const DayPrediction& prediction, std::size_t n,
                               std::uint64_t seed, std::optional<double> override_extent) {
  ScenarioSet out;
  if (n == 0) return out;
  const auto params = day_grp_params(bundle, prediction, override_extent);
  out.fields = simulate_grp(params, n, seed, &out.stats);
  for (const auto& f : out.fields) out.risk.push_back(risk_functional(f, params.risk_weights));
  return out;
}

}  // namespace grpboost
