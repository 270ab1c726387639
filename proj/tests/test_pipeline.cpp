#include <doctest.h>

#include <grpboost/error.hpp>
#include <grpboost/pipeline.hpp>
#include <grpboost/stats.hpp>
#include <grpboost/synthetic.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace grpboost;

namespace {

Grid lattice(int nx, int ny) {
  std::vector<GridPoint> pts;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) pts.push_back({j * nx + i, 1.0 * i, 1.0 * j, {}, {}});
  return Grid(pts);
}

Eigen::MatrixXd correlated_fields(std::size_t n, std::size_t D, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(D));
  for (Eigen::Index t = 0; t < y.rows(); ++t) {
    const double common = nd(eng);
    for (Eigen::Index d = 0; d < y.cols(); ++d) y(t, d) = 20 + 0.3 * d + 2 * common + nd(eng);
  }
  return y;
}

// Sorted copy type-7 quantile, written out independently of the library.
double quantile_oracle(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

GriddedDataset small_dataset() {
  SyntheticSpec spec;
  spec.nx = 4;
  spec.ny = 3;
  spec.first_year = 2001;
  spec.last_year = 2006;
  spec.seed = 5;
  return synthetic_dataset(spec);
}

}  // namespace

TEST_CASE("risk series and weights") {
  Eigen::MatrixXd y(2, 3);
  y << 1, 2, 3, 4, 5, 6;
  const std::vector<int> region{0, 2};
  const auto r = risk_series(y, region);
  CHECK(r[0] == doctest::Approx(2.0));
  CHECK(r[1] == doctest::Approx(5.0));
  const std::vector<double> w{0.25, 0.75};
  CHECK(risk_series(y, region, w)[0] == doctest::Approx(2.5));
  const auto rw = region_weights(region, 3);
  CHECK(rw == std::vector<double>{0.5, 0.0, 0.5});
  CHECK_THROWS_AS(risk_series(y, std::vector<int>{}), DataError);
  CHECK_THROWS_AS(risk_series(y, std::vector<int>{5}), DataError);
}

TEST_CASE("threshold selection against independent quantiles") {
  const auto y = correlated_fields(1000, 6, 3);
  const std::vector<int> region{1, 2, 4};
  const auto spec = select_thresholds(y, region, 0.9);
  std::vector<double> r(1000);
  for (Eigen::Index t = 0; t < 1000; ++t) r[static_cast<std::size_t>(t)] = (y(t, 1) + y(t, 2) + y(t, 4)) / 3;
  CHECK(spec.u == doctest::Approx(quantile_oracle(r, 0.9)).epsilon(1e-12));
  std::vector<std::size_t> exc;
  for (std::size_t t = 0; t < r.size(); ++t)
    if (r[t] >= spec.u) exc.push_back(t);
  CHECK(spec.exceedance_days == exc);
  CHECK(exc.size() == 100);
  // b is the q'-quantile over exceedance days and r(b) = u.
  for (std::size_t d = 0; d < 6; ++d) {
    std::vector<double> col;
    for (auto t : exc) col.push_back(y(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)));
    CHECK(spec.b[d] == doctest::Approx(quantile_oracle(col, spec.q_prime)).epsilon(1e-10));
    // m bounds every excess.
    CHECK(spec.m[d] >= *std::max_element(col.begin(), col.end()) - spec.b[d]);
    CHECK(spec.n_excess[d] > 0);
  }
  CHECK((spec.b[1] + spec.b[2] + spec.b[4]) / 3 == doctest::Approx(spec.u).epsilon(1e-9));
  CHECK(spec.q_prime > 0.0);
  CHECK(spec.q_prime < 1.0);
}

TEST_CASE("threshold selection input checks and JSON round trip") {
  const auto few = correlated_fields(50, 3, 1);
  CHECK_THROWS_AS(select_thresholds(few, std::vector<int>{0}, 0.9), DataError);
  const auto y = correlated_fields(300, 3, 2);
  CHECK_THROWS_AS(select_thresholds(y, std::vector<int>{0}, 1.0), ConfigError);
  const auto spec = select_thresholds(y, std::vector<int>{0, 1}, 0.9);
  const auto back = ThresholdSpec::from_json(nlohmann::json::parse(spec.to_json().dump()));
  CHECK(back.u == spec.u);
  CHECK(back.b == spec.b);
  CHECK(back.m == spec.m);
  CHECK(back.region == spec.region);
  CHECK(back.exceedance_days == spec.exceedance_days);
}

TEST_CASE("quadrant partition") {
  const auto q = quadrant_partition(lattice(4, 2));
  CHECK(q[0] == std::vector<int>{0, 1});
  CHECK(q[1] == std::vector<int>{2, 3});
  CHECK(q[2] == std::vector<int>{4, 5});
  CHECK(q[3] == std::vector<int>{6, 7});
  // A single row puts everything on the high side in y.
  const auto q1 = quadrant_partition(lattice(3, 1));
  CHECK(q1[0].empty());
  CHECK(q1[2] == std::vector<int>{0});
  CHECK(q1[3] == std::vector<int>{1, 2});
}

TEST_CASE("feature matrices") {
  const auto ds = small_dataset();
  const std::size_t D = ds.grid.size();
  const auto schema = make_schema(ds.grid, {0, 1, 4});
  const std::vector<std::size_t> days{3, 10};
  const auto& z = ds.variable("z500");
  const auto& sm = ds.variable("sm");

  const auto xo = occurrence_features(ds, schema, days);
  CHECK(xo.cols() == D + 1);
  CHECK(xo(1, 2) == z(10, 2));
  CHECK(xo(0, D) == doctest::Approx((sm(3, 0) + sm(3, 1) + sm(3, 4)) / 3));
  CHECK(xo.names() == schema.occurrence_names(D));

  const auto xd = dependence_features(ds, schema, days);
  CHECK(xd.cols() == D + 4);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (int id : schema.rectangles[r]) s += sm(10, id);
    CHECK(xd(1, D + r) == doctest::Approx(s / static_cast<double>(schema.rectangles[r].size())));
  }

  const std::vector<PointDay> keys{{5, 3}, {0, 10}};
  const auto xi = intensity_features(ds, schema, keys);
  CHECK(xi.cols() == D + 3);
  CHECK(xi(0, D) == sm(3, 5));
  CHECK(xi(0, D + 1) == ds.grid[5].lat.value_or(ds.grid[5].y));
  CHECK(xi(0, D + 2) == ds.grid[5].lon.value_or(ds.grid[5].x));
  CHECK_THROWS_AS(occurrence_features(ds, schema, std::vector<std::size_t>{ds.n_days()}), DataError);

  const auto back = PredictorSchema::from_json(schema.to_json());
  CHECK(back.region == schema.region);
  CHECK(back.rectangles == schema.rectangles);
}

TEST_CASE("fit, bundle round trip and scenarios") {
  const auto ds = small_dataset();
  const auto schema = make_schema(ds.grid, {0, 1, 4, 5});
  FitConfig cfg;
  cfg.cross_validate = false;
  for (auto* tc : {&cfg.occurrence, &cfg.intensity, &cfg.dependence}) {
    tc->n_trees = 8;
    tc->max_depth = 2;
    tc->learning_rate = 0.1;
  }
  cfg.vecchia_k = 5;
  const auto fit = fit_all(ds, schema, cfg);
  const auto& bundle = fit.bundle;
  CHECK(fit.stages.size() == 3);
  CHECK(bundle.occurrence.trees.size() == 8);
  CHECK(fit.z.size() == bundle.thresholds.exceedance_days.size());
  for (const auto& zt : fit.z)
    for (double v : zt) CHECK(v >= 0.0);
  // Occurrence training loss went down.
  CHECK(fit.stages[0].trace.train_loss.back() < fit.stages[0].trace.train_loss.front());

  const auto again = fit_all(ds, schema, cfg);
  CHECK(again.bundle.dump() == bundle.dump());

  const auto parsed = SubModelBundle::parse(bundle.dump());
  CHECK(parsed.dump() == bundle.dump());
  const auto p1 = predict_day(bundle, ds, 200);
  const auto p2 = predict_day(parsed, ds, 200);
  CHECK(p1.p_occurrence == p2.p_occurrence);
  CHECK(p1.theta_int == p2.theta_int);
  CHECK(p1.theta_extent == p2.theta_extent);
  CHECK(p1.p_occurrence > 0.0);
  CHECK(p1.p_occurrence < 1.0);

  const auto sc = generate_scenarios(bundle, p1, 30, 4);
  CHECK(sc.fields.size() == 30);
  for (double r : sc.risk) CHECK(r >= bundle.thresholds.u);
  const auto sc2 = generate_scenarios(parsed, p2, 30, 4);
  CHECK(sc2.fields == sc.fields);
  CHECK(generate_scenarios(bundle, p1, 0, 4).fields.empty());
  // A larger extent gives more joint exceedances on average.
  const auto narrow = generate_scenarios(bundle, p1, 400, 9, -1.5);
  const auto wide = generate_scenarios(bundle, p1, 400, 9, 1.5);
  auto spread = [&](const ScenarioSet& s) {
    double acc = 0;
    for (const auto& f : s.fields) {
      std::vector<double> ex;
      for (std::size_t d = 0; d < f.size(); ++d) ex.push_back(f[d] > bundle.thresholds.b[d] ? 1.0 : 0.0);
      acc += mean(ex);
    }
    return acc / static_cast<double>(s.fields.size());
  };
  CHECK(spread(wide) > spread(narrow));

  CHECK_THROWS_AS(SubModelBundle::parse("{\"format\": \"other\"}"), DataError);
  CHECK_THROWS_AS(SubModelBundle::parse("not json"), DataError);
}

TEST_CASE("predictions reject a dataset on another grid") {
  const auto ds = small_dataset();
  SyntheticSpec other;
  other.nx = 3;
  other.ny = 3;
  other.first_year = 2001;
  other.last_year = 2001;
  const auto ds2 = synthetic_dataset(other);
  FitConfig cfg;
  cfg.cross_validate = false;
  for (auto* tc : {&cfg.occurrence, &cfg.intensity, &cfg.dependence}) tc->n_trees = 1;
  const auto fit = fit_all(ds, make_schema(ds.grid, {0}), cfg);
  CHECK_THROWS_AS(predict_day(fit.bundle, ds2, 0), DataError);
}
