#include <doctest.h>

#include <grpboost/error.hpp>
#include <grpboost/evaluation.hpp>
#include <grpboost/stats.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace grpboost;

namespace {

double mann_whitney_oracle(const std::vector<int>& y, const std::vector<double>& s) {
  double num = 0, pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / pairs;
}

// Path-dependent conditional expectation of one tree given the features in mask.
double cond_expectation(const RegressionTree& tree, int node, std::span<const double> x, unsigned mask) {
  const auto& n = tree.nodes()[static_cast<std::size_t>(node)];
  if (n.is_leaf()) return n.weight;
  if (mask & (1U << n.feature)) {
    const double v = x[static_cast<std::size_t>(n.feature)];
    const bool left = std::isnan(v) ? n.default_left : v < n.threshold;
    return cond_expectation(tree, left ? n.left : n.right, x, mask);
  }
  const auto& l = tree.nodes()[static_cast<std::size_t>(n.left)];
  const auto& r = tree.nodes()[static_cast<std::size_t>(n.right)];
  return (l.cover * cond_expectation(tree, n.left, x, mask) + r.cover * cond_expectation(tree, n.right, x, mask)) /
         n.cover;
}

// Shapley values by enumerating every coalition.
std::vector<double> shapley_oracle(const TreeEnsemble& ens, std::span<const double> x) {
  const auto p = static_cast<unsigned>(x.size());
  auto value = [&](unsigned mask) {
    double s = 0;
    for (const auto& t : ens.trees) s += ens.learning_rate * cond_expectation(t, 0, x, mask);
    return s;
  };
  std::vector<double> fact(p + 1, 1.0);
  for (unsigned k = 1; k <= p; ++k) fact[k] = fact[k - 1] * k;
  std::vector<double> phi(p, 0.0);
  for (unsigned i = 0; i < p; ++i)
    for (unsigned mask = 0; mask < (1U << p); ++mask) {
      if (mask & (1U << i)) continue;
      const auto sz = static_cast<unsigned>(__builtin_popcount(mask));
      const double w = fact[sz] * fact[p - sz - 1] / fact[p];
      phi[i] += w * (value(mask | (1U << i)) - value(mask));
    }
  return phi;
}

}  // namespace

TEST_CASE("AUC equals the pairwise count with ties") {
  std::mt19937_64 eng(1);
  std::uniform_int_distribution<int> lab(0, 1);
  std::uniform_int_distribution<int> sc(0, 6);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<int> y(40);
    std::vector<double> s(40);
    for (std::size_t i = 0; i < 40; ++i) {
      y[i] = lab(eng);
      s[i] = sc(eng) + 0.5 * y[i] * sc(eng);
    }
    y[0] = 0;
    y[1] = 1;
    const auto r = roc_auc(y, s);
    CHECK(r.auc == doctest::Approx(mann_whitney_oracle(y, s)).epsilon(1e-12));
    CHECK(r.fpr.front() == 0.0);
    CHECK(r.tpr.back() == doctest::Approx(1.0));
    CHECK(r.fpr.back() == doctest::Approx(1.0));
    CHECK(std::is_sorted(r.fpr.begin(), r.fpr.end()));
    CHECK(std::is_sorted(r.tpr.begin(), r.tpr.end()));
  }
  const std::vector<int> y{0, 0, 1, 1};
  const std::vector<double> perfect{0.1, 0.2, 0.8, 0.9};
  CHECK(roc_auc(y, perfect).auc == 1.0);
  const std::vector<double> flat{0.5, 0.5, 0.5, 0.5};
  CHECK(roc_auc(y, flat).auc == 0.5);
  CHECK_THROWS_AS(roc_auc(std::vector<int>{1, 1}, std::vector<double>{0.1, 0.2}), DataError);
}

TEST_CASE("Brier score") {
  const std::vector<int> y{1, 0, 1};
  const std::vector<double> p{0.8, 0.3, 0.5};
  const auto r = brier(y, p);
  CHECK(r.value == doctest::Approx((0.04 + 0.09 + 0.25) / 3));
  CHECK(r.contributions.size() == 3);
  CHECK_THROWS_AS(brier(y, std::vector<double>{0.1, 1.2, 0.3}), DataError);
}

TEST_CASE("sign-flip permutation test matches full enumeration") {
  const std::vector<double> a{1.0, 2.0, 0.5, 3.0, 1.5, 0.2};
  const std::vector<double> b{1.8, 2.1, 1.4, 2.7, 2.5, 0.9};
  // Exact p over all 2^6 sign patterns.
  double obs = 0;
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) obs += d[i] = b[i] - a[i];
  int count = 0;
  for (unsigned m = 0; m < 64; ++m) {
    double s = 0;
    for (unsigned i = 0; i < 6; ++i) s += (m >> i & 1U) ? d[i] : -d[i];
    count += s >= obs - 1e-12 ? 1 : 0;
  }
  const double exact = count / 64.0;
  const double p = permutation_test(a, b, 100000, 3);
  CHECK(p == doctest::Approx(exact).epsilon(0.05));
  CHECK(permutation_test(a, a, 1000, 3) == 1.0);
  CHECK(permutation_test(a, b, 0, 3) == 1.0);
  // Reversing the roles gives a large p.
  CHECK(permutation_test(b, a, 2000, 3) > 0.9);
}

TEST_CASE("GPD quantile and tail QQ") {
  CHECK(gpd_quantile(0.5, 2.0, -0.5) == doctest::Approx(2.0 / -0.5 * (std::pow(0.5, 0.5) - 1)));
  CHECK(gpd_quantile(0.5, 1.0, 0.0) == doctest::Approx(std::log(2.0)));
  // Excesses drawn from the stated GPDs sit inside the bands.
  Rng eng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> ex, sc;
  for (int i = 0; i < 300; ++i) {
    const double s = 0.5 + 2 * u(eng);
    sc.push_back(s);
    ex.push_back(gpd_quantile(u(eng), s, -0.3));
  }
  const auto t = qq_tail(ex, sc, -0.3, 500, 0.95, 2);
  CHECK(t.model.size() == 300);
  CHECK(t.probs.front() == doctest::Approx(1.0 / 301));
  CHECK(std::is_sorted(t.empirical.begin(), t.empirical.end()));
  CHECK(t.fraction_inside() > 0.85);
  for (std::size_t i = 0; i < 300; ++i) CHECK(t.lower[i] <= t.upper[i]);
  CHECK(t.upper_exits(30) <= 3);
  CHECK_THROWS_AS(qq_tail(std::vector<double>(5, 1.0), std::vector<double>(5, 1.0), -0.3, 10, 0.95, 1),
                  DataError);
}

TEST_CASE("extremogram counts joint exceedances") {
  const Grid grid({{0, 0.0, 0.0, {}, {}}, {1, 1.0, 0.0, {}, {}}, {2, 3.0, 0.0, {}, {}}});
  std::vector<std::vector<double>> f;
  for (int t = 0; t < 40; ++t) {
    const double v = t;
    // Site 1 copies site 0; site 2 is reversed.
    f.push_back({v, v, 40.0 - v});
  }
  const auto pairs = extremogram(f, grid, 0.75);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].estimate == 1.0);
  CHECK(pairs[0].distance == 1.0);
  CHECK(pairs[1].estimate == 0.0);
  CHECK(pairs[0].n_cond == 10);
  const auto bins = bin_extremogram(pairs, 3, 3.0);
  CHECK(bins[1].n_pairs == 1);  // distance 1
  CHECK(bins[2].n_pairs == 2);  // distances 2 and 3
  CHECK(bins[2].mean == 0.0);
  CHECK(std::isnan(bins[0].mean));
  f.resize(10);
  CHECK_THROWS_AS(extremogram(f, grid, 0.75), DataError);
}

TEST_CASE("TreeSHAP equals exhaustive Shapley values") {
  std::mt19937_64 eng(6);
  std::normal_distribution<double> nd;
  const std::size_t n = 300, p = 4;
  FeatureMatrix x(n, p);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) x(i, j) = nd(eng);
    if (i % 9 == 0) x(i, 2) = std::numeric_limits<double>::quiet_NaN();
    y[i] = x(i, 0) * (x(i, 1) > 0 ? 2.0 : -1.0) + 0.5 * x(i, 3) + 0.1 * nd(eng);
  }
  SquaredLoss loss(y);
  TrainConfig cfg;
  cfg.n_trees = 6;
  cfg.max_depth = 3;
  cfg.learning_rate = 0.3;
  const auto ens = boost(x, loss, cfg);
  for (std::size_t i : {0UL, 5UL, 17UL, 99UL}) {
    const auto a = tree_shap(ens, x.row(i));
    const auto oracle = shapley_oracle(ens, x.row(i));
    for (std::size_t j = 0; j < p; ++j) CHECK(a.phi[j] == doctest::Approx(oracle[j]).epsilon(1e-9));
    double total = a.base;
    for (double v : a.phi) total += v;
    CHECK(total == doctest::Approx(ens.predict(x.row(i))).epsilon(1e-10));
  }
  CHECK_THROWS_AS(tree_shap(ens, std::vector<double>{1.0}), DataError);
}

TEST_CASE("SHAP summary and top fraction") {
  std::vector<ShapAttribution> att{{0.0, {1.0, -2.0, 5.0}}, {0.0, {-3.0, 0.0, 1.0}}};
  const std::vector<int> fp{1, 0, -1};
  const std::vector<std::size_t> rows{0, 1};
  const auto s = region_shap_summary(att, fp, 2, rows);
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] == doctest::Approx(2.0));
  const std::vector<double> scores{0.1, 0.9, 0.5, 0.7, 0.3, 0.2, 0.8, 0.6, 0.4, 1.0};
  const auto top = top_fraction(scores, 0.2);
  CHECK(top == std::vector<std::size_t>{1, 9});
  CHECK_THROWS_AS(top_fraction(scores, 0.0), ConfigError);
}

TEST_CASE("study driver range and a small study run") {
  CHECK(study_driver(0.0, 0.0) == doctest::Approx(1.6));
  CHECK(study_driver(10.0, -10.0) < 3.0);
  CHECK(study_driver(-10.0, 10.0) > 0.2);
  StudyConfig cfg;
  cfg.n_reps = 2;
  cfg.grid_nx = 3;
  cfg.grid_ny = 2;
  cfg.n_days = 40;
  cfg.n_predictors = 30;
  cfg.driver_columns = {3, 20};
  cfg.pairs = {{0, 1}, {0, 5}};
  cfg.train.n_trees = 6;
  cfg.train.max_depth = 2;
  cfg.early_iteration = 2;
  const auto rep = simulation_study(cfg);
  CHECK(rep.theta_true.size() == 40);
  CHECK(rep.pi_true.size() == 2);
  CHECK(rep.early.n_trees == 2);
  CHECK(rep.late.n_trees == 6);
  CHECK(rep.late.estimate[1][0].size() == 2);
  CHECK(rep.late.coverage >= 0.0);
  CHECK(rep.late.coverage <= 1.0);
  for (double t : rep.theta_true) {
    CHECK(t > 0.2);
    CHECK(t < 3.0);
  }
  cfg.n_reps = 1;
  CHECK_THROWS_AS(simulation_study(cfg), ConfigError);
}
