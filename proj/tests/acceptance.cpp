// Acceptance run: one PASS/FAIL line per criterion.
// Usage: acceptance <path to grpboost CLI> <work dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "grpboost/boosting.hpp"
#include "grpboost/brown_resnick.hpp"
#include "grpboost/error.hpp"
#include "grpboost/evaluation.hpp"
#include "grpboost/evt_losses.hpp"
#include "grpboost/io.hpp"
#include "grpboost/pipeline.hpp"
#include "grpboost/stats.hpp"

namespace fs = std::filesystem;
using namespace grpboost;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int n_pass = 0, n_fail = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS " : "FAIL ") << name << "  " << detail << std::endl;
  (pass ? n_pass : n_fail)++;
}

Grid lattice(int nx, int ny, double spacing) {
  std::vector<GridPoint> pts;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) pts.push_back({j * nx + i, i * spacing, j * spacing, {}, {}});
  return Grid(pts);
}

Grid random_grid(int n, double side, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, side);
  std::vector<GridPoint> pts;
  for (int i = 0; i < n; ++i) pts.push_back({i, u(rng), u(rng), {}, {}});
  return Grid(pts);
}

// Unit-margin draws: threshold 1, scale 1, xi = 1 gives Y = Z.
std::vector<std::vector<double>> unit_draws(const Grid& g, SemivariogramParams v, std::size_t n,
                                            std::uint64_t seed) {
  const std::size_t D = g.size();
  GrpParams p{g, v, std::vector<double>(D, 1.0), std::vector<double>(D, 1.0), 1.0,
              std::vector<double>(D, 1.0 / static_cast<double>(D)), 1.0, -1};
  return simulate_grp(p, n, seed);
}

// Richardson-extrapolated central difference.
double richardson(const std::function<double(double)>& f, double x, double h) {
  auto c = [&](double s) { return (f(x + s) - f(x - s)) / (2 * s); };
  return (4 * c(h / 2) - c(h)) / 3;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// ---------------------------------------------------------------------------

void gradient_fidelity() {
  const auto t0 = Clock::now();
  Rng rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  auto check = [&](const LossAdapter& loss, std::size_t row, double theta) {
    const auto gh = loss.grad_hess(row, theta);
    const double g = richardson([&](double t) { return loss.loss(row, t); }, theta, 1e-3);
    const double h = richardson([&](double t) { return loss.grad_hess(row, t).g; }, theta, 1e-3);
    worst = std::max({worst, rel_err(gh.g, g), rel_err(gh.h, h)});
  };
  // Occurrence
  std::vector<int> labels(20);
  for (auto& l : labels) l = u(rng) < 0.5 ? 1 : 0;
  OccurrenceLoss occ(labels);
  for (std::size_t i = 0; i < 20; ++i) check(occ, i, -4 + 8 * u(rng));
  // Intensity
  std::vector<IntensityRow> rows;
  for (std::size_t i = 0; i < 20; ++i) {
    const double ex = 0.05 + 3 * u(rng);
    rows.push_back({i, i, 10 + ex, 10.0, ex + 2 * u(rng), -0.5 + 0.4 * u(rng)});
  }
  IntensityLoss inten(rows);
  for (std::size_t i = 0; i < 20; ++i) check(inten, i, -2 + 4 * u(rng));
  // Dependence
  const Grid g = lattice(4, 3, 0.5);
  auto score = std::make_shared<GradientScore>(g, 1.27, -0.07, 5);
  auto z = unit_draws(g, {1.27, 0.5, -0.07}, 20, 7);
  DependenceLoss dep(score, z);
  for (std::size_t i = 0; i < 20; ++i) check(dep, i, -1 + 2.5 * u(rng));
  const double secs = seconds_since(t0);
  report("gradient_fidelity", worst <= 1e-4 && secs < 10.0,
         fmt("max rel err %.2e (tol 1e-4) over 60 points, %.2f s (limit 10 s)", worst, secs));
}

double husler_reiss_density(double x1, double x2, double a) {
  const double w = a / 2 + std::log(x2 / x1) / a;
  return normal_pdf(w) / (a * x1 * x1 * x2);
}

void intensity_oracle() {
  Rng rng(202);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst2 = 0.0;
  for (int c = 0; c < 50; ++c) {
    const Grid g({{0, 0.0, 0.0, {}, {}}, {1, 0.2 + 3 * u(rng), 2 * u(rng) - 1, {}, {}}});
    const SemivariogramParams p{0.5 + 1.5 * u(rng), 2 * u(rng) - 1, 0.4 * u(rng) - 0.2};
    const auto cov = build_covariance(g, p, c % 2);
    const std::vector<double> x{0.1 + 5 * u(rng), 0.1 + 5 * u(rng)};
    const double a = std::sqrt(2 * semivariogram(g[0], g[1], p));
    worst2 = std::max(worst2, rel_err(br_intensity(x, cov).lambda, husler_reiss_density(x[0], x[1], a)));
  }
  const Grid g5 = random_grid(5, 3.0, 9);
  double worst5 = 0.0;
  for (int c = 0; c < 20; ++c) {
    const auto cov = build_covariance(g5, {1.27, 0.3, -0.07}, c % 5);
    std::vector<double> x(5), x2(5);
    for (int d = 0; d < 5; ++d) {
      x[static_cast<std::size_t>(d)] = 0.2 + 4 * u(rng);
      x2[static_cast<std::size_t>(d)] = 2 * x[static_cast<std::size_t>(d)];
    }
    const double l1 = br_intensity(x, cov).lambda, l2 = br_intensity(x2, cov).lambda;
    worst5 = std::max(worst5, rel_err(l2, std::pow(2.0, -6.0) * l1));
  }
  report("intensity_oracle", worst2 <= 1e-8 && worst5 <= 1e-8,
         fmt("D=2 max rel err %.2e over 50 cases; D=5 homogeneity max rel err %.2e (tol 1e-8)", worst2, worst5));
}

void vecchia_criteria() {
  const Grid g = random_grid(30, 5.0, 303);
  const double alpha = 1.27, ts = -0.07;
  // Exactness at k = D - 1.
  const auto cov = build_covariance(g, {alpha, 1.0, ts}, 0);
  const auto vf = vecchia_factorize(cov, maximin_ordering(g, ts), 29);
  const DensePrecision dp(cov);
  Eigen::MatrixXd qd = Eigen::MatrixXd::Zero(30, 30);
  for (Eigen::Index i = 0; i < 30; ++i) qd.col(i) = dp.apply(Eigen::VectorXd::Unit(30, i));
  const double prec_err = (vf->implied_precision() - qd).norm() / qd.norm();
  const auto days = unit_draws(g, {alpha, 1.0, ts}, 200, 31);
  const GradientScore dense(g, alpha, ts, 0);
  std::vector<double> ref;
  for (const auto& z : days) ref.push_back(dense.evaluate(z, 1.0).loss);
  std::vector<double> err;
  for (int k : {1, 5, 10, 20, 29}) {
    const GradientScore v(g, alpha, ts, k);
    double e = 0.0;
    for (std::size_t i = 0; i < days.size(); ++i) e += rel_err(v.evaluate(days[i], 1.0).loss, ref[i]);
    err.push_back(e / static_cast<double>(days.size()));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < err.size(); ++i) monotone = monotone && err[i] <= err[i - 1];
  const bool exact = prec_err <= 1e-8 && err.back() <= 1e-8;

  // Speed: factorise at a new semivariogram and score one day, D = 120.
  const Grid big = lattice(12, 10, 0.5);
  std::vector<double> z(120);
  for (std::size_t i = 0; i < 120; ++i) z[i] = 1.0 + 0.01 * static_cast<double>(i);
  auto time_eval = [&](int k) {
    const int reps = 50;
    double sink = 0.0;
    const auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) {
      const GradientScore s(big, alpha, ts + 1e-4 * r, k);
      sink += s.evaluate(z, 1.0).loss;
    }
    const double t = seconds_since(t0) / reps;
    return std::isfinite(sink) ? t : std::numeric_limits<double>::infinity();
  };
  const double td = time_eval(0), tv = time_eval(20);
  const double speedup = td / tv;
  std::string errs;
  for (double e : err) errs += fmt("%.2e ", e);
  report("vecchia_exactness_refinement_speed", exact && monotone && speedup >= 20.0,
         fmt("k=D-1 precision rel err %.2e, score err %.2e (tol 1e-8); mean score rel err k=1,5,10,20,29: %s"
             "(nonincreasing: %s); D=120 dense %.2f ms vs k=20 %.2f ms, speedup %.2fx (target >= 20x)",
             prec_err, err.back(), errs.c_str(), monotone ? "yes" : "no", 1e3 * td, 1e3 * tv, speedup));
}

void dependence_consistency() {
  const auto t0 = Clock::now();
  const Grid g = lattice(4, 4, 1.0);
  const auto days = unit_draws(g, {1.0, 1.0, 0.0}, 500, 404);
  const GradientScore score(g, 1.0, 0.0, 0);
  double best = 0.0, best_s = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 200; ++i) {
    const double th = -1.0 + 0.02 * i;
    double s = 0.0;
    for (const auto& z : days) s += score.evaluate(z, th).loss;
    if (s < best_s) {
      best_s = s;
      best = th;
    }
  }
  const double secs = seconds_since(t0);
  report("dependence_consistency", std::abs(best - 1.0) <= 0.15 && secs < 300.0,
         fmt("grid minimiser %.2f for truth 1.00 (tol 0.15) on 500 days, grid step 0.02, %.1f s (limit 300 s)",
             best, secs));
}

void simulation_vs_analytic() {
  const Grid g = lattice(4, 4, 1.0);
  const std::size_t D = g.size();
  const double xi = -0.3;
  const SemivariogramParams v{1.0, 1.0, 0.0};
  GrpParams p{g, v, std::vector<double>(D, 20.0), std::vector<double>(D, 2.0), xi,
              std::vector<double>(D, 1.0 / static_cast<double>(D)), 20.0, -1};
  const auto fields = simulate_grp(p, 10000, 505);

  Rng rng(55);
  int pair_fails = 0;
  double worst_z = 0.0;
  for (int k = 0; k < 20; ++k) {
    const int a = static_cast<int>(rng() % D), b = static_cast<int>(rng() % D);
    if (a == b) {
      --k;
      continue;
    }
    const auto e = pairwise_cond_prob(fields, a, b, 0.9);
    const double lim = pairwise_limit_prob(semivariogram(g[static_cast<std::size_t>(a)], g[static_cast<std::size_t>(b)], v));
    const double zs = std::abs(e.probability - lim) / e.standard_error;
    worst_z = std::max(worst_z, zs);
    pair_fails += zs > 3.0 ? 1 : 0;
  }

  // Marginal excesses above b_d against GPD(a, xi).
  auto qq_dev = [&](const std::vector<std::vector<double>>& fs, std::size_t d, double level, double scale) {
    std::vector<double> ex;
    for (const auto& f : fs)
      if (f[d] > level) ex.push_back(f[d] - level);
    std::sort(ex.begin(), ex.end());
    const std::size_t n = ex.size();
    Rng brng(derive_seed(606, d));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> boot(19);
    std::vector<double> s(n);
    for (int b = 0; b < 500; ++b) {
      for (auto& x : s) x = gpd_quantile(u(brng), scale, xi);
      std::sort(s.begin(), s.end());
      for (int k = 0; k < 19; ++k) boot[static_cast<std::size_t>(k)].push_back(quantile_type7_sorted(s, (k + 1) / 20.0));
    }
    double worst = 0.0;
    for (int k = 0; k < 19; ++k) {
      const double pr = (k + 1) / 20.0;
      const double se = sample_sd(boot[static_cast<std::size_t>(k)]);
      worst = std::max(worst, std::abs(quantile_type7_sorted(ex, pr) - gpd_quantile(pr, scale, xi)) / se);
    }
    return std::pair{worst, n};
  };
  double qq_worst = 0.0;
  std::size_t n_min = fields.size();
  for (std::size_t d : {std::size_t{0}, D / 2 + 1, D - 1}) {
    const auto [w, n] = qq_dev(fields, d, 20.0, 2.0);
    qq_worst = std::max(qq_worst, w);
    n_min = std::min(n_min, n);
  }
  // Same model with the risk concentrated on site 0: its excess is GPD exactly.
  GrpParams single = p;
  single.risk_weights.assign(D, 0.0);
  single.risk_weights[0] = 1.0;
  const double single_dev = qq_dev(simulate_grp(single, 10000, 506), 0, 20.0, 2.0).first;
  report("simulation_vs_analytic", pair_fails == 0 && qq_worst <= 3.0,
         fmt("20 pairs: max |est - limit| = %.2f SE, %d beyond 3 SE (tol 3); excesses over b_d at 3 sites vs "
             "GPD(2, -0.3): max %.1f bootstrap SE (tol 3, >= %zu excesses); single-site risk at site 0: %.2f SE "
             "(informational)",
             worst_z, pair_fails, qq_worst, n_min, single_dev));
}

void appendix_study() {
  StudyConfig cfg;  // 20 replicates, 10 x 5 grid, 272 days
  const auto rep = simulation_study(cfg);
  const double ratio = rep.early.median_abs_bias / rep.late.median_abs_bias;
  const bool cov_ok = rep.late.coverage >= 0.30 && rep.late.coverage <= 0.55;
  report("appendix_study", cov_ok && ratio > 3.0 && rep.seconds < 1800.0,
         fmt("late coverage %.3f (band [0.30, 0.55]); median |bias| early(iter %zu) %.4f vs late(iter %zu) %.4f, "
             "ratio %.1f (need > 3); %.0f s (limit 1800 s)",
             rep.late.coverage, rep.early.n_trees, rep.early.median_abs_bias, rep.late.n_trees,
             rep.late.median_abs_bias, ratio, rep.seconds));
}

// Brute-force tree growth with the same split rules.
struct OracleBuilder {
  const FeatureMatrix& x;
  const std::vector<double>& g;
  const std::vector<double>& h;
  const TrainConfig& cfg;
  std::vector<TreeNode> nodes;

  double sc(double G, double H) const { return G * G / (H + cfg.lambda); }

  int grow(const std::vector<std::size_t>& rows, int depth) {
    double G = 0, H = 0;
    for (auto r : rows) {
      G += g[r];
      H += h[r];
    }
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes.back().weight = -G / (H + cfg.lambda);
    double best = 0.0;
    int bf = -1;
    double bt = 0.0;
    bool bl = true;
    if (depth < cfg.max_depth && rows.size() >= 2) {
      for (std::size_t f = 0; f < x.cols(); ++f) {
        std::set<double> vals;
        for (auto r : rows)
          if (!std::isnan(x(r, f))) vals.insert(x(r, f));
        if (vals.size() < 2) continue;
        const std::vector<double> v(vals.begin(), vals.end());
        for (std::size_t k = 0; k + 1 < v.size(); ++k) {
          const double thr = 0.5 * (v[k] + v[k + 1]);
          for (bool ml : {true, false}) {
            double GL = 0, HL = 0;
            for (auto r : rows) {
              const double xv = x(r, f);
              if (std::isnan(xv) ? ml : xv < thr) {
                GL += g[r];
                HL += h[r];
              }
            }
            if (HL < cfg.min_child_hessian || H - HL < cfg.min_child_hessian) continue;
            const double gain = 0.5 * (sc(GL, HL) + sc(G - GL, H - HL) - sc(G, H)) - cfg.gamma_complexity;
            if (gain > 0.0 && gain > best + 1e-12 * best) {
              best = gain;
              bf = static_cast<int>(f);
              bt = thr;
              bl = ml;
            }
          }
        }
      }
    }
    if (bf < 0) return id;
    std::vector<std::size_t> lr, rr;
    for (auto r : rows) {
      const double xv = x(r, static_cast<std::size_t>(bf));
      (std::isnan(xv) ? bl : xv < bt) ? lr.push_back(r) : rr.push_back(r);
    }
    nodes[static_cast<std::size_t>(id)].feature = bf;
    nodes[static_cast<std::size_t>(id)].threshold = bt;
    nodes[static_cast<std::size_t>(id)].default_left = bl;
    const int l = grow(lr, depth + 1);
    const int r = grow(rr, depth + 1);
    nodes[static_cast<std::size_t>(id)].left = l;
    nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }
};

bool same_tree(const std::vector<TreeNode>& a, const std::vector<TreeNode>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].feature != b[i].feature || a[i].left != b[i].left || a[i].right != b[i].right) return false;
    if (a[i].is_leaf()) {
      if (std::abs(a[i].weight - b[i].weight) > 1e-12 * (1 + std::abs(b[i].weight))) return false;
    } else if (a[i].threshold != b[i].threshold || a[i].default_left != b[i].default_left) {
      return false;
    }
  }
  return true;
}

double cond_expectation(const RegressionTree& tree, int node, std::span<const double> x, unsigned mask) {
  const auto& n = tree.nodes()[static_cast<std::size_t>(node)];
  if (n.is_leaf()) return n.weight;
  if (mask & (1U << n.feature)) {
    const double v = x[static_cast<std::size_t>(n.feature)];
    return cond_expectation(tree, (std::isnan(v) ? n.default_left : v < n.threshold) ? n.left : n.right, x, mask);
  }
  const auto& l = tree.nodes()[static_cast<std::size_t>(n.left)];
  const auto& r = tree.nodes()[static_cast<std::size_t>(n.right)];
  return (l.cover * cond_expectation(tree, n.left, x, mask) + r.cover * cond_expectation(tree, n.right, x, mask)) /
         n.cover;
}

void boosting_correctness() {
  // Exhaustive split oracle on 50-row instances.
  int tree_ok = 0;
  const int n_inst = 50;
  for (int inst = 0; inst < n_inst; ++inst) {
    Rng rng(derive_seed(707, static_cast<std::uint64_t>(inst)));
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    FeatureMatrix x(50, 4);
    std::vector<double> g(50), h(50);
    for (std::size_t i = 0; i < 50; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        x(i, j) = u(rng) < 0.1 ? std::numeric_limits<double>::quiet_NaN() : std::round(nd(rng) * 4) / 4;
      }
      g[i] = nd(rng) + (x(i, 0) > 0 ? 1.0 : 0.0);
      h[i] = 0.2 + u(rng);
    }
    TrainConfig cfg;
    cfg.max_depth = 3;
    cfg.lambda = 0.5;
    cfg.min_child_hessian = 1.0;
    const auto tree = fit_tree(all_rows(50), x, g, h, cfg);
    OracleBuilder ob{x, g, h, cfg, {}};
    ob.grow(all_rows(50), 0);
    tree_ok += same_tree(tree.nodes(), ob.nodes) ? 1 : 0;
  }

  // TreeSHAP against every coalition, p = 12.
  const std::size_t p = 12, n = 400;
  Rng rng(808);
  std::normal_distribution<double> nd;
  FeatureMatrix x(n, p);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) x(i, j) = nd(rng);
    y[i] = x(i, 0) * x(i, 1) + std::sin(x(i, 2)) + (x(i, 5) > 0.3 ? 1.0 : 0.0) + 0.2 * nd(rng);
  }
  TrainConfig tc;
  tc.n_trees = 8;
  tc.max_depth = 4;
  tc.learning_rate = 0.3;
  const auto ens = boost(x, SquaredLoss(y), tc);
  double shap_err = 0.0;
  std::vector<double> fact(p + 1, 1.0);
  for (std::size_t k = 1; k <= p; ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
  for (std::size_t row : {0UL, 7UL, 123UL}) {
    const auto xr = x.row(row);
    std::vector<double> value(1U << p);
    for (unsigned m = 0; m < (1U << p); ++m) {
      double s = 0;
      for (const auto& t : ens.trees) s += ens.learning_rate * cond_expectation(t, 0, xr, m);
      value[m] = s;
    }
    const auto a = tree_shap(ens, xr);
    for (unsigned i = 0; i < p; ++i) {
      double phi = 0;
      for (unsigned m = 0; m < (1U << p); ++m) {
        if (m & (1U << i)) continue;
        const auto sz = static_cast<std::size_t>(__builtin_popcount(m));
        phi += fact[sz] * fact[p - sz - 1] / fact[p] * (value[m | (1U << i)] - value[m]);
      }
      shap_err = std::max(shap_err, std::abs(a.phi[i] - phi));
    }
  }

  // One-SE rule on pure noise.
  int small = 0;
  for (int s = 0; s < 50; ++s) {
    Rng r(derive_seed(909, static_cast<std::uint64_t>(s)));
    std::normal_distribution<double> nn;
    FeatureMatrix xn(200, 5);
    std::vector<double> yn(200);
    for (std::size_t i = 0; i < 200; ++i) {
      for (std::size_t j = 0; j < 5; ++j) xn(i, j) = nn(r);
      yn[i] = nn(r);
    }
    TrainConfig cv;
    cv.n_trees = 40;
    cv.max_depth = 3;
    cv.learning_rate = 0.1;
    cv.seed = static_cast<std::uint64_t>(s);
    const auto res = cross_validate(all_rows(200), xn, SquaredLoss(yn), cv, 5);
    small += res.selected_n_trees <= 5 ? 1 : 0;
  }
  report("boosting_correctness", tree_ok == n_inst && shap_err <= 1e-10 && small >= 45,
         fmt("trees identical to exhaustive oracle %d/%d; TreeSHAP vs 2^12 Shapley max abs err %.2e (tol 1e-10); "
             "CV selects <= 5 trees on noise in %d/50 seeds (need >= 45)",
             tree_ok, n_inst, shap_err, small));
}

// ---------------------------------------------------------------------------
// CLI runs

int run(const std::string& cmd, const fs::path& log) {
  const std::string full = cmd + " >>" + log.string() + " 2>&1";
  const int rc = std::system(full.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

const char* kConfig = R"([data]
grid = raw/grid.csv
variables = t2m=raw/t2m.csv, z500=raw/z500.csv, sm=raw/sm.csv
response = t2m
processed = processed

[preprocess]
detrend = t2m
anomalies = z500, sm
reference = 1991, 2020
window = 31
rolling = z500:5, sm:15
months = 6, 7, 8

[model]
region_box = 0, 1, 0, 1
train = 1991-01-01..2012-12-31
test = 2013-01-01..2020-12-31
seed = 11

[occurrence]
n_trees = 60
max_depth = 3
[intensity]
n_trees = 60
max_depth = 3
[dependence]
n_trees = 60
max_depth = 2

[output]
dir = out
)";

// Runs the whole CLI pipeline in dir; returns the first failing step or "".
std::string pipeline_run(const std::string& cli, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  atomic_write(dir / "run.cfg", kConfig);
  const fs::path log = dir / "log.txt";
  const std::string c = "\"" + cli + "\"";
  const std::string cfg = (dir / "run.cfg").string();
  const std::string out = (dir / "out").string();
  const std::vector<std::pair<std::string, std::string>> steps{
      {"synthdata", c + " synthdata --out " + (dir / "raw").string() + " --years 1991..2020 --seed 3"},
      {"preprocess", c + " preprocess --config " + cfg},
      {"thresholds", c + " thresholds --config " + cfg},
      {"fit", c + " fit --config " + cfg},
      {"predict", c + " predict --bundle " + out + "/bundle.json --data " + (dir / "processed").string() +
                      " --day 2015-07-20 --out " + out + "/predict.json"},
      {"simulate", c + " simulate --bundle " + out + "/bundle.json --data " + (dir / "processed").string() +
                       " --day 2015-07-20 -n 200 --seed 5 --out " + out + "/sims.csv"},
      {"evaluate", c + " evaluate --config " + cfg + " --bundle " + out +
                       "/bundle.json --n-sim 100 --n-perm 2000 --n-boot 200 --seed 9"},
      {"explain", c + " explain --config " + cfg + " --bundle " + out + "/bundle.json --submodel dep"},
  };
  for (const auto& [name, cmd] : steps) {
    if (run(cmd, log) != 0) return name;
  }
  return "";
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).string();
    if (rel == "log.txt") continue;
    out[rel] = read_file(e.path());
  }
  return out;
}

struct E2E {
  std::string failed_step;
  std::size_t n_files = 0;
  std::vector<std::string> differing;
  double seconds = 0.0;
};

E2E end_to_end(const std::string& cli, const fs::path& work) {
  E2E r;
  const auto t0 = Clock::now();
  for (const char* run_name : {"run1", "run2"}) {
    const auto step = pipeline_run(cli, work / run_name);
    if (!step.empty()) {
      r.failed_step = std::string(run_name) + ":" + step;
      return r;
    }
  }
  r.seconds = seconds_since(t0);
  const auto a = tree_contents(work / "run1"), b = tree_contents(work / "run2");
  r.n_files = a.size();
  for (const auto& [k, v] : a) {
    const auto it = b.find(k);
    if (it == b.end() || it->second != v) r.differing.push_back(k);
  }
  for (const auto& [k, v] : b)
    if (!a.count(k)) r.differing.push_back(k);
  return r;
}

void scenario_contrast(const fs::path& run_dir) {
  const auto bundle = SubModelBundle::parse(read_file(run_dir / "out" / "bundle.json"));
  const auto ds = load_dataset_dir(run_dir / "processed");
  const auto pred = predict_day(bundle, ds, ds.day_index(parse_date("2015-07-20")));
  const auto lo = generate_scenarios(bundle, pred, 1000, 41, 0.05);
  const auto hi = generate_scenarios(bundle, pred, 1000, 41, 4.0);
  const auto pl = extremogram(lo.fields, bundle.grid, 0.75, bundle.theta_scale);
  const auto ph = extremogram(hi.fields, bundle.grid, 0.75, bundle.theta_scale);
  std::vector<double> dist;
  double dmax = 0.0;
  for (const auto& p : pl) {
    dist.push_back(p.distance);
    dmax = std::max(dmax, p.distance);
  }
  const double median = quantile_type7(dist, 0.5);
  const auto bl = bin_extremogram(pl, 10, dmax), bh = bin_extremogram(ph, 10, dmax);
  int checked = 0, ordered = 0;
  std::string detail;
  for (std::size_t i = 0; i < bl.size(); ++i) {
    if (bl[i].n_pairs == 0 || 0.5 * (bl[i].lo + bl[i].hi) >= median) continue;
    ++checked;
    ordered += bh[i].mean > bl[i].mean ? 1 : 0;
    detail += fmt("[%.2f,%.2f) %.3f>%.3f ", bl[i].lo, bl[i].hi, bh[i].mean, bl[i].mean);
  }
  report("scenario_contrast", checked > 0 && ordered == checked,
         fmt("extremogram q=0.75, 1000 sims, extent 4.0 above 0.05 in %d/%d bins below median distance %.2f: %s",
             ordered, checked, median, detail.c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <grpboost cli> <work dir>\n";
    return 2;
  }
  const std::string cli = fs::absolute(argv[1]).string();
  const fs::path work = fs::absolute(argv[2]);
  fs::create_directories(work);
  try {
    gradient_fidelity();
    intensity_oracle();
    vecchia_criteria();
    dependence_consistency();
    simulation_vs_analytic();
    appendix_study();
    boosting_correctness();
    const auto e2e = end_to_end(cli, work);
    if (e2e.failed_step.empty()) {
      scenario_contrast(work / "run1");
    } else {
      report("scenario_contrast", false, "pipeline failed at " + e2e.failed_step);
    }
    std::string diff;
    for (const auto& d : e2e.differing) diff += d + " ";
    report("end_to_end_determinism", e2e.failed_step.empty() && e2e.differing.empty() && e2e.n_files > 0,
           e2e.failed_step.empty()
               ? fmt("%zu artifacts compared across two runs, %zu differ %s(%.1f s)", e2e.n_files,
                     e2e.differing.size(), diff.c_str(), e2e.seconds)
               : "pipeline failed at " + e2e.failed_step);
  } catch (const std::exception& e) {
    std::cout << "ERROR " << e.what() << std::endl;
    return 1;
  }
  std::cout << n_pass << " passed, " << n_fail << " failed" << std::endl;
  // Criteria outcomes are reported above; a FAIL line does not fail the run.
  return 0;
}
