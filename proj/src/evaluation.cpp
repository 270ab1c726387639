#include "grpboost/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "grpboost/brown_resnick.hpp"
#include "grpboost/error.hpp"
#include "grpboost/evt_losses.hpp"
#include "grpboost/stats.hpp"

namespace grpboost {

RocResult roc_auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw DataError("roc_auc: labels and scores differ in length");
  std::size_t npos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("roc_auc: labels must be 0 or 1");
    npos += static_cast<std::size_t>(l);
  }
  const std::size_t nneg = labels.size() - npos;
  if (npos == 0 || nneg == 0) throw DataError("roc_auc: both classes must be present");

  std::vector<std::size_t> idx(labels.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult out;
  out.fpr.push_back(0.0);
  out.tpr.push_back(0.0);
  out.thresholds.push_back(std::numeric_limits<double>::infinity());
  // Walk tied blocks from the highest score down; each block adds a trapezoid,
  // which is the Mann-Whitney count with ties as one half.
  double tp = 0.0, fp = 0.0, area = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double bp = 0.0, bn = 0.0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      if (labels[idx[j]] == 1) {
        bp += 1.0;
      } else {
        bn += 1.0;
      }
      ++j;
    }
    area += bn * (tp + 0.5 * bp);
    tp += bp;
    fp += bn;
    out.fpr.push_back(fp / static_cast<double>(nneg));
    out.tpr.push_back(tp / static_cast<double>(npos));
    out.thresholds.push_back(scores[idx[i]]);
    i = j;
  }
  out.auc = area / (static_cast<double>(npos) * static_cast<double>(nneg));
  return out;
}

ScoreReport brier(std::span<const int> indicators, std::span<const double> probabilities) {
  if (indicators.size() != probabilities.size()) throw DataError("brier: length mismatch");
  ScoreReport r;
  r.metric = "brier";
  double s = 0.0;
  for (std::size_t i = 0; i < indicators.size(); ++i) {
    const double p = probabilities[i];
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("brier: probability outside [0, 1] at " + std::to_string(i));
    const double c = (p - indicators[i]) * (p - indicators[i]);
    r.contributions.push_back(c);
    s += c;
  }
  r.value = indicators.empty() ? 0.0 : s / static_cast<double>(indicators.size());
  return r;
}

double permutation_test(std::span<const double> a, std::span<const double> b, std::size_t n_perm,
                        std::uint64_t seed) {
  if (a.size() != b.size()) throw DataError("permutation_test: length mismatch");
  if (n_perm == 0 || a.empty()) return 1.0;
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = b[i] - a[i];
  const double observed = std::accumulate(diff.begin(), diff.end(), 0.0);
  Rng rng(seed);
  std::size_t count = 0;
  for (std::size_t p = 0; p < n_perm; ++p) {
    double s = 0.0;
    for (double d : diff) s += (rng() & 1U) ? d : -d;
    if (s >= observed) ++count;
  }
  return (1.0 + static_cast<double>(count)) / (1.0 + static_cast<double>(n_perm));
}

// ---------------------------------------------------------------------------
// QQ

double gpd_quantile(double p, double scale, double xi) {
  if (xi == 0.0) return -scale * std::log1p(-p);
  return scale * std::expm1(-xi * std::log1p(-p)) / xi;
}

double QQTable::fraction_inside() const {
  if (empirical.empty()) return 0.0;
  std::size_t in = 0;
  for (std::size_t i = 0; i < empirical.size(); ++i) {
    if (empirical[i] >= lower[i] && empirical[i] <= upper[i]) ++in;
  }
  return static_cast<double>(in) / static_cast<double>(empirical.size());
}

std::size_t QQTable::upper_exits(std::size_t tail) const {
  std::size_t n = 0;
  const std::size_t start = empirical.size() > tail ? empirical.size() - tail : 0;
  for (std::size_t i = start; i < empirical.size(); ++i) n += empirical[i] > upper[i] ? 1 : 0;
  return n;
}

QQTable qq_tail(std::span<const double> excesses, std::span<const double> scales, double xi,
                std::size_t n_boot, double level, std::uint64_t seed) {
  if (excesses.size() != scales.size()) throw DataError("qq_tail: excesses and scales differ in length");
  if (excesses.size() < 10) throw DataError("qq_tail: needs at least 10 excesses, got " + std::to_string(excesses.size()));
  QQTable t;
  const std::size_t n = excesses.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(scales[i] > 0.0)) throw DataError("qq_tail: nonpositive scale");
    t.empirical.push_back(excesses[i] / scales[i]);
  }
  std::sort(t.empirical.begin(), t.empirical.end());
  if (t.empirical.front() == t.empirical.back()) throw DataError("qq_tail: constant excesses (degenerate)");
  for (std::size_t i = 0; i < n; ++i) {
    const double p = static_cast<double>(i + 1) / static_cast<double>(n + 1);
    t.probs.push_back(p);
    t.model.push_back(gpd_quantile(p, 1.0, xi));
  }
  std::vector<std::vector<double>> boot(n, std::vector<double>(n_boot));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> s(n);
  for (std::size_t b = 0; b < n_boot; ++b) {
    Rng rng(derive_seed(seed, b));
    for (std::size_t i = 0; i < n; ++i) s[i] = gpd_quantile(unif(rng), scales[i], xi) / scales[i];
    std::sort(s.begin(), s.end());
    for (std::size_t i = 0; i < n; ++i) boot[i][b] = s[i];
  }
  const double lo = 0.5 * (1.0 - level), hi = 1.0 - lo;
  for (std::size_t i = 0; i < n; ++i) {
    t.lower.push_back(n_boot ? quantile_type7(boot[i], lo) : t.model[i]);
    t.upper.push_back(n_boot ? quantile_type7(boot[i], hi) : t.model[i]);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Extremogram

std::vector<ExtremogramPair> extremogram(const std::vector<std::vector<double>>& fields, const Grid& grid,
                                         double q, double theta_scale) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("extremogram: q must lie in (0, 1)");
  if (fields.size() < 20) throw DataError("extremogram: needs at least 20 fields");
  const std::size_t D = grid.size();
  std::vector<std::vector<char>> exceed(D, std::vector<char>(fields.size()));
  std::vector<double> col(fields.size());
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t t = 0; t < fields.size(); ++t) col[t] = fields[t][d];
    const double uq = quantile_type7(col, q);
    for (std::size_t t = 0; t < fields.size(); ++t) exceed[d][t] = col[t] > uq;
  }
  std::vector<ExtremogramPair> out;
  for (std::size_t a = 0; a < D; ++a) {
    for (std::size_t b = a + 1; b < D; ++b) {
      ExtremogramPair p;
      p.s1 = static_cast<int>(a);
      p.s2 = static_cast<int>(b);
      p.distance = anisotropic_distance(grid[a], grid[b], theta_scale);
      std::size_t both = 0;
      for (std::size_t t = 0; t < fields.size(); ++t) {
        if (exceed[a][t]) {
          ++p.n_cond;
          both += exceed[b][t] ? 1 : 0;
        }
      }
      p.estimate = p.n_cond ? static_cast<double>(both) / static_cast<double>(p.n_cond)
                            : std::numeric_limits<double>::quiet_NaN();
      out.push_back(p);
    }
  }
  return out;
}

std::vector<ExtremogramBin> bin_extremogram(const std::vector<ExtremogramPair>& pairs, std::size_t n_bins,
                                            double max_distance) {
  std::vector<ExtremogramBin> bins(n_bins);
  const double w = max_distance / static_cast<double>(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) {
    bins[i].lo = w * static_cast<double>(i);
    bins[i].hi = w * static_cast<double>(i + 1);
  }
  for (const auto& p : pairs) {
    if (!(p.distance <= max_distance) || std::isnan(p.estimate)) continue;
    auto i = static_cast<std::size_t>(p.distance / w);
    if (i >= n_bins) i = n_bins - 1;
    bins[i].mean += p.estimate;
    ++bins[i].n_pairs;
  }
  for (auto& b : bins) {
    b.mean = b.n_pairs ? b.mean / static_cast<double>(b.n_pairs) : std::numeric_limits<double>::quiet_NaN();
  }
  return bins;
}

// ---------------------------------------------------------------------------
// TreeSHAP (path-dependent, Lundberg et al. Algorithm 2)

namespace {

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

void extend_path(std::vector<PathElement>& path, int depth, double zero_fraction, double one_fraction,
                 int feature) {
  path[static_cast<std::size_t>(depth)] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    path[ui + 1].pweight += one_fraction * path[ui].pweight * (i + 1) / static_cast<double>(depth + 1);
    path[ui].pweight = zero_fraction * path[ui].pweight * (depth - i) / static_cast<double>(depth + 1);
  }
}

void unwind_path(std::vector<PathElement>& path, int depth, int index) {
  const double one = path[static_cast<std::size_t>(index)].one_fraction;
  const double zero = path[static_cast<std::size_t>(index)].zero_fraction;
  double next = path[static_cast<std::size_t>(depth)].pweight;
  for (int i = depth - 1; i >= 0; --i) {
    auto& pi = path[static_cast<std::size_t>(i)];
    if (one != 0.0) {
      const double tmp = pi.pweight;
      pi.pweight = next * (depth + 1) / ((i + 1) * one);
      next = tmp - pi.pweight * zero * (depth - i) / static_cast<double>(depth + 1);
    } else {
      pi.pweight = pi.pweight * (depth + 1) / (zero * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    auto& a = path[static_cast<std::size_t>(i)];
    const auto& b = path[static_cast<std::size_t>(i + 1)];
    a.feature = b.feature;
    a.zero_fraction = b.zero_fraction;
    a.one_fraction = b.one_fraction;
  }
}

double unwound_sum(const std::vector<PathElement>& path, int depth, int index) {
  const double one = path[static_cast<std::size_t>(index)].one_fraction;
  const double zero = path[static_cast<std::size_t>(index)].zero_fraction;
  double next = path[static_cast<std::size_t>(depth)].pweight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    const double pw = path[static_cast<std::size_t>(i)].pweight;
    if (one != 0.0) {
      const double tmp = next * (depth + 1) / ((i + 1) * one);
      total += tmp;
      next = pw - tmp * zero * (depth - i) / static_cast<double>(depth + 1);
    } else {
      total += pw / zero / ((depth - i) / static_cast<double>(depth + 1));
    }
  }
  return total;
}

void shap_recurse(const RegressionTree& tree, int node, std::span<const double> x, std::vector<double>& phi,
                  std::vector<PathElement> path, int depth, double zero_fraction, double one_fraction,
                  int feature, double scale) {
  extend_path(path, depth, zero_fraction, one_fraction, feature);
  const auto& n = tree.nodes()[static_cast<std::size_t>(node)];
  if (n.is_leaf()) {
    for (int i = 1; i <= depth; ++i) {
      const auto& pi = path[static_cast<std::size_t>(i)];
      const double w = unwound_sum(path, depth, i);
      phi[static_cast<std::size_t>(pi.feature)] += w * (pi.one_fraction - pi.zero_fraction) * n.weight * scale;
    }
    return;
  }
  const double v = x[static_cast<std::size_t>(n.feature)];
  const bool go_left = std::isnan(v) ? n.default_left : v < n.threshold;
  const int hot = go_left ? n.left : n.right;
  const int cold = go_left ? n.right : n.left;
  double incoming_zero = 1.0, incoming_one = 1.0;
  int k = 1;
  for (; k <= depth; ++k) {
    if (path[static_cast<std::size_t>(k)].feature == n.feature) break;
  }
  if (k <= depth) {
    incoming_zero = path[static_cast<std::size_t>(k)].zero_fraction;
    incoming_one = path[static_cast<std::size_t>(k)].one_fraction;
    unwind_path(path, depth, k);
    --depth;
  }
  const double cover = n.cover;
  const double hot_cover = tree.nodes()[static_cast<std::size_t>(hot)].cover;
  const double cold_cover = tree.nodes()[static_cast<std::size_t>(cold)].cover;
  shap_recurse(tree, hot, x, phi, path, depth + 1, incoming_zero * hot_cover / cover, incoming_one, n.feature, scale);
  shap_recurse(tree, cold, x, phi, path, depth + 1, incoming_zero * cold_cover / cover, 0.0, n.feature, scale);
}

double expected_from(const RegressionTree& tree, int node) {
  const auto& n = tree.nodes()[static_cast<std::size_t>(node)];
  if (n.is_leaf()) return n.weight;
  const auto& l = tree.nodes()[static_cast<std::size_t>(n.left)];
  const auto& r = tree.nodes()[static_cast<std::size_t>(n.right)];
  return (l.cover * expected_from(tree, n.left) + r.cover * expected_from(tree, n.right)) / n.cover;
}

}  // namespace

double tree_expected_value(const RegressionTree& tree) {
  if (tree.nodes().empty()) return 0.0;
  return expected_from(tree, 0);
}

ShapAttribution tree_shap(const TreeEnsemble& ensemble, std::span<const double> x) {
  if (x.size() != ensemble.n_features) {
    throw DataError("tree_shap: expected " + std::to_string(ensemble.n_features) + " features, got " +
                    std::to_string(x.size()));
  }
  ShapAttribution out;
  out.phi.assign(x.size(), 0.0);
  out.base = ensemble.base_score;
  for (const auto& tree : ensemble.trees) {
    if (tree.nodes().empty()) continue;
    out.base += ensemble.learning_rate * tree_expected_value(tree);
    int max_depth = tree.depth();
    std::vector<PathElement> path(static_cast<std::size_t>(max_depth + 2));
    shap_recurse(tree, 0, x, out.phi, path, 0, 1.0, 1.0, -1, ensemble.learning_rate);
  }
  return out;
}

std::vector<double> region_shap_summary(const std::vector<ShapAttribution>& attributions,
                                        std::span<const int> feature_point, std::size_t n_points,
                                        std::span<const std::size_t> rows) {
  std::vector<double> out(n_points, 0.0);
  if (rows.empty()) return out;
  for (auto r : rows) {
    const auto& a = attributions.at(r);
    for (std::size_t f = 0; f < a.phi.size() && f < feature_point.size(); ++f) {
      if (feature_point[f] >= 0) out[static_cast<std::size_t>(feature_point[f])] += std::abs(a.phi[f]);
    }
  }
  for (auto& v : out) v /= static_cast<double>(rows.size());
  return out;
}

std::vector<std::size_t> top_fraction(std::span<const double> scores, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("top fraction must lie in (0, 1]");
  std::vector<std::size_t> out;
  if (scores.empty()) return out;
  const double cut = quantile_type7(scores, 1.0 - fraction);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= cut) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Study

StudyConfig::StudyConfig() {
  train.n_trees = 190;
  train.max_depth = 5;
  train.learning_rate = 0.05;
  train.max_delta_step = 1.0;
}

double study_driver(double xa, double xb) { return 0.2 + 2.8 * ilogit(1.5 * xa - 1.2 * std::tanh(1.5 * xb)); }

FeatureMatrix synthetic_z500(std::size_t n_days, std::size_t n_cols, std::uint64_t seed) {
  // A few smooth modes plus local noise, on a 22-wide lattice.
  constexpr int kModes = 6;
  const std::size_t width = 22;
  FeatureMatrix x(n_days, n_cols);
  Rng rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::array<std::array<double, 4>, kModes> mode{};
  for (auto& m : mode) m = {unif(rng) * 0.6, unif(rng) * 0.6, unif(rng) * 6.283, 0.0};
  std::vector<std::string> names;
  for (std::size_t c = 0; c < n_cols; ++c) names.push_back("z500_" + std::to_string(c));
  x.set_names(names);
  for (std::size_t t = 0; t < n_days; ++t) {
    std::array<double, kModes> amp{};
    for (auto& a : amp) a = norm(rng);
    for (std::size_t c = 0; c < n_cols; ++c) {
      const double gx = static_cast<double>(c % width), gy = static_cast<double>(c / width);
      double v = 0.0;
      for (int k = 0; k < kModes; ++k) {
        const auto& m = mode[static_cast<std::size_t>(k)];
        v += amp[static_cast<std::size_t>(k)] * std::cos(m[0] * gx + m[1] * gy + m[2]);
      }
      x(t, c) = v / std::sqrt(kModes / 2.0) * 0.8 + 0.6 * norm(rng);
    }
  }
  return x;
}

namespace {

StudyIteration summarize(std::vector<std::vector<std::vector<double>>> est,
                         const std::vector<std::vector<double>>& truth, std::size_t n_trees) {
  StudyIteration it;
  it.n_trees = n_trees;
  std::size_t covered = 0, total = 0;
  std::vector<double> bias;
  for (std::size_t p = 0; p < est.size(); ++p) {
    for (std::size_t t = 0; t < est[p].size(); ++t) {
      const auto& v = est[p][t];
      const double q1 = quantile_type7(v, 0.25), q3 = quantile_type7(v, 0.75);
      const double tr = truth[p][t];
      covered += (tr >= q1 && tr <= q3) ? 1 : 0;
      ++total;
      bias.push_back(std::abs(mean(v) - tr));
    }
  }
  it.coverage = total ? static_cast<double>(covered) / static_cast<double>(total) : 0.0;
  it.median_abs_bias = bias.empty() ? 0.0 : quantile_type7(bias, 0.5);
  it.estimate = std::move(est);
  return it;
}

}  // namespace

StudyReport simulation_study(const StudyConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  if (config.n_reps < 2) throw ConfigError("study needs at least two replicates");
  for (auto c : config.driver_columns) {
    if (c >= config.n_predictors) throw ConfigError("driver column outside the predictor set");
  }
  std::vector<GridPoint> pts;
  int id = 0;
  for (int j = 0; j < config.grid_ny; ++j) {
    for (int i = 0; i < config.grid_nx; ++i) pts.push_back({id++, i * config.spacing, j * config.spacing, {}, {}});
  }
  const Grid grid(pts);
  const std::size_t D = grid.size();
  for (const auto& [a, b] : config.pairs) {
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= D || static_cast<std::size_t>(b) >= D) {
      throw ConfigError("study pair outside the grid");
    }
  }
  const int k = std::min<int>(config.vecchia_k, static_cast<int>(D) - 1);
  const FeatureMatrix x = synthetic_z500(config.n_days, config.n_predictors, derive_seed(config.seed, 0));

  StudyReport report;
  report.theta_true.resize(config.n_days);
  report.pi_true.assign(config.pairs.size(), std::vector<double>(config.n_days));
  for (std::size_t t = 0; t < config.n_days; ++t) {
    const double th = study_driver(x(t, config.driver_columns[0]), x(t, config.driver_columns[1]));
    report.theta_true[t] = th;
    const SemivariogramParams p{config.alpha, th, config.theta_scale};
    for (std::size_t q = 0; q < config.pairs.size(); ++q) {
      const auto [a, b] = config.pairs[q];
      report.pi_true[q][t] = pairwise_limit_prob(semivariogram(grid[static_cast<std::size_t>(a)], grid[static_cast<std::size_t>(b)], p));
    }
  }

  auto score = std::make_shared<GradientScore>(grid, config.alpha, config.theta_scale, k);
  using Est = std::vector<std::vector<std::vector<double>>>;
  Est early(config.pairs.size(), std::vector<std::vector<double>>(config.n_days));
  Est late = early;
  const std::vector<double> ones(D, 1.0);
  const std::vector<double> weights(D, 1.0 / static_cast<double>(D));
  std::size_t late_trees = 0;
  for (std::size_t rep = 0; rep < config.n_reps; ++rep) {
    const std::uint64_t rep_seed = derive_seed(config.seed, rep + 1);
    std::vector<std::vector<double>> z;
    for (std::size_t t = 0; t < config.n_days; ++t) {
      // xi = 1, unit scale and threshold: the simulated field is Z itself.
      GrpParams gp{grid, {config.alpha, report.theta_true[t], config.theta_scale}, ones, ones, 1.0, weights, 1.0, -1};
      z.push_back(simulate_grp(gp, 1, derive_seed(rep_seed, t)).front());
    }
    DependenceLoss loss(score, z);
    const auto ens = boost(x, loss, config.train);
    late_trees = ens.trees.size();
    for (std::size_t t = 0; t < config.n_days; ++t) {
      const double th_early = ens.predict(x.row(t), config.early_iteration);
      const double th_late = ens.predict(x.row(t));
      for (std::size_t q = 0; q < config.pairs.size(); ++q) {
        const auto [a, b] = config.pairs[q];
        const auto& ga = grid[static_cast<std::size_t>(a)];
        const auto& gb = grid[static_cast<std::size_t>(b)];
        early[q][t].push_back(pairwise_limit_prob(semivariogram(ga, gb, {config.alpha, th_early, config.theta_scale})));
        late[q][t].push_back(pairwise_limit_prob(semivariogram(ga, gb, {config.alpha, th_late, config.theta_scale})));
      }
    }
  }
  report.early = summarize(std::move(early), report.pi_true, std::min(config.early_iteration, late_trees));
  report.late = summarize(std::move(late), report.pi_true, late_trees);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace grpboost
