#include "grpboost/boosting.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <utility>

#include "grpboost/error.hpp"
#include "grpboost/stats.hpp"

namespace grpboost {

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

double total_loss(const LossAdapter& loss, std::span<const std::size_t> rows,
                  std::span<const double> predictions) {
  double s = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) s += loss.loss(rows[i], predictions[i]);
  return s;
}

SquaredLoss::SquaredLoss(std::vector<double> y, std::vector<std::size_t> groups)
    : y_(std::move(y)), groups_(std::move(groups)) {}

double SquaredLoss::loss(std::size_t row, double theta) const {
  const double r = y_[row] - theta;
  return 0.5 * r * r;
}

GradHess SquaredLoss::grad_hess(std::size_t row, double theta) const {
  return {theta - y_[row], 1.0};
}

std::size_t SquaredLoss::group(std::size_t row) const {
  return groups_.empty() ? row : groups_[row];
}

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<std::string> names)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
  set_names(std::move(names));
}

void FeatureMatrix::set_names(std::vector<std::string> names) {
  if (names.empty()) {
    names.reserve(cols_);
    for (std::size_t c = 0; c < cols_; ++c) names.push_back("f" + std::to_string(c));
  }
  if (names.size() != cols_) throw DataError("feature name count does not match column count");
  names_ = std::move(names);
}

void TrainConfig::validate() const {
  if (n_trees < 0) throw ConfigError("n_trees must be nonnegative");
  if (max_depth < 0 || max_depth > 32) throw ConfigError("max_depth must lie in [0, 32]");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (!(gamma_complexity >= 0.0)) throw ConfigError("gamma_complexity must be nonnegative");
  if (!(min_child_hessian >= 0.0)) throw ConfigError("min_child_hessian must be nonnegative");
  if (!(max_delta_step >= 0.0)) throw ConfigError("max_delta_step must be nonnegative");
}

// ---------------------------------------------------------------------------
// Trees

int RegressionTree::leaf_index(std::span<const double> x) const {
  int i = 0;
  while (!nodes_[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    const double v = x[static_cast<std::size_t>(n.feature)];
    if (std::isnan(v)) {
      i = n.default_left ? n.left : n.right;
    } else {
      i = v < n.threshold ? n.left : n.right;
    }
  }
  return i;
}

double RegressionTree::predict(std::span<const double> x) const {
  if (nodes_.empty()) return 0.0;
  return nodes_[static_cast<std::size_t>(leaf_index(x))].weight;
}

int RegressionTree::depth() const {
  std::function<int(int)> rec = [&](int i) -> int {
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.is_leaf()) return 0;
    return 1 + std::max(rec(n.left), rec(n.right));
  };
  return nodes_.empty() ? 0 : rec(0);
}

std::size_t RegressionTree::n_leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

double TreeEnsemble::predict(std::span<const double> x) const {
  return predict(x, trees.size());
}

double TreeEnsemble::predict(std::span<const double> x, std::size_t n_trees) const {
  if (x.size() != n_features) {
    throw DataError("predictor arity mismatch: ensemble expects " + std::to_string(n_features) +
                    " features, got " + std::to_string(x.size()));
  }
  const std::size_t m = std::min(n_trees, trees.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) sum += trees[i].predict(x);
  return base_score + learning_rate * sum;
}

nlohmann::json TreeEnsemble::to_json() const {
  nlohmann::json j;
  j["base_score"] = base_score;
  j["learning_rate"] = learning_rate;
  j["n_features"] = n_features;
  j["feature_names"] = feature_names;
  auto& jt = j["trees"] = nlohmann::json::array();
  for (const auto& t : trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes()) {
      nlohmann::json jn;
      if (n.is_leaf()) {
        jn["weight"] = n.weight;
      } else {
        jn["feature"] = n.feature;
        jn["threshold"] = n.threshold;
        jn["left"] = n.left;
        jn["right"] = n.right;
        jn["default_left"] = n.default_left;
        jn["gain"] = n.gain;
      }
      jn["cover"] = n.cover;
      nodes.push_back(std::move(jn));
    }
    jt.push_back({{"nodes", std::move(nodes)}});
  }
  return j;
}

TreeEnsemble TreeEnsemble::from_json(const nlohmann::json& j) {
  TreeEnsemble e;
  try {
    e.base_score = j.at("base_score").get<double>();
    e.learning_rate = j.at("learning_rate").get<double>();
    e.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    e.n_features = j.value("n_features", e.feature_names.size());
    for (const auto& jt : j.at("trees")) {
      std::vector<TreeNode> nodes;
      for (const auto& jn : jt.at("nodes")) {
        TreeNode n;
        n.cover = jn.value("cover", 0.0);
        if (jn.contains("feature")) {
          n.feature = jn.at("feature").get<int>();
          n.threshold = jn.at("threshold").get<double>();
          n.left = jn.at("left").get<int>();
          n.right = jn.at("right").get<int>();
          n.default_left = jn.at("default_left").get<bool>();
          n.gain = jn.value("gain", 0.0);
        } else {
          n.weight = jn.at("weight").get<double>();
        }
        nodes.push_back(n);
      }
      e.trees.emplace_back(std::move(nodes));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed ensemble JSON: ") + ex.what());
  }
  return e;
}

// ---------------------------------------------------------------------------
// Initial estimate

namespace {

struct Totals {
  double loss = 0.0;
  double g = 0.0;
  double h = 0.0;
};

Totals totals_at(const LossAdapter& loss, std::span<const std::size_t> rows, double theta) {
  Totals t;
  for (auto r : rows) {
    t.loss += loss.loss(r, theta);
    const auto gh = loss.grad_hess(r, theta);
    t.g += gh.g;
    t.h += gh.h;
  }
  const double n = static_cast<double>(rows.size());
  t.loss /= n;
  t.g /= n;
  t.h /= n;
  return t;
}

bool usable(const Totals& t) {
  return std::isfinite(t.loss) && std::isfinite(t.g) && std::isfinite(t.h);
}

}  // namespace

double init_estimate(const LossAdapter& loss, std::span<const std::size_t> rows) {
  if (rows.empty()) throw DataError("init_estimate: no rows");
  constexpr double kLimit = 1e3;

  double theta = 0.0;
  Totals cur = totals_at(loss, rows, theta);
  if (!usable(cur)) {
    // Walk outward until the loss is finite (e.g. GPD support constraint).
    bool found = false;
    for (double step = 0.25; step <= kLimit && !found; step *= 2.0) {
      for (double cand : {step, -step}) {
        Totals t = totals_at(loss, rows, cand);
        if (usable(t)) {
          theta = cand;
          cur = t;
          found = true;
          break;
        }
      }
    }
    if (!found) throw ConfigError("init_estimate: loss '" + loss.name() + "' is not finite anywhere");
  }

  auto converged = [&](const Totals& t, double th) {
    return std::abs(t.g) <= 1e-8 * (1.0 + std::abs(th));
  };

  for (int it = 0; it < 100 && !converged(cur, theta); ++it) {
    if (!(cur.h > 0.0)) break;
    double step = -cur.g / cur.h;
    bool moved = false;
    for (int half = 0; half < 40; ++half) {
      const double cand = theta + step;
      Totals t = totals_at(loss, rows, cand);
      if (usable(t) && t.loss <= cur.loss + 1e-15 * std::abs(cur.loss)) {
        theta = cand;
        cur = t;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
    if (std::abs(theta) > kLimit) break;
  }
  if (converged(cur, theta)) return theta;

  // Bisection on the sign of the mean gradient.
  const double dir = cur.g > 0.0 ? -1.0 : 1.0;
  double base = theta;
  double width = 0.5;
  double lo = theta, hi = theta;
  bool bracketed = false;
  for (int it = 0; it < 400; ++it) {
    const double cand = base + dir * width;
    const Totals t = totals_at(loss, rows, cand);
    if (!usable(t)) {
      width *= 0.5;
      if (width < 1e-12) break;
      continue;
    }
    if (dir * t.g >= 0.0) {
      lo = std::min(base, cand);
      hi = std::max(base, cand);
      bracketed = true;
      break;
    }
    base = cand;
    width *= 2.0;
    if (std::abs(base) > kLimit) break;
  }
  if (!bracketed) {
    throw ConfigError("init_estimate: loss '" + loss.name() + "' has no finite minimiser");
  }
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    Totals t = totals_at(loss, rows, mid);
    if (usable(t) && t.g < 0.0) {
      lo = mid;
    } else if (usable(t)) {
      hi = mid;
      if (t.g == 0.0) return mid;
    } else {
      break;
    }
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Tree growth

namespace {

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  bool default_left = true;
  bool valid = false;
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, std::span<const std::size_t> rows, std::span<const double> g,
              std::span<const double> h, const TrainConfig& config)
      : x_(x), rows_(rows), g_(g), h_(h), cfg_(config), side_(rows.size(), 0) {}

  RegressionTree build() {
    // sorted[f] holds local row indices with non-missing x[f], ascending.
    std::vector<std::vector<std::uint32_t>> sorted(x_.cols());
    for (std::size_t f = 0; f < x_.cols(); ++f) {
      auto& s = sorted[f];
      s.reserve(rows_.size());
      for (std::size_t i = 0; i < rows_.size(); ++i) {
        if (!std::isnan(value(i, f))) s.push_back(static_cast<std::uint32_t>(i));
      }
      std::stable_sort(s.begin(), s.end(), [&](std::uint32_t a, std::uint32_t b) {
        return value(a, f) < value(b, f);
      });
    }
    std::vector<std::uint32_t> members(rows_.size());
    std::iota(members.begin(), members.end(), 0U);
    grow(std::move(members), std::move(sorted), 0);
    return RegressionTree(std::move(nodes_));
  }

 private:
  double value(std::size_t local, std::size_t f) const { return x_(rows_[local], f); }

  double score(double gsum, double hsum) const { return gsum * gsum / (hsum + cfg_.lambda); }

  double leaf_weight(double gsum, double hsum) const {
    const double w = -gsum / (hsum + cfg_.lambda);
    if (cfg_.max_delta_step > 0.0) return std::clamp(w, -cfg_.max_delta_step, cfg_.max_delta_step);
    return w;
  }

  int grow(std::vector<std::uint32_t> members, std::vector<std::vector<std::uint32_t>> sorted,
           int depth) {
    double gsum = 0.0, hsum = 0.0;
    for (auto i : members) {
      gsum += g_[i];
      hsum += h_[i];
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_.back().cover = static_cast<double>(members.size());
    nodes_.back().weight = leaf_weight(gsum, hsum);

    SplitCandidate best;
    if (depth < cfg_.max_depth && members.size() >= 2) {
      best = find_split(sorted, members.size(), gsum, hsum);
    }
    if (!best.valid) {
      return id;
    }

    // Partition members and the per-feature sorted lists.
    for (auto i : members) {
      const double v = value(i, static_cast<std::size_t>(best.feature));
      const bool left = std::isnan(v) ? best.default_left : v < best.threshold;
      side_[i] = left ? 1 : 2;
    }
    std::vector<std::uint32_t> lm, rm;
    for (auto i : members) (side_[i] == 1 ? lm : rm).push_back(i);
    std::vector<std::vector<std::uint32_t>> ls(sorted.size()), rs(sorted.size());
    for (std::size_t f = 0; f < sorted.size(); ++f) {
      for (auto i : sorted[f]) (side_[i] == 1 ? ls[f] : rs[f]).push_back(i);
      std::vector<std::uint32_t>().swap(sorted[f]);
    }
    members.clear();
    members.shrink_to_fit();

    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.default_left = best.default_left;
    node.gain = best.gain;
    node.weight = 0.0;
    const int left = grow(std::move(lm), std::move(ls), depth + 1);
    const int right = grow(std::move(rm), std::move(rs), depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  SplitCandidate find_split(const std::vector<std::vector<std::uint32_t>>& sorted, std::size_t n_members,
                            double gsum, double hsum) const {
    SplitCandidate best;
    const double parent = score(gsum, hsum);
    for (std::size_t f = 0; f < sorted.size(); ++f) {
      const auto& s = sorted[f];
      if (s.size() < 2) continue;
      double gp = 0.0, hp = 0.0;
      for (auto i : s) {
        gp += g_[i];
        hp += h_[i];
      }
      // With nothing missing both directions tie; missing goes left.
      const bool any_missing = s.size() < n_members;
      const double gmiss = any_missing ? gsum - gp : 0.0;
      const double hmiss = any_missing ? hsum - hp : 0.0;
      double gl = 0.0, hl = 0.0;
      for (std::size_t k = 0; k + 1 < s.size(); ++k) {
        gl += g_[s[k]];
        hl += h_[s[k]];
        const double a = value(s[k], f);
        const double b = value(s[k + 1], f);
        if (!(a < b)) continue;
        double thr = 0.5 * (a + b);
        if (!(thr > a)) thr = b;
        for (bool miss_left : {true, false}) {
          if (!miss_left && !any_missing) continue;
          const double GL = gl + (miss_left ? gmiss : 0.0);
          const double HL = hl + (miss_left ? hmiss : 0.0);
          const double GR = gsum - GL;
          const double HR = hsum - HL;
          if (HL < cfg_.min_child_hessian || HR < cfg_.min_child_hessian) continue;
          const double gain =
              0.5 * (score(GL, HL) + score(GR, HR) - parent) - cfg_.gamma_complexity;
          // Near-ties within rounding keep the earlier candidate.
          if (gain > 0.0 && gain > best.gain + 1e-12 * best.gain) {
            best = {gain, static_cast<int>(f), thr, miss_left, true};
          }
        }
      }
    }
    return best;
  }

  const FeatureMatrix& x_;
  std::span<const std::size_t> rows_;
  std::span<const double> g_;
  std::span<const double> h_;
  const TrainConfig& cfg_;
  std::vector<std::uint8_t> side_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

RegressionTree fit_tree(std::span<const std::size_t> rows, const FeatureMatrix& x,
                        std::span<const double> g, std::span<const double> h,
                        const TrainConfig& config) {
  if (rows.empty()) throw DataError("fit_tree: no rows");
  if (g.size() != rows.size() || h.size() != rows.size()) {
    throw DataError("fit_tree: gradient/hessian length does not match row count");
  }
  std::vector<double> hf(h.begin(), h.end());
  for (auto& v : hf) v = std::max(v, kHessianFloor);
  TreeBuilder builder(x, rows, g, hf, config);
  return builder.build();
}

// ---------------------------------------------------------------------------
// Boosting

namespace {

struct Staged {
  TreeEnsemble ensemble;
  std::vector<double> valid_loss;  // mean per-row, per tree count
};

Staged boost_impl(std::span<const std::size_t> rows, std::span<const std::size_t> valid,
                  const FeatureMatrix& x, const LossAdapter& loss, const TrainConfig& config,
                  BoostTrace* trace) {
  config.validate();
  if (rows.empty()) throw DataError("boost: no training rows");
  Staged out;
  auto& ens = out.ensemble;
  ens.learning_rate = config.learning_rate;
  ens.feature_names = x.names();
  ens.n_features = x.cols();
  ens.base_score = init_estimate(loss, rows);

  std::vector<double> pred(rows.size(), ens.base_score);
  std::vector<double> vpred(valid.size(), ens.base_score);
  std::vector<double> g(rows.size()), h(rows.size());

  auto mean_valid = [&]() {
    if (valid.empty()) return 0.0;
    return total_loss(loss, valid, vpred) / static_cast<double>(valid.size());
  };
  if (!valid.empty()) out.valid_loss.push_back(mean_valid());
  double prev_loss = trace ? total_loss(loss, rows, pred) : 0.0;
  if (trace) {
    trace->train_loss.assign(1, prev_loss);
    trace->loss_increases.clear();
  }

  for (int it = 0; it < config.n_trees; ++it) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto gh = loss.grad_hess(rows[i], pred[i]);
      if (!std::isfinite(gh.g) || !std::isfinite(gh.h)) {
        throw NumericError("boost: non-finite gradient for loss '" + loss.name() + "' at row " +
                           std::to_string(rows[i]) + " in iteration " + std::to_string(it));
      }
      g[i] = gh.g;
      h[i] = gh.h;
    }
    ens.trees.push_back(fit_tree(rows, x, g, h, config));
    const auto& tree = ens.trees.back();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      pred[i] += config.learning_rate * tree.predict(x.row(rows[i]));
    }
    for (std::size_t i = 0; i < valid.size(); ++i) {
      vpred[i] += config.learning_rate * tree.predict(x.row(valid[i]));
    }
    if (!valid.empty()) out.valid_loss.push_back(mean_valid());
    if (trace) {
      const double l = total_loss(loss, rows, pred);
      if (l > prev_loss + 1e-12 * (1.0 + std::abs(prev_loss))) {
        trace->loss_increases.push_back(static_cast<std::size_t>(it));
      }
      trace->train_loss.push_back(l);
      prev_loss = l;
    }
  }
  return out;
}

}  // namespace

TreeEnsemble boost(std::span<const std::size_t> rows, const FeatureMatrix& x,
                   const LossAdapter& loss, const TrainConfig& config, BoostTrace* trace) {
  return boost_impl(rows, {}, x, loss, config, trace).ensemble;
}

TreeEnsemble boost(const FeatureMatrix& x, const LossAdapter& loss, const TrainConfig& config,
                   BoostTrace* trace) {
  const auto rows = all_rows(loss.size());
  return boost(rows, x, loss, config, trace);
}

CvResult cross_validate(std::span<const std::size_t> rows, const FeatureMatrix& x,
                        const LossAdapter& loss, const TrainConfig& config,
                        std::size_t n_folds) {
  config.validate();
  if (n_folds < 2) throw ConfigError("cross_validate: need at least two folds");

  std::vector<std::size_t> groups;
  for (auto r : rows) groups.push_back(loss.group(r));
  std::vector<std::size_t> uniq = groups;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() < n_folds) {
    throw DataError("cross_validate: " + std::to_string(uniq.size()) +
                    " row groups is fewer than the " + std::to_string(n_folds) + " folds");
  }
  Rng rng(config.seed);
  // Fisher-Yates with an explicit index draw so the fold split only depends
  // on the generator's raw output.
  for (std::size_t i = uniq.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(uniq[i - 1], uniq[j]);
  }
  std::vector<std::size_t> fold_of_group_sorted(uniq.size());
  std::vector<std::pair<std::size_t, std::size_t>> gf;
  gf.reserve(uniq.size());
  for (std::size_t i = 0; i < uniq.size(); ++i) gf.emplace_back(uniq[i], i % n_folds);
  std::sort(gf.begin(), gf.end());
  auto fold_of = [&](std::size_t group) {
    auto it = std::lower_bound(gf.begin(), gf.end(), std::make_pair(group, std::size_t{0}));
    return it->second;
  };

  CvResult res;
  const std::size_t m = static_cast<std::size_t>(config.n_trees) + 1;
  for (std::size_t f = 0; f < n_folds; ++f) {
    std::vector<std::size_t> train, valid;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      (fold_of(groups[i]) == f ? valid : train).push_back(rows[i]);
    }
    if (train.empty() || valid.empty()) throw DataError("cross_validate: empty fold");
    res.fold_loss.push_back(boost_impl(train, valid, x, loss, config, nullptr).valid_loss);
  }
  res.mean_loss.assign(m, 0.0);
  res.standard_error.assign(m, 0.0);
  const double k = static_cast<double>(n_folds);
  for (std::size_t t = 0; t < m; ++t) {
    std::vector<double> col;
    for (const auto& fl : res.fold_loss) col.push_back(fl[t]);
    res.mean_loss[t] = mean(col);
    res.standard_error[t] = sample_sd(col) / std::sqrt(k);
  }
  res.min_index = static_cast<std::size_t>(
      std::min_element(res.mean_loss.begin(), res.mean_loss.end()) - res.mean_loss.begin());
  const double bound = res.mean_loss[res.min_index] + res.standard_error[res.min_index];
  for (std::size_t t = 0; t < m; ++t) {
    if (res.mean_loss[t] <= bound) {
      res.selected_n_trees = t;
      break;
    }
  }
  return res;
}

}  // namespace grpboost
