#include "grpboost/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <utility>

#include "grpboost/error.hpp"
#include "grpboost/stats.hpp"

namespace grpboost {

Grid::Grid(std::vector<GridPoint> points) : points_(std::move(points)) {
  std::sort(points_.begin(), points_.end(),
            [](const GridPoint& a, const GridPoint& b) { return a.id < b.id; });
  std::set<std::pair<double, double>> seen;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& p = points_[i];
    if (p.id != static_cast<int>(i)) {
      throw DataError("grid ids must be unique and contiguous from 0; expected id " +
                      std::to_string(i) + ", found " + std::to_string(p.id));
    }
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw DataError("grid point " + std::to_string(p.id) + " has non-finite coordinates");
    }
    if (!seen.emplace(p.x, p.y).second) {
      throw DataError("grid point " + std::to_string(p.id) + " duplicates the coordinates of another point");
    }
  }
}

Grid Grid::subset(std::span<const int> ids) const {
  std::vector<GridPoint> pts;
  pts.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    GridPoint p = points_.at(static_cast<std::size_t>(ids[i]));
    p.id = static_cast<int>(i);
    pts.push_back(p);
  }
  return Grid(std::move(pts));
}

void SemivariogramParams::validate() const {
  if (!(alpha > 0.0 && alpha <= 2.0)) throw ConfigError("semivariogram alpha must lie in (0, 2]");
  if (!std::isfinite(theta_extent) || !std::isfinite(theta_scale)) {
    throw ConfigError("semivariogram thetas must be finite");
  }
}

double anisotropic_distance(const GridPoint& a, const GridPoint& b, double theta_scale) {
  const double dx = a.x - b.x;
  const double dy = (a.y - b.y) * std::exp(theta_scale);
  return std::hypot(dx, dy);
}

double semivariogram_at(double distance, const SemivariogramParams& p) {
  if (distance == 0.0) return 0.0;
  return std::pow(distance / std::exp(p.theta_extent), p.alpha);
}

double semivariogram(const GridPoint& a, const GridPoint& b, const SemivariogramParams& p) {
  return semivariogram_at(anisotropic_distance(a, b, p), p);
}

double pairwise_limit_prob(double gamma) {
  if (!(gamma >= 0.0)) throw NumericError("pairwise_limit_prob: negative semivariogram value");
  // 2 (1 - Phi(s)) = erfc(s / sqrt 2), accurate in the far tail.
  return std::erfc(std::sqrt(gamma / 2.0) / std::sqrt(2.0));
}

std::vector<int> Ordering::positions() const {
  std::vector<int> pos(permutation.size(), -1);
  for (std::size_t j = 0; j < permutation.size(); ++j) {
    pos[static_cast<std::size_t>(permutation[j])] = static_cast<int>(j);
  }
  return pos;
}

Ordering maximin_ordering(const Grid& grid, double theta_scale) {
  const std::size_t n = grid.size();
  if (n == 0) throw DataError("maximin ordering of an empty grid");
  const double sy = std::exp(theta_scale);

  double cx = 0.0, cy = 0.0;
  for (const auto& p : grid.points()) {
    cx += p.x;
    cy += p.y * sy;
  }
  cx /= static_cast<double>(n);
  cy /= static_cast<double>(n);

  std::size_t first = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::hypot(grid[i].x - cx, grid[i].y * sy - cy);
    if (d < best) {
      best = d;
      first = i;
    }
  }

  Ordering out;
  out.permutation.reserve(n);
  std::vector<double> mindist(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);
  std::size_t next = first;
  for (std::size_t step = 0; step < n; ++step) {
    out.permutation.push_back(static_cast<int>(next));
    chosen[next] = true;
    std::size_t arg = n;
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (chosen[i]) continue;
      mindist[i] = std::min(mindist[i], anisotropic_distance(grid[i], grid[next], theta_scale));
      if (mindist[i] > far) {
        far = mindist[i];
        arg = i;
      }
    }
    next = arg;
  }
  out.neighbor_sets.assign(n, {});
  return out;
}

Ordering neighbor_sets(Ordering ordering, const Grid& grid, int k, double theta_scale) {
  if (k < 1) throw ConfigError("neighbor count k must be at least 1");
  const auto& perm = ordering.permutation;
  ordering.neighbor_sets.assign(perm.size(), {});
  std::vector<std::pair<double, int>> cand;
  for (std::size_t j = 1; j < perm.size(); ++j) {
    cand.clear();
    const auto& pj = grid[static_cast<std::size_t>(perm[j])];
    for (std::size_t i = 0; i < j; ++i) {
      cand.emplace_back(anisotropic_distance(pj, grid[static_cast<std::size_t>(perm[i])], theta_scale),
                        perm[i]);
    }
    const std::size_t m = std::min<std::size_t>(j, static_cast<std::size_t>(k));
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(m), cand.end());
    auto& nb = ordering.neighbor_sets[j];
    for (std::size_t i = 0; i < m; ++i) nb.push_back(cand[i].second);
  }
  return ordering;
}

}  // namespace grpboost
