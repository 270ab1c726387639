#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace grpboost {

/// Grid location in planar coordinates, units of 100 km.
struct GridPoint {
  int id = 0;
  double x = 0.0;
  double y = 0.0;
  std::optional<double> lon;
  std::optional<double> lat;

  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

/// Fixed spatial grid. Ids are contiguous 0..D-1 and coordinates are distinct.
class Grid {
 public:
  Grid() = default;
  /// Validates and reorders by id; throws DataError on duplicate or
  /// non-contiguous ids, or duplicate coordinates.
  explicit Grid(std::vector<GridPoint> points);

  std::size_t size() const { return points_.size(); }
  const GridPoint& operator[](std::size_t id) const { return points_[id]; }
  std::span<const GridPoint> points() const { return points_; }

  /// Sub-grid over the given ids, relabelled 0..n-1 in the given order.
  Grid subset(std::span<const int> ids) const;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::vector<GridPoint> points_;
};

/// Powered semivariogram parameters: gamma = (dist / exp(theta_extent))^alpha,
/// with the y-coordinate stretched by exp(theta_scale).
struct SemivariogramParams {
  double alpha = 1.0;
  double theta_extent = 0.0;
  double theta_scale = 0.0;

  /// Throws ConfigError unless 0 < alpha <= 2 and the thetas are finite.
  void validate() const;
};

double anisotropic_distance(const GridPoint& a, const GridPoint& b, double theta_scale);

inline double anisotropic_distance(const GridPoint& a, const GridPoint& b,
                                   const SemivariogramParams& p) {
  return anisotropic_distance(a, b, p.theta_scale);
}

double semivariogram(const GridPoint& a, const GridPoint& b, const SemivariogramParams& p);

/// Semivariogram as a function of (anisotropic) distance.
double semivariogram_at(double distance, const SemivariogramParams& p);

/// q -> 1 limit of the pairwise conditional exceedance probability of a
/// Brown-Resnick model: 2 (1 - Phi(sqrt(gamma / 2))).
double pairwise_limit_prob(double gamma);

struct Ordering {
  std::vector<int> permutation;
  /// neighbor_sets[j] holds grid ids of the nearest earlier-ordered points of
  /// permutation[j], nearest first.
  std::vector<std::vector<int>> neighbor_sets;

  /// position[id] = index of id in permutation.
  std::vector<int> positions() const;
};

/// Exact greedy maximin ordering. The first point is the one nearest the
/// centroid; each later point maximises its minimum distance to the points
/// already chosen. Ties go to the lowest id. Distances use the anisotropic
/// metric with the given theta_scale.
Ordering maximin_ordering(const Grid& grid, double theta_scale = 0.0);

/// Fills neighbor_sets with the min(j, k) nearest previously ordered points.
Ordering neighbor_sets(Ordering ordering, const Grid& grid, int k, double theta_scale = 0.0);

}  // namespace grpboost
