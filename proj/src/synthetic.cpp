#include "grpboost/synthetic.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "grpboost/error.hpp"
#include "grpboost/stats.hpp"

namespace grpboost {

GriddedDataset synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.nx < 1 || spec.ny < 1 || spec.nx * spec.ny < 2) throw ConfigError("synthetic grid needs two points");
  if (spec.last_year < spec.first_year) throw ConfigError("synthetic years out of order");
  std::vector<GridPoint> pts;
  int id = 0;
  for (int j = 0; j < spec.ny; ++j) {
    for (int i = 0; i < spec.nx; ++i) {
      const double x = i * spec.spacing, y = j * spec.spacing;
      pts.push_back({id++, x, y, -5.0 + 6.0 * x, 45.0 + 4.5 * y});
    }
  }
  GriddedDataset ds;
  ds.grid = Grid(pts);
  ds.response = "t2m";
  const Date start{std::chrono::year{spec.first_year} / std::chrono::January / 1};
  const Date stop{std::chrono::year{spec.last_year} / std::chrono::December / 31};
  for (Date d = start; d <= stop; d += std::chrono::days{1}) ds.days.push_back(d);
  const auto T = static_cast<Eigen::Index>(ds.days.size());
  const auto D = static_cast<Eigen::Index>(pts.size());

  Rng rng(spec.seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  constexpr int kModes = 4;
  std::array<std::array<double, 3>, kModes> mode{};
  for (auto& m : mode) m = {0.2 + unif(rng), 0.2 + unif(rng), 2.0 * std::numbers::pi * unif(rng)};
  auto basis = [&](int k, const GridPoint& p) {
    const auto& m = mode[static_cast<std::size_t>(k)];
    return std::cos(m[0] * p.x + m[1] * p.y + m[2]);
  };

  Eigen::MatrixXd z500(T, D), sm(T, D), t2m(T, D);
  std::array<double, kModes> za{}, sa{};
  for (Eigen::Index t = 0; t < T; ++t) {
    const double doy = static_cast<double>(day_of_year(ds.days[static_cast<std::size_t>(t)]));
    const double season = std::cos(2.0 * std::numbers::pi * (doy - 200.0) / 366.0);
    const double years = static_cast<double>(t) / 365.25;
    for (int k = 0; k < kModes; ++k) {
      za[static_cast<std::size_t>(k)] = 0.8 * za[static_cast<std::size_t>(k)] + 0.6 * norm(rng);
      sa[static_cast<std::size_t>(k)] = 0.97 * sa[static_cast<std::size_t>(k)] + 0.243 * norm(rng);
    }
    const double common = norm(rng);
    for (Eigen::Index d = 0; d < D; ++d) {
      const auto& p = pts[static_cast<std::size_t>(d)];
      double zf = 0.0, sf = 0.0;
      for (int k = 0; k < kModes; ++k) {
        zf += za[static_cast<std::size_t>(k)] * basis(k, p);
        sf += sa[static_cast<std::size_t>(k)] * basis(k, p);
      }
      z500(t, d) = 5600.0 + 80.0 * season + 60.0 * zf + 5.0 * norm(rng);
      sm(t, d) = 0.30 - 0.05 * season + 0.04 * sf + 0.005 * norm(rng);
      const double heat = 2.2 * zf - 1.5 * sf;
      t2m(t, d) = 14.0 + 8.0 * season + 0.04 * years + heat + 1.2 * common + 0.8 * norm(rng) +
                  0.6 * std::exp(0.35 * heat);
    }
  }
  ds.variables["t2m"] = std::move(t2m);
  ds.variables["z500"] = std::move(z500);
  ds.variables["sm"] = std::move(sm);
  ds.provenance.push_back({{"op", "synthetic"}, {"nx", spec.nx}, {"ny", spec.ny}, {"spacing", spec.spacing},
                           {"first_year", spec.first_year}, {"last_year", spec.last_year}, {"seed", spec.seed}});
  return ds;
}

}  // namespace grpboost
