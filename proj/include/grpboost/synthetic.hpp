#pragma once

#include <cstdint>

#include "grpboost/io.hpp"

namespace grpboost {

/// Raw daily fields for end-to-end runs: t2m driven by z500 and sm anomalies,
/// with a seasonal cycle and a linear trend, on an nx x ny lattice.
struct SyntheticSpec {
  int nx = 6;
  int ny = 4;
  double spacing = 0.5;
  int first_year = 2001;
  int last_year = 2012;
  std::uint64_t seed = 1;
};

GriddedDataset synthetic_dataset(const SyntheticSpec& spec);

}  // namespace grpboost
