#include "grpboost/brown_resnick.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>
#include <random>

#include "grpboost/error.hpp"
#include "grpboost/stats.hpp"

namespace grpboost {

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw NumericError("covariance not positive definite: leading minor " +
                         std::to_string(j + 1) + " of " + std::to_string(n) + " fails");
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Eigen::VectorXd CovarianceModel::gamma_to_reference() const {
  Eigen::VectorXd g(static_cast<Eigen::Index>(dim()));
  const auto& ref = grid[static_cast<std::size_t>(r0)];
  for (std::size_t i = 0; i < dim(); ++i) g(static_cast<Eigen::Index>(i)) = semivariogram(grid[i], ref, params);
  return g;
}

CovarianceModel build_covariance(const Grid& grid, const SemivariogramParams& params, int r0) {
  params.validate();
  const std::size_t n = grid.size();
  if (n < 2) throw DataError("covariance needs at least two grid points");
  if (r0 < 0 || static_cast<std::size_t>(r0) >= n) throw ConfigError("reference point outside the grid");
  CovarianceModel cov;
  cov.grid = grid;
  cov.params = params;
  cov.r0 = r0;
  const auto& ref = grid[static_cast<std::size_t>(r0)];
  Eigen::VectorXd g0(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) g0(static_cast<Eigen::Index>(i)) = semivariogram(grid[i], ref, params);
  cov.sigma.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
      const double v = g0(ii) + g0(jj) - semivariogram(grid[i], grid[j], params);
      cov.sigma(ii, jj) = v;
      cov.sigma(jj, ii) = v;
    }
  }
  cov.sigma.row(r0).setZero();
  cov.sigma.col(r0).setZero();
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<int>(i) != r0) cov.reduced_ids.push_back(static_cast<int>(i));
  }
  const auto m = static_cast<Eigen::Index>(n - 1);
  Eigen::MatrixXd red(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) red(a, b) = cov.sigma(cov.reduced_ids[static_cast<std::size_t>(a)], cov.reduced_ids[static_cast<std::size_t>(b)]);
  }
  cov.chol = cholesky_lower(red);
  return cov;
}

// ---------------------------------------------------------------------------

DensePrecision::DensePrecision(const CovarianceModel& cov)
    : dim_(cov.dim()), r0_(cov.r0), ids_(cov.reduced_ids) {
  const auto m = cov.chol.rows();
  Eigen::MatrixXd linv = cov.chol.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(m, m));
  precision_ = linv.transpose() * linv;
  log_det_ = 2.0 * cov.chol.diagonal().array().log().sum();
}

Eigen::VectorXd DensePrecision::apply(const Eigen::VectorXd& v) const {
  const auto m = static_cast<Eigen::Index>(ids_.size());
  Eigen::VectorXd r(m);
  for (Eigen::Index a = 0; a < m; ++a) r(a) = v(ids_[static_cast<std::size_t>(a)]);
  const Eigen::VectorXd qr = precision_ * r;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
  for (Eigen::Index a = 0; a < m; ++a) out(ids_[static_cast<std::size_t>(a)]) = qr(a);
  return out;
}

double DensePrecision::quad_form(const Eigen::VectorXd& v) const {
  Eigen::VectorXd w = v;
  w(r0_) = 0.0;
  return w.dot(apply(w));
}

Eigen::VectorXd DensePrecision::diagonal() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
  for (std::size_t a = 0; a < ids_.size(); ++a) {
    out(ids_[a]) = precision_(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a));
  }
  return out;
}

// ---------------------------------------------------------------------------

VecchiaFactor::VecchiaFactor(const CovarianceModel& cov, const Ordering& ordering, int k)
    : dim_(cov.dim()), r0_(cov.r0), k_(k) {
  if (k < 1) throw ConfigError("Vecchia neighbour count must be at least 1");
  if (ordering.permutation.size() != dim_) throw DataError("ordering does not match the grid");
  Ordering reduced;
  for (int id : ordering.permutation) {
    if (id != r0_) reduced.permutation.push_back(id);
  }
  reduced = neighbor_sets(std::move(reduced), cov.grid, k, cov.params.theta_scale);
  order_ = reduced.permutation;
  neighbors_ = reduced.neighbor_sets;
  coef_.resize(order_.size());
  cond_var_.resize(order_.size());
  for (std::size_t p = 0; p < order_.size(); ++p) {
    const int j = order_[p];
    const auto& nb = neighbors_[p];
    const auto m = static_cast<Eigen::Index>(nb.size());
    if (m == 0) {
      coef_[p] = Eigen::VectorXd();
      cond_var_[p] = cov.sigma(j, j);
    } else {
      Eigen::MatrixXd snn(m, m);
      Eigen::VectorXd snj(m);
      for (Eigen::Index a = 0; a < m; ++a) {
        snj(a) = cov.sigma(nb[static_cast<std::size_t>(a)], j);
        for (Eigen::Index b = 0; b < m; ++b) {
          snn(a, b) = cov.sigma(nb[static_cast<std::size_t>(a)], nb[static_cast<std::size_t>(b)]);
        }
      }
      const Eigen::MatrixXd l = cholesky_lower(snn);
      const Eigen::VectorXd half = l.triangularView<Eigen::Lower>().solve(snj);
      coef_[p] = l.transpose().triangularView<Eigen::Upper>().solve(half);
      cond_var_[p] = cov.sigma(j, j) - half.squaredNorm();
    }
    if (!(cond_var_[p] > 0.0)) {
      throw NumericError("Vecchia conditional variance not positive at grid point " +
                         std::to_string(j));
    }
  }
}

Eigen::VectorXd VecchiaFactor::apply(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
  for (std::size_t p = 0; p < order_.size(); ++p) {
    const auto& nb = neighbors_[p];
    double r = v(order_[p]);
    for (std::size_t a = 0; a < nb.size(); ++a) r -= coef_[p](static_cast<Eigen::Index>(a)) * v(nb[a]);
    const double e = r / cond_var_[p];
    out(order_[p]) += e;
    for (std::size_t a = 0; a < nb.size(); ++a) out(nb[a]) -= coef_[p](static_cast<Eigen::Index>(a)) * e;
  }
  return out;
}

double VecchiaFactor::quad_form(const Eigen::VectorXd& v) const {
  double s = 0.0;
  for (std::size_t p = 0; p < order_.size(); ++p) {
    const auto& nb = neighbors_[p];
    double r = v(order_[p]);
    for (std::size_t a = 0; a < nb.size(); ++a) r -= coef_[p](static_cast<Eigen::Index>(a)) * v(nb[a]);
    s += r * r / cond_var_[p];
  }
  return s;
}

Eigen::VectorXd VecchiaFactor::diagonal() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
  for (std::size_t p = 0; p < order_.size(); ++p) {
    const auto& nb = neighbors_[p];
    out(order_[p]) += 1.0 / cond_var_[p];
    for (std::size_t a = 0; a < nb.size(); ++a) {
      const double b = coef_[p](static_cast<Eigen::Index>(a));
      out(nb[a]) += b * b / cond_var_[p];
    }
  }
  return out;
}

double VecchiaFactor::log_det_cov() const {
  double s = 0.0;
  for (double f : cond_var_) s += std::log(f);
  return s;
}

Eigen::MatrixXd VecchiaFactor::implied_precision() const {
  const auto n = static_cast<Eigen::Index>(dim_);
  Eigen::MatrixXd q(n, n);
  for (Eigen::Index i = 0; i < n; ++i) q.col(i) = apply(Eigen::VectorXd::Unit(n, i));
  q.row(r0_).setZero();
  q.col(r0_).setZero();
  return q;
}

std::unique_ptr<VecchiaFactor> vecchia_factorize(const CovarianceModel& cov, const Ordering& ordering,
                                                 int k) {
  return std::make_unique<VecchiaFactor>(cov, ordering, k);
}

// ---------------------------------------------------------------------------
// Simulation

double risk_functional(std::span<const double> field, std::span<const double> weights) {
  if (field.size() != weights.size()) throw DataError("risk weights do not match the field length");
  double s = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) s += weights[i] * field[i];
  return s;
}

namespace {

constexpr std::size_t kMaxProposalsPerDraw = 200000;  // 1 / (acceptance floor 1e-4) * 20

}  // namespace

std::vector<std::vector<double>> simulate_grp(const GrpParams& params, std::size_t n_sims,
                                              std::uint64_t seed, SimulationStats* stats) {
  const std::size_t n = params.grid.size();
  if (params.threshold.size() != n || params.scale.size() != n || params.risk_weights.size() != n) {
    throw DataError("simulate_grp: parameter fields do not match the grid");
  }
  for (double a : params.scale) {
    if (!(a > 0.0) || !std::isfinite(a)) throw NumericError("simulate_grp: scale field must be positive");
  }
  std::vector<int> target;
  for (std::size_t i = 0; i < n; ++i) {
    if (params.risk_weights[i] < 0.0) throw ConfigError("risk weights must be nonnegative");
    if (params.risk_weights[i] > 0.0) target.push_back(static_cast<int>(i));
  }
  if (target.empty()) throw ConfigError("risk functional has an empty target region");
  if (risk_functional(params.threshold, params.risk_weights) > params.u + 1e-9 * (1.0 + std::abs(params.u))) {
    throw ConfigError("simulate_grp: requires u >= r(b)");
  }

  SimulationStats local;
  std::vector<std::vector<double>> out;
  if (n_sims == 0) {
    if (stats) *stats = local;
    return out;
  }
  const int r0 = params.r0 >= 0 ? params.r0 : maximin_ordering(params.grid, params.variogram.theta_scale).permutation.front();
  const CovarianceModel cov = build_covariance(params.grid, params.variogram, r0);
  // gamma(s_d, s_j) for every pair, needed to recentre the field at s_J.
  Eigen::MatrixXd gam(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      gam(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          semivariogram(params.grid[i], params.grid[j], params.variogram);
    }
  }

  const auto m = cov.chol.rows();
  const double xi = params.xi;
  out.reserve(n_sims);
  std::vector<double> eps(n), z(n), y(n);
  Eigen::VectorXd normals(m);
  for (std::size_t s = 0; s < n_sims; ++s) {
    Rng rng(derive_seed(seed, s));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    bool accepted = false;
    for (std::size_t attempt = 0; attempt < kMaxProposalsPerDraw; ++attempt) {
      ++local.proposals;
      for (Eigen::Index a = 0; a < m; ++a) normals(a) = normal(rng);
      const Eigen::VectorXd red = cov.chol.triangularView<Eigen::Lower>() * normals;
      std::fill(eps.begin(), eps.end(), 0.0);
      for (Eigen::Index a = 0; a < m; ++a) eps[static_cast<std::size_t>(cov.reduced_ids[static_cast<std::size_t>(a)])] = red(a);
      const auto pick = static_cast<std::size_t>(rng() % target.size());
      const auto j = static_cast<Eigen::Index>(target[pick]);
      // Log spectral field seen from s_J; normalise by its sum over the target.
      double lmax = -INFINITY;
      for (std::size_t d = 0; d < n; ++d) {
        z[d] = eps[d] - eps[static_cast<std::size_t>(j)] - gam(static_cast<Eigen::Index>(d), j);
      }
      for (int d : target) lmax = std::max(lmax, z[static_cast<std::size_t>(d)]);
      double tsum = 0.0;
      for (int d : target) tsum += std::exp(z[static_cast<std::size_t>(d)] - lmax);
      const double log_norm = lmax + std::log(tsum);
      double uu = unif(rng);
      while (uu <= 0.0) uu = unif(rng);
      const double log_r = -std::log(uu);
      for (std::size_t d = 0; d < n; ++d) {
        const double logz = std::max(log_r + z[d] - log_norm, std::log(DBL_MIN));
        if (xi == 0.0) {
          y[d] = params.threshold[d] + params.scale[d] * logz;
        } else {
          y[d] = params.threshold[d] + params.scale[d] * std::expm1(xi * logz) / xi;
        }
      }
      if (risk_functional(y, params.risk_weights) >= params.u) {
        out.push_back(y);
        ++local.accepted;
        accepted = true;
        break;
      }
    }
    if (!accepted || local.acceptance_rate() < 1e-4) {
      throw NumericError("simulate_grp: acceptance rate " + std::to_string(local.acceptance_rate()) +
                         " below 1e-4; threshold u too extreme for these parameters");
    }
  }
  if (stats) *stats = local;
  return out;
}

PairwiseEstimate pairwise_cond_prob(const std::vector<std::vector<double>>& fields, int s1, int s2,
                                    double q, std::optional<std::pair<double, double>> thresholds) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("pairwise_cond_prob: q must lie in (0, 1)");
  if (fields.empty()) throw DataError("pairwise_cond_prob: no simulated fields");
  const auto i1 = static_cast<std::size_t>(s1), i2 = static_cast<std::size_t>(s2);
  double u1, u2;
  if (thresholds) {
    u1 = thresholds->first;
    u2 = thresholds->second;
  } else {
    std::vector<double> c1, c2;
    for (const auto& f : fields) {
      c1.push_back(f.at(i1));
      c2.push_back(f.at(i2));
    }
    u1 = quantile_type7(c1, q);
    u2 = quantile_type7(c2, q);
  }
  PairwiseEstimate est;
  if (s1 == s2) {
    // Identical sites: the conditional event is certain.
    for (const auto& f : fields) est.conditioning_events += f[i1] > u1 ? 1 : 0;
    est.probability = 1.0;
    return est;
  }
  std::size_t joint = 0;
  for (const auto& f : fields) {
    if (f[i1] > u1) {
      ++est.conditioning_events;
      if (f[i2] > u2) ++joint;
    }
  }
  if (est.conditioning_events == 0) {
    throw NumericError("pairwise_cond_prob: no conditioning exceedances at site " + std::to_string(s1));
  }
  const double nc = static_cast<double>(est.conditioning_events);
  est.probability = static_cast<double>(joint) / nc;
  est.standard_error = std::sqrt(est.probability * (1.0 - est.probability) / nc);
  return est;
}

PairwiseEstimate pairwise_cond_prob(const GrpParams& params, int s1, int s2, double q,
                                    std::size_t n_sims, std::uint64_t seed,
                                    std::optional<std::pair<double, double>> thresholds) {
  const auto fields = simulate_grp(params, n_sims, seed);
  return pairwise_cond_prob(fields, s1, s2, q, thresholds);
}

}  // namespace grpboost
