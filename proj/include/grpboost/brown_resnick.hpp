#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "grpboost/spatial.hpp"

namespace grpboost {

/// Covariance of the Gaussian field with semivariogram gamma pinned to zero at
/// the reference point r0:
///   sigma(i, j) = gamma(s_i, s_r0) + gamma(s_j, s_r0) - gamma(s_i, s_j).
/// Row and column r0 vanish; the remaining (D-1) block is positive definite on
/// non-degenerate grids.
struct CovarianceModel {
  Grid grid;
  SemivariogramParams params;
  int r0 = 0;
  Eigen::MatrixXd sigma;
  /// Grid ids other than r0, in increasing order; indexes the reduced block.
  std::vector<int> reduced_ids;
  /// Lower Cholesky factor of the reduced block.
  Eigen::MatrixXd chol;

  std::size_t dim() const { return grid.size(); }
  /// gamma(s_i, s_r0) for every grid id.
  Eigen::VectorXd gamma_to_reference() const;
};

/// Throws NumericError naming the failing leading minor if the reduced block
/// is not positive definite.
CovarianceModel build_covariance(const Grid& grid, const SemivariogramParams& params, int r0);

/// Dense lower Cholesky factorisation; throws NumericError with the 1-based
/// index of the first non-positive leading minor.
Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a);

/// Linear-algebra view of the precision of the reduced (r0-free) Gaussian
/// vector. Vectors are indexed by grid id; the r0 entry is ignored on input
/// and zero on output.
class PrecisionOperator {
 public:
  virtual ~PrecisionOperator() = default;
  virtual std::size_t dim() const = 0;
  virtual int reference() const = 0;
  /// Q v
  virtual Eigen::VectorXd apply(const Eigen::VectorXd& v) const = 0;
  /// v^T Q v
  virtual double quad_form(const Eigen::VectorXd& v) const = 0;
  /// diag(Q)
  virtual Eigen::VectorXd diagonal() const = 0;
  /// log det of the (reduced) covariance
  virtual double log_det_cov() const = 0;
};

/// Exact precision from the dense Cholesky factor.
class DensePrecision final : public PrecisionOperator {
 public:
  explicit DensePrecision(const CovarianceModel& cov);
  std::size_t dim() const override { return dim_; }
  int reference() const override { return r0_; }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const override;
  double quad_form(const Eigen::VectorXd& v) const override;
  Eigen::VectorXd diagonal() const override;
  double log_det_cov() const override { return log_det_; }

 private:
  std::size_t dim_;
  int r0_;
  std::vector<int> ids_;
  Eigen::MatrixXd precision_;  // reduced
  double log_det_ = 0.0;
};

/// Vecchia approximation: each point (in maximin order, r0 removed) is
/// regressed on its k nearest earlier points. The implied precision is
/// (I - B)^T F^{-1} (I - B) with B the sparse regression coefficients and F
/// the conditional variances.
class VecchiaFactor final : public PrecisionOperator {
 public:
  VecchiaFactor(const CovarianceModel& cov, const Ordering& ordering, int k);

  std::size_t dim() const override { return dim_; }
  int reference() const override { return r0_; }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const override;
  double quad_form(const Eigen::VectorXd& v) const override;
  Eigen::VectorXd diagonal() const override;
  double log_det_cov() const override;

  const std::vector<int>& order() const { return order_; }
  const std::vector<std::vector<int>>& neighbors() const { return neighbors_; }
  const std::vector<Eigen::VectorXd>& coefficients() const { return coef_; }
  const std::vector<double>& conditional_variances() const { return cond_var_; }
  /// Dense implied precision (reduced ordering by grid id), for tests.
  Eigen::MatrixXd implied_precision() const;

 private:
  std::size_t dim_;
  int r0_;
  int k_;
  std::vector<int> order_;                    // grid ids, r0 excluded
  std::vector<std::vector<int>> neighbors_;   // grid ids
  std::vector<Eigen::VectorXd> coef_;
  std::vector<double> cond_var_;
};

/// Builds the Vecchia factor with neighbour sets recomputed on the ordering
/// with r0 removed. Throws NumericError on a non-positive conditional variance.
std::unique_ptr<VecchiaFactor> vecchia_factorize(const CovarianceModel& cov,
                                                 const Ordering& ordering, int k);

// ---------------------------------------------------------------------------
// Generalised r-Pareto simulation

/// Parameters of one day's generalised r-Pareto process on the data scale.
struct GrpParams {
  Grid grid;
  SemivariogramParams variogram;
  std::vector<double> threshold;     // b_d
  std::vector<double> scale;         // scale field a_d > 0
  double xi = -0.3;
  std::vector<double> risk_weights;  // nonnegative, sum to one
  double u = 0.0;
  /// Reference point for the Gaussian field; -1 selects the maximin start.
  int r0 = -1;
};

struct SimulationStats {
  std::size_t accepted = 0;
  std::size_t proposals = 0;
  double acceptance_rate() const {
    return proposals == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposals);
  }
};

/// Risk functional: weighted mean of the field.
double risk_functional(std::span<const double> field, std::span<const double> weights);

/// Draws exactly n_sims fields from the generalised r-Pareto process
///   Y = b + a (Z^xi - 1) / xi,   Z ~ Brown-Resnick exponent measure,
/// conditioned on r(Y) >= u. Z is proposed as R W / sum_T W with R unit
/// Pareto and W the log-Gaussian spectral field seen from a uniformly chosen
/// target point, then accepted by rejection. Draw i uses its own stream
/// derived from (seed, i), so outputs do not depend on evaluation order.
/// Throws NumericError if the acceptance rate falls below 1e-4.
std::vector<std::vector<double>> simulate_grp(const GrpParams& params, std::size_t n_sims,
                                              std::uint64_t seed,
                                              SimulationStats* stats = nullptr);

struct PairwiseEstimate {
  double probability = 0.0;
  double standard_error = 0.0;
  std::size_t conditioning_events = 0;
};

/// Monte Carlo estimate of Pr(Y(s2) > u_q(s2) | Y(s1) > u_q(s1), r(Y) >= u).
/// Thresholds default to the empirical q-quantiles of the simulated fields.
PairwiseEstimate pairwise_cond_prob(const GrpParams& params, int s1, int s2, double q,
                                    std::size_t n_sims, std::uint64_t seed,
                                    std::optional<std::pair<double, double>> thresholds = {});

/// Same estimate from already simulated fields.
PairwiseEstimate pairwise_cond_prob(const std::vector<std::vector<double>>& fields, int s1, int s2,
                                    double q,
                                    std::optional<std::pair<double, double>> thresholds = {});

}  // namespace grpboost
