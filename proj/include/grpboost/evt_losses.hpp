#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "grpboost/boosting.hpp"
#include "grpboost/brown_resnick.hpp"
#include "grpboost/spatial.hpp"

namespace grpboost {

struct LossValue {
  double loss = 0.0;
  double g = 0.0;
  double h = 0.0;
};

// ---------------------------------------------------------------------------
// Occurrence

/// Negative Bernoulli log-likelihood in the logit parameter.
LossValue logloss_grad_hess(int label, double theta);

class OccurrenceLoss final : public LossAdapter {
 public:
  explicit OccurrenceLoss(std::vector<int> labels);
  std::size_t size() const override { return labels_.size(); }
  std::string name() const override { return "logloss"; }
  double loss(std::size_t row, double theta) const override;
  GradHess grad_hess(std::size_t row, double theta) const override;

 private:
  std::vector<int> labels_;
};

// ---------------------------------------------------------------------------
// Intensity (GPD)

struct GpdFit {
  double sigma = 0.0;
  double xi = 0.0;
  std::size_t n = 0;
  double grad_norm = 0.0;
  /// True when fewer than 10 excesses were available and the estimate is the
  /// probability-weighted-moments start only.
  bool pwm_only = false;
};

/// GPD maximum likelihood on positive excesses, xi restricted to (-1, 1).
/// Throws DataError on nonpositive or all-equal excesses.
GpdFit gpd_mle(std::span<const double> excesses);

double gpd_log_likelihood(std::span<const double> excesses, double sigma, double xi);

struct IntensityRow {
  std::size_t point = 0;
  std::size_t day = 0;
  double y = 0.0;
  double b = 0.0;
  double m = 0.0;
  double xi = -0.3;
};

enum class GpdStatus { kOk, kSupportViolation, kScaleDomain };

struct GpdLossValue : LossValue {
  GpdStatus status = GpdStatus::kOk;
};

/// Loss ln a + ((xi+1)/xi) ln(1 + xi (y - b)/a) with a = exp(theta) - m xi,
/// and its first two derivatives in theta. Rows with y <= b contribute zero.
/// Outside the parameter domain the loss is +inf and the status says why.
GpdLossValue gpd_loss_grad_hess(const IntensityRow& row, double theta);

/// GPD scale a = exp(theta) - m xi.
double gpd_scale(double theta, double m, double xi);

class IntensityLoss final : public LossAdapter {
 public:
  explicit IntensityLoss(std::vector<IntensityRow> rows);
  std::size_t size() const override { return rows_.size(); }
  std::string name() const override { return "gpd"; }
  double loss(std::size_t row, double theta) const override;
  GradHess grad_hess(std::size_t row, double theta) const override;
  std::size_t group(std::size_t row) const override { return rows_[row].day; }
  const std::vector<IntensityRow>& rows() const { return rows_; }

 private:
  std::vector<IntensityRow> rows_;
};

/// Which scale standardises observations before the dependence fit.
enum class ZScale {
  kExpTheta,  // exp(theta_int), as written in the transform
  kGpdScale,  // exp(theta_int) - m xi, the GPD scale of the intensity loss
};

/// z_d = {1 + xi (y_d - b_d) / s_d}_+^{1/xi}; zero where the bracket is <= 0.
/// Throws ConfigError for xi == 0.
std::vector<double> transform_to_z(std::span<const double> y, std::span<const double> b,
                                   std::span<const double> theta_int, double xi,
                                   std::span<const double> m = {},
                                   ZScale convention = ZScale::kExpTheta);

// ---------------------------------------------------------------------------
// Brown-Resnick intensity and gradient score

struct IntensityValue {
  double log_lambda = 0.0;
  double lambda = 0.0;
  Eigen::VectorXd dlog;       // d log(lambda) / dx_d
  Eigen::VectorXd d2log;      // d^2 log(lambda) / dx_d^2
  Eigen::VectorXd dlambda;    // d lambda / dx_d
  Eigen::VectorXd d2lambda;   // d^2 lambda / dx_d^2
};

/// Brown-Resnick exponent-measure density at x > 0, written relative to the
/// reference point r0 of the covariance model (whose row of sigma vanishes):
///   lambda(x) = x_r^-2 prod_{i != r} x_i^-1 phi_{D-1}(y~; sigma_{-r})
/// with y~_i = log(x_i / x_r) + gamma(s_i, s_r). Linear solves go through the
/// precision operator when given (e.g. a Vecchia factor), otherwise dense.
/// Throws on x_d <= 0.
IntensityValue br_intensity(std::span<const double> x, const CovarianceModel& cov,
                            const PrecisionOperator* precision = nullptr);

/// The same density from a full-rank covariance sigma of the underlying
/// Gaussian field, in the closed form with rho = sigma^-1 1,
/// Gamma = sigma^-1 - rho rho^T / 1^T rho and sigma_vec = diag(sigma).
/// Throws NumericError if sigma is not positive definite.
double br_log_intensity_full_rank(std::span<const double> x, const Eigen::MatrixXd& sigma);

/// Weight w_d(z) of the gradient score and its derivative; w(0) must be 0.
struct ScoreWeight {
  std::function<double(double)> w;
  std::function<double(double)> dw;
  static ScoreWeight identity();
};

/// Gradient scoring rule for the Brown-Resnick model as a function of
/// theta_extent, with alpha and theta_scale fixed:
///   S = sum_d [ w_d^2 (d_d log lambda)^2 + 2 d_d ( w_d^2 d_d log lambda ) ],
/// derivatives taken in z_d. Everything is expressed through log lambda.
///
/// theta_extent only rescales the semivariogram, gamma = exp(-alpha theta)
/// gamma_0, so the covariance is exp(-alpha theta) sigma_0 and a single
/// factorisation at theta = 0 serves every day and every theta. With a Vecchia
/// factor the regression coefficients are scale-free and the conditional
/// variances scale with the covariance, so the same argument holds.
class GradientScore {
 public:
  /// vecchia_k == 0 selects the dense computation.
  GradientScore(const Grid& grid, double alpha, double theta_scale, int vecchia_k,
                ScoreWeight weight = ScoreWeight::identity());

  /// Score and its first two derivatives in theta_extent for one day. Zero
  /// components of z are dropped (w(0) = 0) and the score is evaluated on
  /// the remaining sub-grid.
  LossValue evaluate(std::span<const double> z, double theta_extent) const;

  const Grid& grid() const { return grid_; }
  double alpha() const { return alpha_; }
  double theta_scale() const { return theta_scale_; }
  int vecchia_k() const { return k_; }
  int reference() const { return cov0_.r0; }

 private:
  LossValue evaluate_positive(std::span<const double> z, double theta_extent) const;

  Grid grid_;
  double alpha_;
  double theta_scale_;
  int k_;
  ScoreWeight weight_;
  CovarianceModel cov0_;
  std::unique_ptr<PrecisionOperator> precision0_;
  Eigen::VectorXd q_gamma0_;
  Eigen::VectorXd diag0_;
  double one_q_one0_ = 0.0;
};

class DependenceLoss final : public LossAdapter {
 public:
  DependenceLoss(std::shared_ptr<const GradientScore> score, std::vector<std::vector<double>> z,
                 std::vector<std::size_t> days = {});
  std::size_t size() const override { return z_.size(); }
  std::string name() const override { return "gradient_score"; }
  double loss(std::size_t row, double theta) const override;
  GradHess grad_hess(std::size_t row, double theta) const override;
  std::size_t group(std::size_t row) const override { return days_.empty() ? row : days_[row]; }

 private:
  std::shared_ptr<const GradientScore> score_;
  std::vector<std::vector<double>> z_;
  std::vector<std::size_t> days_;
};

/// Writes "row,group,prediction,loss,g,h" for each row.
void write_row_diagnostics(std::ostream& out, const LossAdapter& loss,
                           std::span<const std::size_t> rows, std::span<const double> predictions);

}  // namespace grpboost
