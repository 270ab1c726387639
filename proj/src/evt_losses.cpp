#include "grpboost/evt_losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "grpboost/error.hpp"
#include "grpboost/stats.hpp"

namespace grpboost {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Occurrence

LossValue logloss_grad_hess(int label, double theta) {
  const double p = ilogit(theta);
  // -log p = log(1 + e^-theta), -log(1-p) = log(1 + e^theta), both via softplus.
  auto softplus = [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); };
  LossValue out;
  out.loss = label == 1 ? softplus(-theta) : softplus(theta);
  out.g = p - static_cast<double>(label);
  out.h = p * (1.0 - p);
  return out;
}

OccurrenceLoss::OccurrenceLoss(std::vector<int> labels) : labels_(std::move(labels)) {
  for (int l : labels_) {
    if (l != 0 && l != 1) throw DataError("occurrence labels must be 0 or 1");
  }
}

double OccurrenceLoss::loss(std::size_t row, double theta) const {
  return logloss_grad_hess(labels_[row], theta).loss;
}

GradHess OccurrenceLoss::grad_hess(std::size_t row, double theta) const {
  const auto v = logloss_grad_hess(labels_[row], theta);
  return {v.g, v.h};
}

// ---------------------------------------------------------------------------
// GPD

double gpd_log_likelihood(std::span<const double> x, double sigma, double xi) {
  if (!(sigma > 0.0)) return -kInf;
  double ll = -static_cast<double>(x.size()) * std::log(sigma);
  for (double v : x) {
    const double w = v / sigma;
    if (std::abs(xi) < 1e-12) {
      ll -= w;
    } else {
      const double z = 1.0 + xi * w;
      if (!(z > 0.0)) return -kInf;
      ll -= (1.0 + 1.0 / xi) * std::log1p(xi * w);
    }
  }
  return ll;
}

namespace {

// Gradient of the mean log-likelihood in (log sigma, xi).
Eigen::Vector2d gpd_score(std::span<const double> x, double log_sigma, double xi) {
  const double sigma = std::exp(log_sigma);
  const double n = static_cast<double>(x.size());
  double ds = -n / sigma;
  double dxi = 0.0;
  for (double v : x) {
    const double w = v / sigma;
    const double z = 1.0 + xi * w;
    ds += (1.0 + xi) * v / (sigma * sigma * z);
    if (std::abs(xi) < 1e-5) {
      dxi += 0.5 * w * w - w + xi * (w * w - 2.0 * w * w * w / 3.0);
    } else {
      dxi += std::log1p(xi * w) / (xi * xi) - (1.0 + 1.0 / xi) * w / z;
    }
  }
  return Eigen::Vector2d(ds * sigma / n, dxi / n);
}

double mean_ll(std::span<const double> x, double log_sigma, double xi) {
  return gpd_log_likelihood(x, std::exp(log_sigma), xi) / static_cast<double>(x.size());
}

}  // namespace

GpdFit gpd_mle(std::span<const double> excesses) {
  if (excesses.empty()) throw DataError("gpd_mle: no excesses");
  for (double v : excesses) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DataError("gpd_mle: excesses must be positive and finite");
  }
  std::vector<double> sorted(excesses.begin(), excesses.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) throw DataError("gpd_mle: all excesses equal (degenerate sample)");

  // Probability-weighted moments (Hosking & Wallis) for the start.
  const double n = static_cast<double>(sorted.size());
  double a0 = 0.0, a1 = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double p = (static_cast<double>(i) + 1.0 - 0.35) / n;
    a0 += sorted[i];
    a1 += (1.0 - p) * sorted[i];
  }
  a0 /= n;
  a1 /= n;
  double xi = std::clamp(2.0 - a0 / (a0 - 2.0 * a1), -0.9, 0.9);
  double sigma = 2.0 * a0 * a1 / (a0 - 2.0 * a1);
  if (!(sigma > 0.0)) sigma = a0;
  // Keep the start inside the support.
  if (xi < 0.0) sigma = std::max(sigma, -xi * sorted.back() * 1.05);

  GpdFit fit;
  fit.n = sorted.size();
  if (sorted.size() < 10) {
    fit.sigma = sigma;
    fit.xi = xi;
    fit.pwm_only = true;
    fit.grad_norm = gpd_score(sorted, std::log(sigma), xi).norm();
    return fit;
  }

  Eigen::Vector2d p(std::log(sigma), xi);
  double f = mean_ll(sorted, p(0), p(1));
  auto in_domain = [&](const Eigen::Vector2d& q) { return q(1) > -0.999999 && q(1) < 0.999999; };
  for (int it = 0; it < 200; ++it) {
    const Eigen::Vector2d g = gpd_score(sorted, p(0), p(1));
    if (g.norm() <= 1e-9) break;
    // Hessian by central differences of the analytic score.
    Eigen::Matrix2d hess;
    const double eps = 1e-6;
    for (int c = 0; c < 2; ++c) {
      Eigen::Vector2d hi = p, lo = p;
      hi(c) += eps;
      lo(c) -= eps;
      hess.col(c) = (gpd_score(sorted, hi(0), hi(1)) - gpd_score(sorted, lo(0), lo(1))) / (2.0 * eps);
    }
    hess = 0.5 * (hess + hess.transpose());
    Eigen::Vector2d step;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(hess);
    if (es.eigenvalues().maxCoeff() < 0.0) {
      step = -hess.ldlt().solve(g);
    } else {
      step = g;  // ascent direction
    }
    bool moved = false;
    for (int half = 0; half < 60; ++half) {
      const Eigen::Vector2d cand = p + step;
      if (in_domain(cand)) {
        const double fc = mean_ll(sorted, cand(0), cand(1));
        if (std::isfinite(fc) && fc >= f - 1e-15) {
          p = cand;
          f = fc;
          moved = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  fit.sigma = std::exp(p(0));
  fit.xi = p(1);
  fit.grad_norm = gpd_score(sorted, p(0), p(1)).norm();
  return fit;
}

double gpd_scale(double theta, double m, double xi) { return std::exp(theta) - m * xi; }

GpdLossValue gpd_loss_grad_hess(const IntensityRow& row, double theta) {
  GpdLossValue out;
  const double e = std::exp(theta);
  const double a = e - row.m * row.xi;
  if (!(a > 0.0)) {
    out.loss = kInf;
    out.g = out.h = std::numeric_limits<double>::quiet_NaN();
    out.status = GpdStatus::kScaleDomain;
    return out;
  }
  const double ex = row.y - row.b;
  if (!(ex > 0.0)) return out;
  const double xi = row.xi;
  const double t = a + xi * ex;  // a (1 + xi ex / a)
  if (!(t > 0.0)) {
    out.loss = kInf;
    out.g = out.h = std::numeric_limits<double>::quiet_NaN();
    out.status = GpdStatus::kSupportViolation;
    return out;
  }
  if (xi == 0.0) {
    out.loss = std::log(a) + ex / a;
  } else {
    out.loss = std::log(a) + (xi + 1.0) / xi * std::log1p(xi * ex / a);
  }
  const double la = 1.0 / a - (1.0 + xi) * ex / (a * t);
  const double laa = -1.0 / (a * a) + (1.0 + xi) * ex * (a + t) / (a * a * t * t);
  out.g = la * e;
  out.h = laa * e * e + la * e;
  return out;
}

IntensityLoss::IntensityLoss(std::vector<IntensityRow> rows) : rows_(std::move(rows)) {}

double IntensityLoss::loss(std::size_t row, double theta) const {
  return gpd_loss_grad_hess(rows_[row], theta).loss;
}

GradHess IntensityLoss::grad_hess(std::size_t row, double theta) const {
  const auto v = gpd_loss_grad_hess(rows_[row], theta);
  return {v.g, v.h};
}

std::vector<double> transform_to_z(std::span<const double> y, std::span<const double> b,
                                   std::span<const double> theta_int, double xi,
                                   std::span<const double> m, ZScale convention) {
  if (xi == 0.0) throw ConfigError("transform_to_z: xi = 0 is not supported");
  if (y.size() != b.size() || y.size() != theta_int.size()) {
    throw DataError("transform_to_z: field lengths differ");
  }
  if (convention == ZScale::kGpdScale && m.size() != y.size()) {
    throw DataError("transform_to_z: bounds m required for the GPD-scale convention");
  }
  std::vector<double> z(y.size());
  for (std::size_t d = 0; d < y.size(); ++d) {
    const double s = convention == ZScale::kExpTheta ? std::exp(theta_int[d])
                                                     : gpd_scale(theta_int[d], m[d], xi);
    if (!(s > 0.0)) {
      throw NumericError("transform_to_z: nonpositive scale at grid point " + std::to_string(d));
    }
    const double bracket = 1.0 + xi * (y[d] - b[d]) / s;
    z[d] = bracket > 0.0 ? std::pow(bracket, 1.0 / xi) : 0.0;
  }
  return z;
}

// ---------------------------------------------------------------------------
// Brown-Resnick intensity

namespace {

struct LogParts {
  double log_lambda = 0.0;
  Eigen::VectorXd dl;   // d log(lambda) / d log x_d
  Eigen::VectorXd d2l;  // d^2 log(lambda) / d (log x_d)^2
};

// Log-density and its log-scale partials relative to reference point r.
LogParts log_parts(const Eigen::VectorXd& logx, const Eigen::VectorXd& gamma_ref,
                   const PrecisionOperator& prec) {
  const auto n = logx.size();
  const int r = prec.reference();
  Eigen::VectorXd ytil(n);
  for (Eigen::Index i = 0; i < n; ++i) ytil(i) = i == r ? 0.0 : logx(i) - logx(r) + gamma_ref(i);
  const Eigen::VectorXd u = prec.apply(ytil);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  ones(r) = 0.0;
  const double one_q_one = ones.dot(prec.apply(ones));
  const Eigen::VectorXd diag = prec.diagonal();

  LogParts out;
  double s = -2.0 * logx(r);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i != r) s -= logx(i);
  }
  s -= 0.5 * static_cast<double>(n - 1) * std::log(2.0 * std::numbers::pi);
  s -= 0.5 * prec.log_det_cov();
  s -= 0.5 * ytil.dot(u);
  out.log_lambda = s;
  out.dl.resize(n);
  out.d2l.resize(n);
  double usum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == r) continue;
    out.dl(i) = -1.0 - u(i);
    out.d2l(i) = -diag(i);
    usum += u(i);
  }
  out.dl(r) = -2.0 + usum;
  out.d2l(r) = -one_q_one;
  return out;
}

}  // namespace

IntensityValue br_intensity(std::span<const double> x, const CovarianceModel& cov,
                            const PrecisionOperator* precision) {
  const std::size_t n = cov.dim();
  if (x.size() != n) throw DataError("br_intensity: x does not match the covariance dimension");
  Eigen::VectorXd logx(static_cast<Eigen::Index>(n));
  for (std::size_t d = 0; d < n; ++d) {
    if (!(x[d] > 0.0) || !std::isfinite(x[d])) {
      throw NumericError("br_intensity: x must be positive and finite (component " + std::to_string(d) + ")");
    }
    logx(static_cast<Eigen::Index>(d)) = std::log(x[d]);
  }
  std::unique_ptr<DensePrecision> dense;
  if (precision == nullptr) {
    dense = std::make_unique<DensePrecision>(cov);
    precision = dense.get();
  }
  const LogParts lp = log_parts(logx, cov.gamma_to_reference(), *precision);
  IntensityValue out;
  out.log_lambda = lp.log_lambda;
  out.lambda = std::exp(lp.log_lambda);
  const auto m = static_cast<Eigen::Index>(n);
  out.dlog.resize(m);
  out.d2log.resize(m);
  out.dlambda.resize(m);
  out.d2lambda.resize(m);
  for (Eigen::Index d = 0; d < m; ++d) {
    const double xv = x[static_cast<std::size_t>(d)];
    out.dlog(d) = lp.dl(d) / xv;
    out.d2log(d) = (lp.d2l(d) - lp.dl(d)) / (xv * xv);
    out.dlambda(d) = out.lambda * out.dlog(d);
    out.d2lambda(d) = out.lambda * (out.d2log(d) + out.dlog(d) * out.dlog(d));
  }
  return out;
}

double br_log_intensity_full_rank(std::span<const double> x, const Eigen::MatrixXd& sigma) {
  const auto n = sigma.rows();
  if (static_cast<Eigen::Index>(x.size()) != n) throw DataError("x does not match sigma");
  const Eigen::MatrixXd l = cholesky_lower(sigma);
  const Eigen::MatrixXd sinv = l.transpose().triangularView<Eigen::Upper>().solve(
      l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n)));
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd rho = sinv * one;
  const double orho = one.dot(rho);
  const Eigen::MatrixXd gam = sinv - rho * rho.transpose() / orho;
  const Eigen::VectorXd sv = sigma.diagonal();
  Eigen::VectorXd lx(n);
  double sumlog = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(x[static_cast<std::size_t>(i)] > 0.0)) throw NumericError("x must be positive");
    lx(i) = std::log(x[static_cast<std::size_t>(i)]);
    sumlog += lx(i);
  }
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  const Eigen::VectorXd lin = 2.0 * rho / orho + sinv * sv - rho * rho.dot(sv) / orho;
  double out = -0.5 * logdet - 0.5 * std::log(orho) -
               0.5 * static_cast<double>(n - 1) * std::log(2.0 * std::numbers::pi) - sumlog;
  out -= 0.5 * (lx.dot(gam * lx) + lx.dot(lin));
  out -= 0.5 * (0.25 * sv.dot(sinv * sv) - 0.25 * std::pow(sv.dot(rho), 2) / orho + sv.dot(rho) / orho -
                1.0 / orho);
  return out;
}

// ---------------------------------------------------------------------------
// Gradient score

ScoreWeight ScoreWeight::identity() {
  return {[](double z) { return z; }, [](double) { return 1.0; }};
}

GradientScore::GradientScore(const Grid& grid, double alpha, double theta_scale, int vecchia_k,
                             ScoreWeight weight)
    : grid_(grid), alpha_(alpha), theta_scale_(theta_scale), k_(vecchia_k), weight_(std::move(weight)) {
  if (grid.size() < 2) throw DataError("gradient score needs at least two grid points");
  if (vecchia_k < 0) throw ConfigError("vecchia_k must be nonnegative");
  const Ordering ord = maximin_ordering(grid, theta_scale);
  const SemivariogramParams base{alpha, 0.0, theta_scale};
  cov0_ = build_covariance(grid, base, ord.permutation.front());
  if (vecchia_k == 0) {
    precision0_ = std::make_unique<DensePrecision>(cov0_);
  } else {
    precision0_ = vecchia_factorize(cov0_, ord, vecchia_k);
  }
  const auto n = static_cast<Eigen::Index>(grid.size());
  q_gamma0_ = precision0_->apply(cov0_.gamma_to_reference());
  diag0_ = precision0_->diagonal();
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  ones(cov0_.r0) = 0.0;
  one_q_one0_ = ones.dot(precision0_->apply(ones));
}

LossValue GradientScore::evaluate(std::span<const double> z, double theta_extent) const {
  if (z.size() != grid_.size()) throw DataError("gradient score: z does not match the grid");
  std::vector<int> keep;
  for (std::size_t d = 0; d < z.size(); ++d) {
    if (!std::isfinite(z[d]) || z[d] < 0.0) {
      throw NumericError("gradient score: z must be finite and nonnegative (component " + std::to_string(d) + ")");
    }
    if (z[d] > 0.0) keep.push_back(static_cast<int>(d));
  }
  if (keep.size() == z.size()) return evaluate_positive(z, theta_extent);
  if (keep.size() < 2) return {};
  const GradientScore sub(grid_.subset(keep), alpha_, theta_scale_,
                          k_ == 0 ? 0 : std::min<int>(k_, static_cast<int>(keep.size()) - 1), weight_);
  std::vector<double> zs;
  for (int d : keep) zs.push_back(z[static_cast<std::size_t>(d)]);
  return sub.evaluate_positive(zs, theta_extent);
}

LossValue GradientScore::evaluate_positive(std::span<const double> z, double theta_extent) const {
  const auto n = static_cast<Eigen::Index>(z.size());
  const int r = cov0_.r0;
  const double inv_c = std::exp(alpha_ * theta_extent);  // 1 / c, c = exp(-alpha theta)

  Eigen::VectorXd dlog(n);
  for (Eigen::Index i = 0; i < n; ++i) dlog(i) = std::log(z[static_cast<std::size_t>(i)]);
  const double lr = dlog(r);
  for (Eigen::Index i = 0; i < n; ++i) dlog(i) -= lr;
  dlog(r) = 0.0;
  const Eigen::VectorXd a = precision0_->apply(dlog);

  // u = Q(theta) y~ = (Q0 dlog) / c + Q0 gamma0;  L = d log(lambda) / d log z.
  LossValue out;
  double asum = 0.0, usum = 0.0;
  auto accumulate = [&](double x, double l, double dl, double ddl, double l2, double dl2, double ddl2) {
    const double w = weight_.w(x);
    const double dw = weight_.dw(x);
    const double c1 = w * w / (x * x);
    const double c2 = 4.0 * w * dw / x - 2.0 * w * w / (x * x);
    const double c3 = 2.0 * w * w / (x * x);
    out.loss += c1 * l * l + c2 * l + c3 * l2;
    out.g += (2.0 * c1 * l + c2) * dl + c3 * dl2;
    out.h += 2.0 * c1 * dl * dl + (2.0 * c1 * l + c2) * ddl + c3 * ddl2;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == r) continue;
    const double u = a(i) * inv_c + q_gamma0_(i);
    usum += u;
    asum += a(i);
    const double l = -1.0 - u;
    const double dl = -alpha_ * a(i) * inv_c;
    const double l2 = -diag0_(i) * inv_c;
    accumulate(z[static_cast<std::size_t>(i)], l, dl, alpha_ * dl, l2, alpha_ * l2, alpha_ * alpha_ * l2);
  }
  {
    const double l = -2.0 + usum;
    const double dl = alpha_ * asum * inv_c;
    const double l2 = -one_q_one0_ * inv_c;
    accumulate(z[static_cast<std::size_t>(r)], l, dl, alpha_ * dl, l2, alpha_ * l2, alpha_ * alpha_ * l2);
  }
  return out;
}

DependenceLoss::DependenceLoss(std::shared_ptr<const GradientScore> score,
                               std::vector<std::vector<double>> z, std::vector<std::size_t> days)
    : score_(std::move(score)), z_(std::move(z)), days_(std::move(days)) {
  if (!days_.empty() && days_.size() != z_.size()) throw DataError("dependence rows and days differ in length");
}

double DependenceLoss::loss(std::size_t row, double theta) const {
  return score_->evaluate(z_[row], theta).loss;
}

GradHess DependenceLoss::grad_hess(std::size_t row, double theta) const {
  const auto v = score_->evaluate(z_[row], theta);
  return {v.g, v.h};
}

void write_row_diagnostics(std::ostream& out, const LossAdapter& loss,
                           std::span<const std::size_t> rows, std::span<const double> predictions) {
  out << "row,group,prediction,loss,g,h\n";
  out.precision(17);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto gh = loss.grad_hess(rows[i], predictions[i]);
    out << rows[i] << ',' << loss.group(rows[i]) << ',' << predictions[i] << ','
        << loss.loss(rows[i], predictions[i]) << ',' << gh.g << ',' << gh.h << '\n';
  }
}

}  // namespace grpboost
