#pragma once

// Scalar robust building blocks: the bisquare family, location/scale
// M-estimators, tau and Qn scales, Gnanadesikan-Kettenring covariance and the
// two regression estimators used for scores (L1 and bisquare M).

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace rfpca::robust {

/// Normalized Tukey bisquare family with tuning constant c.
///
/// rho(t) = 1 - (1 - (t/c)^2)^3 for |t| <= c and 1 beyond, so rho is bounded
/// by 1. psi is scaled so that psi'(0) = 1, i.e. psi(t) = t (1 - (t/c)^2)^2,
/// which equals (c^2 / 6) rho'(t). weight(t) = psi(t) / t, with weight(0) = 1.
class Bisquare {
 public:
  explicit Bisquare(double c);

  double tuning() const noexcept { return c_; }
  double rho(double t) const noexcept;
  double psi(double t) const noexcept;
  double weight(double t) const noexcept;

 private:
  double c_;
};

struct BisquareValue {
  double rho;
  double psi;
  double weight;
};

/// Evaluates the whole family at t. Throws DomainError for non-finite t or c <= 0.
BisquareValue bisquare(double t, double c);

/// Tuning constants used throughout the library.
inline constexpr double kMadConsistency = 1.4826;
inline constexpr double kLocationTuning = 4.685;
inline constexpr double kScaleTuning = 1.548;
inline constexpr double kTauTuning = 6.08;
inline constexpr double kQnConsistency = 2.2219;

struct RobustScaleResult {
  double value = 0.0;        ///< scale in data units
  std::size_t n_used = 0;    ///< number of finite inputs
  bool degenerate = false;   ///< set when the scale collapsed to zero
};

/// Median of the finite entries. Throws DomainError when there are none.
double median(std::span<const double> xs);

/// Normalized MAD about `center` over finite entries (1.4826 * median |x - center|).
double mad(std::span<const double> xs, double center);

/// Bisquare location M-estimator with the normalized MAD held fixed as scale.
/// Starts at the median; returns the median when the MAD is zero.
double m_location(std::span<const double> xs, double c = kLocationTuning);

/// Bisquare M-scale about zero: the s solving mean rho(x_i / s) = delta.
RobustScaleResult m_scale(std::span<const double> xs, double delta = 0.5,
                          double c = kScaleTuning);

/// Tau-scale of the sample after centering it at its bisquare M-location.
RobustScaleResult tau_scale(std::span<const double> xs);

/// 1 / E[rho_2(Z)] for Z standard normal and rho_2 the bisquare with c = 6.08.
double tau_consistency();

/// Raw Qn: the C(h,2)-th smallest pairwise distance, h = floor(n/2) + 1.
/// O(n log n) selection after Croux and Rousseeuw. Requires n >= 2.
double qn_raw(std::span<const double> xs);

/// Qn scale: raw Qn times 2.2219 times the finite-sample correction.
RobustScaleResult qn_scale(std::span<const double> xs);

/// Finite-sample correction factor d_n for Qn.
double qn_correction(std::size_t n);

using ScaleFunctional = std::function<double(std::span<const double>)>;

/// Qn as a plain functional, the default dispersion of gk_covariance.
double qn_dispersion(std::span<const double> xs);

/// Gnanadesikan-Kettenring covariance 1/4 (S(x+y)^2 - S(x-y)^2).
/// Returns nullopt when fewer than three pairs are available.
std::optional<double> gk_covariance(std::span<const double> x, std::span<const double> y,
                                    const ScaleFunctional& scale = qn_dispersion);

/// Weighted median: a minimizer of sum w_i |v_i - b|. When the optimum is an
/// interval (weight split exactly in half) its midpoint is returned.
double weighted_median(std::span<const double> values, std::span<const double> weights);

/// Least absolute deviations regression without implicit intercept.
/// One-column designs are solved exactly by a weighted median; wider designs
/// by IRLS with a 1e-9 residual floor. Throws NumericalError on rank deficiency.
Eigen::VectorXd l1_regression(const Eigen::MatrixXd& design, const Eigen::VectorXd& y);

struct MRegressionResult {
  Eigen::VectorXd coefficients;
  double scale = 0.0;                   ///< fixed residual scale
  std::vector<double> objective_trace;  ///< sum rho(r_i / scale), starting with init
  int iterations = 0;
  bool fell_back = false;               ///< scale was zero with nonzero residuals
};

/// Bisquare regression M-estimate by IRLS from `init` (L1 by default), with the
/// residual scale fixed at the normalized MAD of the initial residuals.
MRegressionResult bisquare_regression_m(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                        double c = 4.0,
                                        const std::optional<Eigen::VectorXd>& init = std::nullopt);

}  // namespace rfpca::robust
