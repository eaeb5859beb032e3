#pragma once

// MM-type robust functional principal components for data with arbitrary
// missingness. Components are fitted one at a time by weighted alternating
// regressions from a deterministic initial estimate, orthogonalized against
// earlier ones, and the scores are finally re-estimated by bisquare regression.

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rfpca/dataset.hpp"
#include "rfpca/model.hpp"
#include "rfpca/smoothing.hpp"

namespace rfpca::mm {

/// Loss in the fitting criterion. `squared` gives classical least squares.
enum class Loss { bisquare, squared };

/// rho / weight pair used by the criterion. For the bisquare, rho is the
/// normalized family bounded by 1; for the squared loss rho(t) = t^2.
class Criterion {
 public:
  Criterion(Loss loss, double tuning);
  double rho(double t) const noexcept;
  double weight(double t) const noexcept;
  Loss loss() const noexcept { return loss_; }

 private:
  Loss loss_;
  double c_;
};

struct MmConfig {
  int q = 2;  ///< components to fit; 0 means "up to the basis size" (use with target_explained)
  std::optional<double> target_explained;
  int knot_divisor = 6;
  Loss loss = Loss::bisquare;
  double rho_tuning = 1.75;  ///< relative to the previous stage's residual scales
  int max_outer_iterations = 50;
  double tolerance = 1e-6;  ///< relative criterion decrease that ends the sweeps
  int overlap_threshold = 10;
  bool final_adjustment = true;
  double final_tuning = 4.0;
  LoessConfig smoother{};
  double covariance_span = 0.5;

  void validate() const;
  Criterion criterion() const { return Criterion(loss, rho_tuning); }
};

struct LocationScale {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;
};

/// Smooth robust column locations (M-location then robust Loess) and scales
/// (tau-scale of the centered column then robust Loess, floored at 1e-3 of the median).
LocationScale local_location_scale(const LongitudinalDataset& data, const LoessConfig& smoother = {});

/// Smoothed per-column tau-scales of a residual matrix (observed cells only).
Eigen::VectorXd residual_scales(const Eigen::MatrixXd& residuals, const Mask& mask,
                                std::span<const double> grid, const LoessConfig& smoother = {});

/// (1/N) sum over observed cells of sigma_j^2 rho(r_ij / sigma_j).
double unexplained_variance(const Eigen::MatrixXd& residuals, const Mask& mask,
                            const Eigen::VectorXd& scales, const Criterion& criterion);

struct InitialDirection {
  Eigen::VectorXd direction;  ///< unit-norm, smoothed in the basis
  Eigen::VectorXd alpha;      ///< basis coefficients of `direction`
  int min_overlap = 0;        ///< min over pairs of |I_k & I_l|
  bool smoothed_covariance = false;
};

/// Leading eigenvector of the pairwise Gnanadesikan-Kettenring (Qn) covariance
/// of the residual columns, completed by bivariate Loess when some overlaps
/// fall below `overlap_threshold`, then smoothed in the basis.
InitialDirection init_direction(const Eigen::MatrixXd& residuals, const Mask& mask,
                                const SplineBasis& basis, int overlap_threshold = 10,
                                double covariance_span = 0.5);

/// Per-case L1 regression of the observed residuals on h, without intercept.
Eigen::VectorXd init_scores(const Eigen::MatrixXd& residuals, const Mask& mask, const Eigen::VectorXd& h);

struct ComponentFit {
  Eigen::VectorXd alpha;      ///< m coefficients, direction B*alpha has unit norm
  Eigen::VectorXd beta;       ///< n scores
  Eigen::VectorXd mu_update;  ///< p location correction
  std::vector<double> criterion_trace;  ///< criterion at the start and after every sweep
  int sweeps = 0;
  bool converged = false;
  bool descent_violated = false;  ///< a sweep raised the criterion; its iterate was discarded
};

/// Weighted alternating regressions for a single component.
ComponentFit fit_component(const Eigen::MatrixXd& residuals, const Mask& mask,
                           const Eigen::VectorXd& scales, const SplineBasis& basis,
                           const Eigen::VectorXd& init_alpha, const Eigen::VectorXd& init_beta,
                           const MmConfig& config);

/// Criterion sum_i sum_{j in J_i} sigma_j^2 rho((y_ij - mu_j - beta_i h_j) / sigma_j).
double component_criterion(const Eigen::MatrixXd& residuals, const Mask& mask,
                           const Eigen::VectorXd& scales, const Eigen::VectorXd& h,
                           const Eigen::VectorXd& beta, const Eigen::VectorXd& mu,
                           const Criterion& criterion);

struct MmDiagnostics {
  std::vector<ComponentFit> components;
  std::vector<InitialDirection> initial_directions;
  Eigen::MatrixXd scores_before_adjustment;
};

FpcaModel fit_mm(const LongitudinalDataset& data, const MmConfig& config = {},
                 MmDiagnostics* diagnostics = nullptr);

/// Re-estimates every case's score vector by bisquare regression (tuning c,
/// L1 start) of x_i - mu on the rows of E observed for that case. Cases with
/// fewer observations than components, or a singular restricted design, keep
/// their scores and are listed in `flagged_cases`. With the squared loss the
/// regression is least squares.
FpcaModel final_adjustment(FpcaModel model, const LongitudinalDataset& data, double c = 4.0,
                           Loss loss = Loss::bisquare);

}  // namespace rfpca::mm
