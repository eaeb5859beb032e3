#pragma once

// Two-step robust FPCA for complete data: clean each curve against its own
// robust smooth, run robust S-M principal components on the cleaned matrix,
// smooth and orthonormalize the directions, then score the original curves.
// Also the classical PCA baseline.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rfpca/dataset.hpp"
#include "rfpca/model.hpp"
#include "rfpca/smoothing.hpp"

namespace rfpca::naive {

struct CleanedMatrix {
  Eigen::MatrixXd values;      ///< n x p cleaned curves
  Eigen::MatrixXd row_center;  ///< n x p local robust centers
  Eigen::VectorXd row_scale;   ///< per-row tau-scale of the Loess residuals
};

/// x~_ij = c_ij + s_i psi((x_ij - c_ij) / s_i) with psi the bisquare (tuning c),
/// c_ij the robust Loess fit of row i and s_i the tau-scale of its residuals.
/// Rows with s_i == 0 pass through unchanged.
CleanedMatrix clean_rows(const Eigen::MatrixXd& x, std::span<const double> grid, double c = 4.0,
                         const LoessConfig& smoother = {});

struct SmPcaResult {
  Eigen::VectorXd center;
  Eigen::MatrixXd directions;  ///< p x q orthonormal
  Eigen::MatrixXd scores;      ///< n x q
  double unexplained_ratio = 1.0;
  std::vector<double> scale_trace;  ///< M-scale of the residual norms per iteration
  int iterations = 0;
  bool converged = false;
};

/// Minimizes the bisquare M-scale (delta 0.5) of the orthogonal residual norms
/// by iteratively reweighted PCA. Two starts are refined, classical PCA and
/// spherical PCA about the spatial median; the iterate with the smallest scale
/// is returned. `converged` is false when that run hit `max_iterations`.
SmPcaResult sm_robust_pca(const Eigen::MatrixXd& x, int q, int max_iterations = 100,
                          double tolerance = 1e-6);

struct NaiveConfig {
  int q = 2;
  double cleaning_tuning = 4.0;
  double score_tuning = 4.0;
  LoessConfig smoother{};
  std::vector<int> knot_candidates;  ///< empty: {2, ..., floor(p/4)}
};

/// Throws IncompatibleError on incomplete data.
FpcaModel fit_naive(const LongitudinalDataset& data, const NaiveConfig& config = {});

/// Column means, top-q eigenvectors of the sample covariance, least-squares scores.
FpcaModel fit_classical(const LongitudinalDataset& data, int q);

/// Top-q principal directions and scores of an already complete matrix.
FpcaModel classical_pca(const Eigen::MatrixXd& x, std::vector<double> grid, int q);

}  // namespace rfpca::naive
