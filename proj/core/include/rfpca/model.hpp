#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfpca/dataset.hpp"
#include "rfpca/smoothing.hpp"

namespace rfpca {

/// Fitted functional principal-component model
///   x_ij ~ mu_j + sum_k scores(i,k) * directions(j,k).
///
/// For spline-based estimators `directions == basis->matrix() * alpha^T`.
/// The classical baseline carries no basis and an empty alpha.
struct FpcaModel {
  std::string estimator;
  std::vector<double> grid;
  Eigen::VectorXd mu;
  std::optional<SplineBasis> basis;
  Eigen::MatrixXd alpha;       ///< q x m spline coefficients
  Eigen::MatrixXd directions;  ///< p x q
  Eigen::MatrixXd scores;      ///< n x q
  std::vector<std::string> case_ids;
  std::vector<Eigen::VectorXd> sigma_stages;  ///< local residual scales, stage 0..q
  std::vector<double> variance_trace;         ///< V_0..V_q
  double explained = 0.0;                     ///< u_q
  std::vector<int> flagged_cases;             ///< cases whose final scores were not adjusted

  Eigen::Index components() const noexcept { return directions.cols(); }
  Eigen::Index points() const noexcept { return directions.rows(); }

  /// n x p matrix of fitted values mu + E * beta_i for every case.
  Eigen::MatrixXd fitted_values() const;
};

/// mu + E * scores for a single score vector.
Eigen::VectorXd predict(const FpcaModel& model, const Eigen::VectorXd& case_scores);

/// 1 - V_q / V_0 clamped to [0, 1]. Throws DomainError when V_0 == 0.
double explained_proportion(const FpcaModel& model);
double explained_proportion(double v0, double vq);

/// Per-case mean absolute error over the observed cells of each case.
Eigen::VectorXd case_mae(const FpcaModel& model, const LongitudinalDataset& data);

/// JSON serialization. Doubles are written in shortest round-trip form, so a
/// reloaded model reproduces predictions bit for bit.
void write_model(const FpcaModel& model, std::ostream& out);
FpcaModel read_model(std::istream& in);
void save_model(const FpcaModel& model, const std::filesystem::path& path);
FpcaModel load_model(const std::filesystem::path& path);

}  // namespace rfpca
