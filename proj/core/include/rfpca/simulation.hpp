#pragma once

// Monte Carlo harness: Gaussian scenarios with a low-rank-plus-noise
// covariance, casewise and cellwise contamination, decimation, MAE and
// subspace-angle metrics, and CSV reports.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rfpca/dataset.hpp"
#include "rfpca/mm_estimator.hpp"
#include "rfpca/naive_estimator.hpp"

namespace rfpca::sim {

using CurveFn = std::function<double(double)>;

/// x = mu + sum_k sqrt(pi_k p) z_k e_k + sqrt(pi0) eps, with e_k orthonormal
/// in the Euclidean grid inner product (so each direction has mean square 1
/// over the grid and pi_k is its variance per point).
struct ScenarioConfig {
  std::string name = "custom";
  int p = 50;
  int q = 2;                           ///< true rank
  std::vector<double> pi{0.6, 0.3};    ///< pi_1..pi_q
  double pi0 = 0.01;                   ///< noise variance
  CurveFn mean_fn;
  std::vector<CurveFn> direction_fns;  ///< at least q; entry q is the casewise outlier direction
  int n = 100;
  int replications = 25;

  void validate() const;
};

/// Smooth unimodal mean; bump, shifted-bump, sine and cosine directions.
ScenarioConfig lrs_like();
/// Declining mean; low-order polynomial directions.
ScenarioConfig macs_like();
/// "lrs" or "macs". Throws DomainError otherwise.
ScenarioConfig preset(std::string_view name);

struct ScenarioFunctions {
  std::vector<double> grid;    ///< equally spaced on [0, 1]
  Eigen::VectorXd mu;
  Eigen::MatrixXd directions;  ///< p x r Euclidean-orthonormal, r = direction_fns.size()
};

ScenarioFunctions evaluate_scenario(const ScenarioConfig& scenario);

/// Largest eigenvalue of the scenario covariance: pi_1 p + pi0.
double top_eigenvalue(const ScenarioConfig& scenario);

/// Diagonal of the scenario covariance.
Eigen::VectorXd variance_diagonal(const ScenarioConfig& scenario, const ScenarioFunctions& f);

struct Sample {
  LongitudinalDataset data;
  Eigen::MatrixXd true_directions;  ///< p x q
};

Sample generate_sample(const ScenarioConfig& scenario, std::uint64_t seed);
Sample generate_sample(const ScenarioConfig& scenario, const ScenarioFunctions& f, std::uint64_t seed);

enum class CaseDirection { next_eigenvector, random_orthogonal };

struct ContaminationSpec {
  double eps_case = 0.0;
  double eps_cell = 0.0;
  double K = 0.0;
  CaseDirection case_direction = CaseDirection::next_eigenvector;

  void validate() const;
};

struct CaseContamination {
  LongitudinalDataset data;
  std::vector<int> clean_rows;
  Eigen::VectorXd direction;  ///< unit-norm c, orthogonal to the true directions
};

/// Replaces the observed cells of the first floor(eps_case n) rows by
/// mu + K sqrt(lambda_1) c. `seed` is used only by random_orthogonal.
CaseContamination contaminate_case(const LongitudinalDataset& data, const ContaminationSpec& spec,
                                   const ScenarioConfig& scenario, const ScenarioFunctions& f,
                                   std::uint64_t seed = 0);

struct CellContamination {
  LongitudinalDataset data;
  std::size_t contaminated = 0;
};

/// Shifts each observed cell by +K sigma_jj independently with probability eps_cell.
CellContamination contaminate_cell(const LongitudinalDataset& data, const ContaminationSpec& spec,
                                   const Eigen::VectorXd& sigma_diag, std::uint64_t seed);

/// Mean of |reference - fitted| over `rows` (all rows when empty) and all columns.
double mae(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& fitted,
           const std::vector<int>& rows = {});
/// Per-row mean absolute error m_i over all columns.
Eigen::VectorXd row_mae(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& fitted);

/// Sine of the largest principal angle between the column spaces.
double subspace_sin_angle(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth);

enum class Estimator { classical, naive, mm };
std::string_view to_string(Estimator e);
Estimator estimator_from_string(std::string_view s);

struct ContaminationSetting {
  double eps_case = 0.0;
  double eps_cell = 0.0;
  std::vector<double> k_grid{0.0};
  CaseDirection case_direction = CaseDirection::next_eigenvector;
};

/// `count` equally spaced values from lo to hi inclusive.
std::vector<double> linear_grid(double lo, double hi, int count);

struct MonteCarloConfig {
  ScenarioConfig scenario = lrs_like();
  std::vector<Estimator> estimators{Estimator::classical, Estimator::naive, Estimator::mm};
  std::vector<ContaminationSetting> settings;  ///< the clean setting is added when missing
  std::vector<double> decimation{1.0};
  int fit_q = 2;
  mm::MmConfig mm{};
  naive::NaiveConfig naive{};
  int threads = 1;
  std::uint64_t seed = 0;
};

struct RawRecord {
  Estimator estimator = Estimator::mm;
  double eps_case = 0.0;
  double eps_cell = 0.0;
  double d = 1.0;
  double K = 0.0;
  int replication = 0;
  double mae = 0.0;
  double sin_angle = 0.0;
  std::string status = "ok";  ///< ok, not_applicable or error
};

/// Every estimator sees the same sample for a given (setting, d, K,
/// replication). The base sample depends only on the replication, so
/// settings differ only through decimation and contamination draws.
/// Results are ordered by (setting, d, K, replication, estimator) whatever
/// the thread count.
std::vector<RawRecord> run_monte_carlo(const MonteCarloConfig& config);

struct CurvePoint {
  Estimator estimator;
  double eps_case, eps_cell, d, K;
  double mean_mae, mean_sin;
  int count;  ///< replications with status ok
};

/// Mean MAE and sin(alpha) per (estimator, setting, d, K).
std::vector<CurvePoint> summarize(const std::vector<RawRecord>& records);

struct TableRow {
  double eps_case, eps_cell, d;
  /// Indexed like the estimator list; nullopt marks "not applicable".
  std::vector<std::optional<double>> max_mae;
  std::vector<std::optional<double>> max_sin;
};

/// Max over K of the per-K means, one row per (eps_case, eps_cell, d).
std::vector<TableRow> aggregate(const std::vector<RawRecord>& records, const std::vector<Estimator>& estimators);

void write_raw_csv(const std::vector<RawRecord>& records, std::ostream& out);
std::vector<RawRecord> read_raw_csv(std::istream& in);
void write_table_csv(const std::vector<TableRow>& rows, const std::vector<Estimator>& estimators, std::ostream& out);
/// Human-readable version of the table.
void print_table(const std::vector<TableRow>& rows, const std::vector<Estimator>& estimators, std::ostream& out);
/// (estimator, metric, eps_case, eps_cell, d, K, value) rows; every contaminated
/// curve starts with the K = 0 point taken from the clean setting at the same d.
void write_curves_csv(const std::vector<RawRecord>& records, std::ostream& out);

/// Shortest round-trip decimal form of x ("nan" for NaN).
std::string format_double(double x);

}  // namespace rfpca::sim
