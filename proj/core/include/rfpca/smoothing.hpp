#pragma once

// B-spline bases, robust Loess in one and two dimensions, and least-squares
// projection onto a spline basis.

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace rfpca {

/// B-spline basis on a fixed time grid.
///
/// Knots are stored as the full clamped vector (boundary knots repeated
/// degree + 1 times). The evaluation matrix has one row per grid point and
/// one column per basis function. Immutable after construction.
class SplineBasis {
 public:
  /// Builds a clamped basis with `n_interior` interior knots at equally spaced
  /// quantiles of `grid`. Zero interior knots gives the Bernstein basis.
  static SplineBasis with_interior_knots(std::span<const double> grid, int n_interior,
                                         int degree = 3);

  /// Rebuilds a basis from a stored knot vector (model deserialization).
  static SplineBasis from_knots(std::span<const double> grid, std::vector<double> knots,
                                int degree);

  int degree() const noexcept { return degree_; }
  int size() const noexcept { return static_cast<int>(knots_.size()) - degree_ - 1; }
  int interior_knot_count() const noexcept { return size() - degree_ - 1; }
  const std::vector<double>& knots() const noexcept { return knots_; }
  const std::vector<double>& grid() const noexcept { return grid_; }
  const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }
  double lower() const noexcept { return knots_.front(); }
  double upper() const noexcept { return knots_.back(); }

  /// Values of all basis functions at t (Cox-de Boor recursion).
  /// Throws DomainError when t lies outside the knot span.
  Eigen::VectorXd evaluate(double t) const;

 private:
  SplineBasis(std::vector<double> grid, std::vector<double> knots, int degree);

  int degree_;
  std::vector<double> knots_;
  std::vector<double> grid_;
  Eigen::MatrixXd matrix_;
};

/// floor(p / knot_divisor) interior knots at grid quantiles; cubic by default.
/// Throws DomainError when floor(p / knot_divisor) == 0.
SplineBasis make_basis(std::span<const double> grid, int knot_divisor = 6, int degree = 3);

inline Eigen::VectorXd eval_basis(const SplineBasis& basis, double t) {
  return basis.evaluate(t);
}

struct LoessConfig {
  double span = 0.3;
  int degree = 1;
  int robust_iterations = 4;
};

/// Cleveland's robust locally weighted regression (tricube neighbourhood
/// weights, bisquare robustness weights on residuals scaled by 6 MAD).
Eigen::VectorXd robust_loess_1d(std::span<const double> x, std::span<const double> y,
                                const LoessConfig& config = {});

/// Bivariate local-linear smoother over the available cells of a p x p matrix
/// indexed by (k, l). Missing cells are filled; the result is symmetrized.
/// `span` is the fraction of available entries in each neighbourhood.
Eigen::MatrixXd loess_2d(const Eigen::MatrixXd& values,
                         const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& available,
                         double span = 0.5);

struct BasisFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd smoothed;
};

/// (Weighted) least-squares projection of v onto the basis columns.
BasisFit smooth_with_basis(const SplineBasis& basis, const Eigen::VectorXd& v,
                           const std::optional<Eigen::VectorXd>& weights = std::nullopt);

/// GCV score sum over vectors of (RSS/p) / (1 - m/p)^2 for a basis with
/// `n_interior` interior knots.
double gcv_score(std::span<const double> grid, const std::vector<Eigen::VectorXd>& vectors,
                 int n_interior, int degree = 3);

/// Knot count minimizing the GCV score; near-ties go to fewer knots.
int gcv_knot_count(std::span<const double> grid, const std::vector<Eigen::VectorXd>& vectors,
                   std::span<const int> candidates, int degree = 3);

/// Default candidate set {2, ..., floor(p/4)} (at least {2}).
std::vector<int> default_knot_candidates(std::size_t p);

}  // namespace rfpca
