#include "rfpca/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "rfpca/error.hpp"
#include "rfpca/robust.hpp"

namespace rfpca {

namespace {

void require_increasing(std::span<const double> grid, const char* who) {
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (!std::isfinite(grid[j])) throw DomainError(std::string(who) + ": non-finite grid value");
    if (j > 0 && !(grid[j] > grid[j - 1]))
      throw DomainError(std::string(who) + ": grid must be strictly increasing");
  }
}

// Type-7 quantile of a sorted vector.
double sorted_quantile(std::span<const double> sorted, double level) {
  const double pos = level * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double tricube(double u) {
  const double a = std::abs(u);
  if (a >= 1.0) return 0.0;
  const double v = 1.0 - a * a * a;
  return v * v * v;
}

// Weighted polynomial fit evaluated at the origin of the centered abscissae.
// Returns nullopt when fewer than degree + 1 points carry weight or the local
// design is singular.
std::optional<double> local_poly_at_zero(std::span<const double> dx, std::span<const double> y,
                                         std::span<const double> w, int degree) {
  const int cols = degree + 1;
  int positive = 0;
  for (double wi : w) positive += wi > 0.0;
  if (positive < cols) return std::nullopt;
  Eigen::MatrixXd a(positive, cols);
  Eigen::VectorXd b(positive);
  int row = 0;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(w[i] > 0.0)) continue;
    const double sw = std::sqrt(w[i]);
    double pw = 1.0;
    for (int c = 0; c < cols; ++c) {
      a(row, c) = sw * pw;
      pw *= dx[i];
    }
    b[row] = sw * y[i];
    ++row;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < cols) return std::nullopt;
  return Eigen::VectorXd(qr.solve(b))[0];
}

}  // namespace

SplineBasis::SplineBasis(std::vector<double> grid, std::vector<double> knots, int degree)
    : degree_(degree), knots_(std::move(knots)), grid_(std::move(grid)) {
  const int m = size();
  matrix_.resize(static_cast<Eigen::Index>(grid_.size()), m);
  for (std::size_t j = 0; j < grid_.size(); ++j)
    matrix_.row(static_cast<Eigen::Index>(j)) = evaluate(grid_[j]).transpose();
}

SplineBasis SplineBasis::with_interior_knots(std::span<const double> grid, int n_interior,
                                             int degree) {
  require_increasing(grid, "make_basis");
  if (degree < 0) throw DomainError("make_basis: degree must be >= 0");
  if (n_interior < 0) throw DomainError("make_basis: negative interior knot count");
  if (grid.size() < static_cast<std::size_t>(degree) + 2)
    throw DomainError("make_basis: need at least degree + 2 grid points");

  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(n_interior + 2 * (degree + 1)));
  knots.insert(knots.end(), static_cast<std::size_t>(degree + 1), grid.front());
  for (int l = 1; l <= n_interior; ++l)
    knots.push_back(sorted_quantile(grid, static_cast<double>(l) / (n_interior + 1)));
  knots.insert(knots.end(), static_cast<std::size_t>(degree + 1), grid.back());
  return SplineBasis({grid.begin(), grid.end()}, std::move(knots), degree);
}

SplineBasis SplineBasis::from_knots(std::span<const double> grid, std::vector<double> knots,
                                    int degree) {
  require_increasing(grid, "spline basis");
  if (degree < 0 || knots.size() < static_cast<std::size_t>(2 * (degree + 1)))
    throw DomainError("spline basis: knot vector too short for the degree");
  if (!std::is_sorted(knots.begin(), knots.end()))
    throw DomainError("spline basis: knots must be nondecreasing");
  if (grid.front() < knots.front() || grid.back() > knots.back())
    throw DomainError("spline basis: grid outside knot span");
  return SplineBasis({grid.begin(), grid.end()}, std::move(knots), degree);
}

Eigen::VectorXd SplineBasis::evaluate(double t) const {
  if (!std::isfinite(t) || t < lower() || t > upper())
    throw DomainError("eval_basis: t outside the knot span");
  const int m = size();
  const int d = degree_;
  // Knot span index s with knots[s] <= t < knots[s+1]; the right end uses the last span.
  int s;
  if (t >= upper()) {
    s = m - 1;
  } else {
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    s = static_cast<int>(it - knots_.begin()) - 1;
    s = std::clamp(s, d, m - 1);
  }
  // Nonzero basis values N_{s-d..s} by the triangular Cox-de Boor scheme.
  std::vector<double> n(static_cast<std::size_t>(d + 1), 0.0);
  std::vector<double> left(static_cast<std::size_t>(d + 1)), right(static_cast<std::size_t>(d + 1));
  n[0] = 1.0;
  for (int j = 1; j <= d; ++j) {
    left[j] = t - knots_[s + 1 - j];
    right[j] = knots_[s + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom != 0.0 ? n[r] / denom : 0.0;
      n[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    n[j] = saved;
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m);
  for (int r = 0; r <= d; ++r) out[s - d + r] = n[r];
  return out;
}

SplineBasis make_basis(std::span<const double> grid, int knot_divisor, int degree) {
  if (knot_divisor <= 0) throw DomainError("make_basis: knot divisor must be positive");
  const int interior = static_cast<int>(grid.size()) / knot_divisor;
  if (interior == 0)
    throw DomainError("make_basis: floor(p/K) is zero; use a smaller knot divisor or more points");
  return SplineBasis::with_interior_knots(grid, interior, degree);
}

Eigen::VectorXd robust_loess_1d(std::span<const double> x, std::span<const double> y,
                                const LoessConfig& config) {
  const std::size_t n = x.size();
  if (y.size() != n) throw DomainError("robust_loess_1d: x and y differ in length");
  if (config.degree < 0 || config.degree > 2) throw DomainError("robust_loess_1d: degree must be 0, 1 or 2");
  if (!(config.span > 0.0 && config.span <= 1.0)) throw DomainError("robust_loess_1d: span must lie in (0,1]");
  if (n < static_cast<std::size_t>(config.degree) + 2)
    throw DomainError("robust_loess_1d: need at least degree + 2 points");
  require_increasing(x, "robust_loess_1d");

  const std::size_t min_q = static_cast<std::size_t>(config.degree) + 2;
  const std::size_t q = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(config.span * static_cast<double>(n))), min_q, n);

  std::vector<double> robustness(n, 1.0);
  Eigen::VectorXd fitted(static_cast<Eigen::Index>(n));
  std::vector<double> dist(n), dx(n), w(n), scratch(n);

  const double mean_abs_y =
      std::accumulate(y.begin(), y.end(), 0.0, [](double a, double b) { return a + std::abs(b); }) /
      static_cast<double>(n);

  for (int pass = 0; pass <= config.robust_iterations; ++pass) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        dx[j] = x[j] - x[i];
        dist[j] = std::abs(dx[j]);
      }
      scratch = dist;
      std::sort(scratch.begin(), scratch.end());
      std::optional<double> value;
      // Widen the neighbourhood until degree + 1 points carry positive weight.
      for (std::size_t local_q = q; local_q <= n && !value; ++local_q) {
        double h = scratch[local_q - 1];
        if (local_q == n) h = scratch[n - 1] * (1.0 + 1e-10) + 1e-300;
        if (h <= 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) w[j] = tricube(dist[j] / h) * robustness[j];
        value = local_poly_at_zero(dx, y, w, config.degree);
      }
      if (!value) {
        // Robustness weights removed too much: fall back to the plain neighbourhood fit.
        const double h = scratch[q - 1] > 0.0 ? scratch[q - 1] : scratch[n - 1];
        for (std::size_t j = 0; j < n; ++j) w[j] = tricube(dist[j] / (h * (1.0 + 1e-10)));
        value = local_poly_at_zero(dx, y, w, config.degree);
      }
      fitted[static_cast<Eigen::Index>(i)] = value ? *value : y[i];
    }
    if (pass == config.robust_iterations) break;

    std::vector<double> abs_res(n);
    for (std::size_t j = 0; j < n; ++j) abs_res[j] = std::abs(y[j] - fitted[static_cast<Eigen::Index>(j)]);
    const double med = robust::median(abs_res);
    if (med <= 1e-12 * mean_abs_y || med == 0.0) break;
    const double cut = 6.0 * med;
    for (std::size_t j = 0; j < n; ++j) {
      const double u = abs_res[j] / cut;
      robustness[j] = u < 1.0 ? (1.0 - u * u) * (1.0 - u * u) : 0.0;
    }
  }
  return fitted;
}

Eigen::MatrixXd loess_2d(const Eigen::MatrixXd& values,
                         const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& available,
                         double span) {
  const Eigen::Index p = values.rows();
  if (values.cols() != p || available.rows() != p || available.cols() != p)
    throw DomainError("loess_2d: expected square matrices of equal size");
  if (!(span > 0.0 && span <= 1.0)) throw DomainError("loess_2d: span must lie in (0,1]");

  std::vector<double> pk, pl, pv;
  for (Eigen::Index k = 0; k < p; ++k)
    for (Eigen::Index l = 0; l < p; ++l)
      if (available(k, l) && std::isfinite(values(k, l))) {
        pk.push_back(static_cast<double>(k));
        pl.push_back(static_cast<double>(l));
        pv.push_back(values(k, l));
      }
  const std::size_t count = pv.size();
  if (count == 0) throw DomainError("loess_2d: no available entries");
  if (count < 10) throw DomainError("loess_2d: need at least 10 available entries");

  const std::size_t q = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(span * static_cast<double>(count))), 4, count);

  std::vector<double> dist(count), scratch(count);
  Eigen::MatrixXd out(p, p);
  Eigen::MatrixXd design(static_cast<Eigen::Index>(count), 3);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(count));

  for (Eigen::Index k = 0; k < p; ++k) {
    for (Eigen::Index l = 0; l < p; ++l) {
      for (std::size_t e = 0; e < count; ++e) {
        const double a = pk[e] - static_cast<double>(k);
        const double b = pl[e] - static_cast<double>(l);
        dist[e] = std::sqrt(a * a + b * b);
      }
      scratch = dist;
      std::optional<double> value;
      for (std::size_t local_q = q; local_q <= count && !value; local_q += std::max<std::size_t>(1, q / 4)) {
        std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(local_q - 1), scratch.end());
        double h = scratch[local_q - 1] * (1.0 + 1e-10);
        if (local_q == count) h = *std::max_element(scratch.begin(), scratch.end()) * (1.0 + 1e-10);
        if (h <= 0.0) h = 1.0;
        Eigen::Index rows = 0;
        double wsum = 0.0, wy = 0.0;
        for (std::size_t e = 0; e < count; ++e) {
          const double w = tricube(dist[e] / h);
          if (w <= 0.0) continue;
          const double sw = std::sqrt(w);
          design(rows, 0) = sw;
          design(rows, 1) = sw * (pk[e] - static_cast<double>(k));
          design(rows, 2) = sw * (pl[e] - static_cast<double>(l));
          rhs[rows] = sw * pv[e];
          wsum += w;
          wy += w * pv[e];
          ++rows;
        }
        if (rows >= 3) {
          Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.topRows(rows));
          if (qr.rank() == 3) value = Eigen::VectorXd(qr.solve(rhs.head(rows)))[0];
        }
        if (!value && local_q + std::max<std::size_t>(1, q / 4) > count && wsum > 0.0)
          value = wy / wsum;
      }
      out(k, l) = value ? *value : std::accumulate(pv.begin(), pv.end(), 0.0) / static_cast<double>(count);
    }
  }
  return 0.5 * (out + out.transpose());
}

BasisFit smooth_with_basis(const SplineBasis& basis, const Eigen::VectorXd& v,
                           const std::optional<Eigen::VectorXd>& weights) {
  const Eigen::MatrixXd& b = basis.matrix();
  if (v.size() != b.rows()) throw DomainError("smooth_with_basis: vector length != grid size");
  if (b.rows() < b.cols()) throw DomainError("smooth_with_basis: fewer grid points than basis functions");
  BasisFit fit;
  if (weights) {
    if (weights->size() != v.size()) throw DomainError("smooth_with_basis: weight length mismatch");
    if ((weights->array() < 0.0).any()) throw DomainError("smooth_with_basis: negative weights");
    const Eigen::VectorXd sw = weights->cwiseSqrt();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sw.asDiagonal() * b);
    if (qr.rank() < b.cols()) throw NumericalError("smooth_with_basis: rank-deficient basis");
    fit.coefficients = qr.solve(sw.cwiseProduct(v));
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(b);
    if (qr.rank() < b.cols()) throw NumericalError("smooth_with_basis: rank-deficient basis");
    fit.coefficients = qr.solve(v);
  }
  fit.smoothed = b * fit.coefficients;
  return fit;
}

double gcv_score(std::span<const double> grid, const std::vector<Eigen::VectorXd>& vectors,
                 int n_interior, int degree) {
  const SplineBasis basis = SplineBasis::with_interior_knots(grid, n_interior, degree);
  const double p = static_cast<double>(grid.size());
  const double m = static_cast<double>(basis.size());
  if (m > p) throw DomainError("gcv: more basis functions than grid points");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis.matrix());
  const double trace = static_cast<double>(qr.rank());
  const double denom = (1.0 - trace / p) * (1.0 - trace / p);
  double total = 0.0;
  for (const auto& v : vectors) {
    if (v.size() != basis.matrix().rows()) throw DomainError("gcv: vector length != grid size");
    const Eigen::VectorXd coef = qr.solve(v);
    const double rss = (v - basis.matrix() * coef).squaredNorm();
    total += denom > 0.0 ? (rss / p) / denom : std::numeric_limits<double>::infinity();
  }
  return total;
}

int gcv_knot_count(std::span<const double> grid, const std::vector<Eigen::VectorXd>& vectors,
                   std::span<const int> candidates, int degree) {
  if (candidates.empty()) throw DomainError("gcv_knot_count: no candidates");
  std::vector<int> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> scores;
  scores.reserve(sorted.size());
  for (int c : sorted) scores.push_back(gcv_score(grid, vectors, c, degree));
  const double best = *std::min_element(scores.begin(), scores.end());
  double energy = 0.0;
  for (const auto& v : vectors) energy += v.squaredNorm();
  energy /= static_cast<double>(std::max<std::size_t>(grid.size(), 1));
  const double slack = 1e-9 * std::abs(best) + 1e-14 * energy;
  for (std::size_t i = 0; i < sorted.size(); ++i)
    if (scores[i] <= best + slack) return sorted[i];
  return sorted.front();
}

std::vector<int> default_knot_candidates(std::size_t p) {
  const int hi = std::max(2, static_cast<int>(p / 4));
  std::vector<int> out;
  for (int c = 2; c <= hi; ++c) out.push_back(c);
  return out;
}

}  // namespace rfpca
