#include "rfpca/mm_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rfpca/error.hpp"
#include "rfpca/robust.hpp"

namespace rfpca::mm {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Robust Loess of the valid (t_j, v_j) pairs, linearly interpolated (and
// held constant beyond the ends) at grid points without a valid value.
VectorXd smooth_profile(std::span<const double> grid, const std::vector<double>& values,
                        const std::vector<bool>& valid, const LoessConfig& smoother) {
  std::vector<double> xs, ys;
  for (std::size_t j = 0; j < grid.size(); ++j)
    if (valid[j]) {
      xs.push_back(grid[j]);
      ys.push_back(values[j]);
    }
  const VectorXd fitted = robust_loess_1d(xs, ys, smoother);
  VectorXd out(static_cast<Index>(grid.size()));
  std::size_t next = 0;  // index into xs of the first valid point at or after grid[j]
  for (std::size_t j = 0; j < grid.size(); ++j) {
    while (next < xs.size() && xs[next] < grid[j]) ++next;
    if (next < xs.size() && xs[next] == grid[j]) {
      out[static_cast<Index>(j)] = fitted[static_cast<Index>(next)];
    } else if (next == 0) {
      out[static_cast<Index>(j)] = fitted[0];
    } else if (next == xs.size()) {
      out[static_cast<Index>(j)] = fitted[static_cast<Index>(xs.size() - 1)];
    } else {
      const double a = xs[next - 1], b = xs[next];
      const double w = (grid[j] - a) / (b - a);
      out[static_cast<Index>(j)] =
          (1.0 - w) * fitted[static_cast<Index>(next - 1)] + w * fitted[static_cast<Index>(next)];
    }
  }
  return out;
}

std::vector<double> observed_column(const MatrixXd& y, const Mask& mask, Index j) {
  std::vector<double> out;
  for (Index i = 0; i < y.rows(); ++i)
    if (mask(i, j)) out.push_back(y(i, j));
  return out;
}

// Per-column tau-scales smoothed over the grid and floored. `fallback_level`
// sets the floor when every column scale is zero.
VectorXd smoothed_scales(const MatrixXd& y, const Mask& mask, std::span<const double> grid,
                         const LoessConfig& smoother, double fallback_level) {
  const Index p = y.cols();
  std::vector<double> s(static_cast<std::size_t>(p), 0.0);
  std::vector<bool> valid(static_cast<std::size_t>(p), false);
  std::vector<double> raw;
  for (Index j = 0; j < p; ++j) {
    const auto col = observed_column(y, mask, j);
    if (col.size() < 2) continue;
    s[static_cast<std::size_t>(j)] = robust::tau_scale(col).value;
    valid[static_cast<std::size_t>(j)] = true;
    raw.push_back(s[static_cast<std::size_t>(j)]);
  }
  if (raw.empty()) throw DataError("no column has two or more observations");
  double floor = 1e-3 * robust::median(raw);
  if (!(floor > 0.0)) floor = 1e-3 * std::max(fallback_level, 1e-12);
  VectorXd out = smooth_profile(grid, s, valid, smoother);
  for (Index j = 0; j < p; ++j) out[j] = std::max(out[j], floor);
  return out;
}

double mean_abs_observed(const MatrixXd& x, const Mask& mask) {
  double acc = 0.0;
  std::size_t count = 0;
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j)
      if (mask(i, j)) {
        acc += std::abs(x(i, j));
        ++count;
      }
  return count ? acc / static_cast<double>(count) : 0.0;
}

}  // namespace

Criterion::Criterion(Loss loss, double tuning) : loss_(loss), c_(tuning) {
  if (loss == Loss::bisquare && !(tuning > 0.0)) throw DomainError("criterion: tuning must be positive");
}

double Criterion::rho(double t) const noexcept {
  if (loss_ == Loss::squared) return t * t;
  const double u = t / c_;
  if (std::abs(u) >= 1.0) return 1.0;
  const double v = 1.0 - u * u;
  return 1.0 - v * v * v;
}

double Criterion::weight(double t) const noexcept {
  if (loss_ == Loss::squared) return 1.0;
  const double u = t / c_;
  if (std::abs(u) >= 1.0) return 0.0;
  const double v = 1.0 - u * u;
  return v * v;
}

void MmConfig::validate() const {
  if (q < 0) throw DomainError("MmConfig: q must be >= 0");
  if (target_explained && !(*target_explained > 0.0 && *target_explained < 1.0))
    throw DomainError("MmConfig: target explained proportion must lie in (0,1)");
  if (q == 0 && !target_explained) throw DomainError("MmConfig: need q >= 1 or a target explained proportion");
  if (knot_divisor <= 0) throw DomainError("MmConfig: knot divisor must be positive");
  if (loss == Loss::bisquare && !(rho_tuning > 0.0)) throw DomainError("MmConfig: rho tuning must be positive");
  if (max_outer_iterations < 1) throw DomainError("MmConfig: max_outer_iterations must be >= 1");
  if (!(tolerance >= 0.0)) throw DomainError("MmConfig: tolerance must be >= 0");
  if (overlap_threshold < 3) throw DomainError("MmConfig: overlap threshold must be >= 3");
  if (!(final_tuning > 0.0)) throw DomainError("MmConfig: final tuning must be positive");
}

LocationScale local_location_scale(const LongitudinalDataset& data, const LoessConfig& smoother) {
  const Index p = data.points();
  const auto& x = data.values();
  const auto& mask = data.mask();
  std::vector<double> m(static_cast<std::size_t>(p), 0.0);
  std::vector<bool> valid(static_cast<std::size_t>(p), false);
  for (Index j = 0; j < p; ++j) {
    const auto col = observed_column(x, mask, j);
    if (col.size() < 2) continue;
    m[static_cast<std::size_t>(j)] = robust::m_location(col);
    valid[static_cast<std::size_t>(j)] = true;
  }
  if (std::count(valid.begin(), valid.end(), true) == 0)
    throw DataError("local_location_scale: no column has two or more observations");

  LocationScale out;
  out.mu = smooth_profile(data.grid(), m, valid, smoother);
  MatrixXd centered = x;
  for (Index j = 0; j < p; ++j) centered.col(j).array() -= out.mu[j];
  out.sigma = smoothed_scales(centered, mask, data.grid(), smoother, mean_abs_observed(x, mask));
  return out;
}

VectorXd residual_scales(const MatrixXd& residuals, const Mask& mask, std::span<const double> grid,
                         const LoessConfig& smoother) {
  return smoothed_scales(residuals, mask, grid, smoother, mean_abs_observed(residuals, mask));
}

double unexplained_variance(const MatrixXd& residuals, const Mask& mask, const VectorXd& scales,
                            const Criterion& criterion) {
  if (scales.size() != residuals.cols()) throw DomainError("unexplained_variance: scale length != columns");
  if ((scales.array() <= 0.0).any()) throw DomainError("unexplained_variance: scales must be positive");
  double acc = 0.0;
  std::size_t count = 0;
  for (Index j = 0; j < residuals.cols(); ++j) {
    const double s = scales[j];
    for (Index i = 0; i < residuals.rows(); ++i)
      if (mask(i, j)) {
        acc += s * s * criterion.rho(residuals(i, j) / s);
        ++count;
      }
  }
  if (count == 0) throw DomainError("unexplained_variance: no observed cells");
  return acc / static_cast<double>(count);
}

InitialDirection init_direction(const MatrixXd& residuals, const Mask& mask, const SplineBasis& basis,
                                int overlap_threshold, double covariance_span) {
  const Index n = residuals.rows();
  const Index p = residuals.cols();
  MatrixXd sigma = MatrixXd::Zero(p, p);
  Mask available = Mask::Constant(p, p, false);
  int min_overlap = std::numeric_limits<int>::max();
  std::vector<double> a, b;
  a.reserve(static_cast<std::size_t>(n));
  b.reserve(static_cast<std::size_t>(n));
  for (Index k = 0; k < p; ++k)
    for (Index l = k; l < p; ++l) {
      a.clear();
      b.clear();
      for (Index i = 0; i < n; ++i)
        if (mask(i, k) && mask(i, l)) {
          a.push_back(residuals(i, k));
          b.push_back(residuals(i, l));
        }
      min_overlap = std::min(min_overlap, static_cast<int>(a.size()));
      if (const auto c = robust::gk_covariance(a, b)) {
        sigma(k, l) = sigma(l, k) = *c;
        available(k, l) = available(l, k) = true;
      }
    }
  if (available.count() == 0) throw DataError("init_direction: no pair of columns has three common cases");

  InitialDirection out;
  out.min_overlap = min_overlap;
  out.smoothed_covariance = !(available.all() && min_overlap >= overlap_threshold);
  if (out.smoothed_covariance) sigma = loess_2d(sigma, available, covariance_span);
  sigma = 0.5 * (sigma + sigma.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sigma);
  if (eig.info() != Eigen::Success) throw NumericalError("init_direction: eigendecomposition failed");
  VectorXd e = eig.eigenvectors().col(p - 1);
  Index arg = 0;
  e.cwiseAbs().maxCoeff(&arg);
  if (e[arg] < 0.0) e = -e;

  const BasisFit fit = smooth_with_basis(basis, e);
  const double norm = fit.smoothed.norm();
  if (!(norm > 0.0)) throw NumericalError("init_direction: smoothed eigenvector vanished");
  out.direction = fit.smoothed / norm;
  out.alpha = fit.coefficients / norm;
  return out;
}

VectorXd init_scores(const MatrixXd& residuals, const Mask& mask, const VectorXd& h) {
  if (h.size() != residuals.cols()) throw DomainError("init_scores: direction length != columns");
  const Index n = residuals.rows();
  VectorXd beta = VectorXd::Zero(n);
  std::vector<double> values, weights;
  for (Index i = 0; i < n; ++i) {
    values.clear();
    weights.clear();
    // L1 on a single column: minimize sum |h_j| |y_ij / h_j - b|.
    for (Index j = 0; j < residuals.cols(); ++j)
      if (mask(i, j) && h[j] != 0.0) {
        values.push_back(residuals(i, j) / h[j]);
        weights.push_back(std::abs(h[j]));
      }
    if (!values.empty()) beta[i] = robust::weighted_median(values, weights);
  }
  return beta;
}

double component_criterion(const MatrixXd& residuals, const Mask& mask, const VectorXd& scales,
                           const VectorXd& h, const VectorXd& beta, const VectorXd& mu,
                           const Criterion& criterion) {
  double acc = 0.0;
  for (Index j = 0; j < residuals.cols(); ++j) {
    const double s = scales[j];
    for (Index i = 0; i < residuals.rows(); ++i)
      if (mask(i, j)) acc += s * s * criterion.rho((residuals(i, j) - mu[j] - beta[i] * h[j]) / s);
  }
  return acc;
}

ComponentFit fit_component(const MatrixXd& residuals, const Mask& mask, const VectorXd& scales,
                           const SplineBasis& basis, const VectorXd& init_alpha, const VectorXd& init_beta,
                           const MmConfig& config) {
  const Index n = residuals.rows();
  const Index p = residuals.cols();
  const Index m = basis.size();
  const MatrixXd& B = basis.matrix();
  if (B.rows() != p) throw DomainError("fit_component: basis grid size != columns");
  if (scales.size() != p || (scales.array() <= 0.0).any())
    throw DomainError("fit_component: scales must be positive, one per column");
  if (init_alpha.size() != m) throw DomainError("fit_component: init_alpha has wrong length");
  if (init_beta.size() != n) throw DomainError("fit_component: init_beta has wrong length");

  const Criterion crit = config.criterion();
  ComponentFit out;
  out.alpha = init_alpha;
  out.beta = init_beta;
  out.mu_update = VectorXd::Zero(p);
  VectorXd h = B * out.alpha;

  double previous = component_criterion(residuals, mask, scales, h, out.beta, out.mu_update, crit);
  out.criterion_trace.push_back(previous);
  MatrixXd w(n, p);
  for (int sweep = 1; sweep <= config.max_outer_iterations; ++sweep) {
    for (Index j = 0; j < p; ++j)
      for (Index i = 0; i < n; ++i)
        w(i, j) = mask(i, j)
                      ? crit.weight((residuals(i, j) - out.mu_update[j] - out.beta[i] * h[j]) / scales[j])
                      : 0.0;

    const ComponentFit before = out;

    for (Index j = 0; j < p; ++j) {
      double num = 0.0, den = 0.0;
      for (Index i = 0; i < n; ++i)
        if (w(i, j) > 0.0) {
          num += w(i, j) * (residuals(i, j) - out.beta[i] * h[j]);
          den += w(i, j);
        }
      if (den > 0.0) out.mu_update[j] = num / den;
    }

    for (Index i = 0; i < n; ++i) {
      double num = 0.0, den = 0.0;
      for (Index j = 0; j < p; ++j)
        if (w(i, j) > 0.0) {
          num += w(i, j) * h[j] * (residuals(i, j) - out.mu_update[j]);
          den += w(i, j) * h[j] * h[j];
        }
      if (den > 0.0) out.beta[i] = num / den;
    }

    if (out.beta.isZero(0.0)) throw NumericalError("fit_component: degenerate component (all scores zero)");
    MatrixXd normal = MatrixXd::Zero(m, m);
    VectorXd rhs = VectorXd::Zero(m);
    for (Index j = 0; j < p; ++j) {
      double a = 0.0, c = 0.0;
      for (Index i = 0; i < n; ++i)
        if (w(i, j) > 0.0) {
          a += w(i, j) * out.beta[i] * out.beta[i];
          c += w(i, j) * out.beta[i] * (residuals(i, j) - out.mu_update[j]);
        }
      if (a == 0.0 && c == 0.0) continue;
      normal.noalias() += a * B.row(j).transpose() * B.row(j);
      rhs.noalias() += c * B.row(j).transpose();
    }
    if (normal.isZero(0.0)) throw NumericalError("fit_component: degenerate component (singular normal equations)");
    out.alpha = normal.completeOrthogonalDecomposition().solve(rhs);
    h = B * out.alpha;

    // The bilinear term is invariant under (beta, h) -> (beta * a, h / a).
    const double norm = h.norm();
    if (!(norm > 0.0)) throw NumericalError("fit_component: degenerate component (direction vanished)");
    h /= norm;
    out.alpha /= norm;
    out.beta *= norm;

    const double current = component_criterion(residuals, mask, scales, h, out.beta, out.mu_update, crit);
    out.sweeps = sweep;
    // Each block update minimizes a majorizer of the criterion, so an increase
    // can only come from rounding; keep the previous iterate in that case.
    if (current > previous * (1.0 + 1e-12) + 1e-300) {
      auto trace = std::move(out.criterion_trace);
      out = before;
      out.criterion_trace = std::move(trace);
      out.sweeps = sweep;
      out.descent_violated = true;
      break;
    }
    out.criterion_trace.push_back(current);
    const double decrease = previous - current;
    previous = current;
    if (decrease <= config.tolerance * std::abs(current) || current == 0.0) {
      out.converged = true;
      break;
    }
  }

  // Final unit normalization (the initial iterate may not be normalized).
  h = B * out.alpha;
  const double norm = h.norm();
  if (!(norm > 0.0)) throw NumericalError("fit_component: degenerate component (direction vanished)");
  out.alpha /= norm;
  out.beta *= norm;
  return out;
}

FpcaModel fit_mm(const LongitudinalDataset& data, const MmConfig& config, MmDiagnostics* diagnostics) {
  config.validate();
  const Index n = data.cases();
  const Index p = data.points();
  const SplineBasis basis = make_basis(data.grid(), config.knot_divisor);
  const Index m = basis.size();
  const int max_q = config.q > 0 ? config.q : static_cast<int>(std::min<Index>(m, p));
  if (max_q > m)
    throw DomainError("fit_mm: requested " + std::to_string(max_q) + " components but the basis has only " +
                      std::to_string(m) + " functions");
  if (max_q > n) throw DomainError("fit_mm: more components than cases");

  const Criterion crit = config.criterion();
  const Mask& mask = data.mask();
  const LocationScale ls = local_location_scale(data, config.smoother);

  MatrixXd y = data.values();
  for (Index j = 0; j < p; ++j) y.col(j).array() -= ls.mu[j];

  FpcaModel model;
  model.estimator = "mm";
  model.grid = data.grid();
  model.basis = basis;
  model.case_ids = data.case_ids();
  model.mu = ls.mu;
  model.sigma_stages.push_back(ls.sigma);
  model.variance_trace.push_back(unexplained_variance(y, mask, ls.sigma, crit));
  const double v0 = model.variance_trace.front();

  MatrixXd alpha(0, m), directions(p, 0), scores(n, 0);
  VectorXd sigma = ls.sigma;

  for (int k = 0; k < max_q; ++k) {
    const InitialDirection init =
        init_direction(y, mask, basis, config.overlap_threshold, config.covariance_span);
    const VectorXd beta0 = init_scores(y, mask, init.direction);
    ComponentFit comp = fit_component(y, mask, sigma, basis, init.alpha, beta0, config);

    // mu + beta h is unchanged by (mu + a h, beta - a), so the criterion cannot
    // pin a. Center the scores (median, or mean for the squared loss) and move
    // the offset into mu; this keeps mu and the scores shift equivariant.
    {
      const VectorXd h_raw = basis.matrix() * comp.alpha;
      const double offset = config.loss == Loss::squared
                                ? comp.beta.mean()
                                : robust::median(std::span<const double>(comp.beta.data(), static_cast<std::size_t>(n)));
      comp.beta.array() -= offset;
      comp.mu_update += offset * h_raw;
    }

    // Residuals use the component as fitted; orthogonalization below keeps
    // the fitted values unchanged by folding projections into earlier scores.
    const VectorXd h_fit = basis.matrix() * comp.alpha;
    for (Index j = 0; j < p; ++j)
      for (Index i = 0; i < n; ++i)
        if (mask(i, j)) y(i, j) -= comp.mu_update[j] + comp.beta[i] * h_fit[j];
    model.mu += comp.mu_update;

    VectorXd h = h_fit;
    VectorXd a = comp.alpha;
    VectorXd beta = comp.beta;
    for (Index l = 0; l < directions.cols(); ++l) {
      const double c = directions.col(l).dot(h);
      h -= c * directions.col(l);
      a -= c * alpha.row(l).transpose();
      scores.col(l) += c * beta;
    }
    const double norm = h.norm();
    if (!(norm > 1e-12)) throw NumericalError("fit_mm: component lies in the span of earlier ones");
    a /= norm;
    beta *= norm;

    alpha.conservativeResize(k + 1, m);
    alpha.row(k) = a.transpose();
    directions.conservativeResize(p, k + 1);
    directions.col(k) = basis.matrix() * a;
    scores.conservativeResize(n, k + 1);
    scores.col(k) = beta;

    sigma = residual_scales(y, mask, data.grid(), config.smoother);
    model.sigma_stages.push_back(sigma);
    model.variance_trace.push_back(unexplained_variance(y, mask, sigma, crit));

    if (diagnostics) {
      diagnostics->initial_directions.push_back(init);
      diagnostics->components.push_back(std::move(comp));
    }
    if (config.target_explained && explained_proportion(v0, model.variance_trace.back()) >= *config.target_explained)
      break;
  }

  model.alpha = alpha;
  model.directions = directions;
  model.scores = scores;
  model.explained = explained_proportion(v0, model.variance_trace.back());
  if (diagnostics) diagnostics->scores_before_adjustment = scores;
  if (config.final_adjustment) model = final_adjustment(std::move(model), data, config.final_tuning, config.loss);
  return model;
}

FpcaModel final_adjustment(FpcaModel model, const LongitudinalDataset& data, double c, Loss loss) {
  const Index q = model.components();
  if (q < 1) throw DomainError("final_adjustment: model has no components");
  if (data.cases() != model.scores.rows() || data.points() != model.points())
    throw DomainError("final_adjustment: model and data shapes differ");
  model.flagged_cases.clear();
  const auto sets = index_sets(data);
  for (Index i = 0; i < data.cases(); ++i) {
    const auto& ji = sets.by_case[static_cast<std::size_t>(i)];
    if (static_cast<Index>(ji.size()) < q) {
      model.flagged_cases.push_back(static_cast<int>(i));
      continue;
    }
    MatrixXd v(static_cast<Index>(ji.size()), q);
    VectorXd z(static_cast<Index>(ji.size()));
    for (std::size_t r = 0; r < ji.size(); ++r) {
      v.row(static_cast<Index>(r)) = model.directions.row(ji[r]);
      z[static_cast<Index>(r)] = data.values()(i, ji[r]) - model.mu[ji[r]];
    }
    try {
      if (loss == Loss::squared) {
        Eigen::ColPivHouseholderQR<MatrixXd> qr(v);
        if (qr.rank() < q) throw NumericalError("final_adjustment: rank-deficient design");
        model.scores.row(i) = qr.solve(z).transpose();
      } else {
        const VectorXd start = robust::l1_regression(v, z);
        model.scores.row(i) = robust::bisquare_regression_m(v, z, c, start).coefficients.transpose();
      }
    } catch (const NumericalError&) {
      model.flagged_cases.push_back(static_cast<int>(i));
    }
  }
  return model;
}

}  // namespace rfpca::mm
