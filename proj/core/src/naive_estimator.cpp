#include "rfpca/naive_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rfpca/error.hpp"
#include "rfpca/robust.hpp"

namespace rfpca::naive {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Top-q eigenvectors of a symmetric matrix, largest first, sign fixed so the
// largest-magnitude entry is positive.
MatrixXd top_eigenvectors(const MatrixXd& s, int q) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const Index p = s.rows();
  MatrixXd out(p, q);
  for (int k = 0; k < q; ++k) {
    VectorXd e = eig.eigenvectors().col(p - 1 - k);
    Index arg = 0;
    e.cwiseAbs().maxCoeff(&arg);
    if (e[arg] < 0.0) e = -e;
    out.col(k) = e;
  }
  return out;
}

int q_of(const MatrixXd& v) { return static_cast<int>(v.cols()); }

VectorXd residual_norms(const MatrixXd& x, const VectorXd& center, const MatrixXd& v) {
  MatrixXd c = x.rowwise() - center.transpose();
  if (v.cols() > 0) c -= (c * v) * v.transpose();
  return c.rowwise().norm();
}

double norm_scale(const VectorXd& r) {
  const auto s = robust::m_scale(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())), 0.5,
                                 robust::kScaleTuning);
  return s.degenerate ? 0.0 : s.value;
}

void require_complete(const LongitudinalDataset& data, const char* who) {
  if (!data.is_complete())
    throw IncompatibleError(std::string(who) +
                            " requires complete data; use the MM estimator for incomplete data");
}

}  // namespace

CleanedMatrix clean_rows(const MatrixXd& x, std::span<const double> grid, double c, const LoessConfig& smoother) {
  if (static_cast<std::size_t>(x.cols()) != grid.size()) throw DomainError("clean_rows: grid size != columns");
  if (!x.allFinite()) throw DomainError("clean_rows: requires complete data");
  const robust::Bisquare psi(c);
  const Index n = x.rows(), p = x.cols();
  CleanedMatrix out{x, MatrixXd(n, p), VectorXd(n)};
  std::vector<double> row(static_cast<std::size_t>(p));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) row[static_cast<std::size_t>(j)] = x(i, j);
    const VectorXd center = robust_loess_1d(grid, row, smoother);
    out.row_center.row(i) = center.transpose();
    const VectorXd r = x.row(i).transpose() - center;
    const auto tau = robust::tau_scale(std::span<const double>(r.data(), static_cast<std::size_t>(p)));
    // Scales at roundoff level mean the smoother already reproduces the row.
    const double floor = 1e-12 * std::max(1.0, x.row(i).cwiseAbs().maxCoeff());
    const double s = tau.degenerate || tau.value <= floor ? 0.0 : tau.value;
    out.row_scale[i] = s;
    if (s == 0.0) continue;
    for (Index j = 0; j < p; ++j) out.values(i, j) = center[j] + s * psi.psi(r[j] / s);
  }
  return out;
}

namespace {

struct Refined {
  SmPcaResult result;
  double scale = 0.0;
};

// IRLS on the residual norms from one starting fit; keeps the lowest-scale iterate.
Refined refine(const MatrixXd& x, VectorXd center, MatrixXd v, int max_iterations, double tolerance) {
  const Index n = x.rows();
  const robust::Bisquare family(robust::kScaleTuning);
  Refined out;
  out.result.center = center;
  out.result.directions = v;
  out.scale = std::numeric_limits<double>::infinity();
  double previous = std::numeric_limits<double>::quiet_NaN();
  VectorXd w(n);
  for (int it = 0; it <= max_iterations; ++it) {
    const VectorXd r = residual_norms(x, center, v);
    const double s = norm_scale(r);
    out.result.scale_trace.push_back(s);
    if (s < out.scale) {
      out.scale = s;
      out.result.center = center;
      out.result.directions = v;
    }
    out.result.iterations = it;
    if (s == 0.0 || (it > 0 && std::abs(previous - s) <= tolerance * previous)) {
      out.result.converged = true;
      break;
    }
    if (it == max_iterations) break;
    previous = s;
    for (Index i = 0; i < n; ++i) w[i] = family.weight(r[i] / s);
    const double total = w.sum();
    if (!(total > 0.0)) throw NumericalError("sm_robust_pca: all weights vanished");
    center = (x.transpose() * w) / total;
    const MatrixXd c = x.rowwise() - center.transpose();
    const MatrixXd cw = c.array().colwise() * w.array().sqrt();
    v = top_eigenvectors(cw.transpose() * cw / total, q_of(v));
  }
  return out;
}

// Spatial median by Weiszfeld iterations from the coordinatewise median.
VectorXd spatial_median(const MatrixXd& x) {
  const Index n = x.rows(), p = x.cols();
  VectorXd m(p);
  std::vector<double> col(static_cast<std::size_t>(n));
  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = x(i, j);
    m[j] = robust::median(col);
  }
  for (int it = 0; it < 200; ++it) {
    VectorXd num = VectorXd::Zero(p);
    double den = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double d = (x.row(i).transpose() - m).norm();
      if (d < 1e-12) continue;
      num += x.row(i).transpose() / d;
      den += 1.0 / d;
    }
    if (!(den > 0.0)) break;
    const VectorXd next = num / den;
    const double step = (next - m).norm();
    m = next;
    if (step <= 1e-10 * (1.0 + m.norm())) break;
  }
  return m;
}

}  // namespace

SmPcaResult sm_robust_pca(const MatrixXd& x, int q, int max_iterations, double tolerance) {
  const Index n = x.rows(), p = x.cols();
  if (q < 1 || q > p) throw DomainError("sm_robust_pca: q must lie in [1, p]");
  if (n <= q) throw DomainError("sm_robust_pca: need more cases than components");

  // Start 1: classical PCA.
  const VectorXd mean = x.colwise().mean().transpose();
  const MatrixXd centered = x.rowwise() - mean.transpose();
  Refined best = refine(x, mean, top_eigenvectors(centered.transpose() * centered / static_cast<double>(n), q),
                        max_iterations, tolerance);

  // Start 2: spherical PCA about the spatial median, which a minority of
  // outlying curves cannot dominate.
  if (best.scale > 0.0) {
    const VectorXd m = spatial_median(x);
    MatrixXd s = x.rowwise() - m.transpose();
    for (Index i = 0; i < n; ++i) {
      const double norm = s.row(i).norm();
      if (norm > 0.0) s.row(i) /= norm;
    }
    Refined alt = refine(x, m, top_eigenvectors(s.transpose() * s / static_cast<double>(n), q), max_iterations,
                         tolerance);
    if (alt.scale < best.scale) best = std::move(alt);
  }

  SmPcaResult out = std::move(best.result);
  const double s0 = norm_scale(residual_norms(x, out.center, MatrixXd(p, 0)));
  out.unexplained_ratio = s0 > 0.0 ? best.scale / s0 : 0.0;
  out.scores = (x.rowwise() - out.center.transpose()) * out.directions;
  return out;
}

FpcaModel fit_naive(const LongitudinalDataset& data, const NaiveConfig& config) {
  require_complete(data, "fit_naive");
  const Index n = data.cases(), p = data.points();
  const int q = config.q;
  if (q < 1 || q > std::min(n, p)) throw DomainError("fit_naive: q must lie in [1, min(n, p)]");

  const CleanedMatrix cleaned = clean_rows(data.values(), data.grid(), config.cleaning_tuning, config.smoother);
  const SmPcaResult sm = sm_robust_pca(cleaned.values, q);

  std::vector<VectorXd> raw;
  for (int k = 0; k < q; ++k) raw.emplace_back(sm.directions.col(k));
  const std::vector<int> candidates =
      config.knot_candidates.empty() ? default_knot_candidates(static_cast<std::size_t>(p)) : config.knot_candidates;
  const int knots = gcv_knot_count(data.grid(), raw, candidates);
  const SplineBasis basis = SplineBasis::with_interior_knots(data.grid(), knots);
  const Index m = basis.size();
  if (q > m) throw DomainError("fit_naive: more components than basis functions");

  MatrixXd alpha(q, m), directions(p, q);
  for (int k = 0; k < q; ++k) {
    const BasisFit fit = smooth_with_basis(basis, raw[static_cast<std::size_t>(k)]);
    VectorXd h = fit.smoothed;
    VectorXd a = fit.coefficients;
    for (int l = 0; l < k; ++l) {
      const double c = directions.col(l).dot(h);
      h -= c * directions.col(l);
      a -= c * alpha.row(l).transpose();
    }
    const double norm = h.norm();
    if (!(norm > 1e-12)) throw NumericalError("fit_naive: smoothed directions are linearly dependent");
    alpha.row(k) = (a / norm).transpose();
    directions.col(k) = basis.matrix() * alpha.row(k).transpose();
  }

  FpcaModel model;
  model.estimator = "naive";
  model.grid = data.grid();
  model.mu = sm.center;
  model.basis = basis;
  model.alpha = alpha;
  model.directions = directions;
  model.case_ids = data.case_ids();
  model.scores.resize(n, q);
  for (Index i = 0; i < n; ++i) {
    const VectorXd z = data.values().row(i).transpose() - model.mu;
    const VectorXd start = robust::l1_regression(directions, z);
    model.scores.row(i) = robust::bisquare_regression_m(directions, z, config.score_tuning, start)
                              .coefficients.transpose();
  }
  model.variance_trace = {1.0, sm.unexplained_ratio};
  model.explained = std::clamp(1.0 - sm.unexplained_ratio, 0.0, 1.0);
  return model;
}

FpcaModel classical_pca(const MatrixXd& x, std::vector<double> grid, int q) {
  const Index n = x.rows(), p = x.cols();
  if (q < 1 || q > std::min(n, p)) throw DomainError("classical PCA: q must lie in [1, min(n, p)]");
  FpcaModel model;
  model.estimator = "classical";
  model.grid = std::move(grid);
  model.mu = x.colwise().mean().transpose();
  const MatrixXd c = x.rowwise() - model.mu.transpose();
  const MatrixXd cov = c.transpose() * c / static_cast<double>(n);
  model.directions = top_eigenvectors(cov, q);
  model.alpha = MatrixXd(0, 0);
  model.scores = c * model.directions;
  const double total = cov.trace();
  const double kept = (model.directions.transpose() * cov * model.directions).trace();
  model.variance_trace = {total, std::max(total - kept, 0.0)};
  model.explained = total > 0.0 ? std::clamp(kept / total, 0.0, 1.0) : 1.0;
  return model;
}

FpcaModel fit_classical(const LongitudinalDataset& data, int q) {
  require_complete(data, "fit_classical");
  FpcaModel model = classical_pca(data.values(), data.grid(), q);
  model.case_ids = data.case_ids();
  return model;
}

}  // namespace rfpca::naive
