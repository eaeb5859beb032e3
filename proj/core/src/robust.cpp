#include "rfpca/robust.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <sstream>

#include "rfpca/error.hpp"

namespace rfpca::robust {

namespace {

std::vector<double> finite_values(std::span<const double> xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs)
    if (std::isfinite(x)) out.push_back(x);
  return out;
}

// Median of a scratch vector (reordered in place).
double median_inplace(std::vector<double>& v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (n % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

// Weighted high median used by the Qn selection step.
double weighted_high_median(std::vector<std::pair<double, std::int64_t>>& items) {
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::int64_t total = 0;
  for (const auto& it : items) total += it.second;
  std::int64_t cum = 0;
  for (const auto& it : items) {
    cum += it.second;
    if (2 * cum > total) return it.first;
  }
  return items.back().first;
}

}  // namespace

Bisquare::Bisquare(double c) : c_(c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("bisquare tuning constant must be > 0");
}

double Bisquare::rho(double t) const noexcept {
  const double u = t / c_;
  if (std::abs(u) >= 1.0) return 1.0;
  const double v = 1.0 - u * u;
  return 1.0 - v * v * v;
}

double Bisquare::psi(double t) const noexcept {
  const double u = t / c_;
  if (std::abs(u) >= 1.0) return 0.0;
  const double v = 1.0 - u * u;
  return t * v * v;
}

double Bisquare::weight(double t) const noexcept {
  const double u = t / c_;
  if (std::abs(u) >= 1.0) return 0.0;
  const double v = 1.0 - u * u;
  return v * v;
}

BisquareValue bisquare(double t, double c) {
  if (!std::isfinite(t)) throw DomainError("bisquare: argument must be finite");
  const Bisquare b(c);
  return {b.rho(t), b.psi(t), b.weight(t)};
}

double median(std::span<const double> xs) {
  auto v = finite_values(xs);
  if (v.empty()) throw DomainError("median of an empty sample");
  return median_inplace(v);
}

double mad(std::span<const double> xs, double center) {
  std::vector<double> dev;
  dev.reserve(xs.size());
  for (double x : xs)
    if (std::isfinite(x)) dev.push_back(std::abs(x - center));
  if (dev.empty()) throw DomainError("MAD of an empty sample");
  return kMadConsistency * median_inplace(dev);
}

double m_location(std::span<const double> xs, double c) {
  const auto v = finite_values(xs);
  if (v.empty()) throw DomainError("m_location: empty sample");
  double m = median(v);
  const double s = mad(v, m);
  if (s == 0.0) return m;
  const Bisquare family(c);
  for (int it = 0; it < 200; ++it) {
    double sw = 0.0, swx = 0.0;
    for (double x : v) {
      const double w = family.weight((x - m) / s);
      sw += w;
      swx += w * x;
    }
    if (sw <= 0.0) break;
    const double next = swx / sw;
    const bool done = std::abs(next - m) <= 1e-13 * s;
    m = next;
    if (done) break;
  }
  return m;
}

RobustScaleResult m_scale(std::span<const double> xs, double delta, double c) {
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("m_scale: delta must lie in (0,1)");
  const auto v = finite_values(xs);
  RobustScaleResult out;
  out.n_used = v.size();
  if (v.size() < 2) throw DomainError("m_scale: at least two finite values required");

  const double n = static_cast<double>(v.size());
  const std::size_t nonzero = std::count_if(v.begin(), v.end(), [](double x) { return x != 0.0; });
  // mean rho(x/s) tends to the nonzero fraction as s -> 0, so no positive root exists below it.
  if (static_cast<double>(nonzero) <= delta * n) {
    out.degenerate = true;
    return out;
  }

  std::vector<double> absv(v.size());
  std::transform(v.begin(), v.end(), absv.begin(), [](double x) { return std::abs(x); });
  double s = median(absv) / 0.6745;
  if (s <= 0.0) s = *std::max_element(absv.begin(), absv.end());

  const Bisquare family(c);
  auto mean_rho = [&](double scale) {
    double acc = 0.0;
    for (double a : absv) acc += family.rho(a / scale);
    return acc / n;
  };
  for (int it = 0; it < 500; ++it) {
    const double next = s * std::sqrt(mean_rho(s) / delta);
    const bool done = std::abs(next - s) <= 1e-14 * s;
    s = next;
    if (done) break;
  }
  out.value = s;
  return out;
}

double tau_consistency() {
  static const double kappa = [] {
    // E[rho_2(Z)] by composite Simpson on [-c, c]; rho_2 = 1 outside.
    const Bisquare family(kTauTuning);
    const double c = kTauTuning;
    const int intervals = 20000;
    const double h = 2.0 * c / intervals;
    auto f = [&](double z) {
      return family.rho(z) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    };
    double acc = f(-c) + f(c);
    for (int i = 1; i < intervals; ++i) acc += f(-c + i * h) * (i % 2 ? 4.0 : 2.0);
    const double inside = acc * h / 3.0;
    const double tails = std::erfc(c / std::sqrt(2.0));
    return 1.0 / (inside + tails);
  }();
  return kappa;
}

RobustScaleResult tau_scale(std::span<const double> xs) {
  auto v = finite_values(xs);
  if (v.size() < 2) throw DomainError("tau_scale: at least two finite values required");
  const double center = m_location(v);
  for (double& x : v) x -= center;
  RobustScaleResult sm = m_scale(v, 0.5, kScaleTuning);
  if (sm.degenerate || sm.value == 0.0) return sm;
  const Bisquare family(kTauTuning);
  double acc = 0.0;
  for (double x : v) acc += family.rho(x / sm.value);
  acc /= static_cast<double>(v.size());
  RobustScaleResult out;
  out.n_used = v.size();
  out.value = sm.value * std::sqrt(acc * tau_consistency());
  out.degenerate = out.value == 0.0;
  return out;
}

double qn_raw(std::span<const double> xs) {
  auto sorted = finite_values(xs);
  const std::int64_t n = static_cast<std::int64_t>(sorted.size());
  if (n < 2) throw DomainError("qn: at least two finite values required");
  std::sort(sorted.begin(), sorted.end());
  // 1-based view of the sorted sample.
  auto y = [&](std::int64_t i) { return sorted[static_cast<std::size_t>(i - 1)]; };

  const std::int64_t h = n / 2 + 1;
  const std::int64_t k = h * (h - 1) / 2;

  // Implicit matrix A(i, jj) = y(i) - y(n - jj + 1), increasing in both indices.
  // Row i holds the positive pairwise differences in columns left(i)..right(i).
  std::vector<std::int64_t> left(n + 1), right(n + 1), p_cnt(n + 1), q_cnt(n + 1);
  for (std::int64_t i = 1; i <= n; ++i) {
    left[i] = n - i + 2;
    right[i] = n;
  }
  const std::int64_t knew = k + n * (n + 1) / 2;
  std::int64_t nl = n * (n + 1) / 2;
  std::int64_t nr = n * n;

  std::vector<std::pair<double, std::int64_t>> candidates;
  candidates.reserve(n);
  int guard = 0;
  while (nr - nl > n && guard++ < 200) {
    candidates.clear();
    for (std::int64_t i = 2; i <= n; ++i) {
      if (left[i] <= right[i]) {
        const std::int64_t weight = right[i] - left[i] + 1;
        const std::int64_t jh = left[i] + weight / 2;
        candidates.emplace_back(y(i) - y(n + 1 - jh), weight);
      }
    }
    const double trial = weighted_high_median(candidates);

    std::int64_t j = 0;
    for (std::int64_t i = n; i >= 1; --i) {
      while (j < n && y(i) - y(n - j) < trial) ++j;
      p_cnt[i] = j;
    }
    j = n + 1;
    for (std::int64_t i = 1; i <= n; ++i) {
      while (y(i) - y(n - j + 2) > trial) --j;
      q_cnt[i] = j;
    }
    std::int64_t sum_p = 0, sum_q = 0;
    for (std::int64_t i = 1; i <= n; ++i) {
      sum_p += p_cnt[i];
      sum_q += q_cnt[i] - 1;
    }
    if (knew <= sum_p) {
      right = p_cnt;
      nr = sum_p;
    } else if (knew > sum_q) {
      left = q_cnt;
      nl = sum_q;
    } else {
      return trial;
    }
  }

  std::vector<double> work;
  work.reserve(static_cast<std::size_t>(std::max<std::int64_t>(nr - nl, 1)));
  for (std::int64_t i = 2; i <= n; ++i)
    for (std::int64_t jj = left[i]; jj <= right[i]; ++jj) work.push_back(y(i) - y(n - jj + 1));
  const std::int64_t rank = knew - nl;  // 1-based rank within the remaining band
  if (rank < 1 || rank > static_cast<std::int64_t>(work.size()))
    throw NumericalError("qn: selection band lost the target order statistic");
  std::nth_element(work.begin(), work.begin() + (rank - 1), work.end());
  return work[static_cast<std::size_t>(rank - 1)];
}

double qn_correction(std::size_t n) {
  switch (n) {
    case 2: return 0.399;
    case 3: return 0.994;
    case 4: return 0.512;
    case 5: return 0.844;
    case 6: return 0.611;
    case 7: return 0.857;
    case 8: return 0.669;
    case 9: return 0.872;
    default: break;
  }
  const double dn = static_cast<double>(n);
  return n % 2 == 1 ? dn / (dn + 1.4) : dn / (dn + 3.8);
}

RobustScaleResult qn_scale(std::span<const double> xs) {
  RobustScaleResult out;
  out.n_used = static_cast<std::size_t>(
      std::count_if(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); }));
  const double raw = qn_raw(xs);
  out.value = raw * kQnConsistency * qn_correction(out.n_used);
  out.degenerate = out.value == 0.0;
  return out;
}

double qn_dispersion(std::span<const double> xs) { return qn_scale(xs).value; }

std::optional<double> gk_covariance(std::span<const double> x, std::span<const double> y,
                                    const ScaleFunctional& scale) {
  if (x.size() != y.size()) throw DomainError("gk_covariance: samples differ in length");
  std::vector<double> sum, diff;
  sum.reserve(x.size());
  diff.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
    sum.push_back(x[i] + y[i]);
    diff.push_back(x[i] - y[i]);
  }
  if (sum.size() < 3) return std::nullopt;
  const double sp = scale(sum);
  const double sm = scale(diff);
  return 0.25 * (sp * sp - sm * sm);
}

double weighted_median(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size()) throw DomainError("weighted_median: size mismatch");
  std::vector<std::pair<double, double>> items;
  items.reserve(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (weights[i] > 0.0 && std::isfinite(values[i])) {
      items.emplace_back(values[i], weights[i]);
      total += weights[i];
    }
  }
  if (items.empty()) throw DomainError("weighted_median: no positive weights");
  std::sort(items.begin(), items.end());
  const double half = 0.5 * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    cum += items[i].second;
    if (cum >= half) {
      if (std::abs(cum - half) <= 1e-12 * total && i + 1 < items.size())
        return 0.5 * (items[i].first + items[i + 1].first);
      return items[i].first;
    }
  }
  return items.back().first;
}

namespace {

void require_full_rank(const Eigen::MatrixXd& design) {
  if (design.rows() < design.cols())
    throw NumericalError("regression: fewer observations than coefficients");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < design.cols()) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(design);
    Eigen::VectorXd null = lu.kernel().col(0);
    null.normalize();
    std::ostringstream msg;
    msg << "regression: rank-deficient design, null direction (";
    for (Eigen::Index i = 0; i < null.size(); ++i) msg << (i ? ", " : "") << null[i];
    msg << ")";
    throw NumericalError(msg.str());
  }
}

Eigen::VectorXd weighted_least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& w) {
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd a = sw.asDiagonal() * design;
  const Eigen::VectorXd b = sw.cwiseProduct(y);
  return a.colPivHouseholderQr().solve(b);
}

double rank_of_weighted(const Eigen::MatrixXd& design, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd a = w.cwiseSqrt().asDiagonal() * design;
  return static_cast<double>(Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(a).rank());
}

}  // namespace

Eigen::VectorXd l1_regression(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
  if (design.rows() != y.size()) throw DomainError("l1_regression: rows(design) != len(y)");
  require_full_rank(design);

  if (design.cols() == 1) {
    std::vector<double> ratios, weights;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double d = design(i, 0);
      if (d == 0.0) continue;
      ratios.push_back(y[i] / d);
      weights.push_back(std::abs(d));
    }
    Eigen::VectorXd b(1);
    b[0] = weighted_median(ratios, weights);
    return b;
  }

  const double floor = 1e-9 * std::max(y.cwiseAbs().mean(), 1e-300);
  Eigen::VectorXd b = design.colPivHouseholderQr().solve(y);
  for (int it = 0; it < 500; ++it) {
    const Eigen::VectorXd r = y - design * b;
    const Eigen::VectorXd w = r.cwiseAbs().cwiseMax(floor).cwiseInverse();
    const Eigen::VectorXd next = weighted_least_squares(design, y, w);
    const double change = (next - b).norm();
    b = next;
    if (change <= 1e-12 * (b.norm() + 1e-300)) break;
  }
  return b;
}

MRegressionResult bisquare_regression_m(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                        double c, const std::optional<Eigen::VectorXd>& init) {
  if (design.rows() != y.size())
    throw DomainError("bisquare_regression_m: rows(design) != len(y)");
  const Bisquare family(c);
  MRegressionResult out;
  out.coefficients = init ? *init : l1_regression(design, y);
  if (out.coefficients.size() != design.cols())
    throw DomainError("bisquare_regression_m: initial estimate has wrong length");

  Eigen::VectorXd r = y - design * out.coefficients;
  std::vector<double> absr(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) absr[i] = std::abs(r[i]);
  out.scale = absr.empty() ? 0.0 : kMadConsistency * median(absr);
  if (out.scale <= 0.0) {
    out.fell_back = r.cwiseAbs().maxCoeff() > 0.0;
    return out;
  }

  auto objective = [&](const Eigen::VectorXd& res) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < res.size(); ++i) acc += family.rho(res[i] / out.scale);
    return acc;
  };
  out.objective_trace.push_back(objective(r));

  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd w(r.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) w[i] = family.weight(r[i] / out.scale);
    if (rank_of_weighted(design, w) < design.cols()) break;
    const Eigen::VectorXd next = weighted_least_squares(design, y, w);
    const Eigen::VectorXd next_r = y - design * next;
    const double obj = objective(next_r);
    // IRLS descends for bisquare; guard against round-off reversals.
    if (obj > out.objective_trace.back() * (1.0 + 1e-12)) break;
    const double change = (next - out.coefficients).norm();
    const double size = out.coefficients.norm();
    out.coefficients = next;
    r = next_r;
    out.objective_trace.push_back(obj);
    out.iterations = it + 1;
    if (change <= 1e-8 * (size + 1e-300)) break;
  }
  return out;
}

}  // namespace rfpca::robust
