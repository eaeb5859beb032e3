#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rfpca/error.hpp"
#include "rfpca/robust.hpp"

using namespace rfpca;

namespace {

std::vector<double> normal_sample(std::size_t n, std::mt19937_64& rng, double mean = 0.0, double sd = 1.0) {
  std::normal_distribution<double> z(mean, sd);
  std::vector<double> v(n);
  for (double& x : v) x = z(rng);
  return v;
}

}  // namespace

TEST(Bisquare, MatchesClosedForm) {
  const robust::Bisquare b(2.0);
  for (double t : {-3.0, -2.0, -1.3, -0.2, 0.0, 0.7, 1.99, 2.0, 5.0}) {
    const double u = t / 2.0;
    const double w = std::abs(u) < 1 ? (1 - u * u) * (1 - u * u) : 0.0;
    EXPECT_NEAR(b.rho(t), oracle::bisquare_rho(t, 2.0), 1e-15);
    EXPECT_NEAR(b.weight(t), w, 1e-15);
    EXPECT_NEAR(b.psi(t), t * w, 1e-15);
    EXPECT_LE(b.rho(t), 1.0);
  }
  EXPECT_EQ(b.weight(0.0), 1.0);
}

TEST(Bisquare, PsiIsScaledDerivativeOfRho) {
  const double c = 3.0;
  const robust::Bisquare b(c);
  for (double t = -2.9; t < 2.9; t += 0.37) {
    const double h = 1e-6;
    const double drho = (b.rho(t + h) - b.rho(t - h)) / (2 * h);
    EXPECT_NEAR(b.psi(t), c * c / 6.0 * drho, 1e-7);
  }
}

TEST(Bisquare, RejectsBadInput) {
  EXPECT_THROW(robust::bisquare(std::nan(""), 1.0), DomainError);
  EXPECT_THROW(robust::bisquare(1.0, 0.0), DomainError);
  EXPECT_THROW(robust::Bisquare(-1.0), DomainError);
}

TEST(Median, IgnoresNonFinite) {
  const std::vector<double> v{3.0, NAN, 1.0, 2.0, INFINITY};
  EXPECT_DOUBLE_EQ(robust::median(v), 2.0);
  EXPECT_THROW(robust::median(std::vector<double>{NAN}), DomainError);
}

TEST(Mad, MatchesDefinition) {
  std::mt19937_64 rng(1);
  const auto v = normal_sample(31, rng);
  std::vector<double> dev;
  for (double x : v) dev.push_back(std::abs(x - 0.3));
  EXPECT_NEAR(robust::mad(v, 0.3), 1.4826 * oracle::median(dev), 1e-14);
}

TEST(MLocation, SolvesEstimatingEquation) {
  std::mt19937_64 rng(2);
  auto v = normal_sample(60, rng, 5.0, 2.0);
  v[0] = 1e3;
  v[1] = -400.0;
  const double mu = robust::m_location(v);
  const double s = robust::mad(v, robust::median(v));
  const robust::Bisquare b(robust::kLocationTuning);
  double acc = 0.0;
  for (double x : v) acc += b.psi((x - mu) / s);
  EXPECT_NEAR(acc, 0.0, 1e-8);
  EXPECT_NEAR(mu, 5.0, 1.0);
}

TEST(MLocation, ConstantSampleReturnsMedian) {
  const std::vector<double> v{2.0, 2.0, 2.0, 2.0, 9.0};
  EXPECT_DOUBLE_EQ(robust::m_location(v), 2.0);
}

TEST(MScale, MatchesBisectionOracle) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    auto v = normal_sample(15 + rep * 5, rng, 0.0, 0.5 + rep);
    const double s = robust::m_scale(v).value;
    EXPECT_NEAR(s, oracle::m_scale(v, 0.5, robust::kScaleTuning), 1e-9 * s);
  }
}

TEST(MScale, ConsistentAtTheNormal) {
  std::mt19937_64 rng(4);
  const auto v = normal_sample(200000, rng);
  EXPECT_NEAR(robust::m_scale(v).value, 1.0, 0.01);
}

TEST(MScale, DegenerateWhenHalfAreZero) {
  const std::vector<double> v{0, 0, 0, 1, 2, 0};
  const auto r = robust::m_scale(v);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.value, 0.0);
}

TEST(TauScale, MatchesOracleComposition) {
  std::mt19937_64 rng(5);
  auto v = normal_sample(80, rng, 3.0, 1.5);
  const double mu = robust::m_location(v);
  std::vector<double> centered;
  for (double x : v) centered.push_back(x - mu);
  const double s0 = oracle::m_scale(centered, 0.5, robust::kScaleTuning);
  double acc = 0.0;
  for (double x : centered) acc += oracle::bisquare_rho(x / s0, robust::kTauTuning);
  acc /= static_cast<double>(centered.size());
  const double expected = s0 * std::sqrt(acc * robust::tau_consistency());
  EXPECT_NEAR(robust::tau_scale(v).value, expected, 1e-9 * expected);
}

TEST(TauScale, ConsistencyConstantIntegratesCorrectly) {
  // Monte Carlo estimate of E rho_2(Z).
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z;
  double acc = 0.0;
  const int n = 2000000;
  for (int i = 0; i < n; ++i) acc += oracle::bisquare_rho(z(rng), robust::kTauTuning);
  EXPECT_NEAR(1.0 / robust::tau_consistency(), acc / n, 5e-4);
}

TEST(TauScale, TranslationInvariantAndScaleEquivariant) {
  std::mt19937_64 rng(7);
  const auto v = normal_sample(50, rng);
  std::vector<double> shifted, scaled;
  for (double x : v) {
    shifted.push_back(x + 100.0);
    scaled.push_back(-3.0 * x);
  }
  const double t = robust::tau_scale(v).value;
  EXPECT_NEAR(robust::tau_scale(shifted).value, t, 1e-9);
  EXPECT_NEAR(robust::tau_scale(scaled).value, 3.0 * t, 1e-9);
}

TEST(Qn, RawMatchesBruteForceExactly) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> size(2, 50);
  for (int rep = 0; rep < 200; ++rep) {
    auto v = normal_sample(static_cast<std::size_t>(size(rng)), rng);
    if (rep % 5 == 0)
      for (double& x : v) x = std::round(x * 2.0);  // ties
    EXPECT_EQ(robust::qn_raw(v), oracle::qn_raw(v)) << "rep " << rep;
  }
}

TEST(Qn, ScaleAppliesConstantAndCorrection) {
  std::mt19937_64 rng(9);
  for (std::size_t n : {5u, 8u, 10u, 11u, 40u}) {
    const auto v = normal_sample(n, rng);
    EXPECT_DOUBLE_EQ(robust::qn_scale(v).value, oracle::qn_raw(v) * 2.2219 * robust::qn_correction(n));
  }
  EXPECT_DOUBLE_EQ(robust::qn_correction(11), 11.0 / 12.4);
  EXPECT_DOUBLE_EQ(robust::qn_correction(10), 10.0 / 13.8);
}

TEST(Qn, ConsistentAtTheNormal) {
  std::mt19937_64 rng(10);
  const auto v = normal_sample(20000, rng, 0.0, 2.0);
  EXPECT_NEAR(robust::qn_scale(v).value, 2.0, 0.05);
}

TEST(GkCovariance, MatchesDefinitionWithBruteQn) {
  std::mt19937_64 rng(11);
  const auto x = normal_sample(30, rng);
  auto y = normal_sample(30, rng);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += 0.7 * x[i];
  std::vector<double> s, d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s.push_back(x[i] + y[i]);
    d.push_back(x[i] - y[i]);
  }
  const double c = robust::qn_correction(30) * 2.2219;
  const double sp = oracle::qn_raw(s) * c, sm = oracle::qn_raw(d) * c;
  EXPECT_NEAR(*robust::gk_covariance(x, y), 0.25 * (sp * sp - sm * sm), 1e-12);
}

TEST(GkCovariance, NeedsThreePairsAndSkipsMissing) {
  const std::vector<double> x{1.0, NAN, 2.0, 4.0}, y{1.0, 5.0, NAN, 3.0};
  EXPECT_FALSE(robust::gk_covariance(x, y).has_value());
}

TEST(WeightedMedian, MatchesBruteObjective) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> w(0.0, 2.0);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 1 + rep % 17;
    const auto v = normal_sample(n, rng);
    std::vector<double> ws(n);
    for (double& x : ws) x = rep % 4 == 0 ? 1.0 : w(rng);
    EXPECT_NEAR(robust::weighted_median(v, ws), oracle::weighted_median(v, ws), 1e-12) << rep;
  }
}

TEST(L1Regression, SingleColumnIsWeightedMedianOfRatios) {
  std::mt19937_64 rng(13);
  Eigen::MatrixXd x = oracle::gaussian_matrix(25, 1, rng);
  Eigen::VectorXd y = 2.0 * x.col(0) + 0.3 * oracle::gaussian_matrix(25, 1, rng).col(0);
  std::vector<double> ratios, weights;
  for (int i = 0; i < 25; ++i) {
    ratios.push_back(y[i] / x(i, 0));
    weights.push_back(std::abs(x(i, 0)));
  }
  EXPECT_NEAR(robust::l1_regression(x, y)[0], oracle::weighted_median(ratios, weights), 1e-12);
}

TEST(L1Regression, TwoColumnsMatchesExhaustiveBasicSolutions) {
  // An L1 optimum interpolates at least two observations for a two-column design.
  std::mt19937_64 rng(14);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 15;
    const Eigen::MatrixXd x = oracle::gaussian_matrix(n, 2, rng);
    Eigen::VectorXd y = x * Eigen::Vector2d(1.0, -0.5) + 0.2 * oracle::gaussian_matrix(n, 1, rng).col(0);
    y[0] += 10.0;
    auto obj = [&](const Eigen::VectorXd& b) { return (y - x * b).cwiseAbs().sum(); };
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        Eigen::Matrix2d a;
        a << x.row(i), x.row(j);
        if (std::abs(a.determinant()) < 1e-10) continue;
        best = std::min(best, obj(a.inverse() * Eigen::Vector2d(y[i], y[j])));
      }
    EXPECT_NEAR(obj(robust::l1_regression(x, y)), best, 1e-6 * best) << rep;
  }
}

TEST(L1Regression, RankDeficientThrows) {
  Eigen::MatrixXd x(4, 2);
  x << 1, 2, 2, 4, 3, 6, 4, 8;
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(4, 0, 1);
  EXPECT_THROW(robust::l1_regression(x, y), NumericalError);
}

TEST(BisquareRegression, ObjectiveDescendsAndResistsOutliers) {
  std::mt19937_64 rng(15);
  const int n = 40;
  const Eigen::MatrixXd x = oracle::gaussian_matrix(n, 2, rng);
  Eigen::VectorXd y = x * Eigen::Vector2d(3.0, 1.0) + 0.1 * oracle::gaussian_matrix(n, 1, rng).col(0);
  for (int i = 0; i < 6; ++i) y[i] += 50.0;
  const auto fit = robust::bisquare_regression_m(x, y);
  for (std::size_t k = 1; k < fit.objective_trace.size(); ++k)
    EXPECT_LE(fit.objective_trace[k], fit.objective_trace[k - 1] * (1 + 1e-12));
  EXPECT_NEAR(fit.coefficients[0], 3.0, 0.1);
  EXPECT_NEAR(fit.coefficients[1], 1.0, 0.1);
}

TEST(BisquareRegression, CloseToLeastSquaresOnCleanData) {
  std::mt19937_64 rng(16);
  const int n = 400;
  const Eigen::MatrixXd x = oracle::gaussian_matrix(n, 2, rng);
  const Eigen::VectorXd y = x * Eigen::Vector2d(-1.0, 2.0) + oracle::gaussian_matrix(n, 1, rng).col(0);
  const Eigen::VectorXd ls = (x.transpose() * x).ldlt().solve(x.transpose() * y);
  const auto fit = robust::bisquare_regression_m(x, y);
  EXPECT_LT((fit.coefficients - ls).norm(), 0.05);
}

TEST(BisquareRegression, ExactFitFallsBackCleanly) {
  Eigen::MatrixXd x(5, 1);
  x << 1, 2, 3, 4, 5;
  const Eigen::VectorXd y = 2.0 * x.col(0);
  const auto fit = robust::bisquare_regression_m(x, y);
  EXPECT_NEAR(fit.coefficients[0], 2.0, 1e-12);
}
