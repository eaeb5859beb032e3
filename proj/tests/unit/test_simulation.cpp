#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rfpca/error.hpp"
#include "rfpca/seeding.hpp"
#include "rfpca/simulation.hpp"

using namespace rfpca;

namespace {

Eigen::MatrixXd scenario_covariance(const sim::ScenarioConfig& sc, const sim::ScenarioFunctions& f) {
  Eigen::MatrixXd cov = sc.pi0 * Eigen::MatrixXd::Identity(sc.p, sc.p);
  for (int k = 0; k < sc.q; ++k)
    cov += sc.pi[static_cast<std::size_t>(k)] * sc.p * f.directions.col(k) * f.directions.col(k).transpose();
  return cov;
}

sim::MonteCarloConfig small_study() {
  sim::MonteCarloConfig c;
  c.scenario.p = 20;
  c.scenario.n = 30;
  c.scenario.replications = 2;
  c.decimation = {1.0, 0.6};
  c.settings = {{0.1, 0.0, {1.0, 3.0}}, {0.0, 0.05, {2.0}}};
  c.seed = 42;
  return c;
}

}  // namespace

TEST(Scenario, PresetsAreOrthonormalAndValid) {
  for (const char* name : {"lrs", "macs"}) {
    auto sc = sim::preset(name);
    const auto f = sim::evaluate_scenario(sc);
    const Eigen::MatrixXd g = f.directions.transpose() * f.directions;
    EXPECT_LT((g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(), 1e-12) << name;
    EXPECT_EQ(f.grid.front(), 0.0);
    EXPECT_EQ(f.grid.back(), 1.0);
    EXPECT_GT(f.directions.cols(), sc.q);
  }
  EXPECT_THROW(sim::preset("other"), DomainError);
}

TEST(Scenario, TopEigenvalueAndDiagonalMatchDenseCovariance) {
  for (const char* name : {"lrs", "macs"}) {
    const auto sc = sim::preset(name);
    const auto f = sim::evaluate_scenario(sc);
    const Eigen::MatrixXd cov = scenario_covariance(sc, f);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    EXPECT_NEAR(sim::top_eigenvalue(sc), eig.eigenvalues().maxCoeff(), 1e-10);
    EXPECT_LT((sim::variance_diagonal(sc, f) - cov.diagonal()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(eig.eigenvalues().minCoeff(), sc.pi0 - 1e-10);
  }
}

TEST(Scenario, SampleCovarianceApproachesModel) {
  auto sc = sim::lrs_like();
  sc.n = 20000;
  sc.p = 10;
  const auto f = sim::evaluate_scenario(sc);
  const auto s = sim::generate_sample(sc, f, 1);
  const Eigen::MatrixXd x = s.data.values();
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = c.transpose() * c / (sc.n - 1.0);
  const Eigen::MatrixXd ref = scenario_covariance(sc, f);
  EXPECT_LT((cov - ref).cwiseAbs().maxCoeff(), 0.05 * ref.cwiseAbs().maxCoeff());
  EXPECT_LT((x.colwise().mean().transpose() - f.mu).cwiseAbs().maxCoeff(), 0.1);
}

TEST(Scenario, SamplesAreSeedDeterministic) {
  const auto sc = sim::lrs_like();
  EXPECT_EQ(sim::generate_sample(sc, 3).data.values(), sim::generate_sample(sc, 3).data.values());
  EXPECT_NE(sim::generate_sample(sc, 3).data.values(), sim::generate_sample(sc, 4).data.values());
}

TEST(Contamination, CasewiseReplacesFirstRowsAlongNextDirection) {
  auto sc = sim::lrs_like();
  const auto f = sim::evaluate_scenario(sc);
  const auto s = sim::generate_sample(sc, f, 5);
  const auto out = sim::contaminate_case(s.data, {0.1, 0.0, 2.0}, sc, f);
  const double lambda = sim::top_eigenvalue(sc);
  EXPECT_EQ(out.clean_rows.size(), 90u);
  EXPECT_EQ(out.clean_rows.front(), 10);
  EXPECT_LT((out.direction - f.directions.col(sc.q)).norm(), 1e-15);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd expected = f.mu + 2.0 * std::sqrt(lambda) * out.direction;
    EXPECT_LT((out.data.values().row(i).transpose() - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_EQ(out.data.values().bottomRows(90), s.data.values().bottomRows(90));
}

TEST(Contamination, RandomOrthogonalDirection) {
  auto sc = sim::lrs_like();
  const auto f = sim::evaluate_scenario(sc);
  const auto s = sim::generate_sample(sc, f, 6);
  const auto out = sim::contaminate_case(s.data, {0.2, 0.0, 1.0, sim::CaseDirection::random_orthogonal}, sc, f, 9);
  EXPECT_NEAR(out.direction.norm(), 1.0, 1e-12);
  EXPECT_LT((f.directions.leftCols(sc.q).transpose() * out.direction).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Contamination, CellwiseShiftsAboutEpsOfCells) {
  auto sc = sim::lrs_like();
  sc.n = 400;
  const auto f = sim::evaluate_scenario(sc);
  const auto s = sim::generate_sample(sc, f, 7);
  const Eigen::VectorXd diag = sim::variance_diagonal(sc, f);
  const auto out = sim::contaminate_cell(s.data, {0.0, 0.05, 3.0}, diag, 8);
  std::size_t changed = 0;
  for (int i = 0; i < sc.n; ++i)
    for (int j = 0; j < sc.p; ++j) {
      const double delta = out.data.values()(i, j) - s.data.values()(i, j);
      if (delta != 0.0) {
        ++changed;
        EXPECT_NEAR(delta, 3.0 * diag[j], 1e-12);
      }
    }
  EXPECT_EQ(changed, out.contaminated);
  EXPECT_NEAR(static_cast<double>(changed) / (sc.n * sc.p), 0.05, 0.01);
}

TEST(Contamination, SpecValidation) {
  EXPECT_THROW((sim::ContaminationSpec{0.5, 0.0, 1.0}.validate()), DomainError);
  EXPECT_THROW((sim::ContaminationSpec{0.0, 1.0, 1.0}.validate()), DomainError);
  EXPECT_THROW((sim::ContaminationSpec{0.0, 0.0, -1.0}.validate()), DomainError);
}

TEST(Metrics, MaeMatchesNaiveSummation) {
  std::mt19937_64 rng(9);
  const Eigen::MatrixXd a = oracle::gaussian_matrix(17, 13, rng), b = oracle::gaussian_matrix(17, 13, rng);
  long double acc = 0;
  for (int i = 3; i < 17; ++i)
    for (int j = 0; j < 13; ++j) acc += std::fabs(static_cast<long double>(a(i, j)) - b(i, j));
  std::vector<int> rows;
  for (int i = 3; i < 17; ++i) rows.push_back(i);
  EXPECT_NEAR(sim::mae(a, b, rows), static_cast<double>(acc / (14 * 13)), 1e-12);
  const Eigen::VectorXd per_row = sim::row_mae(a, b);
  EXPECT_NEAR(per_row[0], (a.row(0) - b.row(0)).cwiseAbs().mean(), 1e-12);
  EXPECT_GE(sim::mae(a, b), 0.0);
}

TEST(Metrics, SubspaceAngleMatchesProjectorOracle) {
  std::mt19937_64 rng(10);
  for (int rep = 0; rep < 50; ++rep) {
    const int p = 5 + rep % 20, q = 1 + rep % 3;
    const Eigen::MatrixXd a = oracle::gaussian_matrix(p, q, rng);
    Eigen::MatrixXd b = a + (rep % 5 == 0 ? 1e-3 : 1.0) * oracle::gaussian_matrix(p, q, rng);
    const double s = sim::subspace_sin_angle(a, b);
    EXPECT_NEAR(s, oracle::sin_largest_angle(a, b), 1e-10) << rep;
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  const Eigen::MatrixXd e = Eigen::MatrixXd::Identity(6, 2);
  EXPECT_NEAR(sim::subspace_sin_angle(e * 3.0, e), 0.0, 1e-12);
  EXPECT_NEAR(sim::subspace_sin_angle(e, Eigen::MatrixXd::Identity(6, 4).rightCols(2)), 1.0, 1e-12);
}

TEST(MonteCarlo, RecordsAreOrderedCompleteAndThreadIndependent) {
  auto c = small_study();
  const auto one = sim::run_monte_carlo(c);
  c.threads = 3;
  const auto three = sim::run_monte_carlo(c);
  std::ostringstream a, b;
  sim::write_raw_csv(one, a);
  sim::write_raw_csv(three, b);
  EXPECT_EQ(a.str(), b.str());
  // settings (clean + 2) x d (2) x K x reps (2) x estimators (3): clean 1 K, case 2, cell 1.
  EXPECT_EQ(one.size(), (1 + 2 + 1) * 2u * 2u * 3u);
  for (const auto& r : one) {
    if (r.d < 1.0 && r.estimator != sim::Estimator::mm) {
      EXPECT_EQ(r.status, "not_applicable");
    } else {
      EXPECT_EQ(r.status, "ok");
      EXPECT_GE(r.mae, 0.0);
      EXPECT_GE(r.sin_angle, 0.0);
      EXPECT_LE(r.sin_angle, 1.0);
    }
  }
}

TEST(MonteCarlo, SeedChangesResults) {
  auto c = small_study();
  c.estimators = {sim::Estimator::classical};
  c.decimation = {1.0};
  const auto a = sim::run_monte_carlo(c);
  c.seed = 43;
  const auto b = sim::run_monte_carlo(c);
  EXPECT_NE(a.front().mae, b.front().mae);
}

TEST(MonteCarlo, ClassicalMatchesDirectComputation) {
  auto c = small_study();
  c.estimators = {sim::Estimator::classical};
  c.decimation = {1.0};
  c.settings.clear();
  const auto rec = sim::run_monte_carlo(c);
  ASSERT_EQ(rec.size(), 2u);
  // Replication 0 uses the base-sample stream derived from (seed, 0, 0).
  const auto s = sim::generate_sample(c.scenario, derive_seed(c.seed, {0, 0}));
  const auto m = naive::fit_classical(s.data, 2);
  EXPECT_DOUBLE_EQ(rec[0].mae, sim::mae(s.data.values(), m.fitted_values()));
  EXPECT_DOUBLE_EQ(rec[0].sin_angle, sim::subspace_sin_angle(m.directions, s.true_directions));
}

TEST(Reports, MaxOverKDominatesEveryPerKMean) {
  const auto rec = sim::run_monte_carlo(small_study());
  const std::vector<sim::Estimator> est{sim::Estimator::classical, sim::Estimator::naive, sim::Estimator::mm};
  const auto curves = sim::summarize(rec);
  const auto rows = sim::aggregate(rec, est);
  for (const auto& pt : curves) {
    for (const auto& row : rows) {
      if (row.eps_case != pt.eps_case || row.eps_cell != pt.eps_cell || row.d != pt.d) continue;
      const auto e = static_cast<std::size_t>(std::find(est.begin(), est.end(), pt.estimator) - est.begin());
      if (pt.count == 0) continue;
      ASSERT_TRUE(row.max_mae[e].has_value());
      EXPECT_GE(*row.max_mae[e], pt.mean_mae);
      EXPECT_GE(*row.max_sin[e], pt.mean_sin);
    }
  }
  for (const auto& row : rows)
    if (row.d < 1.0) {
      EXPECT_FALSE(row.max_mae[0].has_value());
      EXPECT_TRUE(row.max_mae[2].has_value());
    }
}

TEST(Reports, RawCsvRoundTrip) {
  const auto rec = sim::run_monte_carlo(small_study());
  std::stringstream buf;
  sim::write_raw_csv(rec, buf);
  const auto back = sim::read_raw_csv(buf);
  ASSERT_EQ(back.size(), rec.size());
  for (std::size_t i = 0; i < rec.size(); ++i) {
    EXPECT_EQ(back[i].estimator, rec[i].estimator);
    EXPECT_EQ(back[i].K, rec[i].K);
    EXPECT_EQ(back[i].d, rec[i].d);
    EXPECT_EQ(back[i].replication, rec[i].replication);
    EXPECT_EQ(back[i].status, rec[i].status);
    if (rec[i].status == "ok") {
      EXPECT_EQ(back[i].mae, rec[i].mae);
    }
  }
  std::istringstream bad("estimator,eps_case\nmm,0\n");
  EXPECT_THROW(sim::read_raw_csv(bad), DataError);
}

TEST(Reports, CurvesStartAtCleanBaseline) {
  const auto rec = sim::run_monte_carlo(small_study());
  std::ostringstream out;
  sim::write_curves_csv(rec, out);
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "estimator,metric,eps_case,eps_cell,d,K,value");
  EXPECT_NE(text.find("mm,mae,0.1,0,1,0,"), std::string::npos);
  EXPECT_NE(text.find("mm,mae,0.1,0,1,3,"), std::string::npos);
}

TEST(Reports, FormatDoubleRoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, 12345.678}) EXPECT_EQ(std::stod(sim::format_double(x)), x);
  EXPECT_EQ(sim::format_double(NAN), "nan");
  EXPECT_EQ(sim::linear_grid(1.0, 7.0, 4), (std::vector<double>{1.0, 3.0, 5.0, 7.0}));
  EXPECT_EQ(sim::linear_grid(2.0, 9.0, 1), (std::vector<double>{2.0}));
}
