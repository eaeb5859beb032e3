#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rfpca/dataset.hpp"
#include "rfpca/error.hpp"
#include "rfpca/model.hpp"
#include "rfpca/seeding.hpp"

using namespace rfpca;

namespace {

LongitudinalDataset random_dataset(int n, int p, std::uint64_t seed, double keep = 1.0) {
  std::mt19937_64 rng(seed);
  const auto data = LongitudinalDataset::complete(oracle::equispaced(p), oracle::gaussian_matrix(n, p, rng));
  return keep < 1.0 ? decimate(data, keep, seed + 1) : data;
}

std::size_t expect_data_error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    read_long_csv(in);
  } catch (const DataError& e) {
    return e.line();
  }
  ADD_FAILURE() << "no DataError for:\n" << text;
  return 0;
}

}  // namespace

TEST(Seeding, SplitmixReferenceValues) {
  // Successive splitmix64 outputs from state 0 (reference generator sequence).
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(splitmix64(0x9E3779B97F4A7C15ULL), 0x6E789E6AA1B965F4ULL);
}

TEST(Seeding, DerivedStreamsDifferAndRepeat) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 20; ++a)
    for (std::uint64_t b = 0; b < 20; ++b) seen.insert(derive_seed(7, {a, b}));
  EXPECT_EQ(seen.size(), 400u);
  EXPECT_EQ(derive_seed(7, {1, 2}), derive_seed(7, {1, 2}));
  EXPECT_NE(derive_seed(7, {1, 2}), derive_seed(7, {2, 1}));
  EXPECT_NE(derive_seed(7, {1}), derive_seed(8, {1}));
}

TEST(Dataset, MissingCellsAreNaNAndIndexSetsAgree) {
  const auto data = random_dataset(20, 15, 3, 0.5);
  const auto sets = index_sets(data);
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < data.cases(); ++i)
    for (Eigen::Index j = 0; j < data.points(); ++j) {
      EXPECT_EQ(data.observed(i, j), std::isfinite(data.values()(i, j)));
      const auto& row = sets.by_case[static_cast<std::size_t>(i)];
      const auto& col = sets.by_column[static_cast<std::size_t>(j)];
      const bool in_row = std::find(row.begin(), row.end(), j) != row.end();
      const bool in_col = std::find(col.begin(), col.end(), i) != col.end();
      EXPECT_EQ(in_row, data.observed(i, j));
      EXPECT_EQ(in_col, data.observed(i, j));
      count += data.observed(i, j);
    }
  EXPECT_EQ(count, data.observed_count());
  EXPECT_DOUBLE_EQ(data.decimation_rate(), static_cast<double>(count) / (20.0 * 15.0));
}

TEST(Dataset, EmptyColumnsAreDroppedAndReported) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Ones(3, 4);
  Mask m = Mask::Constant(3, 4, true);
  m.col(2).setConstant(false);
  const LongitudinalDataset data({0.0, 1.0, 2.0, 3.0}, v, m, {});
  EXPECT_EQ(data.points(), 3);
  EXPECT_EQ(data.dropped_columns(), std::vector<double>{2.0});
  EXPECT_EQ(data.grid(), (std::vector<double>{0.0, 1.0, 3.0}));
}

TEST(Dataset, ConstructorErrors) {
  Mask m = Mask::Constant(2, 2, true);
  m.row(1).setConstant(false);
  EXPECT_THROW(LongitudinalDataset({0.0, 1.0}, Eigen::MatrixXd::Ones(2, 2), m, {}), DataError);
  EXPECT_THROW(LongitudinalDataset::complete({1.0, 0.0}, Eigen::MatrixXd::Ones(2, 2)), DataError);
  EXPECT_THROW(LongitudinalDataset::complete({0.0}, Eigen::MatrixXd::Ones(2, 2)), DataError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(2, 2);
  bad(0, 0) = INFINITY;
  EXPECT_THROW(LongitudinalDataset::complete({0.0, 1.0}, bad), DataError);
}

TEST(Dataset, LongCsvRoundTripIsExact) {
  const auto data = random_dataset(12, 9, 4, 0.6);
  std::stringstream buf;
  write_long_csv(data, buf);
  const auto back = read_long_csv(buf);
  ASSERT_EQ(back.cases(), data.cases());
  ASSERT_EQ(back.grid(), data.grid());
  EXPECT_EQ(back.mask(), data.mask());
  EXPECT_EQ(back.case_ids(), data.case_ids());
  for (Eigen::Index i = 0; i < data.cases(); ++i)
    for (Eigen::Index j = 0; j < data.points(); ++j)
      if (data.observed(i, j)) {
        EXPECT_EQ(back.values()(i, j), data.values()(i, j));
      }
}

TEST(Dataset, LongCsvErrorsCarryLineNumbers) {
  EXPECT_EQ(expect_data_error_line("id,time,value\n"), 1u);
  EXPECT_EQ(expect_data_error_line("case_id,time,value\na,0,1\nb,zero,2\n"), 3u);
  EXPECT_EQ(expect_data_error_line("case_id,time,value\na,0,1\na,1,2,3\n"), 3u);
  EXPECT_EQ(expect_data_error_line("case_id,time,value\na,0,1\n\na,0,5\n"), 4u);
  EXPECT_EQ(expect_data_error_line("case_id,time,value\na,0,nan\n"), 2u);
}

TEST(Dataset, MatrixCsvMatchesLongFormat) {
  std::istringstream m("case_id,v1,v2,v3\nx,1,,3\ny,4,5,6\n"), g("0.0\n0.5\n1.0\n");
  const auto data = read_matrix_csv(m, g);
  std::istringstream l("case_id,time,value\nx,0,1\nx,1,3\ny,0,4\ny,0.5,5\ny,1,6\n");
  const auto ref = read_long_csv(l);
  EXPECT_EQ(data.mask(), ref.mask());
  EXPECT_EQ(data.grid(), ref.grid());
  EXPECT_EQ(data.values().cwiseEqual(ref.values()).count(), 5);
}

TEST(Dataset, LoadCsvDetectsFormat) {
  const auto dir = std::filesystem::temp_directory_path() / "rfpca_test_load";
  std::filesystem::create_directories(dir);
  const auto data = random_dataset(5, 4, 5);
  save_csv(data, dir / "long.csv");
  EXPECT_EQ(load_csv(dir / "long.csv").values(), data.values());
  {
    std::ofstream(dir / "mat.csv") << "case_id,v1,v2\na,1,2\n";
  }
  EXPECT_THROW(load_csv(dir / "mat.csv"), DataError);
  EXPECT_THROW(load_csv(dir / "missing.csv"), DataError);
}

TEST(Decimate, KeepsFractionDeterministicallyAndNestsWithFullData) {
  const auto data = random_dataset(200, 50, 6);
  const auto a = decimate(data, 0.3, 99);
  const auto b = decimate(data, 0.3, 99);
  EXPECT_EQ(a.mask(), b.mask());
  EXPECT_NEAR(a.decimation_rate(), 0.3, 0.02);
  for (Eigen::Index i = 0; i < a.cases(); ++i) EXPECT_TRUE(a.mask().row(i).any());
  EXPECT_NE(decimate(data, 0.3, 100).mask(), a.mask());
  EXPECT_EQ(decimate(data, 1.0, 1).mask(), data.mask());
  EXPECT_THROW(decimate(data, 0.0, 1), DomainError);
}

TEST(Decimate, SameSeedIsMonotoneInRate) {
  // Common random numbers: a cell kept at rate d is kept at every larger rate
  // (no row is empty at these sizes, so there are no redraws).
  const auto data = random_dataset(100, 50, 7);
  const auto low = decimate(data, 0.25, 5), high = decimate(data, 0.5, 5);
  EXPECT_TRUE((low.mask().array() <= high.mask().array()).all());
}

namespace {

FpcaModel toy_model(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FpcaModel m;
  m.estimator = "mm";
  m.grid = oracle::equispaced(20);
  m.basis = make_basis(m.grid, 4);
  m.alpha = oracle::gaussian_matrix(2, m.basis->size(), rng);
  m.directions = m.basis->matrix() * m.alpha.transpose();
  m.mu = oracle::gaussian_matrix(20, 1, rng).col(0);
  m.scores = oracle::gaussian_matrix(8, 2, rng);
  for (int i = 0; i < 8; ++i) m.case_ids.push_back("c" + std::to_string(i));
  m.sigma_stages = {Eigen::VectorXd::Constant(20, 1.0 / 3.0), Eigen::VectorXd::Constant(20, 0.1)};
  m.variance_trace = {1.0, 0.4, 0.1};
  m.explained = 0.9;
  m.flagged_cases = {3};
  return m;
}

}  // namespace

TEST(Model, FittedValuesAndPredictAgree) {
  const auto m = toy_model(1);
  const Eigen::MatrixXd fit = m.fitted_values();
  for (int i = 0; i < 8; ++i) {
    const Eigen::VectorXd row = predict(m, m.scores.row(i).transpose());
    for (int j = 0; j < 20; ++j) {
      double direct = m.mu[j];
      for (int k = 0; k < 2; ++k) direct += m.scores(i, k) * m.directions(j, k);
      EXPECT_NEAR(fit(i, j), direct, 1e-12);
      EXPECT_NEAR(row[j], direct, 1e-12);
    }
  }
  EXPECT_THROW(predict(m, Eigen::VectorXd::Zero(3)), DomainError);
}

TEST(Model, CaseMaeMatchesNaiveSummation) {
  const auto m = toy_model(2);
  std::mt19937_64 rng(3);
  const auto data = decimate(LongitudinalDataset::complete(m.grid, oracle::gaussian_matrix(8, 20, rng)), 0.5, 4);
  const Eigen::VectorXd got = case_mae(m, data);
  const Eigen::MatrixXd fit = m.fitted_values();
  for (int i = 0; i < 8; ++i) {
    long double acc = 0;
    int count = 0;
    for (int j = 0; j < 20; ++j)
      if (data.observed(i, j)) {
        acc += std::fabs(static_cast<long double>(data.values()(i, j)) - fit(i, j));
        ++count;
      }
    EXPECT_NEAR(got[i], static_cast<double>(acc / count), 1e-12);
  }
}

TEST(Model, ExplainedProportion) {
  EXPECT_DOUBLE_EQ(explained_proportion(2.0, 0.5), 0.75);
  EXPECT_DOUBLE_EQ(explained_proportion(1.0, 1.5), 0.0);
  EXPECT_THROW(explained_proportion(0.0, 0.0), DomainError);
  EXPECT_DOUBLE_EQ(explained_proportion(toy_model(1)), 0.9);
}

TEST(Model, JsonRoundTripReproducesPredictionsBitForBit) {
  const auto m = toy_model(5);
  std::stringstream buf;
  write_model(m, buf);
  const auto back = read_model(buf);
  EXPECT_EQ(back.estimator, m.estimator);
  EXPECT_EQ(back.grid, m.grid);
  EXPECT_EQ(back.mu, m.mu);
  EXPECT_EQ(back.alpha, m.alpha);
  EXPECT_EQ(back.directions, m.directions);
  EXPECT_EQ(back.scores, m.scores);
  EXPECT_EQ(back.case_ids, m.case_ids);
  ASSERT_TRUE(back.basis.has_value());
  EXPECT_EQ(back.basis->knots(), m.basis->knots());
  EXPECT_EQ(back.sigma_stages.size(), m.sigma_stages.size());
  EXPECT_EQ(back.variance_trace, m.variance_trace);
  EXPECT_EQ(back.flagged_cases, m.flagged_cases);
  EXPECT_EQ(back.fitted_values(), m.fitted_values());
}

TEST(Model, MalformedJsonIsDataError) {
  std::istringstream a("{not json"), b("{\"format\": \"other\"}");
  EXPECT_THROW(read_model(a), DataError);
  EXPECT_THROW(read_model(b), DataError);
}
