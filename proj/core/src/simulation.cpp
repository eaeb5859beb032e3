#include "rfpca/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "rfpca/error.hpp"
#include "rfpca/seeding.hpp"

namespace rfpca::sim {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double bump(double t, double centre, double width) {
  const double u = (t - centre) / width;
  return std::exp(-u * u);
}

std::vector<double> unit_grid(int p) {
  std::vector<double> g(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) g[static_cast<std::size_t>(j)] = p == 1 ? 0.0 : static_cast<double>(j) / (p - 1);
  return g;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, std::size_t line) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError("not a number: '" + s + "'", line);
  return v;
}

using GroupKey = std::tuple<double, double, double>;  // eps_case, eps_cell, d

}  // namespace

void ScenarioConfig::validate() const {
  if (p < 4) throw DomainError("scenario: p must be >= 4");
  if (n < 2) throw DomainError("scenario: n must be >= 2");
  if (q < 1) throw DomainError("scenario: q must be >= 1");
  if (static_cast<int>(pi.size()) != q) throw DomainError("scenario: need one weight per true component");
  for (double w : pi)
    if (!(w > 0.0)) throw DomainError("scenario: component weights must be positive");
  if (!(pi0 >= 0.0)) throw DomainError("scenario: noise weight must be >= 0");
  if (!mean_fn) throw DomainError("scenario: missing mean function");
  if (static_cast<int>(direction_fns.size()) < q) throw DomainError("scenario: fewer direction functions than q");
  if (static_cast<int>(direction_fns.size()) > p) throw DomainError("scenario: more direction functions than grid points");
  if (replications < 1) throw DomainError("scenario: replications must be >= 1");
}

ScenarioConfig lrs_like() {
  ScenarioConfig s;
  s.name = "lrs";
  s.mean_fn = [](double t) { return 2.0 + 3.0 * bump(t, 0.4, 0.3); };
  s.direction_fns = {
      [](double t) { return bump(t, 0.35, 0.2); },
      [](double t) { return (t - 0.35) * bump(t, 0.35, 0.25); },
      [](double t) { return std::sin(2.0 * std::numbers::pi * t); },
      [](double t) { return std::cos(3.0 * std::numbers::pi * t); },
  };
  return s;
}

ScenarioConfig macs_like() {
  ScenarioConfig s;
  s.name = "macs";
  s.mean_fn = [](double t) { return 4.0 + 3.0 * std::exp(-2.0 * t); };
  // Legendre polynomials in x = 2t - 1.
  s.direction_fns = {
      [](double) { return 1.0; },
      [](double t) { return 2.0 * t - 1.0; },
      [](double t) {
        const double x = 2.0 * t - 1.0;
        return 0.5 * (3.0 * x * x - 1.0);
      },
      [](double t) {
        const double x = 2.0 * t - 1.0;
        return 0.5 * (5.0 * x * x * x - 3.0 * x);
      },
  };
  return s;
}

ScenarioConfig preset(std::string_view name) {
  if (name == "lrs") return lrs_like();
  if (name == "macs") return macs_like();
  throw DomainError("unknown scenario preset '" + std::string(name) + "' (expected lrs or macs)");
}

ScenarioFunctions evaluate_scenario(const ScenarioConfig& scenario) {
  scenario.validate();
  ScenarioFunctions f;
  f.grid = unit_grid(scenario.p);
  const Index p = scenario.p;
  const Index r = static_cast<Index>(scenario.direction_fns.size());
  f.mu.resize(p);
  MatrixXd raw(p, r);
  for (Index j = 0; j < p; ++j) {
    const double t = f.grid[static_cast<std::size_t>(j)];
    f.mu[j] = scenario.mean_fn(t);
    for (Index k = 0; k < r; ++k) raw(j, k) = scenario.direction_fns[static_cast<std::size_t>(k)](t);
  }
  // Gram-Schmidt in the listed order (twice, for numerical orthogonality).
  f.directions = raw;
  for (Index k = 0; k < r; ++k) {
    for (int pass = 0; pass < 2; ++pass)
      for (Index l = 0; l < k; ++l) f.directions.col(k) -= f.directions.col(l).dot(f.directions.col(k)) * f.directions.col(l);
    const double norm = f.directions.col(k).norm();
    if (!(norm > 1e-10)) throw DomainError("scenario: direction functions are linearly dependent on the grid");
    f.directions.col(k) /= norm;
  }
  return f;
}

double top_eigenvalue(const ScenarioConfig& scenario) {
  return *std::max_element(scenario.pi.begin(), scenario.pi.end()) * scenario.p + scenario.pi0;
}

VectorXd variance_diagonal(const ScenarioConfig& scenario, const ScenarioFunctions& f) {
  VectorXd out = VectorXd::Constant(scenario.p, scenario.pi0);
  for (int k = 0; k < scenario.q; ++k)
    out += scenario.pi[static_cast<std::size_t>(k)] * scenario.p * f.directions.col(k).array().square().matrix();
  return out;
}

Sample generate_sample(const ScenarioConfig& scenario, std::uint64_t seed) {
  return generate_sample(scenario, evaluate_scenario(scenario), seed);
}

Sample generate_sample(const ScenarioConfig& scenario, const ScenarioFunctions& f, std::uint64_t seed) {
  scenario.validate();
  Rng rng(seed);
  std::normal_distribution<double> normal;
  const Index n = scenario.n, p = scenario.p;
  MatrixXd x(n, p);
  const double noise = std::sqrt(scenario.pi0);
  for (Index i = 0; i < n; ++i) {
    VectorXd row = f.mu;
    for (int k = 0; k < scenario.q; ++k) {
      const double z = normal(rng);
      row += std::sqrt(scenario.pi[static_cast<std::size_t>(k)] * scenario.p) * z * f.directions.col(k);
    }
    for (Index j = 0; j < p; ++j) row[j] += noise * normal(rng);
    x.row(i) = row.transpose();
  }
  return Sample{LongitudinalDataset::complete(f.grid, std::move(x)), f.directions.leftCols(scenario.q)};
}

void ContaminationSpec::validate() const {
  if (!(eps_case >= 0.0 && eps_case < 0.5)) throw DomainError("contamination: eps_case must lie in [0, 0.5)");
  if (!(eps_cell >= 0.0 && eps_cell < 1.0)) throw DomainError("contamination: eps_cell must lie in [0, 1)");
  if (!(K >= 0.0)) throw DomainError("contamination: K must be >= 0");
}

CaseContamination contaminate_case(const LongitudinalDataset& data, const ContaminationSpec& spec,
                                   const ScenarioConfig& scenario, const ScenarioFunctions& f, std::uint64_t seed) {
  spec.validate();
  const Index n = data.cases(), p = data.points();
  if (p != scenario.p) throw DomainError("contaminate_case: data and scenario grids differ");
  VectorXd c;
  if (spec.case_direction == CaseDirection::next_eigenvector) {
    if (f.directions.cols() <= scenario.q)
      throw DomainError("contaminate_case: scenario has no direction beyond the true rank");
    c = f.directions.col(scenario.q);
  } else {
    Rng rng(seed);
    std::normal_distribution<double> normal;
    c.resize(p);
    for (Index j = 0; j < p; ++j) c[j] = normal(rng);
    for (int pass = 0; pass < 2; ++pass)
      for (int k = 0; k < scenario.q; ++k) c -= f.directions.col(k).dot(c) * f.directions.col(k);
    c.normalize();
  }
  const Index replaced = static_cast<Index>(std::floor(spec.eps_case * static_cast<double>(n) + 1e-9));
  const VectorXd outlier = f.mu + spec.K * std::sqrt(top_eigenvalue(scenario)) * c;
  MatrixXd x = data.values();
  for (Index i = 0; i < replaced; ++i)
    for (Index j = 0; j < p; ++j)
      if (data.observed(i, j)) x(i, j) = outlier[j];
  CaseContamination out{data.with_values(std::move(x)), {}, c};
  for (Index i = replaced; i < n; ++i) out.clean_rows.push_back(static_cast<int>(i));
  return out;
}

CellContamination contaminate_cell(const LongitudinalDataset& data, const ContaminationSpec& spec,
                                   const VectorXd& sigma_diag, std::uint64_t seed) {
  spec.validate();
  if (sigma_diag.size() != data.points()) throw DomainError("contaminate_cell: sigma length != columns");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  MatrixXd x = data.values();
  std::size_t count = 0;
  for (Index i = 0; i < data.cases(); ++i)
    for (Index j = 0; j < data.points(); ++j) {
      if (!data.observed(i, j)) continue;
      if (unif(rng) < spec.eps_cell) {
        x(i, j) += spec.K * sigma_diag[j];
        ++count;
      }
    }
  return CellContamination{data.with_values(std::move(x)), count};
}

double mae(const MatrixXd& reference, const MatrixXd& fitted, const std::vector<int>& rows) {
  if (reference.rows() != fitted.rows() || reference.cols() != fitted.cols())
    throw DomainError("mae: shapes differ");
  if (reference.cols() == 0) throw DomainError("mae: empty averaging set");
  double acc = 0.0;
  std::size_t count = 0;
  auto add_row = [&](Index i) {
    if (i < 0 || i >= reference.rows()) throw DomainError("mae: row index out of range");
    for (Index j = 0; j < reference.cols(); ++j) acc += std::abs(reference(i, j) - fitted(i, j));
    count += static_cast<std::size_t>(reference.cols());
  };
  if (rows.empty()) {
    for (Index i = 0; i < reference.rows(); ++i) add_row(i);
  } else {
    for (int i : rows) add_row(i);
  }
  if (count == 0) throw DomainError("mae: empty averaging set");
  return acc / static_cast<double>(count);
}

VectorXd row_mae(const MatrixXd& reference, const MatrixXd& fitted) {
  if (reference.rows() != fitted.rows() || reference.cols() != fitted.cols())
    throw DomainError("row_mae: shapes differ");
  if (reference.cols() == 0) throw DomainError("row_mae: no columns");
  return (reference - fitted).cwiseAbs().rowwise().mean();
}

double subspace_sin_angle(const MatrixXd& estimated, const MatrixXd& truth) {
  if (estimated.rows() != truth.rows()) throw DomainError("subspace_sin_angle: row counts differ");
  if (estimated.cols() == 0 || truth.cols() == 0) throw DomainError("subspace_sin_angle: empty subspace");
  auto basis = [](const MatrixXd& a) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
    if (qr.rank() < a.cols()) throw NumericalError("subspace_sin_angle: rank-deficient input");
    return MatrixXd(qr.householderQ() * MatrixXd::Identity(a.rows(), a.cols()));
  };
  MatrixXd big = basis(estimated);
  MatrixXd small = basis(truth);
  if (small.cols() > big.cols()) std::swap(big, small);
  // sin of the largest principal angle from the residual of the projection;
  // sqrt(1 - cos^2) loses half the digits for small angles.
  const MatrixXd resid = small - big * (big.transpose() * small);
  Eigen::JacobiSVD<MatrixXd> svd(resid);
  return std::clamp(svd.singularValues()(0), 0.0, 1.0);
}

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::classical: return "classical";
    case Estimator::naive: return "naive";
    case Estimator::mm: return "mm";
  }
  return "?";
}

Estimator estimator_from_string(std::string_view s) {
  if (s == "classical") return Estimator::classical;
  if (s == "naive") return Estimator::naive;
  if (s == "mm") return Estimator::mm;
  throw DomainError("unknown estimator '" + std::string(s) + "' (expected classical, naive or mm)");
}

std::vector<double> linear_grid(double lo, double hi, int count) {
  if (count < 1) throw DomainError("linear_grid: count must be >= 1");
  if (count == 1) return {lo};
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) out[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / (count - 1);
  out.back() = hi;
  return out;
}

std::vector<RawRecord> run_monte_carlo(const MonteCarloConfig& config) {
  const ScenarioConfig& scenario = config.scenario;
  scenario.validate();
  if (config.estimators.empty()) throw DomainError("monte carlo: no estimators");
  if (config.threads < 1) throw DomainError("monte carlo: threads must be >= 1");
  for (double d : config.decimation)
    if (!(d > 0.0 && d <= 1.0)) throw DomainError("monte carlo: decimation rates must lie in (0, 1]");

  std::vector<ContaminationSetting> settings = config.settings;
  const bool has_clean = std::any_of(settings.begin(), settings.end(),
                                     [](const auto& s) { return s.eps_case == 0.0 && s.eps_cell == 0.0; });
  if (!has_clean) settings.insert(settings.begin(), ContaminationSetting{});
  for (const auto& s : settings) {
    if (s.k_grid.empty()) throw DomainError("monte carlo: empty K grid");
    for (double k : s.k_grid) ContaminationSpec{s.eps_case, s.eps_cell, k, s.case_direction}.validate();
  }

  const ScenarioFunctions f = evaluate_scenario(scenario);
  const VectorXd sigma_diag = variance_diagonal(scenario, f);

  struct Task {
    std::size_t setting, d_index, k_index;
    int rep;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < settings.size(); ++s)
    for (std::size_t di = 0; di < config.decimation.size(); ++di)
      for (std::size_t ki = 0; ki < settings[s].k_grid.size(); ++ki)
        for (int r = 0; r < scenario.replications; ++r) tasks.push_back({s, di, ki, r});

  const std::size_t per_task = config.estimators.size();
  std::vector<RawRecord> records(tasks.size() * per_task);

  auto run_task = [&](std::size_t t) {
    const Task& task = tasks[t];
    const ContaminationSetting& setting = settings[task.setting];
    const double d = config.decimation[task.d_index];
    const double K = setting.k_grid[task.k_index];
    const auto rep = static_cast<std::uint64_t>(task.rep);
    const Sample sample = generate_sample(scenario, f, derive_seed(config.seed, {0, rep}));
    LongitudinalDataset data = sample.data;
    if (d < 1.0) data = decimate(data, d, derive_seed(config.seed, {1, task.d_index, rep}));
    const ContaminationSpec spec{setting.eps_case, setting.eps_cell, K, setting.case_direction};
    std::vector<int> clean_rows;
    if (spec.eps_case > 0.0) {
      auto cc = contaminate_case(data, spec, scenario, f, derive_seed(config.seed, {2, task.setting, task.d_index, rep}));
      data = std::move(cc.data);
      clean_rows = std::move(cc.clean_rows);
    }
    if (spec.eps_cell > 0.0)
      data = contaminate_cell(data, spec, sigma_diag, derive_seed(config.seed, {3, task.setting, task.d_index, rep})).data;

    for (std::size_t e = 0; e < per_task; ++e) {
      RawRecord& rec = records[t * per_task + e];
      rec.estimator = config.estimators[e];
      rec.eps_case = setting.eps_case;
      rec.eps_cell = setting.eps_cell;
      rec.d = d;
      rec.K = K;
      rec.replication = task.rep;
      rec.mae = rec.sin_angle = std::numeric_limits<double>::quiet_NaN();
      if (rec.estimator != Estimator::mm && !data.is_complete()) {
        rec.status = "not_applicable";
        continue;
      }
      try {
        FpcaModel model;
        switch (rec.estimator) {
          case Estimator::classical: model = naive::fit_classical(data, config.fit_q); break;
          case Estimator::naive: {
            naive::NaiveConfig nc = config.naive;
            nc.q = config.fit_q;
            model = naive::fit_naive(data, nc);
            break;
          }
          case Estimator::mm: {
            mm::MmConfig mc = config.mm;
            mc.q = config.fit_q;
            model = mm::fit_mm(data, mc);
            break;
          }
        }
        rec.mae = mae(sample.data.values(), model.fitted_values(), clean_rows);
        rec.sin_angle = subspace_sin_angle(model.directions, sample.true_directions);
        rec.status = "ok";
      } catch (const Error&) {
        rec.status = "error";
      }
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.threads), tasks.size());
  if (workers <= 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < tasks.size(); t = next++) {
          try {
            run_task(t);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  return records;
}

std::vector<CurvePoint> summarize(const std::vector<RawRecord>& records) {
  using Key = std::tuple<int, double, double, double, double>;
  std::vector<Key> order;
  std::map<Key, std::tuple<double, double, int>> acc;
  for (const auto& r : records) {
    const Key key{static_cast<int>(r.estimator), r.eps_case, r.eps_cell, r.d, r.K};
    auto [it, inserted] = acc.try_emplace(key, 0.0, 0.0, 0);
    if (inserted) order.push_back(key);
    if (r.status != "ok") continue;
    std::get<0>(it->second) += r.mae;
    std::get<1>(it->second) += r.sin_angle;
    std::get<2>(it->second) += 1;
  }
  std::vector<CurvePoint> out;
  for (const auto& key : order) {
    const auto& [sum_mae, sum_sin, count] = acc.at(key);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.push_back(CurvePoint{static_cast<Estimator>(std::get<0>(key)), std::get<1>(key), std::get<2>(key),
                             std::get<3>(key), std::get<4>(key), count ? sum_mae / count : nan,
                             count ? sum_sin / count : nan, count});
  }
  return out;
}

std::vector<TableRow> aggregate(const std::vector<RawRecord>& records, const std::vector<Estimator>& estimators) {
  const auto points = summarize(records);
  std::vector<GroupKey> order;
  for (const auto& pt : points) {
    const GroupKey key{pt.eps_case, pt.eps_cell, pt.d};
    if (std::find(order.begin(), order.end(), key) == order.end()) order.push_back(key);
  }
  std::vector<TableRow> out;
  for (const auto& key : order) {
    TableRow row{std::get<0>(key), std::get<1>(key), std::get<2>(key), {}, {}};
    for (Estimator e : estimators) {
      std::optional<double> best_mae, best_sin;
      for (const auto& pt : points) {
        if (pt.estimator != e || GroupKey{pt.eps_case, pt.eps_cell, pt.d} != key || pt.count == 0) continue;
        best_mae = std::max(best_mae.value_or(pt.mean_mae), pt.mean_mae);
        best_sin = std::max(best_sin.value_or(pt.mean_sin), pt.mean_sin);
      }
      row.max_mae.push_back(best_mae);
      row.max_sin.push_back(best_sin);
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

static constexpr const char* kRawHeader = "estimator,eps_case,eps_cell,d,K,replication,mae,sin_angle,status";

void write_raw_csv(const std::vector<RawRecord>& records, std::ostream& out) {
  out << kRawHeader << '\n';
  for (const auto& r : records)
    out << to_string(r.estimator) << ',' << format_double(r.eps_case) << ',' << format_double(r.eps_cell) << ','
        << format_double(r.d) << ',' << format_double(r.K) << ',' << r.replication << ',' << format_double(r.mae)
        << ',' << format_double(r.sin_angle) << ',' << r.status << '\n';
}

std::vector<RawRecord> read_raw_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw DataError("raw CSV is empty", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRawHeader) throw DataError(std::string("raw CSV header must be '") + kRawHeader + "'", 1);
  std::vector<RawRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) throw DataError("expected 9 fields, found " + std::to_string(f.size()), line_no);
    RawRecord r;
    try {
      r.estimator = estimator_from_string(f[0]);
    } catch (const DomainError& e) {
      throw DataError(e.what(), line_no);
    }
    r.eps_case = parse_number(f[1], line_no);
    r.eps_cell = parse_number(f[2], line_no);
    r.d = parse_number(f[3], line_no);
    r.K = parse_number(f[4], line_no);
    const double rep = parse_number(f[5], line_no);
    if (rep != std::floor(rep) || rep < 0) throw DataError("replication must be a non-negative integer", line_no);
    r.replication = static_cast<int>(rep);
    r.mae = parse_number(f[6], line_no);
    r.sin_angle = parse_number(f[7], line_no);
    r.status = f[8];
    if (r.status != "ok" && r.status != "not_applicable" && r.status != "error")
      throw DataError("unknown status '" + r.status + "'", line_no);
    out.push_back(std::move(r));
  }
  return out;
}

void write_table_csv(const std::vector<TableRow>& rows, const std::vector<Estimator>& estimators, std::ostream& out) {
  out << "eps_case,eps_cell,d";
  for (Estimator e : estimators) out << ',' << to_string(e) << "_max_mae," << to_string(e) << "_max_sin";
  out << '\n';
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); };
  for (const auto& r : rows) {
    out << format_double(r.eps_case) << ',' << format_double(r.eps_cell) << ',' << format_double(r.d);
    for (std::size_t k = 0; k < estimators.size(); ++k) out << ',' << cell(r.max_mae[k]) << ',' << cell(r.max_sin[k]);
    out << '\n';
  }
}

void print_table(const std::vector<TableRow>& rows, const std::vector<Estimator>& estimators, std::ostream& out) {
  std::ostringstream head;
  head << std::left << std::setw(9) << "eps_case" << std::setw(9) << "eps_cell" << std::setw(6) << "d";
  for (Estimator e : estimators) head << std::setw(22) << (std::string(to_string(e)) + " MAE / sin");
  out << head.str() << '\n';
  for (const auto& r : rows) {
    std::ostringstream line;
    line << std::left << std::setw(9) << r.eps_case << std::setw(9) << r.eps_cell << std::setw(6) << r.d;
    for (std::size_t k = 0; k < estimators.size(); ++k) {
      std::ostringstream c;
      if (r.max_mae[k]) {
        c << std::fixed << std::setprecision(4) << *r.max_mae[k] << " / " << std::setprecision(3) << *r.max_sin[k];
      } else {
        c << "n/a";
      }
      line << std::setw(22) << c.str();
    }
    out << line.str() << '\n';
  }
}

void write_curves_csv(const std::vector<RawRecord>& records, std::ostream& out) {
  const auto points = summarize(records);
  out << "estimator,metric,eps_case,eps_cell,d,K,value\n";
  auto emit = [&](const CurvePoint& pt, double eps_case, double eps_cell, double K) {
    const std::string prefix = std::string(to_string(pt.estimator));
    const std::string tail =
        format_double(eps_case) + ',' + format_double(eps_cell) + ',' + format_double(pt.d) + ',' + format_double(K);
    out << prefix << ",mae," << tail << ',' << format_double(pt.mean_mae) << '\n';
    out << prefix << ",sin_angle," << tail << ',' << format_double(pt.mean_sin) << '\n';
  };
  // Group by (estimator, eps_case, eps_cell, d) in first-appearance order.
  std::vector<std::tuple<Estimator, double, double, double>> groups;
  for (const auto& pt : points) {
    const auto g = std::make_tuple(pt.estimator, pt.eps_case, pt.eps_cell, pt.d);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  for (const auto& [est, ec, el, d] : groups) {
    const bool contaminated = ec > 0.0 || el > 0.0;
    bool has_zero = false;
    for (const auto& pt : points)
      if (pt.estimator == est && pt.eps_case == ec && pt.eps_cell == el && pt.d == d && pt.K == 0.0) has_zero = true;
    if (contaminated && !has_zero)
      for (const auto& pt : points)
        if (pt.estimator == est && pt.eps_case == 0.0 && pt.eps_cell == 0.0 && pt.d == d) {
          emit(pt, ec, el, 0.0);
          break;
        }
    for (const auto& pt : points)
      if (pt.estimator == est && pt.eps_case == ec && pt.eps_cell == el && pt.d == d) emit(pt, ec, el, pt.K);
  }
}

}  // namespace rfpca::sim
