#include "rfpca_cli/cli.hpp"

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "rfpca/error.hpp"
#include "rfpca/mm_estimator.hpp"
#include "rfpca/naive_estimator.hpp"

namespace rfpca::cli {

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

}  // namespace

FpcaModel fit_dataset(const LongitudinalDataset& data, const FitOptions& options) {
  if (options.estimator == "mm") {
    mm::MmConfig config;
    config.knot_divisor = options.knot_divisor;
    config.target_explained = options.target_explained;
    config.q = options.q.value_or(options.target_explained ? 0 : 2);
    return mm::fit_mm(data, config);
  }
  if (options.target_explained)
    throw DomainError("--target-explained is only supported by the mm estimator");
  if (options.estimator == "naive") {
    naive::NaiveConfig config;
    config.q = options.q.value_or(2);
    return naive::fit_naive(data, config);
  }
  if (options.estimator == "classical") return naive::fit_classical(data, options.q.value_or(2));
  throw DomainError("unknown estimator '" + options.estimator + "' (expected mm, naive or classical)");
}

FpcaModel run_fit(const FitOptions& options, std::ostream& log) {
  const LongitudinalDataset data = load_csv(options.input, options.grid);
  const FpcaModel model = fit_dataset(data, options);
  ensure_dir(options.out_dir);
  save_model(model, options.out_dir / "model.json");

  const Eigen::VectorXd m = case_mae(model, data);
  auto diag = open_output(options.out_dir / "diagnostics.csv");
  diag << "case_id,observed,mae,adjusted\n";
  for (Eigen::Index i = 0; i < data.cases(); ++i) {
    const bool flagged = std::find(model.flagged_cases.begin(), model.flagged_cases.end(), static_cast<int>(i)) !=
                         model.flagged_cases.end();
    diag << data.case_ids()[static_cast<std::size_t>(i)] << ',' << data.mask().row(i).count() << ','
         << sim::format_double(m[i]) << ',' << (flagged ? "no" : "yes") << '\n';
  }
  log << "estimator: " << model.estimator << "\ncomponents: " << model.components()
      << "\nexplained (u_q): " << sim::format_double(model.explained)
      << "\nmean case MAE: " << sim::format_double(m.mean()) << '\n';
  if (!model.flagged_cases.empty())
    log << "cases without final adjustment: " << model.flagged_cases.size() << '\n';
  return model;
}

std::vector<sim::RawRecord> run_simulate(const std::filesystem::path& config_path, std::uint64_t seed, int threads,
                                         const std::filesystem::path& out_dir, std::ostream& log) {
  sim::MonteCarloConfig config = load_sim_config(config_path);
  config.seed = seed;
  config.threads = threads;
  const auto records = sim::run_monte_carlo(config);
  ensure_dir(out_dir);
  {
    auto raw = open_output(out_dir / "raw.csv");
    sim::write_raw_csv(records, raw);
  }
  const auto rows = sim::aggregate(records, config.estimators);
  {
    auto table = open_output(out_dir / "table.csv");
    sim::write_table_csv(rows, config.estimators, table);
  }
  sim::print_table(rows, config.estimators, log);
  return records;
}

void run_report(const std::filesystem::path& raw_path, const std::filesystem::path& out_dir, std::ostream& log) {
  std::ifstream in(raw_path);
  if (!in) throw DataError("cannot open '" + raw_path.string() + "'");
  std::vector<sim::RawRecord> records;
  try {
    records = sim::read_raw_csv(in);
  } catch (const DataError& e) {
    throw DataError(raw_path.string() + ": " + e.what());
  }
  ensure_dir(out_dir);
  auto out = open_output(out_dir / "curves.csv");
  sim::write_curves_csv(records, out);
  log << "wrote " << (out_dir / "curves.csv").string() << '\n';
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust functional principal components"};
  app.require_subcommand(1);

  FitOptions fit;
  int q = 0;
  double target = 0.0;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a CSV data file");
  fit_cmd->add_option("input", fit.input, "Data CSV (long or matrix format)")->required();
  fit_cmd->add_option("--estimator", fit.estimator, "mm, naive or classical")
      ->check(CLI::IsMember({"mm", "naive", "classical"}));
  auto* q_opt = fit_cmd->add_option("--q", q, "Number of components")->check(CLI::PositiveNumber);
  auto* target_opt = fit_cmd->add_option("--target-explained", target, "Stop once u_q reaches this value (mm)")
                         ->check(CLI::Range(0.0, 1.0));
  fit_cmd->add_option("--knot-divisor", fit.knot_divisor, "floor(p/K) interior knots")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--grid", fit.grid, "Grid file for matrix-format input");
  fit_cmd->add_option("--out-dir", fit.out_dir, "Output directory");

  std::filesystem::path sim_config, sim_out = ".";
  std::uint64_t seed = 0;
  int threads = 1;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a Monte Carlo study from a config file");
  sim_cmd->add_option("config", sim_config, "Simulation config (key = value)")->required();
  sim_cmd->add_option("--seed", seed, "Master seed")->required();
  sim_cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--out-dir", sim_out, "Output directory");

  std::filesystem::path raw_path, report_out = ".";
  auto* report_cmd = app.add_subcommand("report", "Write K-curves from a raw simulation CSV");
  report_cmd->add_option("raw", raw_path, "raw.csv from simulate")->required();
  report_cmd->add_option("--out-dir", report_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  try {
    if (*fit_cmd) {
      if (*q_opt) fit.q = q;
      if (*target_opt) {
        if (!(target > 0.0 && target < 1.0)) throw DomainError("--target-explained must lie in (0, 1)");
        fit.target_explained = target;
      }
      run_fit(fit, out);
    } else if (*sim_cmd) {
      run_simulate(sim_config, seed, threads, sim_out, out);
    } else if (*report_cmd) {
      run_report(raw_path, report_out, out);
    }
  } catch (const IncompatibleError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIncompatible;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace rfpca::cli
