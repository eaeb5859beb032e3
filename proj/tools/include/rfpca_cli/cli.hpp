#pragma once

// Command implementations behind the `rfpca` executable. Each command is a
// thin shell over library calls; the functions are exposed so tests can check
// that a command and the equivalent direct calls agree.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "rfpca/model.hpp"
#include "rfpca/simulation.hpp"

namespace rfpca::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitIncompatible = 3;

struct FitOptions {
  std::filesystem::path input;
  std::filesystem::path grid;  ///< grid file for matrix-format input
  std::string estimator = "mm";
  std::optional<int> q;
  std::optional<double> target_explained;
  int knot_divisor = 6;
  std::filesystem::path out_dir = ".";
};

/// Loads the data, fits, writes model.json and diagnostics.csv to out_dir.
FpcaModel run_fit(const FitOptions& options, std::ostream& log);

/// Builds the estimator call that `run_fit` makes for already loaded data.
FpcaModel fit_dataset(const LongitudinalDataset& data, const FitOptions& options);

/// Parses the key = value simulation config. Throws DataError with the line
/// number on unknown or duplicate keys and malformed values.
sim::MonteCarloConfig parse_sim_config(std::istream& in);
sim::MonteCarloConfig load_sim_config(const std::filesystem::path& path);

/// Runs the study, writes raw.csv and table.csv to out_dir, prints the table.
std::vector<sim::RawRecord> run_simulate(const std::filesystem::path& config, std::uint64_t seed, int threads,
                                         const std::filesystem::path& out_dir, std::ostream& log);

/// Reads a raw CSV and writes curves.csv to out_dir.
void run_report(const std::filesystem::path& raw, const std::filesystem::path& out_dir, std::ostream& log);

/// Full command line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rfpca::cli
