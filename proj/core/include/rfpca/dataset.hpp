#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rfpca {

using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Per-case and per-column lists of observed indices.
struct IndexSets {
  std::vector<std::vector<int>> by_case;    ///< J_i: observed columns of case i
  std::vector<std::vector<int>> by_column;  ///< I_j: cases observed at column j
};

/// n x p longitudinal data on a common time grid with arbitrary missingness.
///
/// Missing cells hold NaN in `values()` and false in `mask()`. Every case has
/// at least one observed cell; columns without observations are dropped at
/// construction and reported through `dropped_columns()`.
class LongitudinalDataset {
 public:
  LongitudinalDataset(std::vector<double> grid, Eigen::MatrixXd values, Mask mask,
                      std::vector<std::string> case_ids);

  /// Complete data: every cell observed. Case ids default to "1".."n".
  static LongitudinalDataset complete(std::vector<double> grid, Eigen::MatrixXd values,
                                      std::vector<std::string> case_ids = {});

  Eigen::Index cases() const noexcept { return values_.rows(); }
  Eigen::Index points() const noexcept { return values_.cols(); }
  const std::vector<double>& grid() const noexcept { return grid_; }
  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const Mask& mask() const noexcept { return mask_; }
  const std::vector<std::string>& case_ids() const noexcept { return case_ids_; }
  const std::vector<double>& dropped_columns() const noexcept { return dropped_; }

  bool observed(Eigen::Index i, Eigen::Index j) const { return mask_(i, j); }
  std::size_t observed_count() const;
  bool is_complete() const { return observed_count() == static_cast<std::size_t>(mask_.size()); }

  /// Fraction of observed cells, in (0, 1].
  double decimation_rate() const;

  /// Copy with the given cell values replaced (mask unchanged).
  LongitudinalDataset with_values(Eigen::MatrixXd values) const;

 private:
  std::vector<double> grid_;
  Eigen::MatrixXd values_;
  Mask mask_;
  std::vector<std::string> case_ids_;
  std::vector<double> dropped_;
};

IndexSets index_sets(const LongitudinalDataset& data);

/// Reads either the long format (header `case_id,time,value`) or the matrix
/// format (`case_id,v1,...,vp`, which requires `grid_path`). Throws DataError
/// with the offending line number.
LongitudinalDataset load_csv(const std::filesystem::path& path,
                             const std::filesystem::path& grid_path = {});

LongitudinalDataset read_long_csv(std::istream& in);
LongitudinalDataset read_matrix_csv(std::istream& in, std::istream& grid);

/// Writes the long format, one observed cell per row, full round-trip precision.
void write_long_csv(const LongitudinalDataset& data, std::ostream& out);
void save_csv(const LongitudinalDataset& data, const std::filesystem::path& path);

/// Keeps each cell independently with probability d. Each case draws from its
/// own stream derived from `seed`; a case left empty is redrawn until at least
/// one cell survives.
LongitudinalDataset decimate(const LongitudinalDataset& data, double d, std::uint64_t seed);

}  // namespace rfpca
