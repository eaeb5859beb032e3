#include "rfpca/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "rfpca/error.hpp"
#include "rfpca/seeding.hpp"

namespace rfpca {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(const std::string& token, double& out) {
  if (token.empty()) return false;
  const char* begin = token.data();
  const char* end = token.data() + token.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

bool is_missing_token(const std::string& token) {
  std::string lower(token);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower.empty() || lower == "nan" || lower == "na";
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

LongitudinalDataset::LongitudinalDataset(std::vector<double> grid, Eigen::MatrixXd values, Mask mask,
                                         std::vector<std::string> case_ids) {
  const auto n = values.rows();
  const auto p = values.cols();
  if (static_cast<Eigen::Index>(grid.size()) != p)
    throw DataError("grid length does not match the number of columns");
  if (mask.rows() != n || mask.cols() != p) throw DataError("mask shape does not match values");
  if (n == 0 || p == 0) throw DataError("dataset is empty");
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (!std::isfinite(grid[j])) throw DataError("non-finite time on the grid");
    if (j > 0 && !(grid[j] > grid[j - 1])) throw DataError("grid must be strictly increasing");
  }
  if (case_ids.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) case_ids.push_back(std::to_string(i + 1));
  }
  if (static_cast<Eigen::Index>(case_ids.size()) != n)
    throw DataError("number of case ids does not match the number of rows");

  for (Eigen::Index i = 0; i < n; ++i) {
    bool any = false;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (mask(i, j)) {
        if (!std::isfinite(values(i, j)))
          throw DataError("case '" + case_ids[static_cast<std::size_t>(i)] + "' has a non-finite observed value");
        any = true;
      } else {
        values(i, j) = kNaN;
      }
    }
    if (!any) throw DataError("case '" + case_ids[static_cast<std::size_t>(i)] + "' has no observed cells");
  }

  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (mask.col(j).any()) {
      keep.push_back(j);
    } else {
      dropped_.push_back(grid[static_cast<std::size_t>(j)]);
      std::cerr << "warning: dropping time " << grid[static_cast<std::size_t>(j)]
                << " with no observations\n";
    }
  }
  if (static_cast<Eigen::Index>(keep.size()) == p) {
    grid_ = std::move(grid);
    values_ = std::move(values);
    mask_ = std::move(mask);
  } else {
    const auto q = static_cast<Eigen::Index>(keep.size());
    grid_.resize(keep.size());
    values_.resize(n, q);
    mask_.resize(n, q);
    for (Eigen::Index c = 0; c < q; ++c) {
      grid_[static_cast<std::size_t>(c)] = grid[static_cast<std::size_t>(keep[c])];
      values_.col(c) = values.col(keep[c]);
      mask_.col(c) = mask.col(keep[c]);
    }
  }
  case_ids_ = std::move(case_ids);
}

LongitudinalDataset LongitudinalDataset::complete(std::vector<double> grid, Eigen::MatrixXd values,
                                                  std::vector<std::string> case_ids) {
  Mask mask = Mask::Constant(values.rows(), values.cols(), true);
  return LongitudinalDataset(std::move(grid), std::move(values), std::move(mask), std::move(case_ids));
}

std::size_t LongitudinalDataset::observed_count() const {
  return static_cast<std::size_t>(mask_.count());
}

double LongitudinalDataset::decimation_rate() const {
  return static_cast<double>(observed_count()) / static_cast<double>(mask_.size());
}

LongitudinalDataset LongitudinalDataset::with_values(Eigen::MatrixXd values) const {
  return LongitudinalDataset(grid_, std::move(values), mask_, case_ids_);
}

IndexSets index_sets(const LongitudinalDataset& data) {
  IndexSets sets;
  const auto n = data.cases();
  const auto p = data.points();
  sets.by_case.resize(static_cast<std::size_t>(n));
  sets.by_column.resize(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      if (data.observed(i, j)) {
        sets.by_case[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
        sets.by_column[static_cast<std::size_t>(j)].push_back(static_cast<int>(i));
      }
  return sets;
}

LongitudinalDataset read_long_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError("empty file");
  ++line_no;
  const auto header = split_fields(line);
  if (header.size() != 3 || header[0] != "case_id" || header[1] != "time" || header[2] != "value")
    throw DataError("expected header 'case_id,time,value'", line_no);

  struct Cell {
    std::size_t case_index;
    double time;
    double value;
  };
  std::vector<Cell> cells;
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> id_index;
  std::map<std::pair<std::size_t, double>, std::size_t> seen;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 3) throw DataError("expected 3 fields, got " + std::to_string(fields.size()), line_no);
    if (fields[0].empty()) throw DataError("empty case_id", line_no);
    double t = 0.0, v = 0.0;
    if (!parse_double(fields[1], t) || !std::isfinite(t))
      throw DataError("non-numeric time '" + fields[1] + "'", line_no);
    if (!parse_double(fields[2], v) || !std::isfinite(v))
      throw DataError("non-numeric value '" + fields[2] + "'", line_no);
    auto [it, inserted] = id_index.try_emplace(fields[0], ids.size());
    if (inserted) ids.push_back(fields[0]);
    const auto key = std::make_pair(it->second, t);
    if (auto dup = seen.find(key); dup != seen.end())
      throw DataError("duplicate cell (" + fields[0] + ", " + fields[1] + "), first seen on line " +
                          std::to_string(dup->second),
                      line_no);
    seen.emplace(key, line_no);
    cells.push_back({it->second, t, v});
  }
  if (cells.empty()) throw DataError("no data rows");

  std::set<double> times;
  for (const auto& c : cells) times.insert(c.time);
  std::vector<double> grid(times.begin(), times.end());
  const auto n = static_cast<Eigen::Index>(ids.size());
  const auto p = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd values = Eigen::MatrixXd::Constant(n, p, kNaN);
  Mask mask = Mask::Constant(n, p, false);
  for (const auto& c : cells) {
    const auto j = std::lower_bound(grid.begin(), grid.end(), c.time) - grid.begin();
    values(static_cast<Eigen::Index>(c.case_index), j) = c.value;
    mask(static_cast<Eigen::Index>(c.case_index), j) = true;
  }
  return LongitudinalDataset(std::move(grid), std::move(values), std::move(mask), std::move(ids));
}

LongitudinalDataset read_matrix_csv(std::istream& in, std::istream& grid_in) {
  std::vector<double> grid;
  std::string line;
  std::size_t grid_line = 0;
  while (std::getline(grid_in, line)) {
    ++grid_line;
    const auto token = trim(line);
    if (token.empty() || (grid_line == 1 && token == "time")) continue;
    double t = 0.0;
    if (!parse_double(token, t)) throw DataError("grid file: non-numeric time '" + token + "'", grid_line);
    grid.push_back(t);
  }
  if (grid.empty()) throw DataError("grid file is empty");

  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError("empty file");
  ++line_no;
  const auto header = split_fields(line);
  if (header.empty() || header[0] != "case_id")
    throw DataError("expected header 'case_id,v1,...,vp'", line_no);
  const std::size_t p = header.size() - 1;
  if (p != grid.size())
    throw DataError("header has " + std::to_string(p) + " value columns but grid has " +
                        std::to_string(grid.size()) + " times",
                    line_no);

  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != p + 1)
      throw DataError("expected " + std::to_string(p + 1) + " fields, got " + std::to_string(fields.size()), line_no);
    if (!seen.insert(fields[0]).second) throw DataError("duplicate case '" + fields[0] + "'", line_no);
    std::vector<double> row(p, kNaN);
    for (std::size_t j = 0; j < p; ++j) {
      const auto& tok = fields[j + 1];
      if (is_missing_token(tok)) continue;
      if (!parse_double(tok, row[j]) || !std::isfinite(row[j]))
        throw DataError("non-numeric value '" + tok + "'", line_no);
    }
    if (std::all_of(row.begin(), row.end(), [](double v) { return std::isnan(v); }))
      throw DataError("case '" + fields[0] + "' has no observed cells", line_no);
    ids.push_back(fields[0]);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("no data rows");

  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd values(n, static_cast<Eigen::Index>(p));
  Mask mask(n, static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(p); ++j) {
      values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      mask(i, j) = !std::isnan(values(i, j));
    }
  return LongitudinalDataset(std::move(grid), std::move(values), std::move(mask), std::move(ids));
}

LongitudinalDataset load_csv(const std::filesystem::path& path, const std::filesystem::path& grid_path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string first;
  if (!std::getline(in, first)) throw DataError("empty file");
  const auto header = split_fields(first);
  in.clear();
  in.seekg(0);
  if (header.size() == 3 && header[0] == "case_id" && header[1] == "time" && header[2] == "value")
    return read_long_csv(in);
  if (!header.empty() && header[0] == "case_id") {
    if (grid_path.empty()) throw DataError("matrix-format input requires a grid file", 1);
    std::ifstream grid(grid_path);
    if (!grid) throw DataError("cannot open grid file '" + grid_path.string() + "'");
    return read_matrix_csv(in, grid);
  }
  throw DataError("unrecognized header; expected 'case_id,time,value' or 'case_id,v1,...,vp'", 1);
}

void write_long_csv(const LongitudinalDataset& data, std::ostream& out) {
  out << "case_id,time,value\n";
  for (Eigen::Index i = 0; i < data.cases(); ++i)
    for (Eigen::Index j = 0; j < data.points(); ++j)
      if (data.observed(i, j))
        out << data.case_ids()[static_cast<std::size_t>(i)] << ','
            << format_double(data.grid()[static_cast<std::size_t>(j)]) << ','
            << format_double(data.values()(i, j)) << '\n';
}

void save_csv(const LongitudinalDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_long_csv(data, out);
}

LongitudinalDataset decimate(const LongitudinalDataset& data, double d, std::uint64_t seed) {
  if (!(d > 0.0 && d <= 1.0)) throw DomainError("decimate: keep probability must lie in (0, 1]");
  const auto n = data.cases();
  const auto p = data.points();
  Mask mask = Mask::Constant(n, p, false);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    bool any = false;
    while (!any) {
      for (Eigen::Index j = 0; j < p; ++j) {
        const bool keep = unif(rng) < d && data.observed(i, j);
        mask(i, j) = keep;
        any = any || keep;
      }
    }
  }
  return LongitudinalDataset(data.grid(), data.values(), std::move(mask), data.case_ids());
}

}  // namespace rfpca
