#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rfpca/error.hpp"
#include "rfpca_cli/cli.hpp"

namespace rfpca::cli {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

struct Entry {
  std::string value;
  std::size_t line;
};

double to_double(const Entry& e, const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw DataError("expected a number, got '" + text + "'", e.line);
  return v;
}

std::vector<double> to_doubles(const Entry& e) {
  std::vector<double> out;
  for (const auto& item : split_list(e.value)) out.push_back(to_double(e, item));
  if (out.empty()) throw DataError("expected a list of numbers", e.line);
  return out;
}

long long to_integer(const Entry& e) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
  if (e.value.empty() || ec != std::errc() || ptr != e.value.data() + e.value.size())
    throw DataError("expected an integer, got '" + e.value + "'", e.line);
  return v;
}

bool to_bool(const Entry& e) {
  if (e.value == "true") return true;
  if (e.value == "false") return false;
  throw DataError("expected true or false, got '" + e.value + "'", e.line);
}

// lo, hi, count
std::vector<double> to_k_grid(const Entry& e) {
  const auto v = to_doubles(e);
  if (v.size() != 3 || v[2] < 1 || v[2] != static_cast<int>(v[2]))
    throw DataError("K grid must be 'lo, hi, count'", e.line);
  if (v[0] < 0 || v[1] < v[0]) throw DataError("K grid needs 0 <= lo <= hi", e.line);
  return sim::linear_grid(v[0], v[1], static_cast<int>(v[2]));
}

const std::set<std::string> kKeys = {
    "schema_version", "scenario",       "p",           "n",           "replications",
    "true_rank",      "weights",        "noise",       "fit_q",       "estimators",
    "decimation",     "case_eps",       "case_k",      "case_direction",
    "cell_eps",       "cell_k",         "knot_divisor", "rho_tuning", "max_outer_iterations",
    "tolerance",      "overlap_threshold", "final_adjustment"};

}  // namespace

sim::MonteCarloConfig parse_sim_config(std::istream& in) {
  std::map<std::string, Entry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("expected 'key = value'", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!kKeys.contains(key)) throw DataError("unknown key '" + key + "'", line_no);
    if (entries.contains(key))
      throw DataError("duplicate key '" + key + "' (first on line " + std::to_string(entries[key].line) + ")",
                      line_no);
    entries[key] = Entry{value, line_no};
  }

  const auto version = entries.find("schema_version");
  if (version == entries.end()) throw DataError("missing schema_version");
  if (to_integer(version->second) != 1)
    throw DataError("unsupported schema_version " + version->second.value + " (expected 1)", version->second.line);

  sim::MonteCarloConfig c;
  auto get = [&](const char* key) -> const Entry* {
    const auto it = entries.find(key);
    return it == entries.end() ? nullptr : &it->second;
  };
  // Errors from library validation are reported against the config file.
  auto guarded = [&](const Entry& e, auto&& fn) {
    try {
      fn();
    } catch (const DomainError& err) {
      throw DataError(err.what(), e.line);
    }
  };

  if (const Entry* e = get("scenario")) guarded(*e, [&] { c.scenario = sim::preset(e->value); });
  if (const Entry* e = get("p")) c.scenario.p = static_cast<int>(to_integer(*e));
  if (const Entry* e = get("n")) c.scenario.n = static_cast<int>(to_integer(*e));
  if (const Entry* e = get("replications")) c.scenario.replications = static_cast<int>(to_integer(*e));
  if (const Entry* e = get("true_rank")) c.scenario.q = static_cast<int>(to_integer(*e));
  if (const Entry* e = get("weights")) c.scenario.pi = to_doubles(*e);
  if (const Entry* e = get("noise")) c.scenario.pi0 = to_double(*e, e->value);
  if (const Entry* e = get("fit_q")) c.fit_q = static_cast<int>(to_integer(*e));
  if (const Entry* e = get("estimators")) {
    c.estimators.clear();
    for (const auto& name : split_list(e->value)) guarded(*e, [&] { c.estimators.push_back(sim::estimator_from_string(name)); });
  }
  if (const Entry* e = get("decimation")) c.decimation = to_doubles(*e);

  sim::CaseDirection direction = sim::CaseDirection::next_eigenvector;
  if (const Entry* e = get("case_direction")) {
    if (e->value == "next_eigenvector") {
      direction = sim::CaseDirection::next_eigenvector;
    } else if (e->value == "random_orthogonal") {
      direction = sim::CaseDirection::random_orthogonal;
    } else {
      throw DataError("case_direction must be next_eigenvector or random_orthogonal", e->line);
    }
  }
  auto add_settings = [&](const char* eps_key, const char* k_key, bool casewise) {
    const Entry* eps = get(eps_key);
    const Entry* k = get(k_key);
    if (!eps && !k) return;
    if (!eps || !k)
      throw DataError(std::string(eps_key) + " and " + k_key + " must be given together", (eps ? eps : k)->line);
    const auto grid = to_k_grid(*k);
    for (double value : to_doubles(*eps)) {
      sim::ContaminationSetting s;
      (casewise ? s.eps_case : s.eps_cell) = value;
      s.k_grid = grid;
      s.case_direction = direction;
      guarded(*eps, [&] {
        for (double kk : grid) sim::ContaminationSpec{s.eps_case, s.eps_cell, kk, direction}.validate();
      });
      c.settings.push_back(s);
    }
  };
  add_settings("case_eps", "case_k", true);
  add_settings("cell_eps", "cell_k", false);

  if (const Entry* e = get("knot_divisor")) c.mm.knot_divisor = static_cast<int>(to_integer(*e));
  if (const Entry* e = get("rho_tuning")) c.mm.rho_tuning = to_double(*e, e->value);
  if (const Entry* e = get("max_outer_iterations")) c.mm.max_outer_iterations = static_cast<int>(to_integer(*e));
  if (const Entry* e = get("tolerance")) c.mm.tolerance = to_double(*e, e->value);
  if (const Entry* e = get("overlap_threshold")) c.mm.overlap_threshold = static_cast<int>(to_integer(*e));
  if (const Entry* e = get("final_adjustment")) c.mm.final_adjustment = to_bool(*e);

  try {
    c.scenario.validate();
    c.mm.q = c.fit_q;
    c.mm.validate();
    if (c.fit_q < 1) throw DomainError("fit_q must be >= 1");
    for (double d : c.decimation)
      if (!(d > 0.0 && d <= 1.0)) throw DomainError("decimation rates must lie in (0, 1]");
  } catch (const DomainError& err) {
    throw DataError(std::string("invalid configuration: ") + err.what());
  }
  return c;
}

sim::MonteCarloConfig load_sim_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path.string() + "'");
  try {
    return parse_sim_config(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace rfpca::cli
