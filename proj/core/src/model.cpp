#include "rfpca/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "rfpca/error.hpp"

namespace rfpca {

namespace {

using json = nlohmann::json;

json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Eigen::VectorXd vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  Eigen::MatrixXd m(rows, cols);
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows) throw DataError("model: matrix row count mismatch");
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = data[static_cast<std::size_t>(r)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw DataError("model: matrix column count mismatch");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

}  // namespace

Eigen::VectorXd predict(const FpcaModel& model, const Eigen::VectorXd& case_scores) {
  if (case_scores.size() != model.components())
    throw DomainError("predict: score vector length != number of components");
  Eigen::VectorXd out = model.mu;
  for (Eigen::Index k = 0; k < model.components(); ++k) out += case_scores[k] * model.directions.col(k);
  return out;
}

Eigen::MatrixXd FpcaModel::fitted_values() const {
  Eigen::MatrixXd out(scores.rows(), mu.size());
  for (Eigen::Index i = 0; i < scores.rows(); ++i)
    out.row(i) = predict(*this, scores.row(i).transpose()).transpose();
  return out;
}

double explained_proportion(double v0, double vq) {
  if (!(v0 > 0.0)) throw DomainError("explained_proportion: V_0 must be positive");
  return std::clamp(1.0 - vq / v0, 0.0, 1.0);
}

double explained_proportion(const FpcaModel& model) {
  if (model.variance_trace.empty()) throw DomainError("explained_proportion: empty variance trace");
  return explained_proportion(model.variance_trace.front(), model.variance_trace.back());
}

Eigen::VectorXd case_mae(const FpcaModel& model, const LongitudinalDataset& data) {
  if (data.cases() != model.scores.rows() || data.points() != model.points())
    throw DomainError("case_mae: model and data shapes differ");
  const Eigen::MatrixXd fitted = model.fitted_values();
  Eigen::VectorXd out(data.cases());
  for (Eigen::Index i = 0; i < data.cases(); ++i) {
    double acc = 0.0;
    int count = 0;
    for (Eigen::Index j = 0; j < data.points(); ++j)
      if (data.observed(i, j)) {
        acc += std::abs(data.values()(i, j) - fitted(i, j));
        ++count;
      }
    out[i] = acc / count;
  }
  return out;
}

void write_model(const FpcaModel& model, std::ostream& out) {
  json j;
  j["format"] = "rfpca-model";
  j["version"] = 1;
  j["estimator"] = model.estimator;
  j["grid"] = model.grid;
  j["mu"] = to_json(model.mu);
  if (model.basis) {
    j["basis"] = {{"degree", model.basis->degree()}, {"knots", model.basis->knots()}};
  } else {
    j["basis"] = nullptr;
  }
  j["alpha"] = to_json(model.alpha);
  j["directions"] = to_json(model.directions);
  j["scores"] = to_json(model.scores);
  j["case_ids"] = model.case_ids;
  json stages = json::array();
  for (const auto& s : model.sigma_stages) stages.push_back(to_json(s));
  j["sigma_stages"] = stages;
  j["variance_trace"] = model.variance_trace;
  j["explained"] = model.explained;
  j["flagged_cases"] = model.flagged_cases;
  out << j.dump(1) << '\n';
}

FpcaModel read_model(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(std::string("model: malformed JSON: ") + e.what());
  }
  try {
    if (j.value("format", std::string{}) != "rfpca-model") throw DataError("model: not an rfpca model file");
    FpcaModel m;
    m.estimator = j.at("estimator").get<std::string>();
    m.grid = j.at("grid").get<std::vector<double>>();
    m.mu = vector_from(j.at("mu"));
    if (!j.at("basis").is_null())
      m.basis = SplineBasis::from_knots(m.grid, j["basis"].at("knots").get<std::vector<double>>(),
                                        j["basis"].at("degree").get<int>());
    m.alpha = matrix_from(j.at("alpha"));
    m.directions = matrix_from(j.at("directions"));
    m.scores = matrix_from(j.at("scores"));
    m.case_ids = j.at("case_ids").get<std::vector<std::string>>();
    for (const auto& s : j.at("sigma_stages")) m.sigma_stages.push_back(vector_from(s));
    m.variance_trace = j.at("variance_trace").get<std::vector<double>>();
    m.explained = j.at("explained").get<double>();
    m.flagged_cases = j.at("flagged_cases").get<std::vector<int>>();
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  }
}

void save_model(const FpcaModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_model(model, out);
}

FpcaModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return read_model(in);
}

}  // namespace rfpca
