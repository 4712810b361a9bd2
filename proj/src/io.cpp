#include "rhlp/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rhlp/errors.hpp"

namespace rhlp {
namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool skippable(std::string_view line) {
  const auto body = trim(line);
  return body.empty() || body.front() == '#';
}

std::string line_prefix(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

double parse_real(std::string_view cell, std::size_t line_no) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc{} || ptr != last || !std::isfinite(v))
    throw DataError(line_prefix(line_no) + "non-numeric value '" + std::string(cell) + "'");
  return v;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw DataError(std::string("json: missing key '") + key + "'");
  return j.at(key);
}

MatrixXd matrix_from_json(const json& j, Index rows, Index cols, const char* what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows)
    throw DataError(std::string("json: '") + what + "' has the wrong number of rows");
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw DataError(std::string("json: '") + what + "' has the wrong number of columns");
    for (Index k = 0; k < cols; ++k) {
      const json& cell = row[static_cast<std::size_t>(k)];
      if (!cell.is_number()) throw DataError(std::string("json: '") + what + "' is not numeric");
      m(i, k) = cell.get<double>();
    }
  }
  return m;
}

template <typename T>
T get_as(const json& j, const char* key) {
  try {
    return require(j, key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(std::string("json: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  out.flush();
  if (!out) throw DataError("error writing '" + path + "'");
}

TimeScaling make_time_scaling(const Signal& signal, bool enable) {
  TimeScaling s;
  if (!enable || signal.size() == 0) return s;
  s.enabled = true;
  s.offset = signal.t[0];
  const double span = signal.t[signal.size() - 1] - signal.t[0];
  s.scale = span > 0.0 ? span : 1.0;
  return s;
}

Signal apply_time_scaling(const Signal& signal, const TimeScaling& scaling) {
  if (!scaling.enabled) return signal;
  Signal out = signal;
  out.t = (signal.t.array() - scaling.offset) / scaling.scale;
  return out;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t c = 0; c < columns.size(); ++c)
    if (columns[c] == name) return c;
  throw DataError("csv: missing column '" + name + "'");
}

VectorXd CsvTable::column_values(const std::string& name) const {
  const std::size_t c = column(name);
  VectorXd out(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Index>(r)] = rows[r][c];
  return out;
}

CsvTable parse_csv_table(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    const auto cells = split_commas(line);
    if (!have_header) {
      for (auto c : cells) table.columns.emplace_back(c);
      have_header = true;
      continue;
    }
    if (cells.size() != table.columns.size())
      throw DataError(line_prefix(line_no) + "expected " + std::to_string(table.columns.size()) +
                      " columns, found " + std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (auto c : cells) row.push_back(parse_real(c, line_no));
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw DataError("csv: missing header row");
  return table;
}

CsvTable read_csv_table(const std::string& path) {
  auto in = open_input(path);
  return parse_csv_table(in);
}

Signal parse_signal_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t n_cols = 0;
  std::size_t t_col = 0;
  std::size_t x_col = 0;
  bool have_header = false;
  std::vector<double> ts;
  std::vector<double> xs;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    const auto cells = split_commas(line);
    if (!have_header) {
      bool has_t = false;
      bool has_x = false;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (cells[c] == "t" && !has_t) {
          t_col = c;
          has_t = true;
        } else if (cells[c] == "x" && !has_x) {
          x_col = c;
          has_x = true;
        }
      }
      if (!has_t || !has_x)
        throw DataError(line_prefix(line_no) + "header must name columns 't' and 'x'");
      n_cols = cells.size();
      have_header = true;
      continue;
    }
    if (cells.size() != n_cols)
      throw DataError(line_prefix(line_no) + "expected " + std::to_string(n_cols) +
                      " columns, found " + std::to_string(cells.size()));
    const double t = parse_real(cells[t_col], line_no);
    const double x = parse_real(cells[x_col], line_no);
    if (!ts.empty() && !(t > ts.back()))
      throw DataError(line_prefix(line_no) + "time " + std::string(cells[t_col]) +
                      " is not strictly greater than the previous time");
    ts.push_back(t);
    xs.push_back(x);
  }
  if (!have_header) throw DataError("signal csv: missing header row 't,x'");
  if (ts.empty()) throw DataError("signal csv: no data rows");
  Signal s;
  s.t = Eigen::Map<const VectorXd>(ts.data(), static_cast<Index>(ts.size()));
  s.x = Eigen::Map<const VectorXd>(xs.data(), static_cast<Index>(xs.size()));
  return s;
}

Signal read_signal_csv(const std::string& path) {
  auto in = open_input(path);
  try {
    return parse_signal_csv(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_signal_csv(const Signal& signal, const std::string& path) {
  std::ostringstream out;
  out << "t,x\n";
  for (Index i = 0; i < signal.size(); ++i)
    out << format_real(signal.t[i]) << ',' << format_real(signal.x[i]) << '\n';
  write_text_file(path, out.str());
}

void write_truth_csv(const SimulatedSignal& sim, const std::string& path) {
  std::ostringstream out;
  out << "t,z,clean\n";
  for (Index i = 0; i < sim.signal.size(); ++i)
    out << format_real(sim.signal.t[i]) << ',' << sim.z_true.z[static_cast<std::size_t>(i)] << ','
        << format_real(sim.clean[i]) << '\n';
  write_text_file(path, out.str());
}

json theta_to_json(const Theta& theta) {
  json j;
  j["spec"] = {{"K", theta.spec.K}, {"p", theta.spec.p}, {"q", theta.spec.q}};
  j["w"] = matrix_to_json(theta.w.w);
  j["beta"] = matrix_to_json(theta.beta);
  j["sigma2"] = vector_to_json(theta.sigma2);
  return j;
}

Theta theta_from_json(const json& j) {
  Theta theta;
  const json& spec = require(j, "spec");
  theta.spec.K = get_as<int>(spec, "K");
  theta.spec.p = get_as<int>(spec, "p");
  theta.spec.q = get_as<int>(spec, "q");
  try {
    theta.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("json: ") + e.what());
  }
  theta.w.w = matrix_from_json(require(j, "w"), theta.spec.K, theta.spec.gate_dim(), "w");
  theta.beta = matrix_from_json(require(j, "beta"), theta.spec.K, theta.spec.reg_dim(), "beta");
  const json& s2 = require(j, "sigma2");
  if (!s2.is_array() || static_cast<Index>(s2.size()) != theta.spec.K)
    throw DataError("json: 'sigma2' must have K entries");
  theta.sigma2.resize(theta.spec.K);
  for (Index k = 0; k < theta.spec.K; ++k) {
    if (!s2[static_cast<std::size_t>(k)].is_number())
      throw DataError("json: 'sigma2' is not numeric");
    theta.sigma2[k] = s2[static_cast<std::size_t>(k)].get<double>();
  }
  return theta;
}

json fit_to_json(const FitResult& result, const TimeScaling& scaling) {
  const Index n = result.denoised.size();
  json j = theta_to_json(result.theta);
  j["loglik"] = result.loglik();
  j["bic"] = bic(result.loglik(), result.theta.spec, n);
  j["n"] = n;
  j["n_iters"] = result.n_iters;
  j["converged"] = result.converged;
  j["restart_index"] = result.restart_index;
  j["time_rescale"] = {
      {"enabled", scaling.enabled}, {"offset", scaling.offset}, {"scale", scaling.scale}};
  j["diagnostics"] = {{"variance_floor_active", result.variance_floor_active},
                      {"gates_saturated", result.gates_saturated},
                      {"rank_deficient", result.rank_deficient},
                      {"undersized_init", result.undersized_init}};
  return j;
}

FitRecord fit_from_json(const json& j) {
  FitRecord rec;
  rec.theta = theta_from_json(j);
  rec.loglik = get_as<double>(j, "loglik");
  rec.bic = get_as<double>(j, "bic");
  rec.n = get_as<Index>(j, "n");
  rec.n_iters = get_as<int>(j, "n_iters");
  rec.converged = get_as<bool>(j, "converged");
  const json& ts = require(j, "time_rescale");
  rec.time_scaling.enabled = get_as<bool>(ts, "enabled");
  rec.time_scaling.offset = get_as<double>(ts, "offset");
  rec.time_scaling.scale = get_as<double>(ts, "scale");
  return rec;
}

void write_fit_json(const FitResult& result, const TimeScaling& scaling, const std::string& path) {
  write_text_file(path, fit_to_json(result, scaling).dump(2) + "\n");
}

FitRecord read_fit_json(const std::string& path) {
  auto in = open_input(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path + ": invalid json: " + e.what());
  }
  return fit_from_json(j);
}

void write_curves_csv(const FitResult& result, const Signal& signal, const std::string& path) {
  const int K = result.theta.spec.K;
  const Index n = signal.size();
  if (result.denoised.size() != n || result.gate_matrix.pi.rows() != n)
    throw std::invalid_argument("write_curves_csv: result and signal lengths differ");

  const MatrixXd& pi = result.gate_matrix.pi;

  std::ostringstream out;
  out << "t,x,denoised,z_hat";
  for (int k = 1; k <= K; ++k) out << ",pi_" << k;
  for (int k = 1; k <= K; ++k) out << ",comp_" << k;
  out << '\n';
  for (Index i = 0; i < n; ++i) {
    out << format_real(signal.t[i]) << ',' << format_real(signal.x[i]) << ','
        << format_real(result.denoised[i]) << ','
        << result.segmentation.z[static_cast<std::size_t>(i)];
    for (int k = 0; k < K; ++k) out << ',' << format_real(pi(i, k));
    for (int k = 0; k < K; ++k) out << ',' << format_real(result.component_curves(i, k));
    out << '\n';
  }
  write_text_file(path, out.str());
}

json piecewise_to_json(const PiecewiseFit& fit) {
  json j;
  j["K"] = fit.beta.rows();
  j["p"] = fit.beta.cols() - 1;
  j["cuts"] = fit.cuts;
  j["beta"] = matrix_to_json(fit.beta);
  j["sse"] = fit.sse;
  return j;
}

void write_piecewise_curves_csv(const PiecewiseFit& fit, const Signal& signal,
                                const std::string& path) {
  std::ostringstream out;
  out << "t,x,denoised,z_hat\n";
  for (Index i = 0; i < signal.size(); ++i)
    out << format_real(signal.t[i]) << ',' << format_real(signal.x[i]) << ','
        << format_real(fit.denoised[i]) << ',' << fit.segmentation.z[static_cast<std::size_t>(i)]
        << '\n';
  write_text_file(path, out.str());
}

json grid_to_json(const BicGridResult& grid) {
  json cells = json::array();
  for (const auto& [key, s] : grid.scores) {
    cells.push_back({{"K", key.first},
                     {"p", key.second},
                     {"loglik", s.loglik},
                     {"n_params", s.n_params},
                     {"bic", s.bic},
                     {"n_iters", s.n_iters},
                     {"converged", s.converged},
                     {"restart_index", s.restart_index}});
  }
  json failed = json::array();
  for (const auto& [key, msg] : grid.failures)
    failed.push_back({{"K", key.first}, {"p", key.second}, {"error", msg}});
  return {{"best", {{"K", grid.best.first}, {"p", grid.best.second}}},
          {"cells", std::move(cells)},
          {"failures", std::move(failed)}};
}

void write_grid_csv(const BicGridResult& grid, std::ostream& out) {
  out << "K,p,loglik,n_params,bic,n_iters,converged,best\n";
  for (const auto& [key, s] : grid.scores)
    out << key.first << ',' << key.second << ',' << format_real(s.loglik) << ',' << s.n_params
        << ',' << format_real(s.bic) << ',' << s.n_iters << ',' << (s.converged ? 1 : 0) << ','
        << (key == grid.best ? 1 : 0) << '\n';
}

void write_study_csv(const StudyTable& table, std::ostream& out) {
  out << "n,replicates,failures,rhlp_misclassification,piecewise_misclassification,"
         "rhlp_denoising_error,piecewise_denoising_error\n";
  for (const StudyRow& r : table.rows)
    out << r.n << ',' << r.replicates << ',' << r.failures << ','
        << format_real(r.rhlp_misclassification) << ','
        << format_real(r.piecewise_misclassification) << ','
        << format_real(r.rhlp_denoising_error) << ',' << format_real(r.piecewise_denoising_error)
        << '\n';
}

json study_to_json(const StudyTable& table) {
  json rows = json::array();
  for (const StudyRow& r : table.rows)
    rows.push_back({{"n", r.n},
                    {"replicates", r.replicates},
                    {"failures", r.failures},
                    {"rhlp_misclassification", r.rhlp_misclassification},
                    {"piecewise_misclassification", r.piecewise_misclassification},
                    {"rhlp_denoising_error", r.rhlp_denoising_error},
                    {"piecewise_denoising_error", r.piecewise_denoising_error}});
  return {{"rows", std::move(rows)}};
}

}  // namespace rhlp
