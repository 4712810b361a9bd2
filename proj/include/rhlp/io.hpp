#pragma once

// File formats: CSV signals in, JSON parameters and CSV curves/tables out.
// Reals are written with 17 significant digits in CSV; JSON numbers use the
// shortest representation that parses back to the identical double.

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "rhlp/em.hpp"
#include "rhlp/piecewise.hpp"
#include "rhlp/selection.hpp"
#include "rhlp/simulation.hpp"

namespace rhlp {

// Affine time map t' = (t - offset) / scale applied before fitting.
struct TimeScaling {
  bool enabled = false;
  double offset = 0.0;
  double scale = 1.0;
};

// Maps t onto [0, 1] when enable is set; otherwise returns the identity.
TimeScaling make_time_scaling(const Signal& signal, bool enable);
Signal apply_time_scaling(const Signal& signal, const TimeScaling& scaling);

// Header row naming columns "t" and "x" (other columns ignored), '#' comment
// lines and blank lines skipped, strictly increasing t. Throws DataError with
// the offending line number.
Signal parse_signal_csv(std::istream& in);
Signal read_signal_csv(const std::string& path);
void write_signal_csv(const Signal& signal, const std::string& path);

// Generic numeric CSV with a header row; comment and blank lines skipped.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  // Index of a named column; throws DataError when absent.
  std::size_t column(const std::string& name) const;
  VectorXd column_values(const std::string& name) const;
};
CsvTable parse_csv_table(std::istream& in);
CsvTable read_csv_table(const std::string& path);

// t, z, clean for a simulated signal.
void write_truth_csv(const SimulatedSignal& sim, const std::string& path);

nlohmann::json theta_to_json(const Theta& theta);
// Throws DataError on missing keys or inconsistent shapes.
Theta theta_from_json(const nlohmann::json& j);

struct FitRecord {
  Theta theta;
  double loglik = 0.0;
  double bic = 0.0;
  int n_iters = 0;
  bool converged = false;
  Index n = 0;
  TimeScaling time_scaling;
};

nlohmann::json fit_to_json(const FitResult& result, const TimeScaling& scaling);
FitRecord fit_from_json(const nlohmann::json& j);
void write_fit_json(const FitResult& result, const TimeScaling& scaling, const std::string& path);
FitRecord read_fit_json(const std::string& path);

// Columns t, x, denoised, z_hat, pi_1..pi_K, comp_1..comp_K where comp_k is
// regime k's polynomial evaluated at every t_i. `signal` supplies the t and x
// columns as they should appear in the file.
void write_curves_csv(const FitResult& result, const Signal& signal, const std::string& path);

nlohmann::json piecewise_to_json(const PiecewiseFit& fit);
// Columns t, x, denoised, z_hat.
void write_piecewise_curves_csv(const PiecewiseFit& fit, const Signal& signal,
                                const std::string& path);

nlohmann::json grid_to_json(const BicGridResult& grid);
void write_grid_csv(const BicGridResult& grid, std::ostream& out);

void write_study_csv(const StudyTable& table, std::ostream& out);
nlohmann::json study_to_json(const StudyTable& table);

// Writes text to path, throwing DataError when the file cannot be written.
void write_text_file(const std::string& path, const std::string& text);
// "%.17g"
std::string format_real(double v);

}  // namespace rhlp
