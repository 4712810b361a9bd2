#include "rhlp/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "rhlp/em.hpp"
#include "rhlp/errors.hpp"
#include "rhlp/io.hpp"
#include "rhlp/kernels.hpp"
#include "rhlp/parallel.hpp"
#include "rhlp/piecewise.hpp"
#include "rhlp/selection.hpp"
#include "rhlp/simulation.hpp"

namespace rhlp {
namespace {

using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitFlags {
  FitOptions opts;
  std::string init = "uniform";
};

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--restarts", f.opts.n_restarts, "EM restarts")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--max-iters", f.opts.max_em_iters, "EM iteration cap")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--tol", f.opts.em_rel_tol, "relative log-likelihood tolerance")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--irls-iters", f.opts.irls_max_iters, "IRLS iteration cap")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--irls-tol", f.opts.irls_grad_tol, "IRLS gradient tolerance")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--variance-floor", f.opts.variance_floor_factor,
                  "variance floor as a fraction of var(x)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.opts.rng_seed, "random seed")->capture_default_str();
  cmd->add_option("--init", f.init, "first-restart initialization")
      ->capture_default_str()
      ->check(CLI::IsMember({"uniform", "random"}));
}

FitOptions finish_fit_flags(const FitFlags& f, int workers) {
  FitOptions opts = f.opts;
  opts.init_strategy =
      f.init == "random" ? InitStrategy::random_segments : InitStrategy::uniform_segments;
  opts.workers = workers;
  return opts;
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-")
    out << text;
  else
    write_text_file(path, text);
}

Theta load_theta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path + ": invalid json: " + e.what());
  }
  return theta_from_json(j);
}

GeneratorConfig generator_from_flags(const std::string& theta_path, Index n, std::uint64_t seed,
                                     double t_start, double t_end) {
  GeneratorConfig cfg = default_generator_config(n, seed);
  if (!theta_path.empty()) {
    cfg.theta_true = load_theta(theta_path);
    cfg.spec = cfg.theta_true.spec;
  }
  cfg.t_start = t_start;
  cfg.t_end = t_end;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  return cfg;
}

int guarded(std::ostream& err, const std::function<void()>& action) {
  try {
    action();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Regression with a hidden logistic process: fit, select, simulate, evaluate"};
  app.require_subcommand(1);

  std::string kernel_name = "auto";
  int workers = default_workers();
  app.add_option("--kernels", kernel_name, "arithmetic kernels")
      ->check(CLI::IsMember({"auto", "scalar", "avx2"}));
  app.add_option("--workers", workers, "worker threads (default: RHLP_WORKERS or all cores)")
      ->check(CLI::PositiveNumber);

  // fit
  auto* fit = app.add_subcommand("fit", "fit a model to a t,x signal");
  std::string fit_input, fit_output, fit_curves, fit_format = "json";
  ModelSpec fit_spec{3, 2, 1};
  bool fit_rescale = false;
  FitFlags fit_flags;
  fit->add_option("--input", fit_input, "signal CSV with header t,x")->required();
  fit->add_option("--K", fit_spec.K, "number of regimes")->capture_default_str()->check(CLI::PositiveNumber);
  fit->add_option("--p", fit_spec.p, "regression degree")->capture_default_str()->check(CLI::NonNegativeNumber);
  fit->add_option("--q", fit_spec.q, "gate degree")->capture_default_str()->check(CLI::NonNegativeNumber);
  fit->add_option("--output", fit_output, "output path (default: stdout)");
  fit->add_option("--curves", fit_curves, "also write the curves CSV here");
  fit->add_option("--format", fit_format, "json parameters or csv curves on --output")
      ->capture_default_str()
      ->check(CLI::IsMember({"json", "csv"}));
  fit->add_flag("--rescale-time", fit_rescale, "map t onto [0,1] before fitting");
  add_fit_flags(fit, fit_flags);

  // select
  auto* sel = app.add_subcommand("select", "BIC grid search over (K, p)");
  std::string sel_input, sel_output, sel_format = "json";
  IntRange k_range{2, 8}, p_range{0, 6};
  int sel_q = 1;
  bool sel_rescale = false;
  FitFlags sel_flags;
  sel->add_option("--input", sel_input, "signal CSV with header t,x")->required();
  sel->add_option("--kmin", k_range.lo)->capture_default_str()->check(CLI::PositiveNumber);
  sel->add_option("--kmax", k_range.hi)->capture_default_str()->check(CLI::PositiveNumber);
  sel->add_option("--pmin", p_range.lo)->capture_default_str()->check(CLI::NonNegativeNumber);
  sel->add_option("--pmax", p_range.hi)->capture_default_str()->check(CLI::NonNegativeNumber);
  sel->add_option("--q", sel_q)->capture_default_str()->check(CLI::NonNegativeNumber);
  sel->add_option("--output", sel_output, "output path (default: stdout)");
  sel->add_option("--format", sel_format)->capture_default_str()->check(CLI::IsMember({"json", "csv"}));
  sel->add_flag("--rescale-time", sel_rescale, "map t onto [0,1] before fitting");
  add_fit_flags(sel, sel_flags);

  // simulate
  auto* sim = app.add_subcommand("simulate", "draw a signal from the generative model");
  std::string sim_output, sim_truth, sim_theta;
  Index sim_n = 500;
  std::uint64_t sim_seed = 0;
  double t_start = 0.0, t_end = 5.0;
  sim->add_option("--n", sim_n, "number of samples")->capture_default_str()->check(CLI::PositiveNumber);
  sim->add_option("--seed", sim_seed)->capture_default_str();
  sim->add_option("--theta", sim_theta, "parameter JSON (default: built-in three-regime model)");
  sim->add_option("--t-start", t_start)->capture_default_str();
  sim->add_option("--t-end", t_end)->capture_default_str();
  sim->add_option("--output", sim_output, "signal CSV (default: stdout)");
  sim->add_option("--truth", sim_truth, "write t,z,clean here");

  // study
  auto* study = app.add_subcommand("study", "misclassification and denoising versus n");
  std::vector<Index> study_ns{100, 300, 700, 1000};
  int study_reps = 20;
  std::uint64_t study_seed = 0;
  std::string study_output, study_format = "csv", study_theta;
  FitFlags study_flags;
  study->add_option("--ns", study_ns, "sample sizes")->delimiter(',')->capture_default_str();
  study->add_option("--replicates", study_reps)->capture_default_str()->check(CLI::PositiveNumber);
  study->add_option("--study-seed", study_seed, "signal generation seed")->capture_default_str();
  study->add_option("--theta", study_theta, "parameter JSON for the generator");
  study->add_option("--output", study_output, "output path (default: stdout)");
  study->add_option("--format", study_format)->capture_default_str()->check(CLI::IsMember({"json", "csv"}));
  add_fit_flags(study, study_flags);

  // baseline
  auto* base = app.add_subcommand("baseline", "piecewise polynomial regression by DP");
  std::string base_input, base_output, base_curves, base_format = "json";
  int base_K = 3, base_p = 2;
  Index base_min_seg = -1;
  base->add_option("--input", base_input, "signal CSV with header t,x")->required();
  base->add_option("--K", base_K)->capture_default_str()->check(CLI::PositiveNumber);
  base->add_option("--p", base_p)->capture_default_str()->check(CLI::NonNegativeNumber);
  base->add_option("--min-seg", base_min_seg, "minimum segment length (default p+2)");
  base->add_option("--output", base_output, "output path (default: stdout)");
  base->add_option("--curves", base_curves, "also write t,x,denoised,z_hat here");
  base->add_option("--format", base_format)->capture_default_str()->check(CLI::IsMember({"json", "csv"}));

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "score an estimate against a simulated truth");
  std::string eval_truth, eval_estimate, eval_output;
  eval->add_option("--truth", eval_truth, "CSV with columns z, clean")->required();
  eval->add_option("--estimate", eval_estimate, "CSV with columns z_hat, denoised")->required();
  eval->add_option("--output", eval_output, "output path (default: stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  return guarded(err, [&] {
    kernels::Isa isa;
    if (!kernels::parse_isa(kernel_name, isa) || !kernels::isa_available(isa))
      throw UsageError("kernels '" + kernel_name + "' are not available on this CPU");
    kernels::set_active_isa(isa);

    if (fit->parsed()) {
      const FitOptions opts = finish_fit_flags(fit_flags, workers);
      const Signal raw = read_signal_csv(fit_input);
      const TimeScaling scaling = make_time_scaling(raw, fit_rescale);
      const FitResult result = em_fit(apply_time_scaling(raw, scaling), fit_spec, opts);
      if (fit_format == "json") {
        emit(fit_output, fit_to_json(result, scaling).dump(2) + "\n", out);
      } else if (fit_curves.empty()) {
        if (fit_output.empty() || fit_output == "-") throw UsageError("--format csv needs --output or --curves");
        write_curves_csv(result, raw, fit_output);
      } else {
        throw UsageError("--format csv writes curves to --output; drop --curves");
      }
      if (!fit_curves.empty()) write_curves_csv(result, raw, fit_curves);
      if (!result.converged) err << "warning: EM stopped at the iteration cap\n";
      if (result.variance_floor_active) err << "warning: variance floor active at convergence\n";
    } else if (sel->parsed()) {
      if (k_range.lo > k_range.hi || p_range.lo > p_range.hi)
        throw UsageError("empty grid: need kmin <= kmax and pmin <= pmax");
      const FitOptions opts = finish_fit_flags(sel_flags, 1);
      const Signal raw = read_signal_csv(sel_input);
      const Signal signal = apply_time_scaling(raw, make_time_scaling(raw, sel_rescale));
      const BicGridResult grid = select_model(signal, k_range, p_range, sel_q, opts, workers);
      if (sel_format == "json") {
        emit(sel_output, grid_to_json(grid).dump(2) + "\n", out);
      } else {
        std::ostringstream s;
        write_grid_csv(grid, s);
        emit(sel_output, s.str(), out);
      }
      for (const auto& [key, msg] : grid.failures)
        err << "warning: cell K=" << key.first << " p=" << key.second << " failed: " << msg << '\n';
    } else if (sim->parsed()) {
      const GeneratorConfig cfg = generator_from_flags(sim_theta, sim_n, sim_seed, t_start, t_end);
      const SimulatedSignal s = generate(cfg);
      if (sim_output.empty() || sim_output == "-") {
        out << "t,x\n";
        for (Index i = 0; i < s.signal.size(); ++i)
          out << format_real(s.signal.t[i]) << ',' << format_real(s.signal.x[i]) << '\n';
      } else {
        write_signal_csv(s.signal, sim_output);
      }
      if (!sim_truth.empty()) write_truth_csv(s, sim_truth);
    } else if (study->parsed()) {
      if (study_ns.empty()) throw UsageError("--ns needs at least one sample size");
      for (Index n : study_ns)
        if (n < 1) throw UsageError("--ns entries must be positive");
      StudyConfig cfg;
      cfg.ns = study_ns;
      cfg.n_replicates = study_reps;
      cfg.base = generator_from_flags(study_theta, 500, study_seed, 0.0, 5.0);
      const StudyTable table = run_study(cfg, finish_fit_flags(study_flags, 1), workers);
      if (study_format == "csv") {
        std::ostringstream s;
        write_study_csv(table, s);
        emit(study_output, s.str(), out);
      } else {
        emit(study_output, study_to_json(table).dump(2) + "\n", out);
      }
    } else if (base->parsed()) {
      const Signal signal = read_signal_csv(base_input);
      const Index min_seg = base_min_seg < 0 ? base_p + 2 : base_min_seg;
      const PiecewiseFit pw = piecewise_fit(signal, base_K, base_p, min_seg);
      if (base_format == "json") {
        emit(base_output, piecewise_to_json(pw).dump(2) + "\n", out);
      } else {
        if (base_output.empty() || base_output == "-") throw UsageError("--format csv needs --output");
        write_piecewise_curves_csv(pw, signal, base_output);
      }
      if (!base_curves.empty()) write_piecewise_curves_csv(pw, signal, base_curves);
    } else if (eval->parsed()) {
      const CsvTable truth = read_csv_table(eval_truth);
      const CsvTable est = read_csv_table(eval_estimate);
      const VectorXd z_true = truth.column_values("z");
      const VectorXd z_hat = est.column_values("z_hat");
      const VectorXd clean = truth.column_values("clean");
      const VectorXd denoised = est.column_values("denoised");
      if (z_true.size() != z_hat.size())
        throw DataError("truth and estimate have different row counts");
      Segmentation a, b;
      int K = 1;
      for (Index i = 0; i < z_true.size(); ++i) {
        a.z.push_back(static_cast<int>(z_true[i]));
        b.z.push_back(static_cast<int>(z_hat[i]));
        K = std::max({K, a.z.back(), b.z.back()});
      }
      const json j{{"n", z_true.size()},
                   {"misclassification_rate", misclassification_rate(a, b, K)},
                   {"denoising_error", denoising_error(denoised, clean)}};
      emit(eval_output, j.dump(2) + "\n", out);
    }
  });
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace rhlp
