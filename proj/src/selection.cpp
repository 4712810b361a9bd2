#include "rhlp/selection.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rhlp/errors.hpp"
#include "rhlp/parallel.hpp"

namespace rhlp {

int n_free_params(const ModelSpec& spec) {
  return (spec.K - 1) * (spec.q + 1) + spec.K * (spec.p + 1) + spec.K;
}

double bic(double loglik, const ModelSpec& spec, Index n) {
  if (n < 1) throw std::invalid_argument("bic: n must be >= 1");
  return loglik - 0.5 * n_free_params(spec) * std::log(static_cast<double>(n));
}

BicGridResult select_model(const Signal& signal, IntRange k_range, IntRange p_range, int q,
                           const FitOptions& opts, int workers) {
  if (k_range.lo > k_range.hi || p_range.lo > p_range.hi)
    throw std::invalid_argument("select_model: empty grid range");
  if (k_range.lo < 1 || p_range.lo < 0 || q < 0)
    throw std::invalid_argument("select_model: invalid grid bounds");

  std::vector<GridKey> cells;
  for (int K = k_range.lo; K <= k_range.hi; ++K)
    for (int p = p_range.lo; p <= p_range.hi; ++p) cells.emplace_back(K, p);

  FitOptions cell_opts = opts;
  cell_opts.workers = 1;

  std::vector<std::optional<CellScore>> scores(cells.size());
  std::vector<std::string> failures(cells.size());
  parallel_for(cells.size(), workers, [&](std::size_t c) {
    const ModelSpec spec{cells[c].first, cells[c].second, q};
    try {
      const FitResult fit = em_fit(signal, spec, cell_opts);
      CellScore s;
      s.loglik = fit.loglik();
      s.n_params = n_free_params(spec);
      s.bic = bic(s.loglik, spec, signal.size());
      s.n_iters = fit.n_iters;
      s.converged = fit.converged;
      s.restart_index = fit.restart_index;
      scores[c] = s;
    } catch (const std::exception& e) {
      failures[c] = e.what();
    }
  });

  BicGridResult out;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (scores[c])
      out.scores.emplace(cells[c], *scores[c]);
    else
      out.failures.emplace(cells[c], failures[c]);
  }
  if (out.scores.empty()) throw NumericalError("select_model: every grid cell failed");

  // std::map iterates in (K, p) order, so a strict comparison keeps the
  // smallest K, then the smallest p, among equal scores.
  const CellScore* best = nullptr;
  for (const auto& [key, s] : out.scores) {
    if (best == nullptr || s.bic > best->bic) {
      best = &s;
      out.best = key;
    }
  }
  return out;
}

}  // namespace rhlp
