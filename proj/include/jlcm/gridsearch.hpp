#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <functional>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "jlcm/error.hpp"
#include "jlcm/optimizer.hpp"
#include "jlcm/parallel.hpp"

namespace jlcm {

struct StartRecord {
  int start = 0;
  std::uint64_t seed = 0;
  OptimizerStatus status = OptimizerStatus::degenerate;
  double loglik = 0.0;
  int iterations = 0;
  bool monotone = true;  // objective never decreased over accepted iterations
  std::string message;
};

struct GridsearchResult {
  int best = -1;
  OptimizerResult result;
  std::vector<StartRecord> starts;
};

using InitGenerator = std::function<Eigen::VectorXd(int start, std::mt19937_64& rng)>;
using FitOnce = std::function<OptimizerResult(int start, const Eigen::VectorXd& init)>;

inline bool trace_monotone(const std::vector<IterationRecord>& trace, double initial) {
  double prev = initial;
  for (const auto& r : trace) {
    if (r.objective < prev) return false;
    prev = r.objective;
  }
  return true;
}

// Runs n_starts independent fits from generated inits. Start s draws its init from an
// mt19937_64 seeded with derive_seed(seed, s). The selected start has the largest final
// log-likelihood among converged starts (lowest index on ties). When no start converges this
// throws, unless require_convergence is false, in which case the best finite start is returned
// with its own status.
inline GridsearchResult gridsearch(const FitOnce& fit_once, int n_starts, std::uint64_t seed,
                                   const InitGenerator& init_generator, int jobs = 1,
                                   bool require_convergence = true) {
  if (n_starts < 1) throw ConfigError("gridsearch needs at least one start");
  std::vector<OptimizerResult> results(static_cast<std::size_t>(n_starts));
  std::vector<StartRecord> records(static_cast<std::size_t>(n_starts));
  parallel_for(static_cast<std::size_t>(n_starts), jobs, [&](std::size_t s) {
    auto& rec = records[s];
    rec.start = static_cast<int>(s);
    rec.seed = derive_seed(seed, s);
    std::mt19937_64 rng(rec.seed);
    try {
      const Eigen::VectorXd init = init_generator(static_cast<int>(s), rng);
      results[s] = fit_once(static_cast<int>(s), init);
      const auto& r = results[s];
      rec.status = r.status;
      rec.loglik = r.objective;
      rec.iterations = r.iterations;
      rec.message = r.message;
      const double f0 = r.trace.empty() ? r.objective : r.trace.front().objective - r.trace.front().change_objective;
      rec.monotone = trace_monotone(r.trace, f0);
    } catch (const std::exception& e) {
      rec.status = OptimizerStatus::degenerate;
      rec.message = e.what();
      rec.loglik = std::numeric_limits<double>::quiet_NaN();
    }
  });
  GridsearchResult out;
  out.starts = records;
  for (int s = 0; s < n_starts; ++s) {
    const auto& rec = records[static_cast<std::size_t>(s)];
    if (rec.status != OptimizerStatus::converged) continue;
    if (out.best < 0 || rec.loglik > records[static_cast<std::size_t>(out.best)].loglik) out.best = s;
  }
  if (out.best < 0 && !require_convergence)
    for (int s = 0; s < n_starts; ++s) {
      const auto& rec = records[static_cast<std::size_t>(s)];
      if (!std::isfinite(rec.loglik)) continue;
      if (out.best < 0 || rec.loglik > records[static_cast<std::size_t>(out.best)].loglik) out.best = s;
    }
  if (out.best < 0) {
    std::ostringstream os;
    for (const auto& r : records)
      os << "start " << r.start << ": " << to_string(r.status) << " after " << r.iterations
         << " iterations, loglik " << r.loglik << (r.message.empty() ? "" : " (" + r.message + ")") << "\n";
    throw ConvergenceError("none of the " + std::to_string(n_starts) + " starts converged", os.str());
  }
  out.result = std::move(results[static_cast<std::size_t>(out.best)]);
  return out;
}

}  // namespace jlcm
