#include "blockshampoo/inverse_root.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <tuple>

#include "blockshampoo/errors.hpp"

namespace blockshampoo {

const char* to_string(RootMethod method) noexcept {
  switch (method) {
    case RootMethod::Evd:
      return "evd";
    case RootMethod::CoupledNewton:
      return "cn";
    case RootMethod::NewtonDB:
      return "ndb";
    case RootMethod::Chebyshev:
      return "cbshv";
  }
  return "unknown";
}

RootMethod parse_root_method(std::string_view name) {
  if (name == "evd") return RootMethod::Evd;
  if (name == "cn") return RootMethod::CoupledNewton;
  if (name == "ndb") return RootMethod::NewtonDB;
  if (name == "cbshv") return RootMethod::Chebyshev;
  throw std::invalid_argument("unknown root method '" + std::string(name) + "'");
}

const ChebCoefficients& chebyshev_fit_for(const SolverConfig& cfg, int p) {
  for (const auto& fit : cfg.cheb_fits)
    if (fit.p == p) return fit;
  using Key = std::tuple<int, std::size_t, std::size_t, double, double>;
  static std::mutex mutex;
  static std::map<Key, ChebCoefficients> fits;
  const Key key{p, cfg.cheb_degree, cfg.cheb_points, cfg.cheb_lower, cfg.cheb_upper};
  std::lock_guard lock(mutex);
  auto it = fits.find(key);
  if (it == fits.end()) {
    it = fits.emplace(key, cheb_fit_inverse_root(p, cfg.cheb_degree, cfg.cheb_points, cfg.cheb_lower, cfg.cheb_upper))
             .first;
  }
  return it->second;
}

std::optional<std::size_t> first_failure(const std::vector<IterationReport>& reports) {
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const IterationStatus st = reports[i].status;
    if (st == IterationStatus::Diverged || st == IterationStatus::NonFinite || st == IterationStatus::Degenerate) {
      return i;
    }
  }
  return std::nullopt;
}

namespace {

bool all_zero(std::span<const double> block) {
  return std::all_of(block.begin(), block.end(), [](double v) { return v == 0.0; });
}

BatchedTensor select(const BatchedTensor& t, const std::vector<std::size_t>& idx) {
  BatchedTensor out(idx.size(), t.dim());
  for (std::size_t k = 0; k < idx.size(); ++k) std::ranges::copy(t.block_data(idx[k]), out.block_data(k).begin());
  return out;
}

}  // namespace

BatchedRoots batched_inverse_root(const BatchedTensor& blocks, int p, double epsilon, const SolverConfig& cfg,
                                  std::uint64_t seed) {
  if (p != 2 && p != 4) throw std::invalid_argument("inverse root: p must be 2 or 4");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("inverse root: epsilon must be >= 0");
  const std::size_t n = blocks.dim();
  BatchedRoots out{BatchedTensor(blocks.batch(), n), std::vector<IterationReport>(blocks.batch()),
                   std::vector<double>(blocks.batch(), 1.0)};

  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < blocks.batch(); ++i) {
    if (all_zero(blocks.block_data(i))) {
      out.reports[i] = {0, 0.0, true, IterationStatus::Converged};
    } else {
      live.push_back(i);
    }
  }
  if (live.empty()) return out;

  BatchedTensor work = select(blocks, live);
  if (cfg.method == RootMethod::Evd) {
    const DampeningHeuristic heuristic{cfg.dampening, epsilon};
    for (std::size_t k = 0; k < live.size(); ++k) {
      try {
        out.roots.set_block(live[k], evd_inverse_root(work.block(k), p, heuristic));
        out.reports[live[k]] = {0, 0.0, true, IterationStatus::Converged};
      } catch (const NumericalError&) {
        out.reports[live[k]] = {0, 0.0, false, IterationStatus::Degenerate};
      }
    }
    return out;
  }

  if (cfg.method == RootMethod::NewtonDB && cfg.precision != Precision::Full64) {
    throw std::invalid_argument("newton-db runs in full 64-bit precision only");
  }

  std::vector<double> scales(live.size());
  for (std::size_t k = 0; k < live.size(); ++k) {
    auto d = work.block_data(k);
    for (std::size_t i = 0; i < n; ++i) d[i * n + i] += epsilon;
    const Matrix block = work.block(k);
    scales[k] = scale_factor(block, cfg.scaling, block_seed(seed, live[k]));
  }

  BatchedTensor roots;
  std::vector<IterationReport> reports(live.size(), IterationReport{0, 0.0, true, IterationStatus::Converged});
  if (cfg.method == RootMethod::Chebyshev) {
    roots = batched_clenshaw_matrix(work, chebyshev_fit_for(cfg, p), scales, cfg.precision, cfg.cheb_optimized);
  } else {
    for (std::size_t k = 0; k < live.size(); ++k)
      for (double& v : work.block_data(k)) v /= scales[k];
    if (cfg.method == RootMethod::CoupledNewton) {
      CnConfig cn;
      cn.p = p;
      cn.tolerance = cfg.tolerance;
      cn.max_iters = cfg.max_iters;
      cn.fixed_iters = cfg.fixed_iters;
      BatchedRootResult r = batched_coupled_newton(work, cn, cfg.precision);
      roots = std::move(r.root);
      reports = std::move(r.reports);
    } else {
      NdbConfig ndb{cfg.tolerance, cfg.max_iters, cfg.fixed_iters};
      if (p == 2) {
        BatchedNdbResult r = batched_newton_db(work, ndb);
        roots = std::move(r.inv_sqrt);
        reports = std::move(r.reports);
      } else {
        BatchedRootResult r = batched_ndb_inverse_fourth_root(work, ndb);
        roots = std::move(r.root);
        reports = std::move(r.reports);
      }
    }
    for (std::size_t k = 0; k < live.size(); ++k) {
      const double factor = std::pow(scales[k], -1.0 / p);
      for (double& v : roots.block_data(k)) v *= factor;
    }
  }

  for (std::size_t k = 0; k < live.size(); ++k) {
    std::ranges::copy(roots.block_data(k), out.roots.block_data(live[k]).begin());
    out.reports[live[k]] = reports[k];
    out.scales[live[k]] = scales[k];
  }
  return out;
}

Matrix inverse_root(const Matrix& a, int p, double epsilon, const SolverConfig& cfg, std::uint64_t seed,
                    IterationReport* report) {
  if (!a.is_square()) throw std::invalid_argument("inverse root: matrix is not square");
  BatchedTensor t(1, a.rows());
  t.set_block(0, a);
  BatchedRoots r = batched_inverse_root(t, p, epsilon, cfg, seed);
  if (first_failure(r.reports)) {
    throw NumericalError(std::string("inverse root (") + to_string(cfg.method) + "): " + to_string(r.reports[0].status) +
                         " after " + std::to_string(r.reports[0].iterations) + " iterations");
  }
  if (report) *report = r.reports[0];
  return r.roots.block(0);
}

}  // namespace blockshampoo
