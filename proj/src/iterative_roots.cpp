#include "blockshampoo/iterative_roots.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "blockshampoo/errors.hpp"

namespace blockshampoo {

namespace {

constexpr double kDivergenceRatio = 10.0;
constexpr std::size_t kDivergenceWindow = 3;

double residual_to_identity(std::span<const double> block, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = block[i * n + j] - (i == j ? 1.0 : 0.0);
      if (std::isnan(d)) return d;
      m = std::max(m, std::abs(d));
    }
  return m;
}

// Residual grew on each of the last three steps and by more than 10x overall.
bool diverging(const std::vector<double>& history) {
  if (history.size() <= kDivergenceWindow) return false;
  const std::size_t last = history.size() - 1;
  for (std::size_t k = last - kDivergenceWindow + 1; k <= last; ++k) {
    if (!(history[k] > history[k - 1])) return false;
  }
  return history[last] > kDivergenceRatio * history[last - kDivergenceWindow];
}

struct BlockTracker {
  std::vector<std::uint8_t> active;
  std::vector<IterationReport> reports;
  std::vector<std::vector<double>> history;

  explicit BlockTracker(std::size_t n) : active(n, 1), reports(n), history(n) {}

  bool any_active() const { return std::any_of(active.begin(), active.end(), [](auto a) { return a != 0; }); }

  // Records the residual of block i and freezes it if it is done.
  void observe(std::size_t i, double residual, double tolerance, std::size_t limit, bool early_stop) {
    IterationReport& rep = reports[i];
    rep.residual = residual;
    history[i].push_back(residual);
    if (!std::isfinite(residual)) {
      rep.status = IterationStatus::NonFinite;
      rep.converged = false;
      active[i] = 0;
    } else if (early_stop && residual <= tolerance) {
      rep.status = IterationStatus::Converged;
      rep.converged = true;
      active[i] = 0;
    } else if (diverging(history[i])) {
      rep.status = IterationStatus::Diverged;
      rep.converged = false;
      active[i] = 0;
    } else if (rep.iterations >= limit) {
      rep.converged = residual <= tolerance;
      rep.status = rep.converged ? IterationStatus::Converged : IterationStatus::MaxIterations;
      active[i] = 0;
    }
  }

  void advance() {
    for (std::size_t i = 0; i < active.size(); ++i)
      if (active[i]) ++reports[i].iterations;
  }
};

BatchedTensor single(const Matrix& a) {
  if (!a.is_square()) throw std::invalid_argument("inverse root solvers need a square matrix");
  BatchedTensor t(1, a.rows());
  t.set_block(0, a);
  return t;
}

void require_finite_input(const BatchedTensor& a) {
  for (double v : a.data())
    if (!std::isfinite(v)) throw std::invalid_argument("inverse root solvers need finite input");
}

void throw_if_failed(const IterationReport& rep, const char* method) {
  if (rep.status == IterationStatus::Diverged) {
    throw NumericalError(std::string(method) + ": diverged after " + std::to_string(rep.iterations) +
                         " iterations (residual " + std::to_string(rep.residual) + ")");
  }
  if (rep.status == IterationStatus::NonFinite) {
    throw NumericalError(std::string(method) + ": non-finite iterate after " + std::to_string(rep.iterations) +
                         " iterations");
  }
}

// a * I_blockwise + b * t, written into a fresh tensor.
BatchedTensor affine_identity(double a, double b, const BatchedTensor& t) {
  BatchedTensor out(t.batch(), t.dim());
  const std::size_t n = t.dim();
  for (std::size_t k = 0; k < t.batch(); ++k) {
    auto src = t.block_data(k);
    auto dst = out.block_data(k);
    for (std::size_t i = 0; i < n * n; ++i) dst[i] = b * src[i];
    for (std::size_t i = 0; i < n; ++i) dst[i * n + i] += a;
  }
  return out;
}

IterationReport combine(const IterationReport& first, const IterationReport& second) {
  IterationReport out;
  out.iterations = first.iterations + second.iterations;
  out.residual = std::max(first.residual, second.residual);
  if (std::isnan(first.residual) || std::isnan(second.residual)) out.residual = std::nan("");
  out.converged = first.converged && second.converged;
  out.status = first.status != IterationStatus::Converged ? first.status : second.status;
  return out;
}

}  // namespace

const char* to_string(IterationStatus status) noexcept {
  switch (status) {
    case IterationStatus::Converged:
      return "converged";
    case IterationStatus::MaxIterations:
      return "max_iterations";
    case IterationStatus::Diverged:
      return "diverged";
    case IterationStatus::NonFinite:
      return "non_finite";
    case IterationStatus::Degenerate:
      return "degenerate";
  }
  return "unknown";
}

double CnConfig::constant() const {
  if (c) {
    if (!(*c > 0.0)) throw std::invalid_argument("coupled-newton constant c must be > 0");
    return *c;
  }
  return std::pow(1.0 + p, -1.0 / p);
}

BatchedRootResult batched_coupled_newton(const BatchedTensor& a, const CnConfig& cfg, Precision mode) {
  if (cfg.p != 2 && cfg.p != 4) throw std::invalid_argument("coupled-newton: p must be 2 or 4");
  require_finite_input(a);
  const double c = cfg.constant();
  const double inv_p = 1.0 / cfg.p;
  const std::size_t limit = cfg.fixed_iters.value_or(cfg.max_iters);
  const bool early_stop = !cfg.fixed_iters.has_value();

  BatchedTensor x = affine_identity(1.0 / c, 0.0, a);
  BatchedTensor m = affine_identity(0.0, 1.0 / std::pow(c, cfg.p), a);
  BlockTracker tracker(a.batch());

  while (true) {
    for (std::size_t i = 0; i < a.batch(); ++i) {
      if (tracker.active[i]) {
        tracker.observe(i, residual_to_identity(m.block_data(i), a.dim()), cfg.tolerance, limit, early_stop);
      }
    }
    if (!tracker.any_active()) break;
    const std::span<const std::uint8_t> mask = tracker.active;
    const BatchedTensor step = affine_identity(1.0 + inv_p, -inv_p, m);
    x.assign_blocks(bmm(x, step, mode, mask), mask);
    BatchedTensor power = bmm(step, step, mode, mask);
    if (cfg.p == 4) power = bmm(power, power, mode, mask);
    m.assign_blocks(bmm(power, m, mode, mask), mask);
    tracker.advance();
  }
  return {std::move(x), std::move(tracker.reports)};
}

RootResult coupled_newton(const Matrix& a, const CnConfig& cfg, Precision mode) {
  BatchedRootResult r = batched_coupled_newton(single(a), cfg, mode);
  throw_if_failed(r.reports[0], "coupled_newton");
  return {r.root.block(0), r.reports[0]};
}

BatchedNdbResult batched_newton_db(const BatchedTensor& a, const NdbConfig& cfg) {
  require_finite_input(a);
  const std::size_t limit = std::max<std::size_t>(1, cfg.fixed_iters.value_or(cfg.max_iters));
  const bool early_stop = !cfg.fixed_iters.has_value();
  BlockTracker tracker(a.batch());

  // Closed-form first iteration.
  BatchedTensor e = affine_identity(1.5, -0.5, a);
  BatchedTensor y = bmm(a, e);
  BatchedTensor z = e;
  tracker.advance();

  while (true) {
    for (std::size_t i = 0; i < a.batch(); ++i) {
      if (tracker.active[i]) {
        tracker.observe(i, residual_to_identity(e.block_data(i), a.dim()), cfg.tolerance, limit, early_stop);
      }
    }
    if (!tracker.any_active()) break;
    const std::span<const std::uint8_t> mask = tracker.active;
    e = affine_identity(1.5, -0.5, bmm(z, y, Precision::Full64, mask));
    y.assign_blocks(bmm(y, e, Precision::Full64, mask), mask);
    z.assign_blocks(bmm(e, z, Precision::Full64, mask), mask);
    tracker.advance();
  }
  return {std::move(y), std::move(z), std::move(tracker.reports)};
}

NdbResult newton_db(const Matrix& a, const NdbConfig& cfg) {
  BatchedNdbResult r = batched_newton_db(single(a), cfg);
  throw_if_failed(r.reports[0], "newton_db");
  return {r.sqrt.block(0), r.inv_sqrt.block(0), r.reports[0]};
}

RootResult ndb_inverse_fourth_root(const Matrix& a, const NdbConfig& cfg) {
  const NdbResult first = newton_db(a, cfg);
  const NdbResult second = newton_db(first.sqrt, cfg);
  return {second.inv_sqrt, combine(first.report, second.report)};
}

BatchedRootResult batched_ndb_inverse_fourth_root(const BatchedTensor& a, const NdbConfig& cfg) {
  BatchedNdbResult first = batched_newton_db(a, cfg);
  BatchedNdbResult second = batched_newton_db(first.sqrt, cfg);
  std::vector<IterationReport> reports(a.batch());
  for (std::size_t i = 0; i < a.batch(); ++i) reports[i] = combine(first.reports[i], second.reports[i]);
  return {std::move(second.inv_sqrt), std::move(reports)};
}

namespace {

ScalarCount scalar_cn(double x, int p, double tol, std::size_t cap) {
  const double c = std::pow(1.0 + p, -1.0 / p);
  const double target = std::pow(x, -1.0 / p);
  double xk = 1.0 / c;
  double mk = x / std::pow(c, p);
  for (std::size_t k = 0;; ++k) {
    if (std::abs(xk - target) <= tol * target) return {k, true};
    if (k == cap) return {cap, false};
    const double ck = (1.0 + 1.0 / p) - mk / p;
    xk *= ck;
    mk = std::pow(ck, p) * mk;
  }
}

// Returns the iteration count and leaves the final iterates in y/z.
ScalarCount scalar_ndb(double x, double target, bool track_sqrt, double tol, std::size_t cap, double& y, double& z) {
  double e = 1.5 - 0.5 * x;
  y = x * e;
  z = e;
  for (std::size_t k = 1;; ++k) {
    const double value = track_sqrt ? y : z;
    if (std::abs(value - target) <= tol * target) return {k, true};
    if (k == cap) return {cap, false};
    e = 0.5 * (3.0 - z * y);
    y *= e;
    z = e * z;
  }
}

}  // namespace

ScalarCount scalar_iteration_count(double x, ScalarMethod method, int p, double tolerance, std::size_t cap) {
  if (!(x > 0.0 && x < 1.0)) throw std::invalid_argument("scalar_iteration_count: x must lie in (0, 1)");
  if (p != 2 && p != 4) throw std::invalid_argument("scalar_iteration_count: p must be 2 or 4");
  if (method == ScalarMethod::CoupledNewton) return scalar_cn(x, p, tolerance, cap);
  double y = 0.0;
  double z = 0.0;
  if (p == 2) return scalar_ndb(x, 1.0 / std::sqrt(x), false, tolerance, cap, y, z);
  const ScalarCount first = scalar_ndb(x, std::sqrt(x), true, tolerance, cap, y, z);
  if (!first.converged) return first;
  const double root = y;
  const ScalarCount second = scalar_ndb(root, std::pow(x, -0.25), false, tolerance, cap, y, z);
  return {first.iterations + second.iterations, second.converged};
}

}  // namespace blockshampoo
