#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "blockshampoo/balance_sim.hpp"
#include "blockshampoo/chebyshev.hpp"
#include "blockshampoo/errors.hpp"
#include "blockshampoo/inverse_root.hpp"
#include "blockshampoo/iterative_roots.hpp"
#include "blockshampoo/matrix_io.hpp"
#include "blockshampoo/toy_tasks.hpp"

namespace blockshampoo::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest representation that reads back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, res.ptr);
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) return s.substr(1, s.size() - 2);
  return s;
}

// "a", "[a, b]" or "[\"a\",\"b\"]" -> list of raw values.
std::vector<std::string> split_value(const std::string& value) {
  if (value.size() < 2 || value.front() != '[' || value.back() != ']') return {unquote(value)};
  std::vector<std::string> out;
  std::stringstream ss(value.substr(1, value.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = unquote(trim(item));
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Applies `key = value` lines to options not given on the command line.
void apply_config_file(CLI::App& sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::set<std::string> seen;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#' || body.front() == ';') continue;
    const auto eq = body.find('=');
    const std::string where = path + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw UsageError(where + ": expected 'key = value'");
    std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.starts_with("--")) key.erase(0, 2);
    std::replace(key.begin(), key.end(), '_', '-');
    CLI::Option* opt = nullptr;
    if (key != "config" && key != "help") {
      opt = sub.get_option_no_throw("--" + key);
      if (opt == nullptr) opt = sub.get_option_no_throw(key);
    }
    if (opt == nullptr) throw UsageError(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw UsageError(where + ": key '" + key + "' given twice");
    if (opt->count() > 0) continue;
    for (const std::string& v : split_value(trim(std::string_view(body).substr(eq + 1)))) opt->add_result(v);
    opt->run_callback();
  }
}

void echo_config(const CLI::App& sub, std::ostream& out) {
  out << "# blockshampoo " << sub.get_name() << '\n';
  std::stringstream ss(sub.config_to_str(true, false));
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty() || line.starts_with("config=")) continue;
    out << "# " << line << '\n';
  }
}

/// Writes to `path` if given, otherwise to the fallback stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : path_(path), os_(&fallback) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw IoError("cannot write " + path);
      os_ = &file_;
    }
  }
  std::ostream& stream() { return *os_; }
  void close() {
    if (!file_.is_open()) return;
    file_.close();
    if (file_.fail()) throw IoError("failed writing " + path_);
  }

 private:
  std::string path_;
  std::ofstream file_;
  std::ostream* os_;
};

struct SolverFlags {
  std::string method = "evd";
  std::string norm = "pi";
  std::string precision = "f64";
  std::string dampening = "abs";
  int p = 4;
  double tol = 1e-10;
  std::size_t max_iters = 100;
  std::size_t fixed_iters = 0;
  std::size_t pi_pool = 16;
  std::size_t pi_iters = 30;
  double epsilon = 1e-10;
  std::size_t cheb_degree = 60;
  std::size_t cheb_points = 1000;
  bool cheb_naive = false;
  std::string cheb_cache;
  std::uint64_t seed = 0;
};

void add_solver_flags(CLI::App* sub, SolverFlags& f) {
  sub->add_option("--method", f.method, "Inverse-root solver")
      ->check(CLI::IsMember({"evd", "cn", "ndb", "cbshv"}))
      ->capture_default_str();
  sub->add_option("--norm", f.norm, "Pre-scaling for iterative solvers")
      ->check(CLI::IsMember({"fro", "pi"}))
      ->capture_default_str();
  sub->add_option("--precision", f.precision, "Matmul precision (f32 rounds each product)")
      ->check(CLI::IsMember({"f64", "f32"}))
      ->capture_default_str();
  sub->add_option("--dampening", f.dampening, "EVD spectrum heuristic")
      ->check(CLI::IsMember({"legacy", "relu", "abs"}))
      ->capture_default_str();
  sub->add_option("--p", f.p, "Root order")->check(CLI::IsMember({2, 4}))->capture_default_str();
  sub->add_option("--tol", f.tol, "Max-abs residual tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--max-iters", f.max_iters, "Iteration cap")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--fixed-iters", f.fixed_iters, "Run exactly this many iterations (0: stop at --tol)")
      ->capture_default_str();
  sub->add_option("--pi-pool", f.pi_pool, "Power-iteration start vectors")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--pi-iters", f.pi_iters, "Power-iteration steps")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--epsilon", f.epsilon, "Regularization added to the diagonal")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sub->add_option("--cheb-degree", f.cheb_degree, "Chebyshev degree")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--cheb-points", f.cheb_points, "Chebyshev fit nodes")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_flag("--cheb-naive", f.cheb_naive, "Use the unoptimized Clenshaw recurrence");
  sub->add_option("--cheb-cache", f.cheb_cache, "Chebyshev coefficient file (read if present, else written)");
  sub->add_option("--seed", f.seed, "Random seed")->capture_default_str();
}

Precision parse_precision(const std::string& s) {
  if (s == "f64") return Precision::Full64;
  if (s == "f32") return Precision::Emulated32;
  throw UsageError("unknown precision '" + s + "'");
}

Dampening parse_dampening(const std::string& s) {
  if (s == "legacy") return Dampening::DistributedShampooLegacy;
  if (s == "relu") return Dampening::CorrectedShiftedReLU;
  if (s == "abs") return Dampening::CorrectedAbs;
  throw UsageError("unknown dampening '" + s + "'");
}

SolverConfig to_solver_config(const SolverFlags& f) {
  SolverConfig cfg;
  cfg.method = parse_root_method(f.method);
  cfg.scaling = f.norm == "fro" ? ScalingMode::frobenius() : ScalingMode::power_iteration(f.pi_pool, f.pi_iters);
  cfg.precision = parse_precision(f.precision);
  cfg.dampening = parse_dampening(f.dampening);
  cfg.tolerance = f.tol;
  cfg.max_iters = f.max_iters;
  if (f.fixed_iters > 0) cfg.fixed_iters = f.fixed_iters;
  cfg.cheb_degree = f.cheb_degree;
  cfg.cheb_points = f.cheb_points;
  cfg.cheb_optimized = !f.cheb_naive;
  if (cfg.method == RootMethod::NewtonDB && cfg.precision != Precision::Full64) {
    throw UsageError("--method ndb only supports --precision f64");
  }
  if (!f.cheb_cache.empty() && cfg.method == RootMethod::Chebyshev) {
    if (std::filesystem::exists(f.cheb_cache)) {
      try {
        cfg.cheb_fits.push_back(read_cheb_cache_file(f.cheb_cache));
      } catch (const std::runtime_error& e) {
        throw IoError(f.cheb_cache + ": " + e.what());
      }
    } else {
      const ChebCoefficients fit =
          cheb_fit_inverse_root(f.p, cfg.cheb_degree, cfg.cheb_points, cfg.cheb_lower, cfg.cheb_upper);
      write_cheb_cache_file(f.cheb_cache, fit);
      cfg.cheb_fits.push_back(fit);
    }
  }
  return cfg;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- scalar-sweep

struct SweepFlags {
  std::vector<std::string> methods{"cn", "ndb"};
  int p = 2;
  double tol = 1e-10;
  std::size_t cap = 100;
  std::string out;
};

int cmd_scalar_sweep(const SweepFlags& f, std::ostream& out) {
  struct Row {
    std::string method;
    double x;
    ScalarCount count;
  };
  std::vector<Row> rows;
  const std::vector<double> grid = scalar_sweep_grid();
  for (const std::string& name : f.methods) {
    ScalarMethod m;
    if (name == "cn") {
      m = ScalarMethod::CoupledNewton;
    } else if (name == "ndb") {
      m = ScalarMethod::NewtonDB;
    } else {
      throw UsageError("scalar-sweep supports methods cn and ndb, not '" + name + "'");
    }
    bool non_increasing = true;
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    for (double x : grid) {
      const ScalarCount c = scalar_iteration_count(x, m, f.p, f.tol, f.cap);
      non_increasing = non_increasing && c.iterations <= prev;
      prev = c.iterations;
      rows.push_back({name, x, c});
    }
    out << "# " << name << "_non_increasing = " << (non_increasing ? "true" : "false") << '\n';
  }
  Sink sink(f.out, out);
  sink.stream() << "method,x,iterations,converged\n";
  for (const Row& r : rows) {
    sink.stream() << r.method << ',' << fmt(r.x) << ',' << r.count.iterations << ','
                  << (r.count.converged ? "true" : "false") << '\n';
  }
  sink.close();
  return kOk;
}

// ----------------------------------------------------------------------- solve

struct SolveFlags {
  std::string matrix;
  std::string out;
  SolverFlags solver;
};

int cmd_solve(const SolveFlags& f, std::ostream& out) {
  Matrix a;
  try {
    a = read_matrix_file(f.matrix);
  } catch (const std::runtime_error& e) {
    throw IoError(f.matrix + ": " + e.what());
  }
  if (!a.is_square()) throw IoError(f.matrix + ": matrix is not square");
  if (asymmetry(a) > 1e-12 * std::max(1.0, max_abs(a))) {
    throw IoError(f.matrix + ": matrix is not symmetric (max |a_ij - a_ji| = " + fmt(asymmetry(a)) + ")");
  }
  const SolverConfig cfg = to_solver_config(f.solver);
  const int p = f.solver.p;

  const EigenDecomposition evd = eigh(add_identity(a, f.solver.epsilon));
  if (evd.eigenvalues.empty() || *std::min_element(evd.eigenvalues.begin(), evd.eigenvalues.end()) <= 0.0) {
    throw NumericalError("matrix plus epsilon is not positive definite; raise --epsilon");
  }
  const Matrix oracle = spectral_function(evd, [p](double l) { return std::pow(l, -1.0 / p); });

  IterationReport report;
  const ScopedOpCounter counter;
  const auto t0 = std::chrono::steady_clock::now();
  const Matrix root = inverse_root(a, p, f.solver.epsilon, cfg, f.solver.seed, &report);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::uint64_t matmuls = counter.matmuls();

  out << "method = " << to_string(cfg.method) << '\n'
      << "n = " << a.rows() << '\n'
      << "p = " << p << '\n'
      << "iterations = " << report.iterations << '\n'
      << "status = " << to_string(report.status) << '\n'
      << "solver_residual = " << fmt(report.residual) << '\n'
      << "residual_vs_oracle = " << fmt(frobenius_distance(root, oracle) / frobenius_norm(oracle)) << '\n'
      << "matmuls = " << matmuls << '\n'
      << "seconds = " << fmt(seconds) << '\n';
  if (!f.out.empty()) write_matrix_file(f.out, root);
  return kOk;
}

// ----------------------------------------------------------------------- train

struct TrainFlags {
  std::string task = "quadratic";
  std::size_t steps = 200;
  double lr = 1e-3;
  std::string schedule = "constant";
  bool lr_sweep = false;
  double beta = 0.95;
  double graft_beta1 = 0.0;
  double graft_beta2 = 0.999;
  double graft_eps = 1e-8;
  std::size_t update_freq = 1;
  std::size_t block_size = 1024;
  std::string out;
  SolverFlags solver;
};

int cmd_train(const TrainFlags& f, std::ostream& out) {
  const auto task = make_task(parse_task_kind(f.task), f.solver.seed);
  ShampooConfig cfg;
  cfg.beta_lr = f.beta;
  cfg.epsilon = f.solver.epsilon;
  cfg.update_freq = f.update_freq;
  cfg.block_size = f.block_size;
  cfg.seed = f.solver.seed;
  cfg.solver = to_solver_config(f.solver);
  cfg.graft = {f.graft_beta1, f.graft_beta2, f.graft_eps};
  cfg.lr.base = f.lr;
  cfg.lr.total_steps = f.steps;
  if (f.schedule == "constant") {
    cfg.lr.kind = LearningRate::Kind::Constant;
  } else if (f.schedule == "linear") {
    cfg.lr.kind = LearningRate::Kind::Linear;
  } else {
    cfg.lr.kind = LearningRate::Kind::Cosine;
  }

  if (f.lr_sweep) {
    const std::vector<double> grid = default_lr_grid();
    const LrSweepResult sweep = sweep_learning_rate(*task, cfg, f.steps, grid);
    for (const auto& [lr, loss] : sweep.trials) out << "# lr_sweep " << fmt(lr) << " final_loss = " << fmt(loss) << '\n';
    cfg.lr.base = sweep.best_lr;
    out << "# selected_lr = " << fmt(sweep.best_lr) << '\n';
  }

  const TrainResult result = train(*task, cfg, f.steps);
  out << "# final_loss = " << fmt(result.final_loss) << '\n';
  Sink sink(f.out, out);
  sink.stream() << "step,loss,grad_norm,update_norm,refresh_flag\n";
  for (const TrainRecord& r : result.records) {
    sink.stream() << r.step << ',' << fmt(r.loss) << ',' << fmt(r.grad_norm) << ',' << fmt(r.update_norm) << ','
                  << (r.refreshed ? 1 : 0) << '\n';
  }
  sink.close();
  return kOk;
}

// ----------------------------------------------------------------------- bench

struct BenchFlags {
  std::size_t batch = 32;
  std::size_t dim = 64;
  std::size_t repeats = 5;
  std::string out;
  SolverFlags solver;
};

int cmd_bench(const BenchFlags& f, std::ostream& out) {
  const SolverConfig cfg = to_solver_config(f.solver);
  const int p = f.solver.p;
  std::mt19937_64 rng(f.solver.seed);
  std::normal_distribution<double> normal;
  BatchedTensor blocks(f.batch, f.dim);
  for (std::size_t i = 0; i < f.batch; ++i) {
    Matrix g(f.dim, 2 * f.dim);
    for (double& v : g.data()) v = normal(rng);
    blocks.set_block(i, add_identity((1.0 / (2.0 * f.dim)) * matmul(g, g.transposed()), 1e-3));
  }

  using Clock = std::chrono::steady_clock;
  std::vector<double> stacked_times;
  std::vector<double> sequential_times;
  BatchedRoots stacked;
  std::vector<Matrix> sequential(f.batch);
  for (std::size_t r = 0; r < f.repeats; ++r) {
    auto t0 = Clock::now();
    stacked = batched_inverse_root(blocks, p, f.solver.epsilon, cfg, f.solver.seed);
    stacked_times.push_back(std::chrono::duration<double>(Clock::now() - t0).count());

    t0 = Clock::now();
    for (std::size_t i = 0; i < f.batch; ++i) {
      BatchedTensor one(1, f.dim);
      one.set_block(0, blocks.block(i));
      sequential[i] = batched_inverse_root(one, p, f.solver.epsilon, cfg, block_seed(f.solver.seed, i)).roots.block(0);
    }
    sequential_times.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  }
  if (const auto bad = first_failure(stacked.reports)) {
    throw NumericalError("bench: block " + std::to_string(*bad) + " " + to_string(stacked.reports[*bad].status));
  }
  double delta = 0.0;
  for (std::size_t i = 0; i < f.batch; ++i) delta = std::max(delta, frobenius_distance(stacked.roots.block(i), sequential[i]));

  Sink sink(f.out, out);
  sink.stream() << "method,batch,dim,p,repeats,stacked_median_s,sequential_median_s,max_frobenius_delta\n";
  sink.stream() << to_string(cfg.method) << ',' << f.batch << ',' << f.dim << ',' << p << ',' << f.repeats << ','
                << fmt(median(stacked_times)) << ',' << fmt(median(sequential_times)) << ',' << fmt(delta) << '\n';
  sink.close();
  return kOk;
}

// --------------------------------------------------------------------- balance

struct BalanceFlags {
  std::string layers;
  std::size_t workers = 2;
  std::string out;
};

int cmd_balance(const BalanceFlags& f, std::ostream& out) {
  std::ifstream in(f.layers);
  if (!in) throw IoError("cannot open " + f.layers);
  std::vector<LayerSize> sizes;
  try {
    sizes = read_layer_sizes(in);
  } catch (const std::runtime_error& e) {
    throw IoError(f.layers + ": " + e.what());
  }
  const Assignment a = greedy_balance(sizes, f.workers);
  const SyncCost cost = simulate_sync_cost(a);
  std::map<std::uint64_t, std::uint64_t> params;
  for (const LayerSize& s : sizes) params[s.id] = s.params;

  out << "# makespan = " << cost.makespan << '\n' << "# broadcast_volume = " << cost.broadcast_volume << '\n';
  Sink sink(f.out, out);
  sink.stream() << "worker,layer_id,params\n";
  for (std::size_t w = 0; w < a.workers.size(); ++w)
    for (std::uint64_t id : a.workers[w].layers) sink.stream() << w << ',' << id << ',' << params[id] << '\n';
  sink.close();
  return kOk;
}

// -------------------------------------------------------------------- cheb-fit

struct ChebFlags {
  int p = 4;
  std::size_t degree = 60;
  std::size_t points = 1000;
  double lower = 1e-10;
  double upper = 1.0 + 1e-10;
  std::string out;
};

int cmd_cheb_fit(const ChebFlags& f, std::ostream& out) {
  const ChebCoefficients fit = cheb_fit_inverse_root(f.p, f.degree, f.points, f.lower, f.upper);
  // Relative error on 200 log-spaced points across the interval.
  double worst = 0.0;
  const double span = std::log(f.upper / f.lower);
  for (int k = 0; k < 200; ++k) {
    const double x = f.lower * std::exp(span * k / 199.0);
    const double exact = std::pow(x, -1.0 / f.p);
    worst = std::max(worst, std::abs(clenshaw_scalar(x, fit) - exact) / exact);
  }
  out << "# max_rel_error = " << fmt(worst) << '\n';
  Sink sink(f.out, out);
  write_cheb_cache(sink.stream(), fit);
  sink.close();
  return kOk;
}

}  // namespace

std::vector<double> scalar_sweep_grid() {
  std::set<double> xs;
  for (int e = 6; e >= 1; --e)
    for (int m = 1; m <= 9; ++m) xs.insert(m / std::pow(10.0, e));
  for (int k = 1; k <= 99; ++k) xs.insert(k / 100.0);
  return {xs.begin(), xs.end()};
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inverse-root solvers and blocked Shampoo experiments", "blockshampoo"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");
  std::string config_path;
  std::map<const CLI::App*, std::function<int()>> handlers;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "File of 'key = value' lines; command-line flags take precedence")
        ->check(CLI::ExistingFile);
  };

  SweepFlags sweep;
  CLI::App* sweep_cmd = app.add_subcommand("scalar-sweep", "Scalar iteration counts of CN and NDB over x in (0, 1)");
  sweep_cmd->add_option("--methods", sweep.methods, "Methods to sweep (cn, ndb)")->capture_default_str();
  sweep_cmd->add_option("--p", sweep.p, "Root order")->check(CLI::IsMember({2, 4}))->capture_default_str();
  sweep_cmd->add_option("--tol", sweep.tol, "Relative tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  sweep_cmd->add_option("--max-iters", sweep.cap, "Iteration cap")->check(CLI::PositiveNumber)->capture_default_str();
  sweep_cmd->add_option("--out", sweep.out, "CSV path (default: stdout)");
  add_config(sweep_cmd);
  handlers[sweep_cmd] = [&] { return cmd_scalar_sweep(sweep, out); };

  SolveFlags solve;
  CLI::App* solve_cmd = app.add_subcommand("solve", "Inverse root of one matrix file, checked against eigh");
  solve_cmd->add_option("matrix", solve.matrix, "Matrix file ('rows cols' header, then rows)")->required();
  add_solver_flags(solve_cmd, solve.solver);
  solve_cmd->add_option("--out", solve.out, "Write the computed root to this matrix file");
  add_config(solve_cmd);
  handlers[solve_cmd] = [&] { return cmd_solve(solve, out); };

  TrainFlags tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a toy task with blocked Shampoo");
  train_cmd->add_option("--task", tr.task, "Toy task")
      ->check(CLI::IsMember({"quadratic", "logreg", "mlp"}))
      ->capture_default_str();
  train_cmd->add_option("--steps", tr.steps, "Optimizer steps")->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "Base learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--lr-schedule", tr.schedule, "Learning-rate schedule")
      ->check(CLI::IsMember({"constant", "linear", "cosine"}))
      ->capture_default_str();
  train_cmd->add_flag("--lr-sweep", tr.lr_sweep, "Pick --lr from a built-in grid by final loss");
  train_cmd->add_option("--beta", tr.beta, "Preconditioner EMA factor")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  train_cmd->add_option("--graft-beta1", tr.graft_beta1, "Adam momentum of the grafted step")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  train_cmd->add_option("--graft-beta2", tr.graft_beta2, "Adam second-moment decay of the grafted step")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  train_cmd->add_option("--graft-eps", tr.graft_eps, "Adam epsilon of the grafted step")->capture_default_str();
  train_cmd->add_option("--update-freq", tr.update_freq, "Recompute inverse roots every f steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--block-size", tr.block_size, "Preconditioner block size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_solver_flags(train_cmd, tr.solver);
  train_cmd->add_option("--out", tr.out, "CSV path (default: stdout)");
  add_config(train_cmd);
  handlers[train_cmd] = [&] { return cmd_train(tr, out); };

  BenchFlags bench;
  bench.solver.method = "cn";
  CLI::App* bench_cmd = app.add_subcommand("bench", "Stacked vs. per-block solver timing on random SPD blocks");
  bench_cmd->add_option("--batch", bench.batch, "Number of blocks")->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--dim", bench.dim, "Block dimension")->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--repeats", bench.repeats, "Timed repetitions")->check(CLI::PositiveNumber)->capture_default_str();
  add_solver_flags(bench_cmd, bench.solver);
  bench_cmd->add_option("--out", bench.out, "CSV path (default: stdout)");
  add_config(bench_cmd);
  handlers[bench_cmd] = [&] { return cmd_bench(bench, out); };

  BalanceFlags balance;
  CLI::App* balance_cmd = app.add_subcommand("balance", "Greedy layer-to-worker assignment");
  balance_cmd->add_option("--layers", balance.layers, "File of 'id params' lines")->required();
  balance_cmd->add_option("--workers", balance.workers, "Worker count")->check(CLI::PositiveNumber)->capture_default_str();
  balance_cmd->add_option("--out", balance.out, "CSV path (default: stdout)");
  add_config(balance_cmd);
  handlers[balance_cmd] = [&] { return cmd_balance(balance, out); };

  ChebFlags cheb;
  CLI::App* cheb_cmd = app.add_subcommand("cheb-fit", "Fit x^(-1/p) and write a coefficient cache");
  cheb_cmd->add_option("--p", cheb.p, "Root order")->check(CLI::IsMember({2, 4}))->capture_default_str();
  cheb_cmd->add_option("--degree", cheb.degree, "Polynomial degree")->capture_default_str();
  cheb_cmd->add_option("--points", cheb.points, "Fit nodes")->check(CLI::PositiveNumber)->capture_default_str();
  cheb_cmd->add_option("--lower", cheb.lower, "Interval start")->check(CLI::PositiveNumber)->capture_default_str();
  cheb_cmd->add_option("--upper", cheb.upper, "Interval end")->check(CLI::PositiveNumber)->capture_default_str();
  cheb_cmd->add_option("--out", cheb.out, "Cache path (default: stdout)");
  add_config(cheb_cmd);
  handlers[cheb_cmd] = [&] { return cmd_cheb_fit(cheb, out); };

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!config_path.empty()) apply_config_file(*sub, config_path);
    echo_config(*sub, out);
    return handlers.at(sub)();
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::runtime_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIo;
  }
}

}  // namespace blockshampoo::cli
