// Acceptance checks: one line per criterion, PASS or FAIL at the stated
// tolerances. Known failures still print FAIL but do not change the exit
// status; any other failure makes the binary exit 1.

#include <cli.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "blockshampoo/balance_sim.hpp"
#include "blockshampoo/blocking.hpp"
#include "blockshampoo/chebyshev.hpp"
#include "blockshampoo/errors.hpp"
#include "blockshampoo/inverse_root.hpp"
#include "blockshampoo/iterative_roots.hpp"
#include "blockshampoo/shampoo.hpp"
#include "blockshampoo/toy_tasks.hpp"
#include "support.hpp"

using namespace blockshampoo;
using namespace testing_support;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

class Report {
 public:
  explicit Report(std::set<std::string> known) : known_(std::move(known)) {}

  void check(const std::string& id, bool pass, const std::string& detail) {
    const bool known = known_.count(id) > 0;
    std::printf("[%s] %-6s %s%s\n", pass ? "PASS" : "FAIL", id.c_str(), detail.c_str(),
                !pass && known ? "  (known failure)" : "");
    std::fflush(stdout);
    if (!pass && !known) ++unexpected_;
    if (!pass) ++failed_;
    ++total_;
  }

  void info(const std::string& id, const std::string& detail) {
    std::printf("[INFO] %-6s %s\n", id.c_str(), detail.c_str());
  }

  int finish() const {
    std::printf("\n%d checks, %d failed (%d unexpected)\n", total_, failed_, unexpected_);
    return unexpected_ == 0 ? 0 : 1;
  }

 private:
  std::set<std::string> known_;
  int total_ = 0;
  int failed_ = 0;
  int unexpected_ = 0;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ------------------------------------------------------------------ 1. sweep

void criterion_1(Report& r) {
  const auto t0 = Clock::now();
  std::ostringstream out;
  std::ostringstream err;
  const char* argv[] = {"blockshampoo", "scalar-sweep", "--p", "2", "--tol", "1e-10"};
  const int code = cli::run(6, argv, out, err);
  const double elapsed = seconds_since(t0);
  if (code != cli::kOk) {
    r.check("1", false, "scalar-sweep exited with " + std::to_string(code) + ": " + err.str());
    return;
  }
  struct Row {
    double x;
    int iterations;
    bool converged;
  };
  std::vector<Row> cn;
  std::vector<Row> ndb;
  std::stringstream ss(out.str());
  std::string line;
  while (std::getline(ss, line)) {
    if (line.starts_with("#") || line.starts_with("method,")) continue;
    std::stringstream ls(line);
    std::string method, x, it, conv;
    std::getline(ls, method, ',');
    std::getline(ls, x, ',');
    std::getline(ls, it, ',');
    std::getline(ls, conv, ',');
    (method == "cn" ? cn : ndb).push_back({std::stod(x), std::stoi(it), conv == "true"});
  }
  auto at = [](const std::vector<Row>& rows, double x) {
    for (const Row& row : rows)
      if (row.x == x) return row;
    return Row{x, -1, false};
  };
  const Row a = at(cn, 1e-2);
  r.check("1a.1", a.converged && std::abs(a.iterations - 5) <= 1,
          fmt("CN p=2 x=1e-2: %d iterations (want 5 +/- 1)", a.iterations));
  const Row b = at(cn, 2e-4);
  r.check("1a.2", b.converged && std::abs(b.iterations - 15) <= 1,
          fmt("CN p=2 x=2e-4: %d iterations (want 15 +/- 1)", b.iterations));

  bool monotone = !ndb.empty();
  for (std::size_t i = 1; i < ndb.size(); ++i) monotone = monotone && ndb[i].iterations <= ndb[i - 1].iterations;
  r.check("1b", monotone, fmt("NDB count non-increasing over %zu grid points in (0, 1)", ndb.size()));

  // Argmax over grid points in (0.3, 1) lies strictly inside the interval
  // and rises above the count at the left end of the window.
  std::vector<Row> window;
  for (const Row& row : cn)
    if (row.x > 0.3 && row.x < 1.0) window.push_back(row);
  const auto peak = std::max_element(window.begin(), window.end(),
                                     [](const Row& l, const Row& rr) { return l.iterations < rr.iterations; });
  const bool interior = !window.empty() && peak->x > 0.3 && peak->x < 1.0 && peak->iterations > window.front().iterations;
  r.check("1c", interior,
          fmt("CN peak in (0.3, 1): %d iterations at x=%.2f vs %d at x=%.2f", peak->iterations, peak->x,
              window.front().iterations, window.front().x));
  r.check("1.t", elapsed < 5.0, fmt("sweep runtime %.3f s (limit 5 s)", elapsed));
}

// ----------------------------------------------------------------- 2. oracle

void criterion_2(Report& r) {
  const auto t0 = Clock::now();
  struct Case {
    const char* id;
    const char* label;
    RootMethod method;
    int p;
    double worst = 0.0;
    std::string failure;
  };
  std::vector<Case> cases{{"2.cn2", "CN p=2", RootMethod::CoupledNewton, 2, 0.0, {}},
                          {"2.cn4", "CN p=4", RootMethod::CoupledNewton, 4, 0.0, {}},
                          {"2.ndb2", "NDB p=2", RootMethod::NewtonDB, 2, 0.0, {}},
                          {"2.ndb4", "NDB chained p=4", RootMethod::NewtonDB, 4, 0.0, {}},
                          {"2.cb2", "Chebyshev d=60 p=2", RootMethod::Chebyshev, 2, 0.0, {}},
                          {"2.cb4", "Chebyshev d=60 p=4", RootMethod::Chebyshev, 4, 0.0, {}}};
  std::mt19937_64 rng(20240);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t dims[] = {4, 16, 64};
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t n = dims[i % 3];
    const double cond = std::pow(10.0, 4.0 * u(rng));
    const double top = std::pow(10.0, 4.0 * u(rng) - 2.0);
    const Matrix a = random_spd(n, cond, rng, top);
    for (Case& c : cases) {
      SolverConfig cfg;
      cfg.method = c.method;
      cfg.scaling = ScalingMode::power_iteration(16, 30);
      try {
        const Matrix got = inverse_root(a, c.p, 0.0, cfg, i);
        c.worst = std::max(c.worst, relative_error(got, oracle_power(a, -1.0 / c.p)));
      } catch (const NumericalError& e) {
        c.worst = std::numeric_limits<double>::infinity();
        if (c.failure.empty()) c.failure = fmt(" [matrix %zu: %s]", i, e.what());
      }
    }
  }
  for (const Case& c : cases) {
    r.check(c.id, c.worst <= 1e-6,
            fmt("%s vs eigh oracle, 100 SPD (n in {4,16,64}, cond <= 1e4, 2*lambda_PI): max rel err %.3g (limit 1e-6)%s",
                c.label, c.worst, c.failure.c_str()));
  }
  const double elapsed = seconds_since(t0);
  r.check("2.t", elapsed < 30.0, fmt("oracle sweep runtime %.2f s (limit 30 s)", elapsed));
}

// ---------------------------------------------------------------- 3. scaling

void criterion_3(Report& r) {
  std::mt19937_64 rng(31337);
  struct Tally {
    const char* id;
    const char* label;
    RootMethod method;
    int p;
    int never_fewer = 0;
    int strictly_more = 0;
  };
  std::vector<Tally> tallies{{"3.cn2", "CN p=2", RootMethod::CoupledNewton, 2},
                             {"3.cn4", "CN p=4", RootMethod::CoupledNewton, 4},
                             {"3.ndb2", "NDB p=2", RootMethod::NewtonDB, 2},
                             {"3.ndb4", "NDB p=4", RootMethod::NewtonDB, 4}};
  double min_ratio = std::numeric_limits<double>::infinity();
  int made = 0;
  while (made < 20) {
    const Matrix a = flat_spd(64, 1e3, rng);
    const auto ev = oracle_eigenvalues(a);
    const double ratio = frobenius_norm(a) / ev.back();
    if (ratio < 5.0) continue;
    min_ratio = std::min(min_ratio, ratio);
    for (Tally& t : tallies) {
      SolverConfig cfg;
      cfg.method = t.method;
      IterationReport fro_rep;
      IterationReport pi_rep;
      cfg.scaling = ScalingMode::frobenius();
      inverse_root(a, t.p, 0.0, cfg, made, &fro_rep);
      cfg.scaling = ScalingMode::power_iteration(16, 30);
      inverse_root(a, t.p, 0.0, cfg, made, &pi_rep);
      t.never_fewer += fro_rep.iterations >= pi_rep.iterations ? 1 : 0;
      t.strictly_more += fro_rep.iterations > pi_rep.iterations ? 1 : 0;
    }
    ++made;
  }
  for (const Tally& t : tallies) {
    r.check(t.id, t.never_fewer == 20 && t.strictly_more >= 15,
            fmt("%s, 20 SPD with ||A||_F/lambda_max >= %.2f: Frobenius >= PI iterations in %d/20, strictly more in "
                "%d/20 (want 20 and >= 15)",
                t.label, min_ratio, t.never_fewer, t.strictly_more));
  }
}

// --------------------------------------------------------------- 4. batching

std::string group_shapes(const std::vector<StackGroup>& groups) {
  std::string s;
  for (const StackGroup& g : groups) s += fmt("(%zu,%zu,%zu)", g.members.size(), g.dim, g.dim);
  return s;
}

void criterion_4(Report& r) {
  {
    const LayerPlan layers[] = {{0, plan_partition(32000, 2048, 1024)}};
    const auto groups = build_stack_groups(layers);
    const bool ok = groups.size() == 2 && groups[0].members.size() == 126 && groups[0].dim == 1024 &&
                    groups[1].members.size() == 2 && groups[1].dim == 256;
    r.check("4.meta", ok, "(32000, 2048) at B=1024 groups into " + group_shapes(groups) +
                              " (want (126,1024,1024)(2,256,256))");
  }
  {
    const LayerPlan layers[] = {{0, plan_partition(3200, 2048, 1024)}};
    const auto groups = build_stack_groups(layers);
    const bool ok = groups.size() == 2 && groups[0].members.size() == 14 && groups[0].dim == 1024 &&
                    groups[1].members.size() == 2 && groups[1].dim == 128;
    r.check("4.meta2", ok, "(3200, 2048) at B=1024 groups into " + group_shapes(groups) +
                               " (want (14,1024,1024)(2,128,128))");
  }

  // Numerical runs: (320, 208)/96 plus a 300-long vector layer, and the
  // (3200, 2048)/1024 layout shrunk 8x to (400, 256)/128.
  struct Setup {
    std::vector<LayerPlan> layers;
    const char* label;
  };
  std::vector<Setup> setups;
  setups.push_back({{{0, plan_partition(320, 208, 96)}, {1, plan_vector_partition(300, 96)}},
                    "(320,208)/96 + vector 300/96"});
  setups.push_back({{{0, plan_partition(400, 256, 128)}}, "(400,256)/128"});

  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Method {
    RootMethod method;
    const char* name;
    const char* id;
  };
  const Method methods[] = {{RootMethod::Evd, "EVD", "evd"},
                            {RootMethod::CoupledNewton, "CN", "cn"},
                            {RootMethod::NewtonDB, "NDB", "ndb"},
                            {RootMethod::Chebyshev, "Chebyshev", "cb"}};
  for (const Setup& setup : setups) {
    std::vector<StackGroup> groups = build_stack_groups(setup.layers);
    for (StackGroup& g : groups) {
      g.tensor = BatchedTensor(g.members.size(), g.dim);
      // Spread conditioning so blocks converge at different iterations.
      for (std::size_t i = 0; i < g.members.size(); ++i)
        g.tensor.set_block(i, random_spd(g.dim, std::pow(10.0, 3.0 * u(rng)), rng, 0.1 + u(rng)));
    }
    for (const auto& [method, name, id] : methods) {
      SolverConfig cfg;
      cfg.method = method;
      double worst = 0.0;
      std::size_t blocks = 0;
      for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const StackGroup& g = groups[gi];
        const std::uint64_t seed = 1000 + gi;
        const BatchedRoots batched = batched_inverse_root(g.tensor, g.root_order, 1e-10, cfg, seed);
        for (std::size_t i = 0; i < g.members.size(); ++i) {
          const Matrix single = inverse_root(g.tensor.block(i), g.root_order, 1e-10, cfg, block_seed(seed, i));
          worst = std::max(worst, frobenius_distance(batched.roots.block(i), single));
          ++blocks;
        }
      }
      r.check(fmt("4.%s%zu", id, &setup - setups.data()), worst <= 1e-12,
              fmt("%s stacked vs per-block on %s, groups %s, %zu blocks: max Frobenius diff %.3g (limit 1e-12)", name,
                  setup.label, group_shapes(groups).c_str(), blocks, worst));
    }
  }
}

// ---------------------------------------------------------------- 5. counts

void criterion_5(Report& r) {
  std::mt19937_64 rng(55);
  const Matrix a = random_spd(12, 100.0, rng, 0.9);
  bool cn_ok = true;
  std::string cn_detail;
  for (int p : {2, 4}) {
    for (std::size_t k = 1; k <= 6; ++k) {
      CnConfig cfg;
      cfg.p = p;
      cfg.fixed_iters = k;
      const ScopedOpCounter counter;
      coupled_newton(a, cfg);
      const std::uint64_t want = static_cast<std::uint64_t>(p == 2 ? 3 : 4) * k;
      cn_ok = cn_ok && counter.matmuls() == want;
      if (k == 6) cn_detail += fmt(" p=%d: %llu products for 6 iterations;", p, (unsigned long long)counter.matmuls());
    }
  }
  r.check("5.cn", cn_ok, "CN products per iteration 3 (p=2) / 4 (p=4), k = 1..6:" + cn_detail);

  bool ndb_ok = true;
  std::uint64_t at6 = 0;
  for (std::size_t k = 1; k <= 6; ++k) {
    NdbConfig cfg;
    cfg.fixed_iters = k;
    const ScopedOpCounter counter;
    newton_db(a, cfg);
    ndb_ok = ndb_ok && counter.matmuls() == 1 + 3 * (k - 1);
    at6 = counter.matmuls();
  }
  r.check("5.ndb", ndb_ok,
          fmt("NDB products 1 + 3(k-1), k = 1..6: %llu for 6 iterations", (unsigned long long)at6));

  bool cb_ok = true;
  std::string cb_detail;
  for (std::size_t d : {3, 10, 60}) {
    const ChebCoefficients fit = cheb_fit_inverse_root(4, d);
    const ScopedOpCounter opt_counter;
    clenshaw_matrix(a, fit, 1.0, Precision::Full64, true);
    const std::uint64_t optimized = opt_counter.matmuls();
    const ScopedOpCounter naive_counter;
    clenshaw_matrix(a, fit, 1.0, Precision::Full64, false);
    const std::uint64_t naive = naive_counter.matmuls();
    cb_ok = cb_ok && optimized == d - 1 && naive == d + 2;
    cb_detail += fmt(" d=%zu: %llu vs %llu;", d, (unsigned long long)optimized, (unsigned long long)naive);
  }
  r.check("5.cb", cb_ok, "Clenshaw products d-1 optimized vs d+2 naive:" + cb_detail);
}

// ------------------------------------------------------------- 6. optimizer

void criterion_6(Report& r) {
  {
    std::mt19937_64 rng(66);
    ShampooConfig cfg;
    cfg.block_size = 32;
    cfg.epsilon = 1e-3;
    cfg.beta_lr = 0.9;
    cfg.lr.base = 0.1;
    const Matrix theta = random_matrix(10, 14, rng);
    const Matrix g = random_matrix(10, 14, rng);
    ShampooOptimizer opt({{10, 14}}, cfg);
    std::vector<Matrix> params{theta};
    opt.step(params, std::vector<Matrix>{g});
    const double diff = max_abs_diff(params[0], reference_shampoo_step(theta, g, cfg));
    r.check("6.ref", diff <= 1e-10, fmt("single-block step vs hand-composed reference: max abs diff %.3g (limit 1e-10)", diff));
  }
  {
    std::mt19937_64 rng(67);
    ShampooConfig cfg;
    cfg.lr.base = 0.05;
    cfg.solver.method = RootMethod::NewtonDB;
    ShampooOptimizer opt({{24, 16}}, cfg);
    std::vector<Matrix> params{random_matrix(24, 16, rng)};
    double worst = 0.0;
    for (int t = 0; t < 5; ++t) {
      const Matrix g = random_matrix(24, 16, rng);
      const Matrix before = params[0];
      opt.step(params, std::vector<Matrix>{g});
      const double want = cfg.lr.base * frobenius_norm(opt.graft_direction(0, g));
      worst = std::max(worst, std::abs(frobenius_norm(before - params[0]) - want) / want);
    }
    r.check("6.graft", worst <= 1e-12,
            fmt("grafted update norm vs lr * ||P||_F over 5 steps: max rel diff %.3g (limit 1e-12)", worst));
  }

  const auto task = make_task(TaskKind::Quadratic, 0);
  const double initial = task->loss(task->initial_params());
  const std::vector<double> grid = default_lr_grid();
  const std::pair<RootMethod, const char*> backends[] = {{RootMethod::Evd, "evd"},
                                                         {RootMethod::CoupledNewton, "cn"},
                                                         {RootMethod::NewtonDB, "ndb"},
                                                         {RootMethod::Chebyshev, "cbshv"}};
  double evd_lr = 0.0;
  for (const auto& [method, name] : backends) {
    ShampooConfig cfg;
    cfg.solver.method = method;
    cfg.block_size = 32;
    try {
      const LrSweepResult sweep = sweep_learning_rate(*task, cfg, 200, grid);
      if (method == RootMethod::Evd) evd_lr = sweep.best_lr;
      const double reduction = initial / sweep.best_final_loss;
      r.check(std::string("6.q.") + name, reduction >= 1e3,
              fmt("quadratic 32x32, %s, 200 steps at swept lr %g: loss reduced %.3gx (want >= 1e3)", name,
                  sweep.best_lr, reduction));
    } catch (const NumericalError& e) {
      r.check(std::string("6.q.") + name, false, fmt("quadratic 32x32, %s: every lr failed (%s)", name, e.what()));
    }
  }

  ShampooConfig cfg;
  cfg.block_size = 32;
  cfg.lr.base = evd_lr;
  cfg.solver.method = RootMethod::Evd;
  const TrainResult evd = train(*task, cfg, 200);
  cfg.solver.method = RootMethod::NewtonDB;
  const TrainResult ndb = train(*task, cfg, 200);
  double worst = std::abs(evd.final_loss - ndb.final_loss) / evd.final_loss;
  for (std::size_t t = 0; t < evd.records.size(); ++t)
    worst = std::max(worst, std::abs(evd.records[t].loss - ndb.records[t].loss) / evd.records[t].loss);
  r.check("6.swap", worst <= 1e-3,
          fmt("EVD vs NDB per-step losses over 200 steps at lr %g: max rel diff %.3g (limit 1e-3)", evd_lr, worst));
}

// ---------------------------------------------------------------- 7. balance

std::uint64_t optimal_makespan(const std::vector<std::uint64_t>& sizes, std::size_t workers) {
  std::vector<std::uint64_t> sorted = sizes;
  std::sort(sorted.rbegin(), sorted.rend());
  std::vector<std::uint64_t> load(workers, 0);
  std::uint64_t best = std::accumulate(sorted.begin(), sorted.end(), std::uint64_t{0});
  std::function<void(std::size_t)> place = [&](std::size_t i) {
    if (i == sorted.size()) {
      best = std::min(best, *std::max_element(load.begin(), load.end()));
      return;
    }
    for (std::size_t w = 0; w < workers; ++w) {
      if (load[w] + sorted[i] >= best) continue;
      load[w] += sorted[i];
      place(i + 1);
      load[w] -= sorted[i];
      if (load[w] == 0) break;  // empty workers are interchangeable
    }
  };
  place(0);
  return best;
}

void criterion_7(Report& r) {
  {
    const std::vector<LayerSize> layers{{0, 10}, {1, 8}, {2, 3}, {3, 2}};
    const Assignment a = greedy_balance(layers, 2);
    const bool ok = a.workers[0].layers == std::vector<std::uint64_t>{0, 3} &&
                    a.workers[1].layers == std::vector<std::uint64_t>{1, 2} && a.workers[0].load == 12 &&
                    a.workers[1].load == 11;
    r.check("7.hand", ok,
            fmt("[10,8,3,2] on 2 workers: loads %llu / %llu (want {10,2}=12 and {8,3}=11)",
                (unsigned long long)a.workers[0].load, (unsigned long long)a.workers[1].load));
  }
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::uint64_t> small(1, 100);
  std::uniform_int_distribution<int> expo(0, 12);
  std::size_t instances = 0;
  double worst = 0.0;
  for (std::size_t n = 1; n <= 12; ++n) {
    for (std::size_t w = 1; w <= 4; ++w) {
      for (int trial = 0; trial < 12; ++trial) {
        std::vector<LayerSize> layers;
        std::vector<std::uint64_t> sizes;
        for (std::size_t i = 0; i < n; ++i) {
          const std::uint64_t s = trial % 2 == 0 ? small(rng) : (std::uint64_t{1} << expo(rng));
          layers.push_back({i, s});
          sizes.push_back(s);
        }
        const std::uint64_t greedy = simulate_sync_cost(greedy_balance(layers, w)).makespan;
        worst = std::max(worst, static_cast<double>(greedy) / static_cast<double>(optimal_makespan(sizes, w)));
        ++instances;
      }
    }
  }
  r.check("7.opt", worst <= 2.0,
          fmt("greedy vs brute-force optimum on %zu instances (n <= 12, W <= 4): worst makespan ratio %.4f (limit 2)",
              instances, worst));
}

}  // namespace

int main() {
  // Known failures, analysed in the project's decision notes: the
  // Coupled-Newton count at x = 1e-2 under the documented stopping rule,
  // and the accuracy ceiling of the default degree-60 Chebyshev fit.
  Report report({"1a.1", "2.cb2", "2.cb4"});
  const auto t0 = Clock::now();
  criterion_1(report);
  criterion_2(report);
  criterion_3(report);
  criterion_4(report);
  criterion_5(report);
  criterion_6(report);
  criterion_7(report);
  report.info("8", "Large-model training quality and datacenter wall-clock speedups are not reproducible at desk "
                   "scale; criteria 2, 3 and 6 stand in for them.");
  std::printf("total runtime %.1f s\n", seconds_since(t0));
  return report.finish();
}
