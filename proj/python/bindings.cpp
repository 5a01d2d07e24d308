#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cstring>
#include <string>
#include <vector>

#include "blockshampoo/balance_sim.hpp"
#include "blockshampoo/blocking.hpp"
#include "blockshampoo/chebyshev.hpp"
#include "blockshampoo/eigensolver.hpp"
#include "blockshampoo/errors.hpp"
#include "blockshampoo/inverse_root.hpp"
#include "blockshampoo/iterative_roots.hpp"
#include "blockshampoo/shampoo.hpp"
#include "blockshampoo/toy_tasks.hpp"

namespace py = pybind11;
namespace bs = blockshampoo;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

bs::Matrix to_matrix(const Array& a) {
  if (a.ndim() == 1) return bs::Matrix(a.shape(0), 1, {a.data(), a.data() + a.size()});
  if (a.ndim() != 2) throw std::invalid_argument("expected a 1-D or 2-D array");
  return bs::Matrix(a.shape(0), a.shape(1), {a.data(), a.data() + a.size()});
}

Array to_array(const bs::Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Array to_array(const std::vector<double>& v) {
  Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

bs::BatchedTensor to_tensor(const Array& a) {
  if (a.ndim() != 3 || a.shape(1) != a.shape(2)) throw std::invalid_argument("expected a (batch, n, n) array");
  return bs::BatchedTensor(a.shape(0), a.shape(1), {a.data(), a.data() + a.size()});
}

Array to_array(const bs::BatchedTensor& t) {
  Array out({t.batch(), t.dim(), t.dim()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict report_dict(const bs::IterationReport& r) {
  py::dict d;
  d["iterations"] = r.iterations;
  d["residual"] = r.residual;
  d["converged"] = r.converged;
  d["status"] = bs::to_string(r.status);
  return d;
}

bs::Dampening parse_dampening(const std::string& s) {
  if (s == "legacy") return bs::Dampening::DistributedShampooLegacy;
  if (s == "relu") return bs::Dampening::CorrectedShiftedReLU;
  if (s == "abs") return bs::Dampening::CorrectedAbs;
  throw std::invalid_argument("unknown dampening '" + s + "' (legacy, relu, abs)");
}

bs::ScalingMode parse_norm(const std::string& s) {
  if (s == "pi") return bs::ScalingMode::power_iteration();
  if (s == "fro") return bs::ScalingMode::frobenius();
  throw std::invalid_argument("unknown norm '" + s + "' (pi, fro)");
}

bs::SolverConfig solver_config(const std::string& method, const std::string& norm, double tolerance,
                               std::size_t max_iters, const std::string& dampening) {
  bs::SolverConfig cfg;
  cfg.method = bs::parse_root_method(method);
  cfg.scaling = parse_norm(norm);
  cfg.tolerance = tolerance;
  cfg.max_iters = max_iters;
  cfg.dampening = parse_dampening(dampening);
  return cfg;
}

bs::LayerShape layer_shape(const py::tuple& t) {
  if (t.size() == 1) return {t[0].cast<std::size_t>(), 1, true};
  if (t.size() == 2) return {t[0].cast<std::size_t>(), t[1].cast<std::size_t>(), false};
  throw std::invalid_argument("layer shapes are (rows, cols) or (length,)");
}

std::vector<bs::Matrix> to_matrices(const std::vector<Array>& arrays) {
  std::vector<bs::Matrix> out;
  out.reserve(arrays.size());
  for (const Array& a : arrays) out.push_back(to_matrix(a));
  return out;
}

// Optimizer over numpy parameters, updated in place.
class PyShampoo {
 public:
  PyShampoo(const std::vector<py::tuple>& shapes, bs::ShampooConfig cfg) : opt_(convert(shapes), std::move(cfg)) {}

  py::dict step(std::vector<py::array_t<double>>& params, const std::vector<Array>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("params and grads differ in length");
    std::vector<bs::Matrix> p;
    for (auto& a : params) {
      if (!(a.flags() & py::array::c_style)) throw std::invalid_argument("params must be C-contiguous float64");
      p.push_back(to_matrix(Array::ensure(a)));
    }
    const bs::StepStats stats = opt_.step(p, to_matrices(grads));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto dst = params[i].mutable_data();
      std::copy(p[i].data().begin(), p[i].data().end(), dst);
    }
    py::dict d;
    d["step"] = stats.step;
    d["refreshed"] = stats.refreshed;
    d["update_norm"] = stats.update_norm;
    return d;
  }

  std::size_t step_count() const { return opt_.step_count(); }
  void save(const std::string& path) const { opt_.save(std::filesystem::path(path)); }
  void load(const std::string& path) { opt_.load(std::filesystem::path(path)); }

 private:
  static std::vector<bs::LayerShape> convert(const std::vector<py::tuple>& shapes) {
    std::vector<bs::LayerShape> out;
    for (const auto& t : shapes) out.push_back(layer_shape(t));
    return out;
  }
  bs::ShampooOptimizer opt_;
};

bs::ShampooConfig shampoo_config(double lr, double beta, double epsilon, std::size_t block_size,
                                 std::size_t update_freq, const std::string& method, const std::string& norm,
                                 double graft_beta1, double graft_beta2, double graft_eps, std::uint64_t seed) {
  bs::ShampooConfig cfg;
  cfg.lr.base = lr;
  cfg.beta_lr = beta;
  cfg.epsilon = epsilon;
  cfg.block_size = block_size;
  cfg.update_freq = update_freq;
  cfg.solver.method = bs::parse_root_method(method);
  cfg.solver.scaling = parse_norm(norm);
  cfg.graft = {graft_beta1, graft_beta2, graft_eps};
  cfg.seed = seed;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Blocked Shampoo preconditioning with iterative inverse roots";

  py::register_exception<bs::NumericalError>(m, "NumericalError", PyExc_RuntimeError);

  m.def(
      "eigh",
      [](const Array& a) {
        const bs::EigenDecomposition e = bs::eigh(to_matrix(a));
        return py::make_tuple(to_array(e.eigenvalues),
                              to_array(e.eigenvectors));
      },
      py::arg("a"), "Ascending eigenvalues and eigenvectors (columns) by cyclic Jacobi.");

  m.def(
      "inverse_root",
      [](const Array& a, int p, double epsilon, const std::string& method, const std::string& norm, double tolerance,
         std::size_t max_iters, const std::string& dampening, std::uint64_t seed) {
        bs::IterationReport rep;
        const bs::Matrix root =
            bs::inverse_root(to_matrix(a), p, epsilon, solver_config(method, norm, tolerance, max_iters, dampening),
                             seed, &rep);
        return py::make_tuple(to_array(root), report_dict(rep));
      },
      py::arg("a"), py::arg("p") = 4, py::arg("epsilon") = 1e-10, py::arg("method") = "evd", py::arg("norm") = "pi",
      py::arg("tolerance") = 1e-10, py::arg("max_iters") = 100, py::arg("dampening") = "abs", py::arg("seed") = 0,
      "(A + eps I)^(-1/p) and an iteration report. Methods: evd, cn, ndb, cbshv.");

  m.def(
      "batched_inverse_root",
      [](const Array& blocks, int p, double epsilon, const std::string& method, const std::string& norm,
         double tolerance, std::size_t max_iters, const std::string& dampening, std::uint64_t seed) {
        const bs::BatchedRoots r = bs::batched_inverse_root(
            to_tensor(blocks), p, epsilon, solver_config(method, norm, tolerance, max_iters, dampening), seed);
        py::list reports;
        for (const auto& rep : r.reports) reports.append(report_dict(rep));
        return py::make_tuple(to_array(r.roots), reports);
      },
      py::arg("blocks"), py::arg("p") = 4, py::arg("epsilon") = 1e-10, py::arg("method") = "evd",
      py::arg("norm") = "pi", py::arg("tolerance") = 1e-10, py::arg("max_iters") = 100, py::arg("dampening") = "abs",
      py::arg("seed") = 0, "Inverse roots of a (batch, n, n) stack in one call.");

  m.def(
      "coupled_newton",
      [](const Array& a, int p, double tolerance, std::size_t max_iters) {
        bs::CnConfig cfg;
        cfg.p = p;
        cfg.tolerance = tolerance;
        cfg.max_iters = max_iters;
        const bs::RootResult r = bs::coupled_newton(to_matrix(a), cfg);
        return py::make_tuple(to_array(r.root), report_dict(r.report));
      },
      py::arg("a"), py::arg("p") = 2, py::arg("tolerance") = 1e-10, py::arg("max_iters") = 100,
      "A^(-1/p) by coupled Newton; the spectrum of A must lie in (0, 1).");

  m.def(
      "newton_db",
      [](const Array& a, double tolerance, std::size_t max_iters) {
        bs::NdbConfig cfg;
        cfg.tolerance = tolerance;
        cfg.max_iters = max_iters;
        const bs::NdbResult r = bs::newton_db(to_matrix(a), cfg);
        return py::make_tuple(to_array(r.sqrt), to_array(r.inv_sqrt), report_dict(r.report));
      },
      py::arg("a"), py::arg("tolerance") = 1e-10, py::arg("max_iters") = 100,
      "(A^(1/2), A^(-1/2), report) by the Newton-Denman-Beavers iteration.");

  m.def(
      "scalar_iteration_count",
      [](double x, const std::string& method, int p, double tolerance, std::size_t cap) {
        bs::ScalarMethod sm;
        if (method == "cn")
          sm = bs::ScalarMethod::CoupledNewton;
        else if (method == "ndb")
          sm = bs::ScalarMethod::NewtonDB;
        else
          throw std::invalid_argument("unknown scalar method '" + method + "' (cn, ndb)");
        const bs::ScalarCount c = bs::scalar_iteration_count(x, sm, p, tolerance, cap);
        return py::make_tuple(c.iterations, c.converged);
      },
      py::arg("x"), py::arg("method") = "cn", py::arg("p") = 2, py::arg("tolerance") = 1e-10, py::arg("cap") = 100);

  m.def(
      "cheb_fit_inverse_root",
      [](int p, std::size_t degree, std::size_t points, double lower, double upper) {
        const bs::ChebCoefficients c = bs::cheb_fit_inverse_root(p, degree, points, lower, upper);
        return to_array(c.coeffs);
      },
      py::arg("p"), py::arg("degree") = 60, py::arg("points") = 1000, py::arg("lower") = 1e-10,
      py::arg("upper") = 1.0 + 1e-10, "Chebyshev coefficients of x^(-1/p) on [lower, upper].");

  m.def(
      "stack_groups",
      [](const std::vector<py::tuple>& shapes, std::size_t block_size) {
        std::vector<bs::LayerPlan> plans;
        for (std::size_t i = 0; i < shapes.size(); ++i) {
          const bs::LayerShape s = layer_shape(shapes[i]);
          plans.push_back({i, s.vector_layer ? bs::plan_vector_partition(s.rows, block_size)
                                             : bs::plan_partition(s.rows, s.cols, block_size)});
        }
        py::list out;
        for (const auto& g : bs::build_stack_groups(plans))
          out.append(py::make_tuple(g.members.size(), g.dim, g.root_order));
        return out;
      },
      py::arg("shapes"), py::arg("block_size"),
      "(count, dim, root_order) per stacked group for layers given as (rows, cols) or (length,).");

  m.def(
      "greedy_balance",
      [](const std::vector<std::uint64_t>& params, std::size_t workers) {
        std::vector<bs::LayerSize> layers;
        for (std::size_t i = 0; i < params.size(); ++i) layers.push_back({i, params[i]});
        const bs::Assignment a = bs::greedy_balance(layers, workers);
        const bs::SyncCost cost = bs::simulate_sync_cost(a);
        py::list assignment;
        for (const auto& w : a.workers) assignment.append(w.layers);
        py::dict d;
        d["workers"] = assignment;
        d["makespan"] = cost.makespan;
        d["broadcast_volume"] = cost.broadcast_volume;
        return d;
      },
      py::arg("params"), py::arg("workers"), "Assign layers (by index) to workers, largest first.");

  py::class_<PyShampoo>(m, "Shampoo")
      .def(py::init([](const std::vector<py::tuple>& shapes, double lr, double beta, double epsilon,
                       std::size_t block_size, std::size_t update_freq, const std::string& method,
                       const std::string& norm, double graft_beta1, double graft_beta2, double graft_eps,
                       std::uint64_t seed) {
             return PyShampoo(shapes, shampoo_config(lr, beta, epsilon, block_size, update_freq, method, norm,
                                                     graft_beta1, graft_beta2, graft_eps, seed));
           }),
           py::arg("shapes"), py::arg("lr") = 1e-3, py::arg("beta") = 0.95, py::arg("epsilon") = 1e-10,
           py::arg("block_size") = 1024, py::arg("update_freq") = 1, py::arg("method") = "evd",
           py::arg("norm") = "pi", py::arg("graft_beta1") = 0.0, py::arg("graft_beta2") = 0.999,
           py::arg("graft_eps") = 1e-8, py::arg("seed") = 0)
      .def("step", &PyShampoo::step, py::arg("params"), py::arg("grads"),
           "Update float64 C-contiguous arrays in place; returns step statistics.")
      .def_property_readonly("step_count", &PyShampoo::step_count)
      .def("save", &PyShampoo::save, py::arg("path"))
      .def("load", &PyShampoo::load, py::arg("path"));

  m.def(
      "train",
      [](const std::string& task, std::size_t steps, double lr, const std::string& method, std::size_t block_size,
         std::size_t update_freq, std::uint64_t seed) {
        const auto t = bs::make_task(bs::parse_task_kind(task), seed);
        bs::ShampooConfig cfg = shampoo_config(lr, 0.95, 1e-10, block_size, update_freq, method, "pi", 0.0, 0.999,
                                               1e-8, seed);
        const bs::TrainResult r = bs::train(*t, cfg, steps);
        std::vector<double> loss, grad_norm, update_norm;
        std::vector<bool> refreshed;
        for (const auto& rec : r.records) {
          loss.push_back(rec.loss);
          grad_norm.push_back(rec.grad_norm);
          update_norm.push_back(rec.update_norm);
          refreshed.push_back(rec.refreshed);
        }
        py::dict d;
        d["loss"] = loss;
        d["grad_norm"] = grad_norm;
        d["update_norm"] = update_norm;
        d["refreshed"] = refreshed;
        d["final_loss"] = r.final_loss;
        return d;
      },
      py::arg("task") = "quadratic", py::arg("steps") = 200, py::arg("lr") = 1e-3, py::arg("method") = "evd",
      py::arg("block_size") = 1024, py::arg("update_freq") = 1, py::arg("seed") = 0,
      "Run the optimizer on a built-in toy task (quadratic, logreg, mlp).");
}
