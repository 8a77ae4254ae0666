#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>
#include <vector>

#include "fpdm/budget/plan.hpp"
#include "fpdm/diffusion/schedule.hpp"
#include "fpdm/errors.hpp"
#include "fpdm/harness/cli.hpp"
#include "fpdm/harness/metrics.hpp"

namespace py = pybind11;
using namespace fpdm;

namespace {

using Array2 = py::array_t<float, py::array::c_style | py::array::forcecast>;

TensorF to_tensor(const Array2& a) {
  if (a.ndim() != 2) throw UsageError("expected a 2-D array of samples");
  TensorF t({std::size_t(a.shape(0)), std::size_t(a.shape(1))});
  std::copy(a.data(), a.data() + a.size(), t.raw());
  return t;
}

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> a(py::ssize_t(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

py::list plan_rows(const budget::BudgetPlan& p) {
  py::list rows;
  for (const auto& e : p.entries) rows.append(py::make_tuple(e.step_index, e.train_timestep, e.iterations));
  return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Fixed-point diffusion models";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<AuditError>(m, "AuditError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"fpdm"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = harness::run_cli(int(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run one fpdm subcommand; returns (exit_code, stdout, stderr).");

  m.def(
      "schedule",
      [](std::size_t T, double beta_start, double beta_end, bool zero_snr) {
        const auto s = diffusion::build_schedule(T, beta_start, beta_end, zero_snr);
        py::dict d;
        d["beta"] = to_array(s.beta);
        d["alpha"] = to_array(s.alpha);
        d["alpha_bar"] = to_array(s.alpha_bar);
        d["sqrt_alpha_bar"] = to_array(s.sqrt_alpha_bar);
        d["sqrt_one_minus_alpha_bar"] = to_array(s.sqrt_one_minus_alpha_bar);
        return d;
      },
      py::arg("T") = 1000, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02, py::arg("zero_snr") = true);

  m.def(
      "plan_constant",
      [](long budget, int k, int n_pre, int n_post, std::size_t T) {
        const auto p = budget::plan_constant(budget, k, budget::CostModel{n_pre, n_post}, T);
        return py::make_tuple(plan_rows(p), p.total_cost);
      },
      py::arg("budget"), py::arg("k"), py::arg("n_pre") = 1, py::arg("n_post") = 1, py::arg("T") = 1000,
      "Returns ([(step, timestep, iterations)], total_cost).");

  m.def(
      "plan_ramp",
      [](long budget, const std::string& direction, std::size_t S, int n_pre, int n_post, std::size_t T) {
        budget::Direction dir;
        if (direction == "increasing") {
          dir = budget::Direction::kIncreasing;
        } else if (direction == "decreasing") {
          dir = budget::Direction::kDecreasing;
        } else {
          throw UsageError("direction must be increasing or decreasing");
        }
        const auto p = budget::plan_ramp(budget, dir, S, budget::CostModel{n_pre, n_post}, T);
        return py::make_tuple(plan_rows(p), p.total_cost);
      },
      py::arg("budget"), py::arg("direction"), py::arg("S"), py::arg("n_pre") = 1, py::arg("n_post") = 1,
      py::arg("T") = 1000);

  m.def(
      "sliced_wasserstein",
      [](const Array2& a, const Array2& b) { return harness::sliced_wasserstein(to_tensor(a), to_tensor(b)); },
      py::arg("a"), py::arg("b"));
  m.def(
      "mmd_rbf", [](const Array2& a, const Array2& b) { return harness::mmd_rbf(to_tensor(a), to_tensor(b)); },
      py::arg("a"), py::arg("b"));
}
