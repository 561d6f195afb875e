#include "univc/diagnostics.hpp"
#include "univc/errors.hpp"
#include "univc/estimation.hpp"
#include "univc/model.hpp"
#include "univc/partition.hpp"
#include "univc/simharness.hpp"
#include "univc/slrt.hpp"
#include "univc/structured.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace univc;

namespace {

ResponseVector as_response(const VectorXd& y) { return ResponseVector{y}; }

py::dict fit_to_dict(const FitResult& f) {
  py::dict d;
  d["h2"] = f.theta.h2;
  d["tau2"] = f.theta.tau2;
  d["sigma2"] = f.sigma2;
  d["loglik"] = f.loglik;
  d["converged"] = f.converged;
  d["iterations"] = f.iterations;
  return d;
}

NullSpec make_null(const std::map<Index, double>& pins, const std::string& scale) {
  if (scale == "h2") return NullSpec::h2(pins);
  if (scale == "sigma2") return NullSpec::sigma2(pins);
  throw UsageError("scale must be 'h2' or 'sigma2'");
}

}  // namespace

PYBIND11_MODULE(_univc, m) {
  m.doc() = "Split likelihood-ratio inference for variance components";
  m.attr("__version__") = UNIVC_VERSION;

  static py::exception<Error> error(m, "Error", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  py::class_<KernelSet>(m, "KernelSet")
      .def_static("dense", &KernelSet::dense, py::arg("kernels"), py::arg("validate") = true)
      .def_static("diagonal", &KernelSet::diagonal, py::arg("eigs"))
      .def_static(
          "shared_eigen",
          [](MatrixXd basis, std::vector<VectorXd> eigs) {
            return KernelSet::shared_eigen(std::move(basis), std::move(eigs));
          },
          py::arg("basis"), py::arg("eigs"))
      .def_static(
          "crossed",
          [](std::vector<Index> dims, std::optional<std::vector<Index>> random) {
            CrossedDesign d = CrossedDesign::all_random(std::move(dims));
            if (random) d.random = *random;
            d.validate();
            return KernelSet::crossed(std::move(d));
          },
          py::arg("dims"), py::arg("random") = py::none())
      .def_property_readonly("n", &KernelSet::n)
      .def_property_readonly("M", &KernelSet::M)
      .def_property_readonly("representation",
                             [](const KernelSet& K) { return std::string(to_string(K.representation())); })
      .def("materialize_dense", &KernelSet::materialize_dense)
      .def("eigenvalues", [](const KernelSet& K) -> py::object {
        if (const auto* E = K.structure()) return py::cast(E->eigs);
        return py::none();
      });

  py::class_<NullSpec>(m, "NullSpec")
      .def(py::init(&make_null), py::arg("pins"), py::arg("scale") = "h2",
           "Pins components (0-based) on the h2 or sigma2 scale.")
      .def_static("none", &NullSpec::none)
      .def("describe", &NullSpec::describe)
      .def("__repr__", [](const NullSpec& n) { return "NullSpec(" + n.describe() + ")"; });

  m.def(
      "theta_from_sigma2",
      [](const VectorXd& s2) {
        const ThetaParam t = theta_from_sigma2({s2});
        return py::make_tuple(t.h2, t.tau2);
      },
      py::arg("sigma2"));
  m.def(
      "sigma2_from_theta",
      [](const VectorXd& h2, double tau2) { return sigma2_from_theta({h2, tau2}).sigma2; },
      py::arg("h2"), py::arg("tau2"));

  m.def(
      "loglik_dense",
      [](const VectorXd& y, const VectorXd& h2, double tau2, const KernelSet& K) {
        return loglik_dense(as_response(y), {h2, tau2}, K);
      },
      py::arg("y"), py::arg("h2"), py::arg("tau2"), py::arg("kernels"));
  m.def(
      "loglik_grad_dense",
      [](const VectorXd& y, const VectorXd& h2, double tau2, const KernelSet& K) {
        return loglik_grad_dense(as_response(y), {h2, tau2}, K);
      },
      py::arg("y"), py::arg("h2"), py::arg("tau2"), py::arg("kernels"));
  m.def(
      "profile_tau2",
      [](const VectorXd& y, const VectorXd& h2, const KernelSet& K) {
        return profile_tau2(as_response(y), h2, K);
      },
      py::arg("y"), py::arg("h2"), py::arg("kernels"));
  m.def("loglik_diag", &loglik_diag, py::arg("y"), py::arg("sigma2"), py::arg("eigs"));
  m.def("loglik_grad_diag", &loglik_grad_diag, py::arg("y"), py::arg("sigma2"), py::arg("eigs"));

  m.def(
      "fit",
      [](const VectorXd& y, const KernelSet& K, const NullSpec& null) {
        return fit_to_dict(fit_marginal(as_response(y), K, {}, null));
      },
      py::arg("y"), py::arg("kernels"), py::arg("null") = NullSpec::none());

  m.def(
      "make_partition",
      [](Index n, Index n0, std::uint64_t seed) {
        const Partition p = make_partition(n, n0, seed);
        return py::make_tuple(p.idx0, p.idx1);
      },
      py::arg("n"), py::arg("n0"), py::arg("seed"));

  m.def(
      "split_lrt",
      [](const VectorXd& y, const KernelSet& K, const NullSpec& null, std::vector<Index> idx0,
         const std::string& method) {
        SlrtOptions o;
        o.method = method_from_string(method);
        const SplitResult r =
            split_lrt(as_response(y), K, null, partition_from_indices(K.n(), std::move(idx0)), o);
        py::dict d;
        d["log_stat"] = r.log_stat;
        d["theta1"] = fit_to_dict(r.theta1);
        d["theta0"] = fit_to_dict(r.theta0);
        return d;
      },
      py::arg("y"), py::arg("kernels"), py::arg("null"), py::arg("idx0"), py::arg("method") = "auto");

  m.def(
      "test",
      [](const VectorXd& y, const KernelSet& K, const NullSpec& null, Index k,
         std::uint64_t seed_split, std::uint64_t seed_u, double alpha, bool randomized,
         const std::string& method) {
        SlrtOptions o;
        o.method = method_from_string(method);
        const SlrtResult r =
            kfold_slrt(as_response(y), K, null, k, seed_split, seed_u, alpha, o, randomized);
        py::dict d;
        d["stat"] = r.stat;
        d["log_stat"] = r.log_stat;
        d["fold_log_stats"] = r.fold_log_stats;
        d["u"] = r.u;
        d["reject"] = r.reject;
        d["p_value"] = r.p_value;
        d["method"] = std::string(to_string(r.method));
        return d;
      },
      py::arg("y"), py::arg("kernels"), py::arg("null"), py::arg("k") = 1,
      py::arg("seed_split") = 1, py::arg("seed_u") = 2, py::arg("alpha") = 0.05,
      py::arg("randomized") = true, py::arg("method") = "auto");

  m.def(
      "confidence_interval",
      [](const VectorXd& y, const KernelSet& K, Index component, const std::string& target,
         double lo, double hi, int steps, double alpha, Index k, std::uint64_t seed_split,
         std::uint64_t seed_u, bool randomized) {
        const CiResult c = confidence_interval(as_response(y), K, component,
                                               ci_target_from_string(target), CiGrid{lo, hi, steps},
                                               alpha, k, seed_split, seed_u, {}, randomized);
        py::dict d;
        d["empty"] = c.empty;
        d["lower"] = c.lower;
        d["upper"] = c.upper;
        d["u"] = c.u;
        d["log_threshold"] = c.log_threshold;
        d["grid"] = c.curve.x;
        d["log_stat"] = c.curve.log_stat;
        return d;
      },
      py::arg("y"), py::arg("kernels"), py::arg("component"), py::arg("target") = "h2",
      py::arg("lo") = 0.0, py::arg("hi") = 0.99, py::arg("steps") = 34, py::arg("alpha") = 0.05,
      py::arg("k") = 1, py::arg("seed_split") = 1, py::arg("seed_u") = 2,
      py::arg("randomized") = true);

  m.def(
      "ci_width_distribution",
      [](std::vector<double> x, std::vector<double> log_stat, double alpha, int draws,
         std::uint64_t seed) {
        return ci_width_distribution(CiCurve{std::move(x), std::move(log_stat)}, alpha, draws, seed);
      },
      py::arg("grid"), py::arg("log_stat"), py::arg("alpha"), py::arg("draws"), py::arg("seed"));

  m.def(
      "gen_data",
      [](const VectorXd& sigma2, const KernelSet& K, std::uint64_t seed) {
        return gen_data(Sigma2Param{sigma2}, K, seed).y;
      },
      py::arg("sigma2"), py::arg("kernels"), py::arg("seed"));
  m.def("ar1_eigenvalues", &ar1_eigenvalues, py::arg("n"), py::arg("rho"));
  m.def("spiked_eigenvalues", &spiked_eigenvalues, py::arg("n"), py::arg("q"), py::arg("a1"),
        py::arg("a2"), py::arg("a3"), py::arg("c"));
  m.def(
      "spiked_kernel_pair",
      [](Index n, Index q1, Index q2, double a1, double a2, double a3, double c, std::uint64_t seed) {
        SpikedPair p = spiked_kernel_pair(n, q1, q2, a1, a2, a3, c, seed);
        return py::make_tuple(p.exact, p.approx);
      },
      py::arg("n"), py::arg("q1"), py::arg("q2"), py::arg("a1") = 5.0, py::arg("a2") = 5.0,
      py::arg("a3") = 10.0, py::arg("c") = 100.0, py::arg("seed") = 0);
  m.def("disjoint_support_kernels", &disjoint_support_kernels, py::arg("n"), py::arg("M"),
        py::arg("rho") = 0.5, py::arg("seed") = 0, py::arg("keep_dense") = false);

  m.def(
      "joint_diagonalize",
      [](const std::vector<MatrixXd>& K) {
        const EigenStructure E = joint_diagonalize_annihilating(K);
        return py::make_tuple(E.materialize_basis(), E.eigs);
      },
      py::arg("kernels"));
  m.def("approx_truncate", &approx_truncate, py::arg("K"), py::arg("q"));

  m.def("center", [](const VectorXd& y) { return center_response(y).y; }, py::arg("y"));
  m.def(
      "blup",
      [](const VectorXd& y, const std::vector<MatrixXd>& Z, const VectorXd& sigma2) {
        const BlupResult b = blup(y, Z, sigma2);
        py::dict d;
        d["u_hat"] = b.u_hat;
        d["offsets"] = b.offsets;
        d["fitted"] = b.fitted;
        d["resid"] = b.resid;
        return d;
      },
      py::arg("y"), py::arg("Z"), py::arg("sigma2"));
  m.def(
      "crossed_z",
      [](std::vector<Index> dims) { return build_crossed_Z(CrossedDesign::all_random(std::move(dims))); },
      py::arg("dims"));
  m.def(
      "qq_data",
      [](const VectorXd& resid, double scale) {
        const QQData q = qq_data(resid, scale);
        return py::make_tuple(q.theoretical, q.sample);
      },
      py::arg("resid"), py::arg("scale") = 1.0);
}
