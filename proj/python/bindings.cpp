#include "hbl/harness.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace hbl;

namespace {

py::object json_loads(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

py::dict spectrum_dict(const SpectrumPrediction& p) {
  py::dict d;
  d["depth"] = p.depth;
  d["rank"] = p.rank;
  d["lambdas"] = p.lambdas;
  d["dominant_values"] = p.dominant_values;
  d["bulk_values"] = p.bulk_values;
  d["dominant_count"] = p.dominant_count;
  d["bulk_count"] = p.bulk_count;
  d["gram_zero_count"] = p.gram_zero_count;
  d["gram_size"] = p.gram_size;
  d["m"] = p.m;
  d["delta"] = p.delta;
  d["gap_condition_ok"] = p.gap_condition_ok;
  d["dominant_interval"] = p.dominant_interval();
  d["bulk_interval"] = p.bulk_interval();
  return d;
}

py::dict run_dict(const RunArtifacts& run) {
  py::dict d;
  d["summary"] = json_loads(summary_json(run));
  d["passed"] = run.passed();
  d["loss_curve"] = run.loss_curve;
  d["final_eigenvalues"] = run.final_checkpoint().spectrum.eigenvalues;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deep linear network Hessian spectra: assembly, dynamics and checks";

  static py::exception<Error> base_error(m, "Error", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", base_error.ptr());
  static py::exception<NumericalFailure> numerical_error(m, "NumericalFailure", base_error.ptr());
  m.attr("CheckFailure") = base_error;
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const int code = exit_code_for(e.kind());
      if (e.kind() == ErrorKind::kConfig) {
        PyErr_SetString(config_error.ptr(), e.what());
      } else if (code == kExitNumericalFailure) {
        PyErr_SetString(numerical_error.ptr(), e.what());
      } else {
        PyErr_SetString(base_error.ptr(), e.what());
      }
    }
  });

  // matrix kit
  m.def("kron", [](const Matrix& a, const Matrix& b) { return kron(a, b); }, py::arg("a"), py::arg("b"));
  m.def("vec_row", &vec_row, py::arg("a"));
  m.def("unvec_row", &unvec_row, py::arg("v"), py::arg("rows"), py::arg("cols"));
  m.def("pad_embed", &pad_embed, py::arg("b"), py::arg("rows"), py::arg("cols"));
  m.def("svd", [](const Matrix& a) {
    Svd s = svd(a);
    return py::make_tuple(s.u, s.sigma, s.v);
  }, py::arg("a"));
  m.def("sym_eig", [](const Matrix& s) {
    SymEig e = sym_eig(s);
    return py::make_tuple(e.values, e.vectors);
  }, py::arg("s"));
  m.def("spectral_norm", &spectral_norm, py::arg("a"));

  // network
  py::class_<NetworkDims>(m, "NetworkDims")
      .def(py::init<std::vector<Index>, Index>(), py::arg("widths"), py::arg("rank"))
      .def_static("uniform", &NetworkDims::uniform, py::arg("depth"), py::arg("input"), py::arg("hidden"),
                  py::arg("output"), py::arg("rank"))
      .def_property_readonly("depth", &NetworkDims::depth)
      .def_property_readonly("rank", &NetworkDims::rank)
      .def_property_readonly("d_star", &NetworkDims::d_star)
      .def_property_readonly("widths", &NetworkDims::widths)
      .def_property_readonly("parameter_count", &NetworkDims::parameter_count)
      .def("__repr__", [](const NetworkDims& d) {
        std::string w;
        for (Index x : d.widths()) w += (w.empty() ? "" : ", ") + std::to_string(x);
        return "NetworkDims([" + w + "], rank=" + std::to_string(d.rank()) + ")";
      });

  py::class_<WeightStack>(m, "WeightStack")
      .def_readwrite("layers", &WeightStack::layers)
      .def_readwrite("u", &WeightStack::u)
      .def_readwrite("v", &WeightStack::v)
      .def_property_readonly("depth", &WeightStack::depth);

  py::class_<DataModel>(m, "DataModel")
      .def_readwrite("sigma_xx", &DataModel::sigma_xx)
      .def_readwrite("sigma_yx", &DataModel::sigma_yx)
      .def_readonly("rank", &DataModel::rank)
      .def_readonly("support", &DataModel::support);

  m.def("balanced_init", [](const NetworkDims& dims, const Vector& singular_values, std::uint64_t seed,
                            Index support, bool allow_nonzero_tail) {
    return balanced_init(dims, singular_values, SeededFrames{seed, support},
                         BalancedInitOptions{allow_nonzero_tail});
  }, py::arg("dims"), py::arg("singular_values"), py::arg("seed") = 1, py::arg("support") = 0,
        py::arg("allow_nonzero_tail") = false);
  m.def("whitened_data", [](const NetworkDims& dims, const WeightStack& w, const std::string& support) {
    if (support != "d_star" && support != "rank") throw ConfigError("support must be 'd_star' or 'rank'");
    return whitened_data(dims, w.u, w.v, support == "rank" ? InputSupport::kRank : InputSupport::kDStar);
  }, py::arg("dims"), py::arg("w"), py::arg("support") = "d_star");
  m.def("end_to_end", &end_to_end, py::arg("w"));
  m.def("residual", &residual, py::arg("w"), py::arg("data"));
  m.def("population_gradient", &population_gradient, py::arg("w"), py::arg("data"), py::arg("layer"));
  m.def("gd_step", &gd_step, py::arg("w"), py::arg("data"), py::arg("eta"));
  m.def("population_loss", &population_loss, py::arg("w"), py::arg("data"));
  m.def("excess_loss_trace", &excess_loss_trace, py::arg("w"), py::arg("data"));
  m.def("population_excess_loss", [](const WeightStack& w, const DataModel& d) {
    return population_excess_loss(w, d);
  }, py::arg("w"), py::arg("data"));
  m.def("spectral_state", [](const WeightStack& w) {
    SpectralState s = spectral_state(w);
    return py::make_tuple(s.lambdas, s.residual);
  }, py::arg("w"));

  // dynamics
  m.def("lambda_step", &lambda_step, py::arg("lam"), py::arg("eta"), py::arg("depth"));
  m.def("max_step_size", &max_step_size, py::arg("depth"), py::arg("m"));
  m.def("closed_form_excess_loss", &closed_form_excess_loss, py::arg("lambdas"), py::arg("depth"));
  m.def("run_scalar_dynamics", [](const Vector& lambda0, double eta, Index depth, Index steps) {
    ScalarRun run = run_scalar_dynamics(lambda0, eta, depth, steps);
    Matrix values(static_cast<Index>(run.trajectory.values.size()), lambda0.size());
    for (std::size_t t = 0; t < run.trajectory.values.size(); ++t) {
      values.row(static_cast<Index>(t)) = run.trajectory.values[t].transpose();
    }
    py::dict report;
    report["alpha"] = run.report.alpha;
    report["c_min"] = run.report.c_min;
    report["converged_at"] = run.report.converged_at ? py::cast(*run.report.converged_at) : py::none();
    report["predicted_decay_rate"] = run.report.predicted_decay_rate;
    report["window_start"] = run.report.window_start;
    return py::make_tuple(values, report);
  }, py::arg("lambda0"), py::arg("eta"), py::arg("depth"), py::arg("steps"));

  // hessian
  m.def("assemble_hessian", [](const WeightStack& w, const DataModel& d) {
    HessianPair h = assemble_hessian(w, d);
    py::dict out;
    out["h_o"] = h.h_o;
    out["h_f"] = h.h_f;
    out["h_total"] = h.h_total;
    out["offsets"] = h.layout.offsets;
    return out;
  }, py::arg("w"), py::arg("data"));
  m.def("outer_gram", [](const WeightStack& w, const DataModel& d) { return outer_gram(w, d); },
        py::arg("w"), py::arg("data"));
  m.def("finite_difference_hessian", [](const WeightStack& w, const DataModel& d, double step) {
    return finite_difference_hessian(w, d, step);
  }, py::arg("w"), py::arg("data"), py::arg("step") = kDefaultFdStep);
  m.def("hf_norm_bound", py::overload_cast<double, double, Index, Index>(&hf_norm_bound),
        py::arg("lambda_max"), py::arg("epsilon"), py::arg("rank"), py::arg("depth"));
  m.def("block_norm_bound", [](const Matrix& h, const WeightStack& w) {
    return block_norm_bound(h, ParameterLayout::of(w));
  }, py::arg("h"), py::arg("w"));

  // spectrum
  m.def("pair_eigenvalue", &pair_eigenvalue, py::arg("lambda_i"), py::arg("lambda_j"), py::arg("depth"));
  m.def("predict_spectrum", [](const Vector& lambdas, const NetworkDims& dims, Index input_support) {
    return spectrum_dict(predict_spectrum(lambdas, dims, input_support));
  }, py::arg("lambdas"), py::arg("dims"), py::arg("input_support") = 0);

  // harness
  m.def("parse_config", [](const std::string& text) { return json_loads(config_to_json(parse_config(text))); },
        py::arg("text"), "Validate the syntax of a config and return it with defaults filled in.");
  m.def("load_config", [](const std::filesystem::path& p) { return json_loads(config_to_json(load_config(p))); },
        py::arg("path"));
  m.def("run_experiment", [](const std::string& config_text, bool write_files) {
    const ExperimentConfig cfg = parse_config(config_text);
    RunArtifacts run = [&] {
      py::gil_scoped_release release;
      return run_experiment(cfg, RunOptions{write_files});
    }();
    return run_dict(run);
  }, py::arg("config"), py::arg("write_files") = false,
        "Run a config given as JSON text. Returns the summary plus the final eigenvalues.");
  m.def("run_sweep", [](const std::string& config_text, const std::vector<Index>& depths,
                        const std::vector<Index>& ranks, Index workers, bool write_files) {
    const ExperimentConfig cfg = parse_config(config_text);
    SweepSummary summary = [&] {
      py::gil_scoped_release release;
      return run_sweep(cfg, depths, ranks, workers, RunOptions{write_files});
    }();
    py::list points;
    for (const SweepPoint& p : summary.points) {
      py::dict d;
      d["depth"] = p.depth;
      d["rank"] = p.rank;
      d["status"] = p.status;
      d["error"] = p.error;
      d["ratio"] = p.ratio;
      d["dominant_count"] = p.dominant_count;
      d["bulk_count"] = p.bulk_count;
      d["zero_count"] = p.zero_count;
      d["max_bound_violation"] = p.max_bound_violation;
      points.append(d);
    }
    py::list fits;
    for (const RankFit& f : summary.fits) {
      py::dict d;
      d["rank"] = f.rank;
      if (f.fit) {
        d["slope"] = f.fit->slope;
        d["intercept"] = f.fit->intercept;
        d["max_rel_dev"] = f.fit->max_rel_dev;
        d["within_envelope"] = f.fit->within_envelope;
      } else {
        d["error"] = f.error;
      }
      fits.append(d);
    }
    py::dict out;
    out["passed"] = summary.passed();
    out["points"] = points;
    out["fits"] = fits;
    return out;
  }, py::arg("config"), py::arg("depths"), py::arg("ranks"), py::arg("workers") = 1,
        py::arg("write_files") = false);
}
