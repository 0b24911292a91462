#include "hbl/harness.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>
#include <sstream>

namespace hbl {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string num(double v) { return fmt::format("{:.17g}", v); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
}

void remove_quietly(const fs::path& path) {
  std::error_code ec;
  fs::remove(path, ec);
}

std::string provenance(const CheckpointRecord& c) { return c.measured ? "measured" : "predicted"; }

Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Json checks_json(const std::vector<CheckVerdict>& checks) {
  Json out = Json::array();
  for (const CheckVerdict& c : checks) {
    out.push_back({{"name", c.name},
                   {"passed", c.passed},
                   {"worst", c.worst},
                   {"tolerance", c.tolerance},
                   {"detail", c.detail}});
  }
  return out;
}

Json counts_json(const SpectrumReport& s) {
  return {{"dominant", s.dominant_count}, {"bulk", s.bulk_count}, {"zero", s.zero_count}};
}

Json expected_counts_json(const SpectrumReport& s) {
  return {{"dominant", s.prediction.dominant_count},
          {"bulk", s.prediction.bulk_count},
          {"zero", s.expected_zero_count}};
}

}  // namespace

std::string trajectory_csv(const RunArtifacts& run) {
  const Index r = run.resolved.dims.rank();
  std::string out = "step";
  for (Index i = 1; i <= r; ++i) out += fmt::format(",lambda_{}", i);
  out += ",excess_loss,hf_norm,hf_provenance\n";
  for (const CheckpointRecord& c : run.checkpoints) {
    out += std::to_string(c.step);
    for (Index i = 0; i < r; ++i) out += "," + num(c.lambdas[i]);
    out += fmt::format(",{},{},{}\n", num(c.excess_loss), num(c.hf_norm), c.measured ? "measured" : "bound");
  }
  return out;
}

std::string spectrum_csv(const CheckpointRecord& c) {
  std::string out = "eigenvalue,cluster,predicted_value,provenance,h_o_eigenvalue\n";
  const SpectrumReport& s = c.spectrum;
  const std::string prov = provenance(c);
  for (Index k = 0; k < s.eigenvalues.size(); ++k) {
    const double outer = k < c.outer_eigenvalues.size() ? c.outer_eigenvalues[k] : 0.0;
    out += fmt::format("{},{},{},{},{}\n", num(s.eigenvalues[k]),
                       to_string(s.cluster_of[static_cast<std::size_t>(k)]), num(s.predicted_value[k]), prov,
                       num(outer));
  }
  return out;
}

std::string summary_json(const RunArtifacts& run) {
  const ResolvedConfig& rc = run.resolved;
  Json root;
  root["name"] = rc.config.name;
  root["passed"] = run.passed();
  root["config"] = Json::parse(config_to_json(rc.config));

  Json& res = root["resolved"];
  res["depth"] = rc.dims.depth();
  res["widths"] = rc.dims.widths();
  res["rank"] = rc.dims.rank();
  res["d_star"] = rc.dims.d_star();
  res["input_support"] = rc.support;
  res["parameter_count"] = rc.parameter_count;
  res["eta"] = rc.eta;
  res["max_eta"] = rc.max_eta;
  res["m"] = rc.m;
  res["initial_lambdas"] = vector_json(rc.initial_lambdas);
  res["measure_hessian"] = rc.measure_hessian;
  res["checkpoints"] = rc.checkpoints;

  root["checks"] = checks_json(run.checks);

  Json& dyn = root["dynamics"];
  dyn["alpha_window"] = run.dynamics.alpha;
  dyn["window_start"] = run.dynamics.window_start;
  dyn["alpha_full"] = run.alpha_full;
  dyn["c_min"] = run.dynamics.c_min;
  dyn["converged_at"] = run.dynamics.converged_at ? Json(*run.dynamics.converged_at) : Json(nullptr);
  dyn["predicted_decay_rate"] = run.dynamics.predicted_decay_rate;
  dyn["scalar_matrix_deviation"] = run.scalar_matrix_deviation;
  dyn["max_structure_residual"] = run.max_structure_residual;
  root["max_bound_violation"] = run.max_bound_violation;

  const CheckpointRecord& last = run.final_checkpoint();
  Json& fin = root["final"];
  fin["step"] = last.step;
  fin["excess_loss"] = last.excess_loss;
  fin["provenance"] = provenance(last);
  fin["ratio"] = last.spectrum.ratio;
  fin["ratio_min"] = last.spectrum.ratio_min;
  fin["ratio_max"] = last.spectrum.ratio_max;
  fin["counts"] = counts_json(last.spectrum);
  fin["expected_counts"] = expected_counts_json(last.spectrum);
  fin["counts_match"] = last.spectrum.counts_match;
  fin["gap_condition_ok"] = last.spectrum.prediction.gap_condition_ok;
  fin["hf_norm"] = last.hf_norm;

  Json cps = Json::array();
  for (const CheckpointRecord& c : run.checkpoints) {
    Json j;
    j["step"] = c.step;
    j["provenance"] = provenance(c);
    j["lambdas"] = vector_json(c.lambdas);
    j["lambda_max"] = c.lambda_max;
    j["excess_loss"] = c.excess_loss;
    j["excess_loss_trace"] = c.excess_loss_trace;
    j["structure_residual"] = c.structure_residual;
    j["omega_norm"] = c.omega_norm;
    j["omega_bound"] = c.omega_bound;
    j["hf_norm"] = c.hf_norm;
    j["hf_bound"] = c.hf_bound;
    j["hf_block_bound"] = c.hf_block_bound;
    j["weyl_violation"] = c.weyl_violation;
    j["ratio"] = c.spectrum.ratio;
    j["ratio_min"] = c.spectrum.ratio_min;
    j["ratio_max"] = c.spectrum.ratio_max;
    j["counts"] = counts_json(c.spectrum);
    j["prediction_deviation"] = c.spectrum.prediction_deviation;
    j["gap_condition_ok"] = c.spectrum.prediction.gap_condition_ok;
    if (c.gram_vs_full) j["gram_vs_full"] = *c.gram_vs_full;
    if (c.fd_error) j["fd_error"] = *c.fd_error;
    if (c.eigenvectors) {
      j["eigenvectors"] = {{"max_residual", c.eigenvectors->max_residual},
                           {"max_rayleigh_error", c.eigenvectors->max_rayleigh_error},
                           {"max_zero_pair_norm", c.eigenvectors->max_zero_pair_norm},
                           {"pairs_checked", c.eigenvectors->pairs_checked}};
    }
    j["spectrum_file"] = fmt::format("spectrum_{}.csv", c.step);
    cps.push_back(std::move(j));
  }
  root["checkpoints"] = std::move(cps);
  return root.dump(2) + "\n";
}

void write_run_artifacts(const RunArtifacts& run, const fs::path& dir) {
  make_dir(dir);
  remove_quietly(dir / "error.json");
  write_text(dir / "trajectory.csv", trajectory_csv(run));
  std::string loss = "step,excess_loss\n";
  for (std::size_t t = 0; t < run.loss_curve.size(); ++t) {
    loss += fmt::format("{},{}\n", t, num(run.loss_curve[t]));
  }
  write_text(dir / "loss.csv", loss);
  for (const CheckpointRecord& c : run.checkpoints) {
    write_text(dir / fmt::format("spectrum_{}.csv", c.step), spectrum_csv(c));
  }
  write_text(dir / "summary.json", summary_json(run));
}

void write_error_record(const Error& error, const fs::path& dir) {
  make_dir(dir);
  remove_quietly(dir / "summary.json");
  Json root;
  root["kind"] = std::string(to_string(error.kind()));
  root["message"] = error.what();
  root["exit_code"] = exit_code_for(error.kind());
  write_text(dir / "error.json", root.dump(2) + "\n");
}

void write_sweep_summary(const SweepSummary& summary, const fs::path& dir) {
  make_dir(dir);
  std::string csv =
      "depth,rank,status,ratio,dominant_count,bulk_count,zero_count,expected_dominant,expected_bulk,"
      "max_bound_violation,directory\n";
  Json points = Json::array();
  for (const SweepPoint& p : summary.points) {
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", p.depth, p.rank, p.status, num(p.ratio),
                       p.dominant_count, p.bulk_count, p.zero_count, p.expected_dominant, p.expected_bulk,
                       num(p.max_bound_violation), p.directory);
    Json j = {{"depth", p.depth},
              {"rank", p.rank},
              {"status", p.status},
              {"ratio", p.ratio},
              {"dominant_count", p.dominant_count},
              {"bulk_count", p.bulk_count},
              {"zero_count", p.zero_count},
              {"expected_dominant", p.expected_dominant},
              {"expected_bulk", p.expected_bulk},
              {"max_bound_violation", p.max_bound_violation},
              {"directory", p.directory}};
    if (!p.error.empty()) j["error"] = p.error;
    points.push_back(std::move(j));
  }
  Json fits = Json::array();
  for (const RankFit& f : summary.fits) {
    Json j = {{"rank", f.rank}};
    if (f.fit) {
      j["slope"] = f.fit->slope;
      j["intercept"] = f.fit->intercept;
      j["max_rel_dev"] = f.fit->max_rel_dev;
      j["within_envelope"] = f.fit->within_envelope;
    } else {
      j["error"] = f.error;
    }
    fits.push_back(std::move(j));
  }
  Json root;
  root["passed"] = summary.passed();
  root["points"] = std::move(points);
  root["fits"] = std::move(fits);
  write_text(dir / "sweep_summary.csv", csv);
  write_text(dir / "sweep_summary.json", root.dump(2) + "\n");
}

int report_directory(const fs::path& dir, std::ostream& out) {
  if (!fs::is_directory(dir)) throw IoError(fmt::format("'{}' is not a directory", dir.string()));
  Json root;
  auto load = [&](const fs::path& path) {
    try {
      root = Json::parse(read_text(path));
    } catch (const Json::exception& e) {
      throw IoError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
    }
  };

  if (fs::exists(dir / "error.json")) {
    load(dir / "error.json");
    out << fmt::format("error ({}): {}\n", root.value("kind", "unknown"), root.value("message", ""));
    return root.value("exit_code", kExitNumericalFailure);
  }
  if (fs::exists(dir / "summary.json")) {
    load(dir / "summary.json");
    out << fmt::format("run {}\n", root.value("name", ""));
    const Json& fin = root.at("final");
    out << fmt::format("  final step {}  excess loss {:.3e}  ratio {:.6f}  counts {}/{}/{} ({})\n",
                       fin.at("step").get<Index>(), fin.at("excess_loss").get<double>(),
                       fin.at("ratio").get<double>(), fin.at("counts").at("dominant").get<Index>(),
                       fin.at("counts").at("bulk").get<Index>(), fin.at("counts").at("zero").get<Index>(),
                       fin.at("provenance").get<std::string>());
    bool passed = true;
    for (const Json& c : root.at("checks")) {
      const bool ok = c.at("passed").get<bool>();
      passed = passed && ok;
      out << fmt::format("  {:<26} {}  {}\n", c.at("name").get<std::string>(), ok ? "PASS" : "FAIL",
                         c.at("detail").get<std::string>());
    }
    return passed ? kExitOk : kExitCheckFailure;
  }
  if (fs::exists(dir / "sweep_summary.json")) {
    load(dir / "sweep_summary.json");
    out << fmt::format("{:>5} {:>5} {:>6} {:>12} {:>9} {:>6}\n", "L", "r", "status", "ratio", "dominant",
                       "bulk");
    for (const Json& p : root.at("points")) {
      out << fmt::format("{:>5} {:>5} {:>6} {:>12.8f} {:>9} {:>6}\n", p.at("depth").get<Index>(),
                         p.at("rank").get<Index>(), p.at("status").get<std::string>(),
                         p.at("ratio").get<double>(), p.at("dominant_count").get<Index>(),
                         p.at("bulk_count").get<Index>());
    }
    for (const Json& f : root.at("fits")) {
      if (f.contains("slope")) {
        out << fmt::format("fit r={}: slope {:.6f} intercept {:.6f} envelope {}\n", f.at("rank").get<Index>(),
                           f.at("slope").get<double>(), f.at("intercept").get<double>(),
                           f.at("within_envelope").get<bool>() ? "ok" : "violated");
      } else {
        out << fmt::format("fit r={}: {}\n", f.at("rank").get<Index>(), f.at("error").get<std::string>());
      }
    }
    return root.at("passed").get<bool>() ? kExitOk : kExitCheckFailure;
  }
  throw IoError(fmt::format("'{}' holds no summary.json, sweep_summary.json or error.json", dir.string()));
}

}  // namespace hbl
