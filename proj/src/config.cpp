#include "hbl/harness.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

namespace hbl {

namespace {

using Json = nlohmann::ordered_json;

void expect_keys(const Json& obj, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!obj.is_object()) throw ConfigError(fmt::format("{} must be an object", where));
  for (const auto& item : obj.items()) {
    bool known = false;
    for (std::string_view k : keys) known = known || item.key() == k;
    if (!known) throw ConfigError(fmt::format("unknown key '{}' in {}", item.key(), where));
  }
}

Index get_count(const Json& obj, const char* key, std::string_view where) {
  const Json& v = obj.at(key);
  if (!v.is_number_integer()) {
    throw ConfigError(fmt::format("{}.{} must be an integer", where, key));
  }
  const auto value = v.get<std::int64_t>();
  if (value < 0) throw ConfigError(fmt::format("{}.{} = {} must be nonnegative", where, key, value));
  return static_cast<Index>(value);
}

double get_real(const Json& obj, const char* key, std::string_view where) {
  const Json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(fmt::format("{}.{} must be a number", where, key));
  return v.get<double>();
}

bool get_bool(const Json& obj, const char* key, std::string_view where) {
  const Json& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(fmt::format("{}.{} must be true or false", where, key));
  return v.get<bool>();
}

std::vector<Index> get_counts(const Json& obj, const char* key, std::string_view where) {
  const Json& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(fmt::format("{}.{} must be an array", where, key));
  std::vector<Index> out;
  for (const Json& item : v) {
    if (!item.is_number_integer() || item.get<std::int64_t>() < 0) {
      throw ConfigError(fmt::format("{}.{} must hold nonnegative integers", where, key));
    }
    out.push_back(static_cast<Index>(item.get<std::int64_t>()));
  }
  return out;
}

void parse_network(const Json& net, ExperimentConfig& cfg) {
  expect_keys(net, "network", {"widths", "depth", "input", "hidden", "output", "rank"});
  if (net.contains("widths")) {
    for (const char* k : {"depth", "input", "hidden", "output"}) {
      if (net.contains(k)) throw ConfigError(fmt::format("network.{} conflicts with network.widths", k));
    }
    cfg.widths = get_counts(net, "widths", "network");
  } else {
    for (const char* k : {"depth", "input", "hidden", "output"}) {
      if (!net.contains(k)) throw ConfigError(fmt::format("network needs widths or {}", k));
    }
    const Index depth = get_count(net, "depth", "network");
    if (depth < 2) throw ConfigError(fmt::format("network.depth = {} must be at least 2", depth));
    cfg.widths.assign(static_cast<std::size_t>(depth + 1), get_count(net, "hidden", "network"));
    cfg.widths.front() = get_count(net, "input", "network");
    cfg.widths.back() = get_count(net, "output", "network");
  }
  if (!net.contains("rank")) throw ConfigError("network.rank is missing");
  cfg.rank = get_count(net, "rank", "network");
}

void parse_data(const Json& data, DataConfig& out) {
  expect_keys(data, "data", {"support", "samples"});
  if (data.contains("support")) {
    const Json& s = data.at("support");
    if (s == "d_star") {
      out.support = InputSupport::kDStar;
    } else if (s == "rank") {
      out.support = InputSupport::kRank;
    } else {
      throw ConfigError("data.support must be \"d_star\" or \"rank\"");
    }
  }
  if (data.contains("samples")) out.samples = get_count(data, "samples", "data");
}

void parse_init(const Json& init, InitConfig& out) {
  expect_keys(init, "init", {"mode", "mu", "lambdas", "frame_seed", "allow_nonzero_tail"});
  if (init.contains("mode")) {
    const Json& m = init.at("mode");
    if (m == "usi") {
      out.mode = InitMode::kUsi;
    } else if (m == "spectrum") {
      out.mode = InitMode::kSpectrumList;
    } else {
      throw ConfigError("init.mode must be \"usi\" or \"spectrum\"");
    }
  }
  if (init.contains("mu")) out.mu = get_real(init, "mu", "init");
  if (init.contains("lambdas")) {
    const Json& v = init.at("lambdas");
    if (!v.is_array()) throw ConfigError("init.lambdas must be an array");
    out.lambdas.clear();
    for (const Json& item : v) {
      if (!item.is_number()) throw ConfigError("init.lambdas must hold numbers");
      out.lambdas.push_back(item.get<double>());
    }
  }
  if (init.contains("frame_seed")) out.frame_seed = static_cast<std::uint64_t>(get_count(init, "frame_seed", "init"));
  if (init.contains("allow_nonzero_tail")) out.allow_nonzero_tail = get_bool(init, "allow_nonzero_tail", "init");
  if (out.mode == InitMode::kUsi && !out.lambdas.empty()) {
    throw ConfigError("init.lambdas is only read in \"spectrum\" mode");
  }
  if (out.mode == InitMode::kSpectrumList && out.lambdas.empty()) {
    throw ConfigError("init.mode \"spectrum\" needs init.lambdas");
  }
}

void parse_train(const Json& train, TrainConfig& out) {
  expect_keys(train, "train", {"eta", "eta_fraction", "steps", "checkpoint_stride", "checkpoints", "seed"});
  if (train.contains("eta")) out.eta = get_real(train, "eta", "train");
  if (train.contains("eta_fraction")) out.eta_fraction = get_real(train, "eta_fraction", "train");
  if (train.contains("steps")) out.steps = get_count(train, "steps", "train");
  if (train.contains("checkpoint_stride")) out.checkpoint_stride = get_count(train, "checkpoint_stride", "train");
  if (train.contains("checkpoints")) out.checkpoints = get_counts(train, "checkpoints", "train");
  if (train.contains("seed")) out.seed = static_cast<std::uint64_t>(get_count(train, "seed", "train"));
}

void parse_analyses(const Json& a, AnalysisFlags& out) {
  expect_keys(a, "analyses", {"assemble_hessian", "fd_oracle", "eigenvectors", "weyl", "validation"});
  if (a.contains("assemble_hessian")) out.assemble_hessian = get_bool(a, "assemble_hessian", "analyses");
  if (a.contains("fd_oracle")) out.fd_oracle = get_bool(a, "fd_oracle", "analyses");
  if (a.contains("eigenvectors")) out.eigenvectors = get_bool(a, "eigenvectors", "analyses");
  if (a.contains("weyl")) out.weyl = get_bool(a, "weyl", "analyses");
  if (a.contains("validation")) out.validation = get_bool(a, "validation", "analyses");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  ExperimentConfig cfg;
  try {
    expect_keys(root, "config", {"name", "network", "data", "init", "train", "analyses", "output_dir"});
    if (root.contains("name")) {
      if (!root.at("name").is_string()) throw ConfigError("name must be a string");
      cfg.name = root.at("name").get<std::string>();
    }
    if (!root.contains("network")) throw ConfigError("network section is missing");
    parse_network(root.at("network"), cfg);
    if (root.contains("data")) parse_data(root.at("data"), cfg.data);
    if (root.contains("init")) parse_init(root.at("init"), cfg.init);
    if (root.contains("train")) parse_train(root.at("train"), cfg.train);
    if (root.contains("analyses")) parse_analyses(root.at("analyses"), cfg.analyses);
    if (root.contains("output_dir")) {
      if (!root.at("output_dir").is_string()) throw ConfigError("output_dir must be a string");
      cfg.output_dir = root.at("output_dir").get<std::string>();
    }
  } catch (const Json::exception& e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read config file '{}'", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  Json root;
  root["name"] = cfg.name;
  root["network"]["widths"] = cfg.widths;
  root["network"]["rank"] = cfg.rank;
  root["data"]["support"] = cfg.data.support == InputSupport::kDStar ? "d_star" : "rank";
  root["data"]["samples"] = cfg.data.samples;
  if (cfg.init.mode == InitMode::kUsi) {
    root["init"]["mode"] = "usi";
    root["init"]["mu"] = cfg.init.mu;
  } else {
    root["init"]["mode"] = "spectrum";
    root["init"]["lambdas"] = cfg.init.lambdas;
  }
  if (cfg.init.frame_seed) root["init"]["frame_seed"] = *cfg.init.frame_seed;
  root["init"]["allow_nonzero_tail"] = cfg.init.allow_nonzero_tail;
  if (cfg.train.eta) root["train"]["eta"] = *cfg.train.eta;
  root["train"]["eta_fraction"] = cfg.train.eta_fraction;
  root["train"]["steps"] = cfg.train.steps;
  root["train"]["checkpoint_stride"] = cfg.train.checkpoint_stride;
  if (!cfg.train.checkpoints.empty()) root["train"]["checkpoints"] = cfg.train.checkpoints;
  root["train"]["seed"] = cfg.train.seed;
  root["analyses"]["assemble_hessian"] = cfg.analyses.assemble_hessian;
  root["analyses"]["fd_oracle"] = cfg.analyses.fd_oracle;
  root["analyses"]["eigenvectors"] = cfg.analyses.eigenvectors;
  root["analyses"]["weyl"] = cfg.analyses.weyl;
  root["analyses"]["validation"] = cfg.analyses.validation;
  if (!cfg.output_dir.empty()) root["output_dir"] = cfg.output_dir;
  return root.dump(2);
}

}  // namespace hbl
