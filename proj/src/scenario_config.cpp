/*
 Copyright 2026 The sensi-dmpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include "dmpc/scenario_config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dmpc {

namespace {

using nlohmann::json;

json parse_override_value(const std::string& text) {
  json v = json::parse(text, nullptr, false);
  if (v.is_discarded()) return json(text);  // plain string
  return v;
}

void apply_override(json& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + spec + "' is not of the form key.path=value");
  const std::string path = spec.substr(0, eq);
  json* node = &root;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("override '" + spec + "' has an empty key path");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &((*node)[parts[i]]);
  (*node)[parts.back()] = parse_override_value(spec.substr(eq + 1));
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

}  // namespace

AlgorithmConfig ScenarioConfig::algorithm() const {
  AlgorithmConfig cfg;
  if (mode == "criterion")
    cfg.mode = TerminationMode::Criterion;
  else if (mode == "fixed")
    cfg.mode = TerminationMode::Fixed;
  else if (mode == "both")
    cfg.mode = TerminationMode::Both;
  else
    throw ConfigError("algorithm.mode must be criterion | fixed | both, got '" + mode + "'");
  cfg.d = d;
  cfg.q_max = q_max;
  cfg.damping = damping;
  cfg.sampling_dt = dt;
  cfg.parallel = parallel;
  cfg.inner.control_tolerance = inner_tol_u;
  cfg.inner.max_gradient_iterations = inner_max_iter;
  return cfg;
}

VectorXd ScenarioConfig::x0_central() const {
  int dim = 0;
  for (const auto& v : x0) dim += static_cast<int>(v.size());
  VectorXd out(dim);
  int off = 0;
  for (const auto& v : x0) {
    out.segment(off, v.size()) = v;
    off += static_cast<int>(v.size());
  }
  return out;
}

ScenarioConfig ScenarioConfig::load(const std::string& path,
                                    const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json_text(buffer.str(), overrides);
}

ScenarioConfig ScenarioConfig::from_json_text(const std::string& text,
                                              const std::vector<std::string>& overrides) {
  json root = json::parse(text, nullptr, false);
  if (root.is_discarded()) throw ConfigError("config is not valid JSON");
  for (const auto& ov : overrides) apply_override(root, ov);

  ScenarioConfig cfg;
  const json system = root.value("system", json::object());
  cfg.builtin = get_or<std::string>(system, "builtin", cfg.builtin);
  if (system.contains("params")) {
    const json& params = system.at("params");
    if (params.contains("mu")) cfg.scalar_params.mu = params.at("mu").get<std::vector<double>>();
    if (params.contains("eps")) {
      const auto rows = params.at("eps").get<std::vector<std::vector<double>>>();
      const int N = static_cast<int>(rows.size());
      cfg.scalar_params.eps.setZero(N, N);
      for (int i = 0; i < N; ++i) {
        if (static_cast<int>(rows[i].size()) != N)
          throw ConfigError("system.params.eps must be a square matrix");
        for (int j = 0; j < N; ++j) cfg.scalar_params.eps(i, j) = rows[i][j];
      }
    }
    cfg.scalar_params.input_bound = get_or<double>(params, "input_bound", cfg.scalar_params.input_bound);
    cfg.scalar_params.q_weight = get_or<double>(params, "q_weight", cfg.scalar_params.q_weight);
    cfg.scalar_params.r_weight = get_or<double>(params, "r_weight", cfg.scalar_params.r_weight);
    cfg.vdp_params.q_weight = get_or<double>(params, "q_weight", cfg.vdp_params.q_weight);
    cfg.vdp_params.r_weight = get_or<double>(params, "r_weight", cfg.vdp_params.r_weight);
    cfg.vdp_params.input_bound = get_or<double>(params, "input_bound", cfg.vdp_params.input_bound);
  }

  const json horizon = root.value("horizon", json::object());
  cfg.T = get_or<double>(horizon, "T", cfg.T);
  cfg.dt = get_or<double>(horizon, "dt", cfg.dt);
  cfg.n_disc = get_or<int>(horizon, "n_disc", cfg.n_disc);

  const json algorithm = root.value("algorithm", json::object());
  cfg.mode = get_or<std::string>(algorithm, "mode", cfg.mode);
  cfg.d = get_or<double>(algorithm, "d", cfg.d);
  cfg.q_max = get_or<int>(algorithm, "q_max", cfg.q_max);
  cfg.damping = get_or<double>(algorithm, "damping", cfg.damping);
  if (algorithm.contains("inner")) {
    const json& inner = algorithm.at("inner");
    cfg.inner_tol_u = get_or<double>(inner, "tol_u", cfg.inner_tol_u);
    cfg.inner_max_iter = get_or<int>(inner, "max_iter", cfg.inner_max_iter);
  }

  const json terminal = root.value("terminal", json::object());
  cfg.gamma = get_or<double>(terminal, "gamma", cfg.gamma);
  if (terminal.contains("beta") && !terminal.at("beta").is_string())
    cfg.beta = terminal.at("beta").get<double>();
  cfg.ingredients_file = get_or<std::string>(terminal, "ingredients_file", cfg.ingredients_file);

  const json simulation = root.value("simulation", json::object());
  cfg.t_final = get_or<double>(simulation, "t_final", cfg.t_final);
  cfg.oracle = get_or<bool>(simulation, "oracle", cfg.oracle);
  cfg.seed = get_or<std::uint64_t>(simulation, "seed", cfg.seed);
  if (simulation.contains("x0")) {
    cfg.x0.clear();
    for (const auto& row : simulation.at("x0")) {
      const auto vals = row.get<std::vector<double>>();
      cfg.x0.push_back(Eigen::Map<const VectorXd>(vals.data(), vals.size()));
    }
  }

  const json output = root.value("output", json::object());
  cfg.out_dir = get_or<std::string>(output, "dir", cfg.out_dir);
  if (output.contains("emit")) cfg.emit = output.at("emit").get<std::vector<std::string>>();

  // Validation.
  if (cfg.n_disc < 2) throw ConfigError("horizon.n_disc must be at least 2");
  if (cfg.T <= 0.0) throw ConfigError("horizon.T must be positive");
  if (cfg.dt <= 0.0 || cfg.dt >= cfg.T) throw ConfigError("horizon.dt must lie in (0, T)");
  if (cfg.mode != "criterion" && cfg.mode != "fixed" && cfg.mode != "both")
    throw ConfigError("algorithm.mode must be criterion | fixed | both");
  if (cfg.mode != "fixed" && cfg.d <= 0.0)
    throw ConfigError("algorithm.d must be positive in criterion mode");
  if (cfg.q_max < 1) throw ConfigError("algorithm.q_max must be at least 1");
  if (cfg.gamma <= 1.0) throw ConfigError("terminal.gamma must exceed 1");
  if (cfg.builtin != "coupled-vdp" && cfg.builtin != "scalar-coupled")
    throw ConfigError("system.builtin must be coupled-vdp or scalar-coupled");
  return cfg;
}

NetworkModel build_scenario_network(const ScenarioConfig& config,
                                    std::optional<std::vector<MatrixXd>> P) {
  return make_builtin(config.builtin, config.scalar_params, config.vdp_params, std::move(P));
}

}  // namespace dmpc
