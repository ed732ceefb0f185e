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

#include "dmpc/run_outputs.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace dmpc {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file '" + path + "'");
  return out;
}

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  MatrixXd m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  return m;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_trace_csv(const std::string& path, const MpcTrace& trace, int state_dim,
                     int input_dim) {
  auto out = open_out(path);
  out << "k,t";
  for (int i = 0; i < state_dim; ++i) out << ",x" << i;
  for (int i = 0; i < input_dim; ++i) out << ",u" << i;
  out << ",q_k,J_oracle,stage_cost,msgs,bytes,wall_ms\n";
  auto row = [&](int k, double t, const VectorXd& x, const VectorXd& u, int q,
                 const std::optional<double>& oracle, double stage, std::uint64_t msgs,
                 std::uint64_t bytes, double wall) {
    out << k << ',' << format_double(t);
    for (int i = 0; i < state_dim; ++i) out << ',' << format_double(x[i]);
    for (int i = 0; i < input_dim; ++i) out << ',' << format_double(i < u.size() ? u[i] : 0.0);
    out << ',' << q << ',' << (oracle ? format_double(*oracle) : "nan") << ','
        << format_double(stage) << ',' << msgs << ',' << bytes << ',' << format_double(wall)
        << '\n';
  };
  for (const auto& s : trace.steps)
    row(s.k, s.t, s.plant_state,
        s.applied_control.size() ? s.applied_control : VectorXd::Zero(input_dim), s.iterations,
        s.oracle_cost, s.stage_cost, s.messages, s.bytes, s.wall_ms);
  if (trace.final_state.size() == state_dim)
    row(static_cast<int>(trace.steps.size()), trace.final_time, trace.final_state,
        VectorXd::Zero(input_dim), 0, std::nullopt, 0.0, 0, 0, 0.0);
}

void write_convergence_csv(const std::string& path,
                           const std::vector<ConvergenceSample>& samples) {
  auto out = open_out(path);
  out << "sample_id,q,err_total,err_state,err_adjoint\n";
  for (const auto& s : samples) {
    if (s.oracle_failed) continue;
    for (const auto& r : s.table.rows)
      out << s.sample_id << ',' << r.q << ',' << format_double(r.err_total) << ','
          << format_double(r.err_state) << ',' << format_double(r.err_adjoint) << '\n';
  }
  // Envelope max (-1) and median (-2) per q over the successful samples.
  std::size_t q_rows = 0;
  for (const auto& s : samples)
    if (!s.oracle_failed) q_rows = std::max(q_rows, s.table.rows.size());
  for (int which = 0; which < 2; ++which) {
    for (std::size_t qi = 0; qi < q_rows; ++qi) {
      std::vector<double> total, state, adjoint;
      for (const auto& s : samples) {
        if (s.oracle_failed || qi >= s.table.rows.size()) continue;
        total.push_back(s.table.rows[qi].err_total);
        state.push_back(s.table.rows[qi].err_state);
        adjoint.push_back(s.table.rows[qi].err_adjoint);
      }
      if (total.empty()) continue;
      auto agg = [&](std::vector<double>& v) {
        if (which == 0) return *std::max_element(v.begin(), v.end());
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
      };
      out << (which == 0 ? -1 : -2) << ',' << static_cast<int>(qi) << ','
          << format_double(agg(total)) << ',' << format_double(agg(state)) << ','
          << format_double(agg(adjoint)) << '\n';
    }
  }
  // Fitted contraction ratios: geometric mean over samples in err_total,
  // min/max across samples in the remaining columns.
  std::vector<double> ratios;
  for (const auto& s : samples)
    if (!s.oracle_failed && s.table.contraction_ratio > 0.0)
      ratios.push_back(s.table.contraction_ratio);
  if (!ratios.empty()) {
    double log_sum = 0.0;
    for (double r : ratios) log_sum += std::log(r);
    out << -3 << ',' << -1 << ',' << format_double(std::exp(log_sum / ratios.size())) << ','
        << format_double(*std::min_element(ratios.begin(), ratios.end())) << ','
        << format_double(*std::max_element(ratios.begin(), ratios.end())) << '\n';
  }
}

void write_region_csv(const std::string& path, const std::vector<RegionRecord>& records,
                      int state_dim) {
  auto out = open_out(path);
  for (int i = 0; i < state_dim; ++i) out << "x0_" << i << ',';
  out << "stabilized,endpoint_in_terminal\n";
  for (const auto& r : records) {
    for (int i = 0; i < state_dim; ++i) out << format_double(r.x0[i]) << ',';
    out << r.stabilized << ',' << r.endpoint_in_terminal << '\n';
  }
}

void write_compare_csv(const std::string& path, const std::vector<CompareRecord>& records,
                       int state_dim, int input_dim) {
  auto out = open_out(path);
  out << "k,t";
  for (int i = 0; i < state_dim; ++i) out << ",x" << i;
  for (int i = 0; i < input_dim; ++i) out << ",u" << i;
  for (int i = 0; i < state_dim; ++i) out << ",xc" << i;
  for (int i = 0; i < input_dim; ++i) out << ",uc" << i;
  out << ",u_dev,x_dev\n";
  for (const auto& r : records) {
    out << r.k << ',' << format_double(r.t);
    for (int i = 0; i < state_dim; ++i) out << ',' << format_double(r.x_dist[i]);
    for (int i = 0; i < input_dim; ++i) out << ',' << format_double(r.u_dist[i]);
    for (int i = 0; i < state_dim; ++i) out << ',' << format_double(r.x_central[i]);
    for (int i = 0; i < input_dim; ++i) out << ',' << format_double(r.u_central[i]);
    out << ',' << format_double(r.control_deviation) << ',' << format_double(r.state_deviation)
        << '\n';
  }
}

void save_ingredients(const std::string& path, const TerminalIngredients& ingredients,
                      const std::string& system_name) {
  json j;
  j["system"] = system_name;
  j["gamma"] = ingredients.gamma;
  j["beta"] = ingredients.beta;
  j["alpha"] = ingredients.alpha;
  j["objective_logdet_E"] = ingredients.logdet_E;
  j["lmi_residual"] = ingredients.lmi_residual;
  json blocks = json::array();
  for (const auto& P : ingredients.P_blocks) blocks.push_back(matrix_to_json(P));
  j["P_blocks"] = blocks;
  j["K"] = matrix_to_json(ingredients.K);
  j["cost_bounds"] = {{"m_l", ingredients.bounds.m_l},
                      {"M_l", ingredients.bounds.M_l},
                      {"m_V", ingredients.bounds.m_V},
                      {"M_V", ingredients.bounds.M_V}};
  j["clf_check"] = {{"pass", ingredients.clf.pass},
                    {"worst_margin", ingredients.clf.worst_margin},
                    {"inputs_feasible", ingredients.clf.inputs_feasible},
                    {"samples", ingredients.clf.samples}};
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

TerminalIngredients load_ingredients(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open ingredients file '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("ingredients file is not valid JSON: " + path);
  TerminalIngredients ing;
  try {
    ing.gamma = j.at("gamma").get<double>();
    ing.beta = j.at("beta").get<double>();
    ing.alpha = j.at("alpha").get<double>();
    ing.logdet_E = j.at("objective_logdet_E").get<double>();
    ing.lmi_residual = j.at("lmi_residual").get<double>();
    for (const auto& b : j.at("P_blocks")) ing.P_blocks.push_back(matrix_from_json(b));
    ing.K = matrix_from_json(j.at("K"));
    const auto& cb = j.at("cost_bounds");
    ing.bounds = {cb.at("m_l").get<double>(), cb.at("M_l").get<double>(),
                  cb.at("m_V").get<double>(), cb.at("M_V").get<double>()};
  } catch (const json::exception& e) {
    throw ConfigError("ingredients file '" + path + "': " + e.what());
  }
  return ing;
}

}  // namespace dmpc
