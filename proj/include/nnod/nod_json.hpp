// JSON form of NODParams. Field names are listed in docs/schemas.md.
#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "nnod/opinion.hpp"

namespace nnod {

using json = nlohmann::json;

inline constexpr int kNodParamsSchemaVersion = 1;

inline json topology_to_json(const Topology& t) {
  return json{{"num_agents", t.num_agents()}, {"options_per_agent", t.options_per_agent()}};
}

inline Topology topology_from_json(const json& j) {
  auto opts = j.at("options_per_agent").get<std::vector<int>>();
  if (j.contains("num_agents") && j.at("num_agents").get<int>() != static_cast<int>(opts.size()))
    throw std::invalid_argument("topology: num_agents disagrees with options_per_agent");
  return Topology(std::move(opts));
}

inline json matrix_to_json(const Mat<double>& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline Mat<double> matrix_from_json(const json& j, int rows, int cols) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows) throw std::invalid_argument("matrix: wrong row count");
  Mat<double> m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (!row.is_array() || static_cast<int>(row.size()) != cols) throw std::invalid_argument("matrix: wrong column count");
    for (int c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

inline json nod_params_to_json(const NODParams& p) {
  const Topology& t = p.topology;
  json j;
  j["schema"] = "nnod.nod_params";
  j["schema_version"] = kNodParamsSchemaVersion;
  j["topology"] = topology_to_json(t);
  j["damping"] = p.damping;
  j["bias"] = p.bias;
  j["self_gain"] = p.self_gain;
  j["attention"] = p.attention;
  json beta = json::array();
  for (int i = 0; i < t.num_agents(); ++i) beta.push_back(matrix_to_json(p.beta(i)));
  j["intra_agent_coupling"] = beta;
  json gamma = json::array();
  json delta = json::array();
  for (int i = 0; i < t.num_agents(); ++i)
    for (int k = 0; k < t.num_agents(); ++k) {
      if (i == k) continue;
      gamma.push_back(json{{"agent", i}, {"other", k}, {"gains", p.gamma(i, k)}});
      delta.push_back(json{{"agent", i}, {"other", k}, {"gains", matrix_to_json(p.delta(i, k))}});
    }
  j["inter_agent_same_option"] = gamma;
  j["inter_agent_cross_option"] = delta;
  j["saturation"] = json{{"s1", to_string(p.saturation.s1)}, {"s2", to_string(p.saturation.s2)}};
  return j;
}

inline NODParams nod_params_from_json(const json& j) {
  if (j.value("schema", std::string("nnod.nod_params")) != "nnod.nod_params")
    throw std::invalid_argument("not a nod_params document");
  const Topology t = topology_from_json(j.at("topology"));
  NODParams p = NODParams::zeros(t);
  p.damping = j.at("damping").get<std::vector<double>>();
  p.bias = j.at("bias").get<std::vector<double>>();
  p.self_gain = j.at("self_gain").get<std::vector<double>>();
  p.attention = j.at("attention").get<double>();
  if (j.contains("intra_agent_coupling")) {
    const auto& beta = j.at("intra_agent_coupling");
    if (static_cast<int>(beta.size()) != t.num_agents()) throw std::invalid_argument("intra_agent_coupling: one block per agent");
    for (int i = 0; i < t.num_agents(); ++i)
      p.beta(i) = matrix_from_json(beta.at(static_cast<std::size_t>(i)), t.options(i), t.options(i));
  }
  for (const auto& e : j.value("inter_agent_same_option", json::array())) {
    const int i = e.at("agent").get<int>();
    const int k = e.at("other").get<int>();
    if (i < 0 || k < 0 || i >= t.num_agents() || k >= t.num_agents() || i == k)
      throw std::invalid_argument("inter_agent_same_option: bad agent pair");
    p.gamma(i, k) = e.at("gains").get<std::vector<double>>();
  }
  for (const auto& e : j.value("inter_agent_cross_option", json::array())) {
    const int i = e.at("agent").get<int>();
    const int k = e.at("other").get<int>();
    if (i < 0 || k < 0 || i >= t.num_agents() || k >= t.num_agents() || i == k)
      throw std::invalid_argument("inter_agent_cross_option: bad agent pair");
    p.delta(i, k) = matrix_from_json(e.at("gains"), t.options(i), t.options(i));
  }
  if (j.contains("saturation")) {
    p.saturation.s1 = saturation_from_string(j.at("saturation").value("s1", std::string("tanh")));
    p.saturation.s2 = saturation_from_string(j.at("saturation").value("s2", std::string("tanh")));
  }
  validate(p);
  return p;
}

}  // namespace nnod
