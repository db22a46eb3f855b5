#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "stiffnet/error.hpp"
#include "stiffnet/likelihood.hpp"
#include "stiffnet/network.hpp"

namespace stiffnet {

// Key order matters (parameter order defines estimator columns), so the
// insertion-ordered flavour is used throughout.
using Json = nlohmann::ordered_json;

/// A parsed model file. `initial` comes from the optional per-species
/// "initial" key.
struct NetworkFile {
  ReactionNetwork network;
  std::optional<State> initial;
};

namespace detail {

inline void require_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ValidationError(where + ": unknown key '" + k + "'");
  }
}

inline std::vector<int> int_vector(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected an integer array");
  std::vector<int> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw ValidationError(where + ": expected integers");
    out.push_back(v.get<int>());
  }
  return out;
}

}  // namespace detail

inline NetworkFile network_from_json(const Json& j) {
  detail::require_keys(j, {"species", "reactions", "params", "epsilon"}, "network");
  for (const char* k : {"species", "reactions", "params", "epsilon"}) {
    if (!j.contains(k)) throw ValidationError(std::string("network: missing key '") + k + "'");
  }
  std::vector<Species> species;
  std::vector<int> initial;
  bool has_initial = false;
  if (!j["species"].is_array()) throw ValidationError("network: 'species' must be an array");
  for (const auto& s : j["species"]) {
    detail::require_keys(s, {"name", "initial"}, "species");
    if (!s.contains("name") || !s["name"].is_string()) throw ValidationError("species: 'name' must be a string");
    species.push_back({s["name"].get<std::string>(), species.size()});
    if (s.contains("initial")) {
      if (!s["initial"].is_number_integer()) throw ValidationError("species: 'initial' must be an integer");
      has_initial = true;
      initial.push_back(s["initial"].get<int>());
    } else {
      initial.push_back(0);
    }
  }

  ParameterSet params;
  if (!j["params"].is_object()) throw ValidationError("network: 'params' must be an object");
  for (const auto& [name, v] : j["params"].items()) {
    if (!v.is_number()) throw ValidationError("param '" + name + "' must be a number");
    params.names.push_back(name);
    params.values.push_back(v.get<double>());
  }
  if (!j["epsilon"].is_number()) throw ValidationError("network: 'epsilon' must be a number");
  params.epsilon = j["epsilon"].get<double>();

  std::vector<Reaction> reactions;
  if (!j["reactions"].is_array()) throw ValidationError("network: 'reactions' must be an array");
  for (const auto& r : j["reactions"]) {
    const std::string where = "reaction " + std::to_string(reactions.size());
    detail::require_keys(r, {"stoich", "orders", "param", "scale"}, where);
    for (const char* k : {"stoich", "orders", "param", "scale"}) {
      if (!r.contains(k)) throw ValidationError(where + ": missing key '" + k + "'");
    }
    Reaction rx;
    rx.stoich = detail::int_vector(r["stoich"], where + " stoich");
    rx.orders = detail::int_vector(r["orders"], where + " orders");
    if (!r["param"].is_string()) throw ValidationError(where + ": 'param' must be a string");
    const auto pname = r["param"].get<std::string>();
    std::size_t p = 0;
    while (p < params.names.size() && params.names[p] != pname) ++p;
    if (p == params.names.size()) throw ValidationError(where + ": unknown param '" + pname + "'");
    rx.param_index = p;
    const auto scale = r["scale"].is_string() ? r["scale"].get<std::string>() : std::string();
    if (scale == "fast") {
      rx.scale = Scale::Fast;
    } else if (scale == "slow") {
      rx.scale = Scale::Slow;
    } else {
      throw ValidationError(where + ": scale must be \"fast\" or \"slow\"");
    }
    reactions.push_back(std::move(rx));
  }
  NetworkFile f{ReactionNetwork(std::move(species), std::move(reactions), std::move(params)), std::nullopt};
  if (has_initial) f.initial = initial;
  return f;
}

inline Json network_to_json(const ReactionNetwork& net, const std::optional<State>& initial = std::nullopt) {
  Json j;
  j["species"] = Json::array();
  for (const auto& s : net.species()) {
    Json e;
    e["name"] = s.name;
    if (initial) e["initial"] = (*initial)[s.index];
    j["species"].push_back(e);
  }
  j["reactions"] = Json::array();
  for (const auto& r : net.reactions()) {
    Json e;
    e["stoich"] = r.stoich;
    e["orders"] = r.orders;
    e["param"] = net.params().names[r.param_index];
    e["scale"] = r.scale == Scale::Fast ? "fast" : "slow";
    j["reactions"].push_back(e);
  }
  j["params"] = Json::object();
  for (std::size_t p = 0; p < net.num_params(); ++p) j["params"][net.params().names[p]] = net.params().values[p];
  j["epsilon"] = net.epsilon();
  return j;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline Json parse_json(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(origin + ": " + e.what());
  }
}

inline NetworkFile load_network(const std::filesystem::path& path) {
  return network_from_json(parse_json(read_text_file(path), path.string()));
}

inline void save_network(const std::filesystem::path& path, const ReactionNetwork& net,
                         const std::optional<State>& initial = std::nullopt) {
  write_text_file(path, network_to_json(net, initial).dump(2) + "\n");
}

/// "30,60,10" -> state.
inline State parse_state(const std::string& text, std::size_t species) {
  State x;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      x.push_back(v);
    } catch (const std::exception&) {
      throw ValidationError("bad state entry '" + item + "'");
    }
  }
  if (x.size() != species) {
    throw ValidationError("state has " + std::to_string(x.size()) + " entries, network has " +
                          std::to_string(species) + " species");
  }
  return x;
}

/// Shortest round-trip text for a double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  double back = 0.0;
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    std::sscanf(buf, "%lf", &back);
    if (back == v) break;
  }
  return buf;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

/// {method, t_final, params:[{name, estimate, ci_half_width}], n_replicates, seed}
inline Json estimator_report(const EstimatorOutput& out, const ReactionNetwork& net, double t_final,
                             std::size_t n_replicates, std::uint64_t seed) {
  Json j;
  j["method"] = to_string(out.method);
  j["t_final"] = t_final;
  j["params"] = Json::array();
  for (std::size_t p = 0; p < net.num_params(); ++p) {
    const auto i = static_cast<Eigen::Index>(p);
    Json e;
    e["name"] = net.params().names[p];
    e["estimate"] = out.estimate[i];
    e["ci_half_width"] = out.ci_half_width.size() ? out.ci_half_width[i] : 0.0;
    j["params"].push_back(e);
  }
  j["n_replicates"] = n_replicates;
  j["seed"] = seed;
  return j;
}

/// Column means and standard errors of a sample matrix.
struct ColumnStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd se;
};

inline ColumnStats column_stats(const Eigen::MatrixXd& m) {
  ColumnStats s;
  const auto n = static_cast<double>(m.rows());
  s.mean = m.colwise().mean().transpose();
  s.se = Eigen::VectorXd::Zero(m.cols());
  if (m.rows() > 1) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double var = (m.col(j).array() - s.mean[j]).square().sum() / (n - 1.0);
      s.se[j] = std::sqrt(var / n);
    }
  }
  return s;
}

}  // namespace stiffnet
