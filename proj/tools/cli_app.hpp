#pragma once

// Command-line front end: simulate, tts, compare, oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stiffnet/stiffnet.hpp"

namespace stiffnet::cli {

enum ExitCode : int { kOk = 0, kConfig = 2, kNumerical = 3, kNonConvergence = 4 };

/// Everything a command needs. Flags override a --config file, which
/// overrides the defaults; STIFFNET_SEED sits between --seed and the file.
struct RunConfig {
  std::string command;
  std::string net;
  double t_final = 1.0;
  std::size_t replicates = 100;
  std::uint64_t seed = 1;
  std::string estimator = "clr";
  std::size_t batches = 10;
  std::size_t jumps_per_test = 20;
  double moe_tol = 0.05;
  std::string out = "stiffnet_out";
  std::vector<double> epsilon_sweep;
  std::string scale_convention = "rescaled_alpha";  // or original_alpha_eps
  std::string x0;                                    // "30,60,10"; empty uses the model's initial state
  std::vector<double> times;                         // extra checkpoints before t_final
  std::size_t threads = 0;
  std::size_t bootstrap = 1000;
  std::string param;  // compare: sensitivity column, default the last slow parameter
  std::size_t state_cap = 200000;
  std::size_t max_micro_jumps = 50'000'000;  // per micro-equilibration

  void validate() const {
    if (net.empty()) throw ValidationError("--net is required");
    if (!(t_final > 0.0) || !std::isfinite(t_final)) throw ValidationError("t_final must be positive");
    if (replicates < 1) throw ValidationError("replicates must be positive");
    if (batches < 2) throw ValidationError("batches must be at least 2");
    if (jumps_per_test < 1) throw ValidationError("jumps_per_test must be positive");
    if (!(moe_tol > 0.0)) throw ValidationError("moe_tol must be positive");
    if (bootstrap < 100) throw ValidationError("bootstrap needs at least 100 resamples");
    if (state_cap < 1) throw ValidationError("state_cap must be positive");
    if (max_micro_jumps < jumps_per_test) throw ValidationError("max_micro_jumps must be at least jumps_per_test");
    for (double e : epsilon_sweep) {
      if (!(e > 0.0)) throw ValidationError("epsilon_sweep values must be positive");
    }
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!(times[i] >= 0.0 && times[i] <= t_final)) throw ValidationError("times must lie in [0, t_final]");
      if (i > 0 && times[i] < times[i - 1]) throw ValidationError("times must be sorted");
    }
    parse_estimator(estimator);
    if (scale_convention != "rescaled_alpha" && scale_convention != "original_alpha_eps") {
      throw ValidationError("scale_convention must be rescaled_alpha or original_alpha_eps");
    }
  }

  BatchConfig batch_config() const {
    BatchConfig b = micro_batch_defaults();
    b.batches = batches;
    b.jumps_per_test = jumps_per_test;
    b.precision = moe_tol;
    b.max_jumps = max_micro_jumps;
    return b;
  }
};

inline Json config_to_json(const RunConfig& c) {
  Json j;
  j["net"] = c.net;
  j["t_final"] = c.t_final;
  j["replicates"] = c.replicates;
  j["seed"] = c.seed;
  j["estimator"] = c.estimator;
  j["batches"] = c.batches;
  j["jumps_per_test"] = c.jumps_per_test;
  j["moe_tol"] = c.moe_tol;
  j["out"] = c.out;
  j["epsilon_sweep"] = c.epsilon_sweep;
  j["scale_convention"] = c.scale_convention;
  j["x0"] = c.x0;
  j["times"] = c.times;
  j["threads"] = c.threads;
  j["bootstrap"] = c.bootstrap;
  j["param"] = c.param;
  j["state_cap"] = c.state_cap;
  j["max_micro_jumps"] = c.max_micro_jumps;
  return j;
}

namespace detail {

template <class T>
T get_as(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config key '") + key + "': " + e.what());
  }
}

inline std::size_t get_count(const Json& j, const char* key) {
  if (!j.at(key).is_number_integer() || j.at(key).get<long long>() < 0) {
    throw ValidationError(std::string("config key '") + key + "' must be a nonnegative integer");
  }
  return j.at(key).get<std::size_t>();
}

}  // namespace detail

/// Overlays the keys present in `j` on `base`; unknown keys are rejected.
inline RunConfig config_from_json(const Json& j, RunConfig base = {}) {
  stiffnet::detail::require_keys(j,
                                 {"net", "t_final", "replicates", "seed", "estimator", "batches", "jumps_per_test",
                                  "moe_tol", "out", "epsilon_sweep", "scale_convention", "x0", "times", "threads",
                                  "bootstrap", "param", "state_cap", "max_micro_jumps"},
                                 "config");
  using detail::get_as;
  using detail::get_count;
  if (j.contains("net")) base.net = get_as<std::string>(j, "net");
  if (j.contains("t_final")) base.t_final = get_as<double>(j, "t_final");
  if (j.contains("replicates")) base.replicates = get_count(j, "replicates");
  if (j.contains("seed")) base.seed = get_count(j, "seed");
  if (j.contains("estimator")) base.estimator = get_as<std::string>(j, "estimator");
  if (j.contains("batches")) base.batches = get_count(j, "batches");
  if (j.contains("jumps_per_test")) base.jumps_per_test = get_count(j, "jumps_per_test");
  if (j.contains("moe_tol")) base.moe_tol = get_as<double>(j, "moe_tol");
  if (j.contains("out")) base.out = get_as<std::string>(j, "out");
  if (j.contains("epsilon_sweep")) base.epsilon_sweep = get_as<std::vector<double>>(j, "epsilon_sweep");
  if (j.contains("scale_convention")) base.scale_convention = get_as<std::string>(j, "scale_convention");
  if (j.contains("x0")) base.x0 = get_as<std::string>(j, "x0");
  if (j.contains("times")) base.times = get_as<std::vector<double>>(j, "times");
  if (j.contains("threads")) base.threads = get_count(j, "threads");
  if (j.contains("bootstrap")) base.bootstrap = get_count(j, "bootstrap");
  if (j.contains("param")) base.param = get_as<std::string>(j, "param");
  if (j.contains("state_cap")) base.state_cap = get_count(j, "state_cap");
  if (j.contains("max_micro_jumps")) base.max_micro_jumps = get_count(j, "max_micro_jumps");
  return base;
}

// ---------------------------------------------------------------------------

struct Model {
  ReactionNetwork net;
  State x0;
};

inline Model load_model(const RunConfig& cfg) {
  NetworkFile nf = load_network(cfg.net);
  State x0;
  if (!cfg.x0.empty()) {
    x0 = parse_state(cfg.x0, nf.network.num_species());
  } else if (nf.initial) {
    x0 = *nf.initial;
  } else {
    throw ValidationError("no initial state: give species an \"initial\" count or pass --x0");
  }
  return {std::move(nf.network), std::move(x0)};
}

inline EstimatorOutput convention(EstimatorOutput out, const ReactionNetwork& net, const RunConfig& cfg) {
  return cfg.scale_convention == "original_alpha_eps" ? rescale_fast(std::move(out), net) : out;
}

inline Json params_json(const EstimatorOutput& out, const ReactionNetwork& net) {
  Json arr = Json::array();
  for (std::size_t p = 0; p < net.num_params(); ++p) {
    const auto i = static_cast<Eigen::Index>(p);
    Json e;
    e["name"] = net.params().names[p];
    e["estimate"] = out.estimate[i];
    e["ci_half_width"] = out.ci_half_width.size() ? out.ci_half_width[i] : 0.0;
    e["standard_error"] = out.standard_error.size() ? out.standard_error[i] : 0.0;
    arr.push_back(e);
  }
  return arr;
}

inline std::filesystem::path out_path(const RunConfig& cfg, const std::string& file) {
  return std::filesystem::path(cfg.out) / file;
}

inline void write_json(const std::filesystem::path& p, const Json& j) { write_text_file(p, j.dump(2) + "\n"); }

inline std::string join(const std::vector<std::string>& v, const std::string& sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

// ---------------------------------------------------------------------------
// simulate

inline int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
  const Model m = load_model(cfg);
  const auto obs = species_observables(m.net);
  const EstimatorMethod method = parse_estimator(cfg.estimator);
  EnsembleOptions eo;
  eo.replicates = cfg.replicates;
  eo.seed = cfg.seed;
  eo.times = cfg.times;
  eo.threads = cfg.threads;
  const EnsembleResult res = run_ensemble(m.net, m.x0, cfg.t_final, obs, eo);

  Json summary;
  summary["command"] = "simulate";
  summary["t_final"] = cfg.t_final;
  summary["epsilon"] = m.net.epsilon();
  summary["seed"] = cfg.seed;
  summary["n_replicates"] = res.replicates;
  summary["n_kept"] = res.kept.size();
  summary["n_absorbed"] = res.absorbed.size();
  summary["snapshots"] = Json::array();
  Json sens;
  sens["command"] = "simulate";
  sens["method"] = to_string(method);
  sens["scale_convention"] = cfg.scale_convention;
  sens["seed"] = cfg.seed;
  sens["n_replicates"] = res.kept.size();
  sens["snapshots"] = Json::array();
  std::ostringstream means;
  means << "time,species,mean,se\n";
  const BootstrapOptions boot{cfg.bootstrap, 0.95, cfg.seed};
  for (const auto& snap : res.snapshots) {
    Json s;
    s["time"] = snap.time;
    s["species"] = Json::array();
    Json t;
    t["time"] = snap.time;
    t["species"] = Json::array();
    if (snap.terminal.rows() > 0) {
      const ColumnStats cs = column_stats(snap.terminal);
      for (std::size_t j = 0; j < obs.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        Json e;
        e["name"] = obs[j].name();
        e["mean"] = cs.mean[jj];
        e["se"] = cs.se[jj];
        s["species"].push_back(e);
        means << format_double(snap.time) << "," << obs[j].name() << "," << format_double(cs.mean[jj]) << ","
              << format_double(cs.se[jj]) << "\n";
        const Eigen::VectorXd f = is_ergodic(method) ? snap.ergodic.col(jj) : snap.terminal.col(jj);
        if (f.size() < 2) continue;  // estimators need two replicates
        const EstimatorOutput est = convention(estimate_with_ci(method, f, snap.weights, boot), m.net, cfg);
        Json r;
        r["name"] = obs[j].name();
        r["params"] = params_json(est, m.net);
        t["species"].push_back(r);
      }
    }
    summary["snapshots"].push_back(s);
    sens["snapshots"].push_back(t);
  }
  write_json(out_path(cfg, "summary.json"), summary);
  write_json(out_path(cfg, "sensitivities.json"), sens);
  write_text_file(out_path(cfg, "means.csv"), means.str());

  if (cfg.replicates == 1) {
    RngStream rng(cfg.seed, 0);
    const TrajectoryRecord rec = simulate(m.net, m.x0, cfg.t_final, obs.front(), rng);
    std::vector<std::string> head{"time"};
    for (const auto& s : m.net.species()) head.push_back(s.name);
    std::ostringstream csv;
    csv << join(head) << "\n";
    for (std::size_t n = 0; n < rec.times.size(); ++n) {
      csv << format_double(rec.times[n]);
      for (int v : rec.state(n)) csv << "," << v;
      csv << "\n";
    }
    csv << format_double(rec.terminal_time);
    for (int v : rec.terminal_state) csv << "," << v;
    csv << "\n";
    write_text_file(out_path(cfg, "trajectory.csv"), csv.str());
  }
  log << "simulate: " << res.kept.size() << " of " << res.replicates << " replicates kept; wrote " << cfg.out
      << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// tts

inline TtsEnsembleOptions tts_options(const RunConfig& cfg, std::uint64_t seed) {
  TtsEnsembleOptions o;
  o.replicates = cfg.replicates;
  o.seed = seed;
  o.threads = cfg.threads;
  o.tts.batch = cfg.batch_config();
  for (double t : cfg.times) {
    if (t < cfg.t_final) o.tts.checkpoints.push_back(t);
  }
  return o;
}

inline std::string key_text(const FastClassKey& k) {
  std::vector<std::string> parts;
  for (auto v : k.key) parts.push_back(std::to_string(v));
  return join(parts, ";");
}

inline int cmd_tts(const RunConfig& cfg, std::ostream& log) {
  const Model m = load_model(cfg);
  if (m.net.epsilon() >= 0.5) {
    log << "warning: epsilon = " << m.net.epsilon() << "; fast and slow scales are not separated\n";
  }
  const auto obs = species_observables(m.net);
  const EstimatorMethod method = parse_estimator(cfg.estimator);
  TtsEnsembleOptions o = tts_options(cfg, cfg.seed);
  o.keep_trajectories = 1;
  const TtsEnsembleResult res = run_tts_ensemble(m.net, m.x0, cfg.t_final, obs, o);

  Json summary;
  summary["command"] = "tts";
  summary["t_final"] = cfg.t_final;
  summary["epsilon"] = m.net.epsilon();
  summary["seed"] = cfg.seed;
  summary["n_replicates"] = res.replicates;
  summary["n_kept"] = res.kept.size();
  summary["n_absorbed"] = res.absorbed.size();
  summary["macro_steps"] = res.macro_steps;
  summary["micro_jumps"] = res.micro_jumps;
  summary["unconverged_visits"] = res.unconverged_visits;
  summary["snapshots"] = Json::array();
  Json sens;
  sens["command"] = "tts";
  sens["method"] = to_string(method);
  sens["scale_convention"] = cfg.scale_convention;
  sens["seed"] = cfg.seed;
  sens["n_replicates"] = res.kept.size();
  sens["snapshots"] = Json::array();
  const BootstrapOptions boot{cfg.bootstrap, 0.95, cfg.seed};
  for (const auto& snap : res.snapshots) {
    Json s;
    s["time"] = snap.time;
    s["species"] = Json::array();
    Json t;
    t["time"] = snap.time;
    t["species"] = Json::array();
    if (snap.terminal.rows() > 0) {
      const ColumnStats cs = column_stats(snap.terminal);
      for (std::size_t j = 0; j < obs.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        Json e;
        e["name"] = obs[j].name();
        e["mean"] = cs.mean[jj];
        e["se"] = cs.se[jj];
        s["species"].push_back(e);
        Json r;
        r["name"] = obs[j].name();
        if (snap.terminal.rows() < 2) continue;  // estimators need two replicates
        r["params"] = params_json(convention(tts_sensitivity(snap, j, method, boot), m.net, cfg), m.net);
        t["species"].push_back(r);
      }
    }
    summary["snapshots"].push_back(s);
    sens["snapshots"].push_back(t);
  }
  write_json(out_path(cfg, "summary.json"), summary);
  write_json(out_path(cfg, "sensitivities.json"), sens);

  std::ostringstream macro;
  macro << macro_csv_header() << "\n";
  if (!res.trajectories.empty()) {
    for (const MacroStep& s : res.trajectories.front().steps) {
      macro << s.step << "," << format_double(s.time) << "," << key_text(s.key) << "," << s.beta_fired << ","
            << format_double(s.fbar) << "," << format_double(s.lambda_bar_0) << "," << s.micro_jumps << ","
            << (s.converged ? 1 : 0) << "\n";
    }
  }
  write_text_file(out_path(cfg, "macro.csv"), macro.str());

  // Stopping-rule trace of one micro-equilibration from x0.
  const std::vector<Observable> micro = stiffnet::detail::micro_observables(m.net, obs);
  std::ostringstream diag;
  diag << diagnostics_header(micro) << "\n";
  if (!m.net.fast_reactions().empty()) {
    ConvergenceOptions co;
    co.subset = ReactionSubset::FastOnly;
    co.diagnostics = true;
    RngStream rng(cfg.seed, ~std::uint64_t{0});
    try {
      const ConvergenceResult cr = run_until_converged(m.net, m.x0, micro, o.tts.batch, rng, co);
      for (const auto& row : cr.diagnostics) {
        diag << row.test_index << "," << format_double(row.total_time) << "," << row.total_jumps;
        for (std::size_t j = 0; j < row.means.size(); ++j) {
          diag << "," << format_double(row.means[j]) << "," << format_double(row.moes[j]);
        }
        diag << "\n";
      }
    } catch (const AbsorbedState&) {
      // x0 is a fixed point of the fast dynamics: nothing to trace
    }
  }
  write_text_file(out_path(cfg, "diagnostics.csv"), diag.str());

  log << "tts: " << res.kept.size() << " of " << res.replicates << " macro replicates kept, "
      << res.macro_steps << " macro steps, " << res.micro_jumps << " micro jumps; wrote " << cfg.out << "\n";
  if (res.unconverged_visits > 0) {
    log << "warning: " << res.unconverged_visits << " micro-equilibrations hit the jump cap before converging\n";
    return kNonConvergence;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// compare

struct CompareRow {
  double epsilon = 0.0;
  double mean_error = 0.0;         // ||m_STS - m_TTS|| / ||m_TTS|| over species
  double sensitivity_error = 0.0;  // same for the CLR column of one parameter
  Eigen::VectorXd sts_mean, tts_mean, sts_se, tts_se;
  Eigen::VectorXd sts_sens, tts_sens;
};

inline std::size_t compare_param(const ReactionNetwork& net, const std::string& name) {
  if (!name.empty()) {
    const auto p = net.param_index(name);
    if (!p) throw ValidationError("unknown parameter '" + name + "'");
    return *p;
  }
  const auto& slow = net.slow_reactions();
  if (slow.empty()) throw ValidationError("no slow parameter to compare");
  return net.reaction(slow.back()).param_index;
}

/// STS and TTS ensembles of the species at t_final for one epsilon. STS uses
/// stream family `seed`, TTS `seed + 1`.
inline CompareRow compare_at(const ReactionNetwork& base, const State& x0, double epsilon, const RunConfig& cfg) {
  if (base.slow_reactions().empty()) {
    throw ValidationError("network has no slow reactions: STS and TTS are the same process, nothing to compare");
  }
  const ReactionNetwork net = base.with_epsilon(epsilon);
  const std::size_t p = compare_param(net, cfg.param);
  const auto obs = species_observables(net);
  const auto np = static_cast<Eigen::Index>(p);

  EnsembleOptions eo;
  eo.replicates = cfg.replicates;
  eo.seed = cfg.seed;
  eo.threads = cfg.threads;
  const EnsembleResult sts = run_ensemble(net, x0, cfg.t_final, obs, eo);
  const TtsEnsembleResult tts = run_tts_ensemble(net, x0, cfg.t_final, obs, tts_options(cfg, cfg.seed + 1));

  CompareRow row;
  row.epsilon = epsilon;
  const ColumnStats a = column_stats(sts.final().terminal);
  const ColumnStats b = column_stats(tts.snapshots.back().terminal);
  row.sts_mean = a.mean;
  row.sts_se = a.se;
  row.tts_mean = b.mean;
  row.tts_se = b.se;
  const auto ns = static_cast<Eigen::Index>(obs.size());
  row.sts_sens.resize(ns);
  row.tts_sens.resize(ns);
  for (Eigen::Index j = 0; j < ns; ++j) {
    row.sts_sens[j] = clr(sts.final().terminal.col(j), sts.final().weights).estimate[np];
    row.tts_sens[j] = tts_sensitivity(tts.snapshots.back(), static_cast<std::size_t>(j), EstimatorMethod::CLR)
                          .estimate[np];
  }
  row.mean_error = (row.sts_mean - row.tts_mean).norm() / row.tts_mean.norm();
  row.sensitivity_error = (row.sts_sens - row.tts_sens).norm() / row.tts_sens.norm();
  return row;
}

/// Least-squares slope of log(y) on log(x); nullopt with fewer than two usable points.
inline std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0 && y[i] > 0.0 && std::isfinite(y[i])) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  if (lx.size() < 2) return std::nullopt;
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i] / n;
    my += ly[i] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (!(sxx > 0.0)) return std::nullopt;
  return sxy / sxx;
}

inline int cmd_compare(const RunConfig& cfg, std::ostream& log) {
  const Model m = load_model(cfg);
  const std::vector<double> sweep = cfg.epsilon_sweep.empty() ? std::vector<double>{m.net.epsilon()}
                                                              : cfg.epsilon_sweep;
  std::vector<CompareRow> rows;
  for (double e : sweep) {
    rows.push_back(compare_at(m.net, m.x0, e, cfg));
    log << "compare: epsilon " << e << " mean error " << rows.back().mean_error << "\n";
  }
  std::vector<double> eps, me, se;
  for (const auto& r : rows) {
    eps.push_back(r.epsilon);
    me.push_back(r.mean_error);
    se.push_back(r.sensitivity_error);
  }
  const auto mean_slope = loglog_slope(eps, me);
  const auto sens_slope = loglog_slope(eps, se);
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };

  std::ostringstream csv;
  csv << "epsilon,mean_error,sensitivity_error,mean_slope,sensitivity_slope\n";
  for (const auto& r : rows) {
    csv << format_double(r.epsilon) << "," << format_double(r.mean_error) << ","
        << format_double(r.sensitivity_error) << "," << opt(mean_slope) << "," << opt(sens_slope) << "\n";
  }
  write_text_file(out_path(cfg, "compare.csv"), csv.str());

  const std::size_t p = compare_param(m.net, cfg.param);
  Json j;
  j["command"] = "compare";
  j["t_final"] = cfg.t_final;
  j["seed"] = cfg.seed;
  j["n_replicates"] = cfg.replicates;
  j["param"] = m.net.params().names[p];
  j["rows"] = Json::array();
  for (const auto& r : rows) {
    Json e;
    e["epsilon"] = r.epsilon;
    e["mean_error"] = r.mean_error;
    e["sensitivity_error"] = r.sensitivity_error;
    e["sts_mean"] = to_std(r.sts_mean);
    e["sts_se"] = to_std(r.sts_se);
    e["tts_mean"] = to_std(r.tts_mean);
    e["tts_se"] = to_std(r.tts_se);
    e["sts_sensitivity"] = to_std(r.sts_sens);
    e["tts_sensitivity"] = to_std(r.tts_sens);
    j["rows"].push_back(e);
  }
  j["mean_slope"] = mean_slope ? Json(*mean_slope) : Json(nullptr);
  j["sensitivity_slope"] = sens_slope ? Json(*sens_slope) : Json(nullptr);
  write_json(out_path(cfg, "compare.json"), j);
  return kOk;
}

// ---------------------------------------------------------------------------
// oracle

inline Json states_json(const StateSpace& space, const std::vector<std::size_t>& idx) {
  Json a = Json::array();
  for (std::size_t i : idx) a.push_back(space.states[i]);
  return a;
}

inline int cmd_oracle(const RunConfig& cfg, std::ostream& log) {
  const Model m = load_model(cfg);
  const ReactionNetwork& net = m.net;
  const bool original = cfg.scale_convention == "original_alpha_eps";
  auto conv = [&](Eigen::VectorXd v) { return original ? rescale_fast(std::move(v), net) : v; };

  Json j;
  j["command"] = "oracle";
  j["epsilon"] = net.epsilon();
  j["x0"] = m.x0;
  j["scale_convention"] = cfg.scale_convention;
  j["params"] = net.params().names;

  const StateSpace space = enumerate_state_space(net, m.x0, cfg.state_cap);
  if (space.truncated) {
    throw TruncatedSpace("state space from x0 exceeds --state-cap " + std::to_string(cfg.state_cap));
  }
  j["n_states"] = space.size();
  const GeneratorMatrix q = build_generator(net, space);
  const auto classes = communicating_classes(q);
  int code = kOk;
  if (classes.size() > 1) {
    // report the classes and stop: there is no unique stationary law
    j["reducible"] = true;
    j["classes"] = Json::array();
    for (const auto& c : classes) j["classes"].push_back(states_json(space, c));
    log << "oracle: chain from x0 has " << classes.size() << " communicating classes; no stationary law\n";
    code = kNumerical;
  } else {
    j["reducible"] = false;
    const StationarySolution st = stationary(q);
    const auto dq = generator_derivatives(net, space);
    const SensitivityMatrix sm = pseudo_inverse_sensitivity(q, dq, st.pi);
    Json s;
    s["method"] = sm.method;
    s["residual"] = st.residual;
    s["residual_relative"] = st.residual / std::max(1.0, stiffnet::detail::frobenius(q));
    s["species"] = Json::array();
    for (std::size_t i = 0; i < net.num_species(); ++i) {
      const Eigen::VectorXd f = species_vector(space, i);
      Json e;
      e["name"] = net.species()[i].name;
      e["mean"] = st.pi.dot(f);
      e["sensitivity"] = to_std(conv(sm.dpi * f));
      s["species"].push_back(e);
    }
    if (space.size() <= 200) {
      s["states"] = Json::array();
      for (std::size_t x = 0; x < space.size(); ++x) {
        Json e;
        e["state"] = space.states[x];
        e["pi"] = st.pi[static_cast<Eigen::Index>(x)];
        e["dpi"] = to_std(conv(sm.dpi.col(static_cast<Eigen::Index>(x))));
        s["states"].push_back(e);
      }
    }
    j["stationary"] = s;
    const SpectralGap gap = spectral_gap(q);
    if (gap.computed) j["kappa_tilde"] = gap.kappa_tilde;
    bool any_fast_param = false;
    for (std::size_t p = 0; p < net.num_params(); ++p) any_fast_param = any_fast_param || net.is_fast_param(p);
    if (any_fast_param) j["rescaling_residual"] = rescaling_identity_check(net, space);
  }

  // fast class of x0 under the rescaled fast generator
  if (!net.fast_reactions().empty()) {
    try {
      const FastClassBlock fb = fast_class_generator(net, m.x0, cfg.state_cap);
      Json fc;
      fc["n_states"] = fb.space.size();
      if (fb.space.size() > 1) {
        const SpectralGap gap = spectral_gap(fb.q);
        if (gap.computed) fc["kappa_tilde"] = gap.kappa_tilde;
      }
      const StationarySolution st = stationary(fb.q);
      fc["means"] = Json::array();
      for (std::size_t i = 0; i < net.num_species(); ++i) fc["means"].push_back(st.pi.dot(species_vector(fb.space, i)));
      j["fast_class"] = fc;
    } catch (const Reducible&) {
      j["fast_class"] = "reducible";
    }
  }

  // quasi-equilibrium DAE for first-order networks
  try {
    std::vector<double> times = cfg.times;
    if (times.empty() || times.back() < cfg.t_final) times.push_back(cfg.t_final);
    const DaeSolution dae = linear_dae_solution(net, m.x0, times);
    Json d = Json::array();
    for (std::size_t k = 0; k < dae.times.size(); ++k) {
      Json e;
      e["time"] = dae.times[k];
      e["means"] = to_std(dae.means[k]);
      Json rows = Json::array();
      for (Eigen::Index i = 0; i < dae.sensitivities[k].rows(); ++i) {
        rows.push_back(to_std(conv(dae.sensitivities[k].row(i).transpose())));
      }
      e["sensitivities"] = rows;
      d.push_back(e);
    }
    j["dae"] = d;
  } catch (const NonlinearNetwork& e) {
    j["dae"] = nullptr;
    log << "oracle: no DAE solution (" << e.what() << ")\n";
  }
  write_json(out_path(cfg, "oracle.json"), j);
  log << "oracle: " << space.size() << " states; wrote " << cfg.out << "\n";
  return code;
}

// ---------------------------------------------------------------------------

inline int dispatch(const RunConfig& cfg, std::ostream& log) {
  if (cfg.command == "simulate") return cmd_simulate(cfg, log);
  if (cfg.command == "tts") return cmd_tts(cfg, log);
  if (cfg.command == "compare") return cmd_compare(cfg, log);
  if (cfg.command == "oracle") return cmd_oracle(cfg, log);
  throw ValidationError("unknown command '" + cfg.command + "'");
}

/// Parses the command line into a validated RunConfig. Throws CLI::ParseError
/// for malformed flags and ValidationError for bad values.
inline RunConfig parse_args(int argc, const char* const* argv, CLI::App& app) {
  RunConfig flags;
  std::string config_file;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> applied;
  auto bind = [&]<class T>(CLI::App* sub, T RunConfig::*member, const std::string& name, const std::string& help) {
    CLI::Option* o = sub->add_option(name, flags.*member, help);
    applied.emplace_back(o, [&flags, member](RunConfig& c) { c.*member = flags.*member; });
    return o;
  };

  app.require_subcommand(1);
  for (const char* name : {"simulate", "tts", "compare", "oracle"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_file, "JSON run configuration (flags override it)");
    bind(sub, &RunConfig::net, "--net", "model JSON file");
    bind(sub, &RunConfig::t_final, "--t-final", "time horizon");
    bind(sub, &RunConfig::replicates, "--replicates", "ensemble size");
    bind(sub, &RunConfig::seed, "--seed", "master seed (overrides STIFFNET_SEED)");
    bind(sub, &RunConfig::estimator, "--estimator", "lr, clr, elr or celr")
        ->check(CLI::IsMember({"lr", "clr", "elr", "celr"}));
    bind(sub, &RunConfig::batches, "--batches", "batches N_b of the stopping rule");
    bind(sub, &RunConfig::jumps_per_test, "--jumps-per-test", "jumps N_J between stopping tests");
    bind(sub, &RunConfig::moe_tol, "--moe-tol", "relative margin-of-error tolerance");
    bind(sub, &RunConfig::out, "--out", "output directory");
    bind(sub, &RunConfig::epsilon_sweep, "--epsilon-sweep", "comma-separated epsilon list")->delimiter(',');
    bind(sub, &RunConfig::scale_convention, "--scale-convention", "rescaled_alpha or original_alpha_eps");
    bind(sub, &RunConfig::x0, "--x0", "initial state, e.g. 30,60,10");
    bind(sub, &RunConfig::times, "--times", "extra observation times, comma-separated")->delimiter(',');
    bind(sub, &RunConfig::threads, "--threads", "worker threads (0 = hardware)");
    bind(sub, &RunConfig::bootstrap, "--bootstrap", "bootstrap resamples for confidence intervals");
    bind(sub, &RunConfig::param, "--param", "compare: parameter of the sensitivity column");
    bind(sub, &RunConfig::state_cap, "--state-cap", "oracle: state enumeration cap");
    bind(sub, &RunConfig::max_micro_jumps, "--max-micro-jumps", "tts: jump cap of one micro-equilibration");
  }
  app.parse(argc, argv);

  RunConfig cfg;
  if (!config_file.empty()) cfg = config_from_json(parse_json(read_text_file(config_file), config_file), cfg);
  if (const char* env = std::getenv("STIFFNET_SEED")) {
    try {
      std::size_t used = 0;
      const std::string s(env);
      cfg.seed = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ValidationError(std::string("STIFFNET_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  for (auto& [opt, apply] : applied) {
    if (opt->count() > 0) apply(cfg);
  }
  for (CLI::App* sub : app.get_subcommands()) cfg.command = sub->get_name();
  cfg.validate();
  return cfg;
}

/// Entry point shared by the binary and the tests; returns the exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& log = std::cerr) {
  CLI::App app{"stiffnet: stiff stochastic reaction networks"};
  RunConfig cfg;
  try {
    cfg = parse_args(argc, argv, app);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, log);
    return code == 0 ? kOk : kConfig;
  } catch (const Error& e) {
    log << "config error: " << e.what() << "\n";
    return kConfig;
  }
  try {
    return dispatch(cfg, log);
  } catch (const ValidationError& e) {
    log << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DomainError& e) {
    log << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericalError& e) {
    log << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const AbsorbedState& e) {
    log << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const TruncatedSpace& e) {
    log << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const InsufficientSamples& e) {
    log << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    log << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
}

}  // namespace stiffnet::cli
