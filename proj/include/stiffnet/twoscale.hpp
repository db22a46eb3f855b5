#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "stiffnet/batchmeans.hpp"
#include "stiffnet/error.hpp"
#include "stiffnet/fast_class.hpp"
#include "stiffnet/likelihood.hpp"
#include "stiffnet/network.hpp"
#include "stiffnet/observable.hpp"
#include "stiffnet/parallel.hpp"
#include "stiffnet/rng.hpp"
#include "stiffnet/ssa.hpp"

namespace stiffnet {

/// Fast-class stationary averages estimated by micro-equilibration.
/// Slow reactions are indexed in net.slow_reactions() order.
struct MicroAverages {
  std::vector<double> fbar;       // per macro observable
  std::vector<double> lambda_bar;  // per slow reaction
  double lambda_bar_0 = 0.0;
  Eigen::MatrixXd dfast_fbar;    // observables x params, CELR; zero outside fast params
  Eigen::MatrixXd dfast_lambda;  // slow reactions x params, CELR; zero outside fast params
  Eigen::MatrixXd dlambda_bar;   // full d lambda_bar / d theta: exact slow part + dfast_lambda
  Eigen::VectorXd dlambda_bar_0;  // column sums of dlambda_bar
  State terminal_state;
  bool singleton = false;
  bool converged = true;
  std::size_t micro_jumps = 0;
  double micro_time = 0.0;
  double max_moe = 0.0;  // normalized, from the final test
};

namespace detail {

inline std::vector<Observable> micro_observables(const ReactionNetwork& net, std::span<const Observable> fs) {
  std::vector<Observable> obs(fs.begin(), fs.end());
  for (std::size_t r : net.slow_reactions()) obs.push_back(Observable::propensity(r));
  return obs;
}

// Slow derivatives are exact: d lambda_bar_r / d theta_p = lambda_bar_r / theta_p
// for p = param(r), since the fast stationary law does not involve slow rates.
inline void finish_micro(MicroAverages& m, const ReactionNetwork& net) {
  const auto& slow = net.slow_reactions();
  m.lambda_bar_0 = 0.0;
  for (double l : m.lambda_bar) m.lambda_bar_0 += l;
  m.dlambda_bar = m.dfast_lambda;
  for (std::size_t s = 0; s < slow.size(); ++s) {
    const std::size_t p = net.reaction(slow[s]).param_index;
    m.dlambda_bar(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(p)) =
        m.lambda_bar[s] / net.params().values[p];
  }
  m.dlambda_bar_0 = m.dlambda_bar.colwise().sum().transpose();
}

inline MicroAverages point_averages(const ReactionNetwork& net, const State& x, std::span<const Observable> fs) {
  const auto& slow = net.slow_reactions();
  const auto np = static_cast<Eigen::Index>(net.num_params());
  MicroAverages m;
  m.singleton = true;
  m.terminal_state = x;
  for (const auto& f : fs) m.fbar.push_back(f(x, net));
  for (std::size_t r : slow) m.lambda_bar.push_back(net.propensity(r, x, ReactionSubset::All));
  m.dfast_fbar = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(fs.size()), np);
  m.dfast_lambda = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(slow.size()), np);
  finish_micro(m, net);
  return m;
}

}  // namespace detail

/// How the fast derivatives of Eq. (19) are estimated. With extension = 0
/// they are the batch CELR over the stopped run's own batches. Otherwise a
/// fresh fast-only run continues from the stopped state and windowed_celr is
/// applied to it, centered on the stopped means. The stopped batches are
/// biased low: the rule stops when their spread happens to be small, and near
/// equilibrium it can stop after a couple of blocks. So the extension is
/// max(extension * stopped jumps, jumps_per_molecule * M) jumps, M the number
/// of molecules of species touched by fast reactions at entry, and the
/// look-back window (lookback + 1 batches) has to span the fast correlation
/// time, which is of order M jumps for first-order fast steps.
struct FastDerivativeOptions {
  double extension = 0.5;
  double jumps_per_molecule = 12.0;
  std::size_t lookback = 2;
};

namespace detail {

inline double fast_molecules(const ReactionNetwork& net, const State& x) {
  std::vector<bool> touched(net.num_species(), false);
  for (std::size_t r : net.fast_reactions()) {
    const auto& rx = net.reaction(r);
    for (std::size_t i = 0; i < touched.size(); ++i) touched[i] = touched[i] || rx.stoich[i] != 0 || rx.orders[i] != 0;
  }
  double m = 0.0;
  for (std::size_t i = 0; i < touched.size(); ++i) {
    if (touched[i]) m += static_cast<double>(x[i]);
  }
  return m;
}

}  // namespace detail

/// Algorithm 1 step (2): fast-only simulation from the entry state until the
/// batch-means rule resolves f and every slow propensity. Derivatives with
/// respect to the (rescaled) fast parameters are batch CELR estimates.
template <class Rng>
MicroAverages micro_equilibrate(const State& entry, const ReactionNetwork& net, std::span<const Observable> fs,
                                const BatchConfig& cfg, Rng& rng, const FastDerivativeOptions& fd = {}) {
  thread_local ConvergenceResult work;
  thread_local ConvergenceResult ext;
  const std::vector<Observable> obs = detail::micro_observables(net, fs);
  ConvergenceOptions opts;
  opts.subset = ReactionSubset::FastOnly;
  opts.track_weights = true;
  try {
    run_until_converged(net, entry, obs, cfg, rng, opts, work);
  } catch (const AbsorbedState& e) {
    // The fast chain got stuck: the class's stationary law is that point mass.
    return detail::point_averages(net, e.state().empty() ? entry : e.state(), fs);
  }
  const auto np = static_cast<Eigen::Index>(net.num_params());
  const std::size_t nf = fs.size();
  const std::size_t ns = net.slow_reactions().size();
  bool any_fast_param = false;
  for (Eigen::Index p = 0; p < np; ++p) any_fast_param = any_fast_param || net.is_fast_param(static_cast<std::size_t>(p));

  bool extended = false;
  std::size_t ext_jumps = 0;
  if (fd.extension > 0.0 && any_fast_param) {
    const double want = std::max(fd.extension * static_cast<double>(work.jumps),
                                 fd.jumps_per_molecule * detail::fast_molecules(net, entry));
    const auto n = static_cast<std::size_t>(want);
    try {
      run_for_jumps(net, work.terminal_state, obs, cfg, n, rng, opts, ext);
      extended = true;
      ext_jumps = ext.jumps;
    } catch (const AbsorbedState&) {
      // keep the stopped-run estimate
    }
  }

  MicroAverages m;
  m.dfast_fbar = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nf), np);
  m.dfast_lambda = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ns), np);
  for (std::size_t j = 0; j < obs.size(); ++j) {
    const BatchSummary& s = work.summaries[j];
    Eigen::VectorXd d;
    if (extended) {
      d = windowed_celr(ext.summaries[j], ext.weights, s.mean, fd.lookback);
    } else if (any_fast_param) {
      d = batch_estimates(s, work.weights, cfg.ci_delta).celr.estimate;
    }
    for (Eigen::Index p = 0; p < np && any_fast_param; ++p) {
      if (!net.is_fast_param(static_cast<std::size_t>(p))) continue;
      if (j < nf) {
        m.dfast_fbar(static_cast<Eigen::Index>(j), p) = d[p];
      } else {
        m.dfast_lambda(static_cast<Eigen::Index>(j - nf), p) = d[p];
      }
    }
    if (j < nf) {
      m.fbar.push_back(s.mean);
    } else {
      m.lambda_bar.push_back(std::max(0.0, s.mean));
    }
  }
  // the next macro state is handed off from the last simulated micro state
  m.terminal_state = extended ? ext.terminal_state : work.terminal_state;
  m.converged = work.converged;
  m.micro_jumps = work.jumps + ext_jumps;
  m.micro_time = work.end_time + (extended ? ext.end_time : 0.0);
  m.max_moe = work.max_normalized_moe;
  detail::finish_micro(m, net);
  return m;
}

/// Micro averages, or point values when no fast reaction is enabled at entry.
template <class Rng>
MicroAverages class_averages(const State& entry, const ReactionNetwork& net, std::span<const Observable> fs,
                             const BatchConfig& cfg, Rng& rng, const FastDerivativeOptions& fd = {}) {
  bool any_fast = false;
  for (std::size_t r : net.fast_reactions()) {
    if (net.mass_action_term(r, entry) > 0.0) {
      any_fast = true;
      break;
    }
  }
  if (!any_fast) return detail::point_averages(net, entry, fs);
  return micro_equilibrate(entry, net, fs, cfg, rng, fd);
}

struct MacroEvent {
  double dt = 0.0;
  std::size_t slow_index = 0;  // position in net.slow_reactions()
};

/// Algorithm 1 steps (4)-(5).
template <class Rng>
MacroEvent tts_step(const MicroAverages& m, Rng& rng, double now = 0.0) {
  if (!(m.lambda_bar_0 > 0.0)) throw MacroAbsorbed(now, m.terminal_state);
  MacroEvent ev;
  ev.dt = exponential(rng, m.lambda_bar_0);
  ev.slow_index = select_reaction(m.lambda_bar, m.lambda_bar_0, uniform01(rng));
  return ev;
}

/// Eq. (17) compensator over an interval of length dt spent in one class.
inline void macro_compensate(ReweightAccumulator& acc, const MicroAverages& m, double dt) {
  acc.B += m.dlambda_bar_0 * dt;
}

/// Eq. (17) jump term for the fired slow reaction.
inline void macro_jump(ReweightAccumulator& acc, const MicroAverages& m, std::size_t slow_index) {
  const double l = m.lambda_bar[slow_index];
  if (!(l > 0.0)) throw ZeroMacroPropensity("fired slow reaction has zero averaged propensity");
  acc.R += m.dlambda_bar.row(static_cast<Eigen::Index>(slow_index)).transpose() / l;
}

/// Combined update: hold for dt, then (optionally) fire.
inline void update_macro_W(ReweightAccumulator& acc, const MicroAverages& m, double dt,
                           std::optional<std::size_t> fired = std::nullopt) {
  macro_compensate(acc, m, dt);
  if (fired) macro_jump(acc, m, *fired);
}

/// Optional cross-visit store of micro averages keyed by fast class. Cached
/// averages are reused on revisits, which correlates macro steps. With
/// several threads the first writer wins, so results then depend on
/// scheduling.
class MicroCache {
 public:
  std::optional<MicroAverages> find(const FastClassKey& k) const {
    std::lock_guard lock(mutex_);
    const auto it = map_.find(k);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }
  MicroAverages insert(const FastClassKey& k, MicroAverages m) {
    std::lock_guard lock(mutex_);
    return map_.try_emplace(k, std::move(m)).first->second;
  }
  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return map_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::unordered_map<FastClassKey, MicroAverages, FastClassKeyHash> map_;
};

inline BatchConfig micro_batch_defaults() {
  BatchConfig b;
  b.confirm_growth = 1.0;  // micro runs happen every macro step; plain two-pass rule
  return b;
}

struct TtsOptions {
  BatchConfig batch = micro_batch_defaults();
  FastDerivativeOptions fast_derivatives;
  std::vector<double> checkpoints;  ///< sorted times in [0, t_final); t_final is always added
  bool record_steps = false;
  MicroCache* cache = nullptr;
  std::size_t max_macro_steps = 100'000'000;
  std::size_t max_handoff_jumps = 1'000'000;
};

struct MacroStep {
  std::size_t step = 0;
  double time = 0.0;
  FastClassKey key;
  long beta_fired = -1;  // reaction index fired at the end of the visit, -1 if none
  double fbar = 0.0;     // first observable
  double lambda_bar_0 = 0.0;
  std::size_t micro_jumps = 0;
  bool converged = true;
};

/// Macro quantities at one observation time.
struct MacroCheckpoint {
  double time = 0.0;
  std::vector<double> fbar;      // fbar(Xbar(t)) per observable
  std::vector<double> ergodic;   // (1/t) int_0^t fbar
  Eigen::VectorXd weights;       // Wbar(t)
  Eigen::MatrixXd direct;        // d fbar / d theta at Xbar(t)
  Eigen::MatrixXd direct_ergodic;  // its time average
};

struct MacroTrajectory {
  std::vector<MacroCheckpoint> checkpoints;  ///< last entry is t_final
  std::vector<MacroStep> steps;              ///< only with record_steps
  std::size_t macro_steps = 0;
  std::size_t micro_jumps = 0;
  std::size_t unconverged_visits = 0;
  std::size_t singleton_visits = 0;
  std::optional<double> absorbed_at;
  State terminal_state;

  const MacroCheckpoint& final() const { return checkpoints.back(); }
};

namespace detail {

// Algorithm 1 step (6). A slow reaction can be disabled in the particular
// sampled micro state even though its average is positive; then the fast
// chain is run on until it is enabled, which keeps counts nonnegative.
template <class Rng>
State handoff_state(const ReactionNetwork& net, const State& micro_state, std::size_t reaction, Rng& rng,
                    std::size_t max_jumps) {
  State x = micro_state;
  std::size_t n = 0;
  while (net.mass_action_term(reaction, x) <= 0.0) {
    if (++n > max_jumps) throw NumericalError("hand-off: slow reaction never enabled in fast class");
    const SsaEvent ev = ssa_step(x, net, rng, ReactionSubset::FastOnly);
    const auto& z = net.reaction(ev.reaction).stoich;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += z[i];
  }
  const auto& z = net.reaction(reaction).stoich;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += z[i];
  return x;
}

inline std::vector<double> checkpoint_times(const std::vector<double>& extra, double t_final) {
  std::vector<double> times;
  for (double t : extra) {
    if (t < 0.0 || t > t_final || (!times.empty() && t < times.back())) {
      throw DomainError("checkpoints must be sorted and within [0, t_final]");
    }
    if (t < t_final) times.push_back(t);
  }
  times.push_back(t_final);
  return times;
}

}  // namespace detail

/// Algorithm 1: alternate micro-equilibration and macro jumps up to t_final,
/// accumulating Wbar per Eq. (17).
template <class Rng>
MacroTrajectory tts_simulate(const ReactionNetwork& net, const State& x0, double t_final,
                             std::span<const Observable> fs, const TtsOptions& opts, Rng& rng) {
  if (!(t_final >= 0.0)) throw DomainError("t_final must be nonnegative");
  if (x0.size() != net.num_species()) throw ValidationError("initial state has wrong length");
  for (int v : x0) {
    if (v < 0) throw ValidationError("initial state has negative counts");
  }
  opts.batch.validate();
  const FastClassPartition partition(net);
  const auto& slow = net.slow_reactions();
  const std::vector<double> times = detail::checkpoint_times(opts.checkpoints, t_final);
  const std::size_t nf = fs.size();
  const auto np = static_cast<Eigen::Index>(net.num_params());

  MacroTrajectory traj;
  ReweightAccumulator acc(net.num_params());
  std::vector<double> fint(nf, 0.0);
  Eigen::MatrixXd dint = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nf), np);
  State x = x0;
  double t = 0.0;
  std::size_t next_cp = 0;

  while (true) {
    MicroAverages m;
    const FastClassKey key = partition.key(x);
    std::optional<MicroAverages> cached;
    if (opts.cache) cached = opts.cache->find(key);
    if (cached) {
      m = std::move(*cached);
    } else {
      m = class_averages(x, net, fs, opts.batch, rng, opts.fast_derivatives);
      if (opts.cache) m = opts.cache->insert(key, std::move(m));
      traj.micro_jumps += m.micro_jumps;
      if (!m.converged) ++traj.unconverged_visits;
      if (m.singleton) ++traj.singleton_visits;
    }

    std::optional<MacroEvent> ev;
    double t_next = std::numeric_limits<double>::infinity();
    if (m.lambda_bar_0 > 0.0) {
      ev = tts_step(m, rng, t);
      t_next = t + ev->dt;
    } else if (!traj.absorbed_at) {
      traj.absorbed_at = t;
    }

    if (opts.record_steps) {
      MacroStep st;
      st.step = traj.macro_steps;
      st.time = t;
      st.key = key;
      st.beta_fired = ev && t_next <= t_final ? static_cast<long>(slow[ev->slow_index]) : -1;
      st.fbar = nf ? m.fbar[0] : 0.0;
      st.lambda_bar_0 = m.lambda_bar_0;
      st.micro_jumps = m.micro_jumps;
      st.converged = m.converged;
      traj.steps.push_back(std::move(st));
    }

    // Observation times that fall inside this visit.
    auto hold_to = [&](double until) {
      const double dt = until - t;
      if (dt <= 0.0) return;
      for (std::size_t j = 0; j < nf; ++j) fint[j] += m.fbar[j] * dt;
      dint += m.dfast_fbar * dt;
      macro_compensate(acc, m, dt);
      t = until;
    };
    while (next_cp < times.size() && times[next_cp] < t_next) {
      hold_to(times[next_cp]);
      MacroCheckpoint cp;
      cp.time = t;
      cp.fbar = m.fbar;
      cp.ergodic.resize(nf);
      for (std::size_t j = 0; j < nf; ++j) cp.ergodic[j] = t > 0.0 ? fint[j] / t : m.fbar[j];
      cp.weights = acc.W();
      cp.direct = m.dfast_fbar;
      cp.direct_ergodic = t > 0.0 ? Eigen::MatrixXd(dint / t) : m.dfast_fbar;
      traj.checkpoints.push_back(std::move(cp));
      ++next_cp;
    }
    if (next_cp == times.size()) {
      traj.terminal_state = x;
      break;
    }

    hold_to(t_next);
    macro_jump(acc, m, ev->slow_index);
    x = detail::handoff_state(net, m.terminal_state, slow[ev->slow_index], rng, opts.max_handoff_jumps);
    if (++traj.macro_steps >= opts.max_macro_steps) throw NumericalError("macro step cap reached");
  }
  return traj;
}

/// Wbar rows and fbar samples of an ensemble at one checkpoint.
struct MacroSnapshot {
  double time = 0.0;
  Eigen::MatrixXd terminal;  // fbar per observable
  Eigen::MatrixXd ergodic;
  Eigen::MatrixXd weights;
  std::vector<Eigen::MatrixXd> direct;  // per observable: rows x params
  std::vector<Eigen::MatrixXd> direct_ergodic;
};

struct TtsEnsembleOptions {
  std::size_t replicates = 1;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  TtsOptions tts;
  AbsorptionPolicy absorption = AbsorptionPolicy::Exclude;
  std::size_t keep_trajectories = 0;  ///< the first k replicates keep their step log
};

struct TtsEnsembleResult {
  std::vector<std::string> observables;
  std::vector<MacroSnapshot> snapshots;  ///< last entry is t_final
  std::vector<std::size_t> kept;
  std::vector<std::size_t> absorbed;
  std::vector<double> absorption_times;
  std::vector<MacroTrajectory> trajectories;  ///< first keep_trajectories replicates
  std::size_t replicates = 0;
  std::size_t macro_steps = 0;
  std::size_t micro_jumps = 0;
  std::size_t unconverged_visits = 0;

  const MacroSnapshot& final() const { return snapshots.back(); }
};

/// Independent macro replicates; replicate i uses RngStream(seed, i).
inline TtsEnsembleResult run_tts_ensemble(const ReactionNetwork& net, const State& x0, double t_final,
                                          std::span<const Observable> fs, const TtsEnsembleOptions& opts) {
  if (opts.replicates < 1) throw DomainError("need at least one replicate");
  std::vector<MacroTrajectory> runs(opts.replicates);
  parallel_for(opts.replicates, opts.threads, [&](std::size_t i) {
    RngStream rng(opts.seed, i);
    TtsOptions o = opts.tts;
    o.record_steps = i < opts.keep_trajectories;
    runs[i] = tts_simulate(net, x0, t_final, fs, o, rng);
  });

  TtsEnsembleResult res;
  res.replicates = opts.replicates;
  for (const auto& f : fs) res.observables.push_back(f.name());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    res.macro_steps += runs[i].macro_steps;
    res.micro_jumps += runs[i].micro_jumps;
    res.unconverged_visits += runs[i].unconverged_visits;
    // A macro path is absorbed only if it reached an absorbing class before t_final.
    if (runs[i].absorbed_at && *runs[i].absorbed_at < t_final) {
      res.absorbed.push_back(i);
      res.absorption_times.push_back(*runs[i].absorbed_at);
      if (opts.absorption == AbsorptionPolicy::Exclude) continue;
    }
    res.kept.push_back(i);
  }
  if (res.absorbed.size() == runs.size() &&
      std::all_of(res.absorption_times.begin(), res.absorption_times.end(), [](double t) { return t == 0.0; })) {
    throw MacroAbsorbed(0.0, x0);
  }
  const std::size_t nf = fs.size();
  const auto np = static_cast<Eigen::Index>(net.num_params());
  const auto rows = static_cast<Eigen::Index>(res.kept.size());
  const std::size_t ncp = runs.front().checkpoints.size();
  for (std::size_t c = 0; c < ncp; ++c) {
    MacroSnapshot snap;
    snap.time = runs.front().checkpoints[c].time;
    snap.terminal.resize(rows, static_cast<Eigen::Index>(nf));
    snap.ergodic.resize(rows, static_cast<Eigen::Index>(nf));
    snap.weights.resize(rows, np);
    snap.direct.assign(nf, Eigen::MatrixXd(rows, np));
    snap.direct_ergodic.assign(nf, Eigen::MatrixXd(rows, np));
    for (Eigen::Index row = 0; row < rows; ++row) {
      const MacroCheckpoint& cp = runs[res.kept[static_cast<std::size_t>(row)]].checkpoints[c];
      for (std::size_t j = 0; j < nf; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        snap.terminal(row, jj) = cp.fbar[j];
        snap.ergodic(row, jj) = cp.ergodic[j];
        snap.direct[j].row(row) = cp.direct.row(jj);
        snap.direct_ergodic[j].row(row) = cp.direct_ergodic.row(jj);
      }
      snap.weights.row(row) = cp.weights.transpose();
    }
    res.snapshots.push_back(std::move(snap));
  }
  for (std::size_t i = 0; i < std::min(opts.keep_trajectories, runs.size()); ++i) {
    res.trajectories.push_back(std::move(runs[i]));
  }
  return res;
}

/// Eq. (16): mean direct term plus the reweighted estimator, for observable j.
/// The bootstrap resamples whole macro replicates (fbar, Wbar, direct term).
inline EstimatorOutput tts_sensitivity(const MacroSnapshot& snap, std::size_t j, EstimatorMethod method,
                                       const std::optional<BootstrapOptions>& boot = std::nullopt) {
  const auto jj = static_cast<Eigen::Index>(j);
  const Eigen::VectorXd f = is_ergodic(method) ? snap.ergodic.col(jj) : snap.terminal.col(jj);
  const Eigen::MatrixXd& direct = is_ergodic(method) ? snap.direct_ergodic[j] : snap.direct[j];
  EstimatorOutput out = detail::plain_output(method, f, snap.weights);
  out.estimate += direct.colwise().mean().transpose();
  if (boot) {
    const auto n = static_cast<std::size_t>(f.size());
    Eigen::VectorXd fs(f.size());
    Eigen::MatrixXd ws(snap.weights.rows(), snap.weights.cols());
    Eigen::MatrixXd ds(direct.rows(), direct.cols());
    const BootstrapResult b = bootstrap(
        n,
        [&](std::span<const std::size_t> idx) {
          for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto src = static_cast<Eigen::Index>(idx[k]);
            const auto dst = static_cast<Eigen::Index>(k);
            fs[dst] = f[src];
            ws.row(dst) = snap.weights.row(src);
            ds.row(dst) = direct.row(src);
          }
          Eigen::VectorXd e = reweighted_mean(fs, ws, method);
          e += ds.colwise().mean().transpose();
          return e;
        },
        *boot);
    out.ci_half_width = b.half_width;
    out.standard_error = b.standard_error;
  }
  return out;
}

/// Eq. (20): derivatives against alpha^eps = alpha/eps are eps times those
/// against the rescaled alpha. Slow entries are unchanged.
inline EstimatorOutput rescale_fast(EstimatorOutput out, const ReactionNetwork& net) {
  const double eps = net.epsilon();
  if (!(eps > 0.0)) throw DomainError("epsilon must be positive");
  for (std::size_t p = 0; p < net.num_params(); ++p) {
    if (!net.is_fast_param(p)) continue;
    const auto i = static_cast<Eigen::Index>(p);
    out.estimate[i] *= eps;
    if (out.ci_half_width.size()) out.ci_half_width[i] *= eps;
    if (out.standard_error.size()) out.standard_error[i] *= eps;
  }
  return out;
}

inline Eigen::VectorXd rescale_fast(Eigen::VectorXd v, const ReactionNetwork& net) {
  for (std::size_t p = 0; p < net.num_params(); ++p) {
    if (net.is_fast_param(p)) v[static_cast<Eigen::Index>(p)] *= net.epsilon();
  }
  return v;
}

/// Macro trajectory CSV body row.
inline std::string macro_csv_header() {
  return "step,macro_time,class_key,beta_fired,fbar,lambda_bar_0,micro_jumps,converged";
}

}  // namespace stiffnet
