#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stiffnet/likelihood.hpp"
#include "stiffnet/network.hpp"
#include "stiffnet/observable.hpp"
#include "stiffnet/parallel.hpp"
#include "stiffnet/rng.hpp"

namespace stiffnet {

struct SsaEvent {
  double dt = 0.0;
  std::size_t reaction = 0;
};

/// First reaction whose cumulative rate strictly exceeds u * total.
inline std::size_t select_reaction(std::span<const double> rates, double total, double u) noexcept {
  const double target = u * total;
  double cumulative = 0.0;
  std::size_t last_enabled = rates.size();
  for (std::size_t r = 0; r < rates.size(); ++r) {
    if (rates[r] <= 0.0) continue;
    cumulative += rates[r];
    last_enabled = r;
    if (cumulative > target) return r;
  }
  return last_enabled;  // only reached through rounding in the partial sums
}

/// One direct-method step: exponential holding time, then reaction choice.
template <class Rng>
SsaEvent ssa_step(std::span<const int> x, const ReactionNetwork& net, Rng& rng,
                  ReactionSubset subset = ReactionSubset::All, double now = 0.0) {
  std::vector<double> rates(net.num_reactions());
  const double total = net.propensities(x, rates, subset);
  if (!(total > 0.0)) throw AbsorbedState(now);
  SsaEvent ev;
  ev.dt = exponential(rng, total);
  ev.reaction = select_reaction(rates, total, uniform01(rng));
  return ev;
}

/// Exact single-trajectory simulator with running observable integrals and
/// (optionally) the Girsanov accumulator.
///
/// The next jump time is drawn on entering a state and kept pending, so the
/// path can be stopped at arbitrary observation times and resumed without
/// changing the trajectory.
class PathSimulator {
 public:
  PathSimulator(const ReactionNetwork& net, ReactionSubset subset, State x0, std::span<const Observable> observables,
                bool track_weights)
      : net_(&net),
        subset_(subset),
        obs_(observables.begin(), observables.end()),
        track_weights_(track_weights),
        x_(std::move(x0)),
        rates_(net.num_reactions()),
        bterm_(net.num_reactions()),
        fvals_(obs_.size()),
        integrals_(obs_.size(), 0.0),
        bhat_(net.num_params(), 0.0),
        acc_(net.num_params()) {
    if (x_.size() != net.num_species()) throw ValidationError("initial state has wrong length");
    for (int v : x_) {
      if (v < 0) throw ValidationError("initial state has negative counts");
    }
    rate_const_.resize(net.num_reactions());
    deriv_scale_.resize(net.num_reactions());
    for (std::size_t r = 0; r < net.num_reactions(); ++r) {
      rate_const_[r] = net.rate_constant(r, subset);
      deriv_scale_[r] = net.derivative_scale(r, subset);
    }
    refresh();
  }

  const State& state() const noexcept { return x_; }
  double time() const noexcept { return time_; }
  std::size_t jumps() const noexcept { return jumps_; }
  double lambda0() const noexcept { return lambda0_; }
  std::span<const double> rates() const noexcept { return rates_; }
  std::span<const double> integrals() const noexcept { return integrals_; }
  std::span<const double> observable_values() const noexcept { return fvals_; }
  std::span<const double> bhat() const noexcept { return bhat_; }
  const ReweightAccumulator& accumulator() const noexcept { return acc_; }
  Eigen::VectorXd weights() const { return acc_.W(); }
  std::optional<double> absorbed_at() const noexcept { return absorbed_at_; }
  std::size_t last_reaction() const noexcept { return last_reaction_; }

  /// Simulates up to absolute time t; on_jump() is invoked after every jump.
  template <class Rng, class OnJump>
  void advance_to(double t, Rng& rng, OnJump&& on_jump) {
    if (!pending_) draw_holding_time(rng);
    while (next_jump_ <= t) {
      jump(rng);
      on_jump();
      draw_holding_time(rng);
    }
    hold(t - time_);
    time_ = t;
  }

  template <class Rng>
  void advance_to(double t, Rng& rng) {
    advance_to(t, rng, [] {});
  }

  /// Simulates n further jumps, stopping early in an absorbing state. The
  /// clock ends at the last jump time. Returns the number of jumps made.
  template <class Rng, class OnJump>
  std::size_t advance_jumps(std::size_t n, Rng& rng, OnJump&& on_jump) {
    std::size_t done = 0;
    for (; done < n; ++done) {
      if (!pending_) draw_holding_time(rng);
      if (!std::isfinite(next_jump_)) break;
      hold(next_jump_ - time_);
      time_ = next_jump_;
      fire(rng);
      on_jump();
    }
    return done;
  }

 private:
  template <class Rng>
  void draw_holding_time(Rng& rng) {
    pending_ = true;
    next_jump_ = lambda0_ > 0.0 ? time_ + exponential(rng, lambda0_) : std::numeric_limits<double>::infinity();
  }

  template <class Rng>
  void jump(Rng& rng) {
    hold(next_jump_ - time_);
    time_ = next_jump_;
    fire(rng);
  }

  void hold(double dt) noexcept {
    if (dt <= 0.0) return;
    for (std::size_t j = 0; j < fvals_.size(); ++j) integrals_[j] += fvals_[j] * dt;
    if (track_weights_) acc_.add_compensator(bhat_, dt);
  }

  template <class Rng>
  void fire(Rng& rng) {
    const std::size_t r = select_reaction(rates_, lambda0_, uniform01(rng));
    if (track_weights_) {
      acc_.add_jump_term(net_->reaction(r).param_index, deriv_scale_[r] * bterm_[r] / rates_[r]);
    }
    const auto& z = net_->reaction(r).stoich;
    for (std::size_t i = 0; i < x_.size(); ++i) x_[i] += z[i];
    ++jumps_;
    last_reaction_ = r;
    pending_ = false;
    refresh();
  }

  void refresh() {
    lambda0_ = 0.0;
    if (track_weights_) std::fill(bhat_.begin(), bhat_.end(), 0.0);
    for (std::size_t r = 0; r < rates_.size(); ++r) {
      if (rate_const_[r] == 0.0) {
        rates_[r] = 0.0;
        continue;
      }
      const double b = net_->mass_action_term(r, x_);
      bterm_[r] = b;
      rates_[r] = rate_const_[r] * b;
      lambda0_ += rates_[r];
      if (track_weights_) bhat_[net_->reaction(r).param_index] += deriv_scale_[r] * b;
    }
    for (std::size_t j = 0; j < obs_.size(); ++j) fvals_[j] = obs_[j](x_, *net_);
    if (lambda0_ <= 0.0 && !absorbed_at_) absorbed_at_ = time_;
  }

  const ReactionNetwork* net_;
  ReactionSubset subset_;
  std::vector<Observable> obs_;
  bool track_weights_;
  State x_;
  std::vector<double> rates_;
  std::vector<double> bterm_;
  std::vector<double> rate_const_;
  std::vector<double> deriv_scale_;
  std::vector<double> fvals_;
  std::vector<double> integrals_;
  std::vector<double> bhat_;
  ReweightAccumulator acc_;
  double lambda0_ = 0.0;
  double time_ = 0.0;
  double next_jump_ = 0.0;
  bool pending_ = false;
  std::size_t jumps_ = 0;
  std::size_t last_reaction_ = 0;
  std::optional<double> absorbed_at_;
};

enum class RecordPolicy { Full, Checkpoints, TerminalOnly };

struct RecordOptions {
  RecordPolicy policy = RecordPolicy::Full;
  std::vector<double> checkpoints;  ///< used with RecordPolicy::Checkpoints
};

struct Checkpoint {
  double time = 0.0;
  State state;
  double integral = 0.0;
};

/// Jump chain of one trajectory. With RecordPolicy::Full, entry n holds
/// T(n), X(n), f(X(n)) and F(n) = int_0^T(n) f; fired[n] takes X(n) to X(n+1).
struct TrajectoryRecord {
  std::size_t num_species = 0;
  std::vector<double> times;
  std::vector<int> states;
  std::vector<std::size_t> fired;
  std::vector<double> values;
  std::vector<double> integrals;
  std::vector<Checkpoint> checkpoints;
  double terminal_time = 0.0;
  State terminal_state;
  double terminal_integral = 0.0;
  std::size_t total_jumps = 0;
  std::optional<double> absorbed_at;

  std::size_t size() const noexcept { return times.size(); }
  std::span<const int> state(std::size_t n) const {
    return std::span<const int>(states).subspan(n * num_species, num_species);
  }
};

/// Exact SSA trajectory on [0, t_final] with F completed by the partial
/// holding interval. Absorption is recorded, not thrown.
template <class Rng>
TrajectoryRecord simulate(const ReactionNetwork& net, const State& x0, double t_final, const Observable& f, Rng& rng,
                          const RecordOptions& record = {}, ReactionSubset subset = ReactionSubset::All) {
  if (!(t_final >= 0.0)) throw DomainError("t_final must be nonnegative");
  PathSimulator sim(net, subset, x0, std::span<const Observable>(&f, 1), false);
  TrajectoryRecord rec;
  rec.num_species = net.num_species();
  auto push = [&] {
    rec.times.push_back(sim.time());
    rec.states.insert(rec.states.end(), sim.state().begin(), sim.state().end());
    rec.values.push_back(sim.observable_values()[0]);
    rec.integrals.push_back(sim.integrals()[0]);
  };
  if (record.policy == RecordPolicy::Full) push();
  auto on_jump = [&] {
    if (record.policy != RecordPolicy::Full) return;
    rec.fired.push_back(sim.last_reaction());
    push();
  };
  if (record.policy == RecordPolicy::Checkpoints) {
    for (double c : record.checkpoints) {
      if (c < sim.time() || c > t_final) throw DomainError("checkpoints must be sorted and within [0, t_final]");
      sim.advance_to(c, rng, on_jump);
      rec.checkpoints.push_back({c, sim.state(), sim.integrals()[0]});
    }
  }
  sim.advance_to(t_final, rng, on_jump);
  rec.terminal_time = t_final;
  rec.terminal_state = sim.state();
  rec.terminal_integral = sim.integrals()[0];
  rec.total_jumps = sim.jumps();
  rec.absorbed_at = sim.absorbed_at();
  return rec;
}

enum class AbsorptionPolicy { Exclude, Keep };

struct EnsembleOptions {
  std::size_t replicates = 1;
  std::uint64_t seed = 0;
  std::vector<double> times;  ///< extra observation times before t_final, sorted
  bool weights = true;
  std::size_t threads = 0;
  ReactionSubset subset = ReactionSubset::All;
  AbsorptionPolicy absorption = AbsorptionPolicy::Exclude;
};

/// Replicate samples at one observation time: rows are (kept) replicates.
struct EnsembleSnapshot {
  double time = 0.0;
  Eigen::MatrixXd terminal;  ///< f(X(t)) per observable
  Eigen::MatrixXd ergodic;   ///< (1/t) int_0^t f per observable
  Eigen::MatrixXd weights;   ///< W(t) per parameter
};

struct EnsembleResult {
  std::vector<std::string> observables;
  std::vector<EnsembleSnapshot> snapshots;  ///< last entry is t_final
  std::vector<std::size_t> kept;            ///< replicate ids in row order
  std::vector<std::size_t> absorbed;        ///< replicate ids that hit an absorbing state
  std::vector<double> absorption_times;
  std::size_t replicates = 0;

  const EnsembleSnapshot& final() const { return snapshots.back(); }
};

/// N_S independent replicates; replicate i uses RngStream(seed, i), so the
/// output does not depend on thread count or scheduling.
inline EnsembleResult run_ensemble(const ReactionNetwork& net, const State& x0, double t_final,
                                   std::span<const Observable> observables, const EnsembleOptions& opts) {
  if (opts.replicates < 1) throw DomainError("need at least one replicate");
  if (!(t_final >= 0.0)) throw DomainError("t_final must be nonnegative");
  std::vector<double> times;
  for (double t : opts.times) {
    if (t < 0.0 || t > t_final || (!times.empty() && t < times.back())) {
      throw DomainError("observation times must be sorted and within [0, t_final]");
    }
    if (t < t_final) times.push_back(t);
  }
  times.push_back(t_final);
  const std::size_t n = opts.replicates;
  const std::size_t nobs = observables.size();
  const std::size_t np = net.num_params();
  const std::size_t nt = times.size();

  struct Sample {
    std::vector<double> terminal, ergodic, weights;
    std::optional<double> absorbed_at;
  };
  std::vector<Sample> samples(n);
  parallel_for(n, opts.threads, [&](std::size_t i) {
    RngStream rng(opts.seed, i);
    PathSimulator sim(net, opts.subset, x0, observables, opts.weights);
    Sample& s = samples[i];
    s.terminal.resize(nt * nobs);
    s.ergodic.resize(nt * nobs);
    s.weights.assign(nt * np, 0.0);
    for (std::size_t k = 0; k < nt; ++k) {
      sim.advance_to(times[k], rng);
      for (std::size_t j = 0; j < nobs; ++j) {
        s.terminal[k * nobs + j] = sim.observable_values()[j];
        s.ergodic[k * nobs + j] = times[k] > 0.0 ? sim.integrals()[j] / times[k] : sim.observable_values()[j];
      }
      if (opts.weights) {
        const Eigen::VectorXd w = sim.weights();
        for (std::size_t p = 0; p < np; ++p) s.weights[k * np + p] = w[static_cast<Eigen::Index>(p)];
      }
    }
    s.absorbed_at = sim.absorbed_at();
  });

  EnsembleResult res;
  res.replicates = n;
  for (const auto& o : observables) res.observables.push_back(o.name());
  for (std::size_t i = 0; i < n; ++i) {
    if (samples[i].absorbed_at) {
      res.absorbed.push_back(i);
      res.absorption_times.push_back(*samples[i].absorbed_at);
      if (opts.absorption == AbsorptionPolicy::Exclude) continue;
    }
    res.kept.push_back(i);
  }
  if (!res.absorbed.empty() && res.absorbed.size() == n &&
      std::all_of(res.absorption_times.begin(), res.absorption_times.end(), [](double t) { return t == 0.0; })) {
    throw AbsorbedState(0.0);
  }
  const auto rows = static_cast<Eigen::Index>(res.kept.size());
  for (std::size_t k = 0; k < nt; ++k) {
    EnsembleSnapshot snap;
    snap.time = times[k];
    snap.terminal.resize(rows, static_cast<Eigen::Index>(nobs));
    snap.ergodic.resize(rows, static_cast<Eigen::Index>(nobs));
    snap.weights.resize(rows, static_cast<Eigen::Index>(np));
    for (Eigen::Index row = 0; row < rows; ++row) {
      const Sample& s = samples[res.kept[static_cast<std::size_t>(row)]];
      for (std::size_t j = 0; j < nobs; ++j) {
        snap.terminal(row, static_cast<Eigen::Index>(j)) = s.terminal[k * nobs + j];
        snap.ergodic(row, static_cast<Eigen::Index>(j)) = s.ergodic[k * nobs + j];
      }
      for (std::size_t p = 0; p < np; ++p) snap.weights(row, static_cast<Eigen::Index>(p)) = s.weights[k * np + p];
    }
    res.snapshots.push_back(std::move(snap));
  }
  return res;
}

}  // namespace stiffnet
