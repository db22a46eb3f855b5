#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <Eigen/Dense>

#include "stiffnet/error.hpp"
#include "stiffnet/likelihood.hpp"
#include "stiffnet/network.hpp"
#include "stiffnet/observable.hpp"
#include "stiffnet/ssa.hpp"

namespace stiffnet {

enum class ToleranceMode { Absolute, RelativeToMean };

struct BatchConfig {
  std::size_t batches = 10;         ///< N_b
  std::size_t jumps_per_test = 20;  ///< N_J
  double ci_delta = 0.05;           ///< delta_CI
  double precision = 0.05;          ///< delta_precise
  ToleranceMode mode = ToleranceMode::RelativeToMean;
  std::size_t max_jumps = 50'000'000;
  std::size_t consecutive_passes = 2;
  double confirm_growth = 1.25;  ///< a confirming test needs this many times the jumps of the first pass
  std::size_t min_batch_jumps = 20;  ///< a test can pass only once the run has N_b times this many jumps

  void validate() const {
    if (batches < 2) throw ValidationError("batch count must be at least 2");
    if (jumps_per_test < 1) throw ValidationError("jumps per test must be at least 1");
    if (!(ci_delta > 0.0 && ci_delta < 1.0)) throw ValidationError("ci_delta must lie in (0,1)");
    if (!(precision > 0.0)) throw ValidationError("precision must be positive");
    if (consecutive_passes < 1) throw ValidationError("consecutive_passes must be at least 1");
    if (!(confirm_growth >= 1.0)) throw ValidationError("confirm_growth must be at least 1");
    if (max_jumps < jumps_per_test) throw ValidationError("max_jumps below jumps_per_test");
  }
};

/// Student-t inverse CDF (Boost inverts the regularized incomplete beta).
inline double t_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("t_quantile: p must lie in (0,1)");
  if (!(dof >= 1.0)) throw DomainError("t_quantile: dof must be >= 1");
  if (p == 0.5) return 0.0;
  boost::math::students_t_distribution<double> dist(dof);
  return boost::math::quantile(dist, p);
}

/// Per-jump record used to re-split a growing trajectory. Entry n holds the
/// values right after jump n (entry 0 is the initial state).
struct JumpHistory {
  std::size_t n_obs = 0;
  std::size_t n_params = 0;
  std::vector<double> times;      // T(n)
  std::vector<double> values;     // fhat(n), n_obs per entry
  std::vector<double> integrals;  // F(n)
  std::vector<double> weights;    // W(n), n_params per entry (empty when untracked)
  std::vector<double> bhat;       // bhat(n)

  std::size_t size() const noexcept { return times.size(); }
  bool has_weights() const noexcept { return !weights.empty(); }
  double value(std::size_t n, std::size_t j) const { return values[n * n_obs + j]; }
  double integral(std::size_t n, std::size_t j) const { return integrals[n * n_obs + j]; }
  double weight(std::size_t n, std::size_t p) const { return weights[n * n_params + p]; }
  double bhat_at(std::size_t n, std::size_t p) const { return bhat[n * n_params + p]; }

  /// Empties the record but keeps its capacity.
  void clear() noexcept {
    times.clear();
    values.clear();
    integrals.clear();
    weights.clear();
    bhat.clear();
  }

  void record(const PathSimulator& sim, bool with_weights) {
    times.push_back(sim.time());
    for (double v : sim.observable_values()) values.push_back(v);
    for (double v : sim.integrals()) integrals.push_back(v);
    if (with_weights) {
      const auto& acc = sim.accumulator();
      for (std::size_t p = 0; p < n_params; ++p) {
        const auto i = static_cast<Eigen::Index>(p);
        weights.push_back(acc.R[i] - acc.B[i]);
      }
      for (double v : sim.bhat()) bhat.push_back(v);
    }
  }
};

struct BatchSummary {
  std::vector<double> means;  // Ybar_k
  double mean = 0.0;          // Ybar
  double variance = 0.0;      // s^2 over batches
  double moe = 0.0;
  double batch_time = 0.0;
  std::vector<std::size_t> last_index;  // ind_B(k)
  std::vector<double> end_values;       // fhat(ind_B(k))
  std::vector<double> integrals;        // F_A^B(k)
  Eigen::MatrixXd weights;              // W_A^B(k), rows = batches; filled by batch_lr_weights
};

/// ind_B(k) = max{n : T(n) <= k t_batch}, k = 1..N_b, written into `ind`.
inline void batch_boundaries(std::span<const double> times, std::size_t n_batches, double end_time,
                             std::vector<std::size_t>& ind) {
  if (times.empty()) throw ValidationError("empty trajectory");
  ind.resize(n_batches);
  const double tb = end_time / static_cast<double>(n_batches);
  auto from = times.begin();
  for (std::size_t k = 1; k <= n_batches; ++k) {
    const double edge = k == n_batches ? end_time : static_cast<double>(k) * tb;
    from = std::upper_bound(from, times.end(), edge);  // edges increase, so search onward
    ind[k - 1] = static_cast<std::size_t>(from - times.begin()) - 1;
  }
}

inline std::vector<std::size_t> batch_boundaries(std::span<const double> times, std::size_t n_batches,
                                                 double end_time) {
  std::vector<std::size_t> ind;
  batch_boundaries(times, n_batches, end_time, ind);
  return ind;
}

namespace detail {

// Core of step (3); value(n) and integral(n) read fhat and F at jump n.
template <class Value, class Integral>
BatchSummary split(std::span<const double> times, double end_time, std::size_t n_batches, double tq, Value&& value,
                   Integral&& integral, const std::vector<std::size_t>& ind) {
  BatchSummary s;
  s.batch_time = end_time / static_cast<double>(n_batches);
  s.last_index = ind;
  s.means.resize(n_batches);
  s.end_values.resize(n_batches);
  s.integrals.resize(n_batches);
  double prev = 0.0;  // F^B, integral up to the previous boundary
  for (std::size_t k = 1; k <= n_batches; ++k) {
    const double edge = k == n_batches ? end_time : static_cast<double>(k) * s.batch_time;
    const std::size_t n = ind[k - 1];
    const double fk = value(n);
    const double upto = integral(n) + fk * (edge - times[n]);
    s.integrals[k - 1] = upto - prev;
    s.means[k - 1] = s.integrals[k - 1] / s.batch_time;
    s.end_values[k - 1] = fk;
    prev = upto;
  }
  s.mean = prev / end_time;
  double ss = 0.0;
  for (double m : s.means) ss += (m - s.mean) * (m - s.mean);
  s.variance = ss / static_cast<double>(n_batches - 1);
  s.moe = tq * std::sqrt(s.variance / static_cast<double>(n_batches));
  return s;
}

// Mean and MOE only, for the per-test check; `means` is scratch space.
struct MeanMoe {
  double mean = 0.0;
  double moe = 0.0;
};

inline MeanMoe quick_moe(const JumpHistory& h, std::size_t j, double end_time, double tq,
                         const std::vector<std::size_t>& ind, std::vector<double>& means) {
  const std::size_t nb = ind.size();
  const double tb = end_time / static_cast<double>(nb);
  means.resize(nb);
  double prev = 0.0;
  for (std::size_t k = 1; k <= nb; ++k) {
    const double edge = k == nb ? end_time : static_cast<double>(k) * tb;
    const std::size_t n = ind[k - 1];
    const double upto = h.integral(n, j) + h.value(n, j) * (edge - h.times[n]);
    means[k - 1] = (upto - prev) / tb;
    prev = upto;
  }
  MeanMoe r;
  r.mean = prev / end_time;
  double ss = 0.0;
  for (double m : means) ss += (m - r.mean) * (m - r.mean);
  r.moe = tq * std::sqrt(ss / static_cast<double>(nb - 1) / static_cast<double>(nb));
  return r;
}

inline double normalized(const MeanMoe& m, ToleranceMode mode) {
  if (mode == ToleranceMode::RelativeToMean && std::abs(m.mean) >= 1e-12) return m.moe / std::abs(m.mean);
  return m.moe;
}

inline void check_split_args(std::size_t n, std::size_t n_batches, double end_time, double last_time) {
  if (n == 0) throw ValidationError("empty trajectory");
  if (n_batches < 2) throw ValidationError("need at least 2 batches");
  if (!(end_time > 0.0)) throw DomainError("trajectory has zero length");
  if (end_time < last_time) throw DomainError("end time precedes last jump");
}

}  // namespace detail

/// Splits observable j of a jump history into N_b equal-time batches.
/// end_time defaults to the last jump time.
inline BatchSummary split_batches(const JumpHistory& h, std::size_t j, std::size_t n_batches,
                                  double end_time = -1.0, double delta_ci = 0.05) {
  if (end_time < 0.0 && !h.times.empty()) end_time = h.times.back();
  detail::check_split_args(h.size(), n_batches, end_time, h.times.empty() ? 0.0 : h.times.back());
  const auto ind = batch_boundaries(h.times, n_batches, end_time);
  const double tq = t_quantile(1.0 - delta_ci / 2.0, static_cast<double>(n_batches - 1));
  return detail::split(
      h.times, end_time, n_batches, tq, [&](std::size_t n) { return h.value(n, j); },
      [&](std::size_t n) { return h.integral(n, j); }, ind);
}

/// Same split applied to a fully recorded SSA trajectory, up to its terminal time.
inline BatchSummary split_batches(const TrajectoryRecord& rec, std::size_t n_batches, double delta_ci = 0.05) {
  if (rec.times.empty()) throw ValidationError("trajectory was not recorded (use RecordPolicy::Full)");
  detail::check_split_args(rec.size(), n_batches, rec.terminal_time, rec.times.back());
  const auto ind = batch_boundaries(rec.times, n_batches, rec.terminal_time);
  const double tq = t_quantile(1.0 - delta_ci / 2.0, static_cast<double>(n_batches - 1));
  return detail::split(
      rec.times, rec.terminal_time, n_batches, tq, [&](std::size_t n) { return rec.values[n]; },
      [&](std::size_t n) { return rec.integrals[n]; }, ind);
}

/// W_A^B(k) = W(ind) - bhat(ind)(k t_batch - T(ind)) - W^B, rows = batches.
inline Eigen::MatrixXd batch_lr_weights(const JumpHistory& h, const std::vector<std::size_t>& ind, double end_time) {
  if (!h.has_weights()) throw ValidationError("jump history carries no weights");
  const std::size_t nb = ind.size();
  const double tb = end_time / static_cast<double>(nb);
  Eigen::MatrixXd w(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(h.n_params));
  std::vector<double> prev(h.n_params, 0.0);
  for (std::size_t k = 1; k <= nb; ++k) {
    const double edge = k == nb ? end_time : static_cast<double>(k) * tb;
    const std::size_t n = ind[k - 1];
    for (std::size_t p = 0; p < h.n_params; ++p) {
      const double upto = h.weight(n, p) - h.bhat_at(n, p) * (edge - h.times[n]);
      w(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(p)) = upto - prev[p];
      prev[p] = upto;
    }
  }
  return w;
}

inline Eigen::MatrixXd batch_lr_weights(const JumpHistory& h, const BatchSummary& s) {
  return batch_lr_weights(h, s.last_index, s.batch_time * static_cast<double>(s.last_index.size()));
}

struct BatchEstimates {
  EstimatorOutput lr, clr, elr, celr;

  const EstimatorOutput& get(EstimatorMethod m) const {
    switch (m) {
      case EstimatorMethod::LR:
        return lr;
      case EstimatorMethod::CLR:
        return clr;
      case EstimatorMethod::ELR:
        return elr;
      case EstimatorMethod::CELR:
        break;
    }
    return celr;
  }
};

/// Step (5): the four estimators with batches as samples. LR/CLR use
/// fhat(ind_B(k)), ELR/CELR use Ybar_k. The CI is a t half-width over the
/// per-batch products (zero for a single exact value).
inline BatchEstimates batch_estimates(const BatchSummary& s, const Eigen::MatrixXd& weights,
                                      double delta_ci = 0.05) {
  const auto nb = static_cast<Eigen::Index>(s.means.size());
  if (nb < 2) throw InsufficientSamples("batch estimates need at least 2 batches");
  if (weights.rows() != nb) throw ValidationError("weight rows differ from batch count");
  const Eigen::VectorXd ends = Eigen::Map<const Eigen::VectorXd>(s.end_values.data(), nb);
  const Eigen::VectorXd means = Eigen::Map<const Eigen::VectorXd>(s.means.data(), nb);
  const double tq = t_quantile(1.0 - delta_ci / 2.0, static_cast<double>(nb - 1));
  auto make = [&](EstimatorMethod m, const Eigen::VectorXd& y) {
    EstimatorOutput out = detail::plain_output(m, y, weights);
    const double ybar = is_centered(m) ? y.mean() : 0.0;
    const Eigen::RowVectorXd wbar = is_centered(m) ? Eigen::RowVectorXd(weights.colwise().mean())
                                                   : Eigen::RowVectorXd::Zero(weights.cols());
    for (Eigen::Index p = 0; p < weights.cols(); ++p) {
      Eigen::VectorXd g = (y.array() - ybar) * (weights.col(p).array() - wbar[p]);
      const double sd = std::sqrt((g.array() - g.mean()).square().sum() / static_cast<double>(nb - 1));
      out.standard_error[p] = sd / std::sqrt(static_cast<double>(nb));
      out.ci_half_width[p] = tq * out.standard_error[p];
    }
    return out;
  };
  return {make(EstimatorMethod::LR, ends), make(EstimatorMethod::CLR, ends), make(EstimatorMethod::ELR, means),
          make(EstimatorMethod::CELR, means)};
}

/// MOE after the tolerance normalization; RelativeToMean falls back to the
/// absolute MOE when the mean is ~0.
inline double normalized_moe(const BatchSummary& s, ToleranceMode mode) {
  if (mode == ToleranceMode::RelativeToMean && std::abs(s.mean) >= 1e-12) return s.moe / std::abs(s.mean);
  return s.moe;
}

/// Ergodic batch estimate with look-back weights and a fixed center:
/// mean over k >= lookback of (Ybar_k - center) * sum_{j=k-lookback..k} W_A^B(j).
/// The first `lookback` batches only feed the windows; a truncated window
/// drops the score that produced the batch's starting state and biases the
/// estimate low. With `center` taken from independent data there is no
/// centering bias.
inline Eigen::VectorXd windowed_celr(const BatchSummary& s, const Eigen::MatrixXd& weights, double center,
                                     std::size_t lookback) {
  const auto nb = static_cast<Eigen::Index>(s.means.size());
  const auto lb = static_cast<Eigen::Index>(lookback);
  if (nb <= lb) throw InsufficientSamples("windowed estimate needs more batches than the look-back");
  if (weights.rows() != nb) throw ValidationError("weight rows differ from batch count");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(weights.cols());
  Eigen::RowVectorXd window = Eigen::RowVectorXd::Zero(weights.cols());
  for (Eigen::Index k = 0; k < nb; ++k) {
    window += weights.row(k);
    if (k - lb - 1 >= 0) window -= weights.row(k - lb - 1);
    if (k >= lb) out += (s.means[static_cast<std::size_t>(k)] - center) * window.transpose();
  }
  return out / static_cast<double>(nb - lb);
}

struct DiagnosticRow {
  std::size_t test_index = 0;
  double total_time = 0.0;
  std::size_t total_jumps = 0;
  std::vector<double> means;
  std::vector<double> moes;
};

struct ConvergenceResult {
  JumpHistory history;
  std::vector<BatchSummary> summaries;  ///< one per observable, from the final test
  Eigen::MatrixXd weights;              ///< W_A^B(k) from the final test (empty when untracked)
  bool converged = false;
  std::size_t tests = 0;
  std::size_t jumps = 0;
  double end_time = 0.0;
  State terminal_state;
  double max_normalized_moe = 0.0;
  std::vector<DiagnosticRow> diagnostics;
  // scratch reused across calls
  std::vector<std::size_t> ind;
  std::vector<double> scratch;
};

struct ConvergenceOptions {
  ReactionSubset subset = ReactionSubset::All;
  bool track_weights = true;
  bool diagnostics = false;
};

namespace detail {

inline void start_run(const PathSimulator& sim, const ReactionNetwork& net, std::size_t n_obs,
                      const ConvergenceOptions& opts, ConvergenceResult& res) {
  JumpHistory& h = res.history;
  h.clear();
  h.n_obs = n_obs;
  h.n_params = net.num_params();
  res.summaries.clear();
  res.diagnostics.clear();
  res.converged = false;
  res.tests = 0;
  h.record(sim, opts.track_weights);
}

// Full summaries and batch weights at the end of a run.
inline void finish_run(const PathSimulator& sim, std::size_t nb, double tq, const ConvergenceOptions& opts,
                       ConvergenceResult& res) {
  const JumpHistory& h = res.history;
  res.jumps = sim.jumps();
  res.end_time = sim.time();
  res.terminal_state = sim.state();
  batch_boundaries(h.times, nb, res.end_time, res.ind);
  for (std::size_t j = 0; j < h.n_obs; ++j) {
    res.summaries.push_back(split(
        h.times, res.end_time, nb, tq, [&](std::size_t n) { return h.value(n, j); },
        [&](std::size_t n) { return h.integral(n, j); }, res.ind));
  }
  res.weights.resize(0, 0);
  if (opts.track_weights) {
    res.weights = batch_lr_weights(h, res.ind, res.end_time);
    for (auto& s : res.summaries) s.weights = res.weights;
  }
}

}  // namespace detail

/// Algorithm 2: simulate N_J jumps at a time, re-split all elapsed time into
/// N_b batches and stop once every observable passes the MOE test on
/// `consecutive_passes` successive tests (or max_jumps is hit).
/// This form reuses the buffers of `res`, which the micro-equilibration
/// calls thousands of times.
template <class Rng>
void run_until_converged(const ReactionNetwork& net, const State& x0, std::span<const Observable> observables,
                         const BatchConfig& cfg, Rng& rng, const ConvergenceOptions& opts, ConvergenceResult& res) {
  cfg.validate();
  if (observables.empty()) throw ValidationError("no observables to monitor");
  PathSimulator sim(net, opts.subset, x0, observables, opts.track_weights);
  if (!(sim.lambda0() > 0.0)) throw AbsorbedState(0.0, x0);

  detail::start_run(sim, net, observables.size(), opts, res);
  JumpHistory& h = res.history;
  auto on_jump = [&] { h.record(sim, opts.track_weights); };

  const std::size_t nb = cfg.batches;
  const double tq = t_quantile(1.0 - cfg.ci_delta / 2.0, static_cast<double>(nb - 1));
  std::size_t passes = 0;
  std::size_t first_pass_jumps = 0;
  while (true) {
    const std::size_t made = sim.advance_jumps(cfg.jumps_per_test, rng, on_jump);
    if (made < cfg.jumps_per_test) throw AbsorbedState(sim.time(), sim.state());
    const double end = sim.time();
    batch_boundaries(h.times, nb, end, res.ind);
    double worst = 0.0;
    ++res.tests;
    DiagnosticRow row{res.tests, end, sim.jumps(), {}, {}};
    for (std::size_t j = 0; j < h.n_obs; ++j) {
      const detail::MeanMoe mm = detail::quick_moe(h, j, end, tq, res.ind, res.scratch);
      worst = std::max(worst, detail::normalized(mm, cfg.mode));
      if (opts.diagnostics) {
        row.means.push_back(mm.mean);
        row.moes.push_back(mm.moe);
      }
    }
    if (opts.diagnostics) res.diagnostics.push_back(std::move(row));
    res.max_normalized_moe = worst;
    if (worst > cfg.precision || sim.jumps() < nb * cfg.min_batch_jumps) {
      passes = 0;
    } else if (passes == 0) {
      passes = 1;
      first_pass_jumps = sim.jumps();
    } else if (static_cast<double>(sim.jumps()) >= cfg.confirm_growth * static_cast<double>(first_pass_jumps)) {
      ++passes;
    }
    if (passes >= cfg.consecutive_passes) {
      res.converged = true;
      break;
    }
    if (sim.jumps() >= cfg.max_jumps) break;
  }
  detail::finish_run(sim, nb, tq, opts, res);
}

/// Plain fixed-length run of `n_jumps` jumps (rounded up to whole blocks of
/// N_J), split into `batches` batches (cfg.batches when 0), with no stopping test.
template <class Rng>
void run_for_jumps(const ReactionNetwork& net, const State& x0, std::span<const Observable> observables,
                   const BatchConfig& cfg, std::size_t n_jumps, Rng& rng, const ConvergenceOptions& opts,
                   ConvergenceResult& res, std::size_t batches = 0) {
  cfg.validate();
  const std::size_t nb = batches == 0 ? cfg.batches : batches;
  if (nb < 2) throw ValidationError("a fixed-length run needs at least 2 batches");
  if (observables.empty()) throw ValidationError("no observables to monitor");
  PathSimulator sim(net, opts.subset, x0, observables, opts.track_weights);
  if (!(sim.lambda0() > 0.0)) throw AbsorbedState(0.0, x0);
  detail::start_run(sim, net, observables.size(), opts, res);
  auto on_jump = [&] { res.history.record(sim, opts.track_weights); };
  const std::size_t blocks = std::max<std::size_t>(1, (n_jumps + cfg.jumps_per_test - 1) / cfg.jumps_per_test);
  const std::size_t total = blocks * cfg.jumps_per_test;
  if (sim.advance_jumps(total, rng, on_jump) < total) throw AbsorbedState(sim.time(), sim.state());
  const double tq = t_quantile(1.0 - cfg.ci_delta / 2.0, static_cast<double>(nb - 1));
  detail::finish_run(sim, nb, tq, opts, res);
}

template <class Rng>
ConvergenceResult run_until_converged(const ReactionNetwork& net, const State& x0,
                                      std::span<const Observable> observables, const BatchConfig& cfg, Rng& rng,
                                      const ConvergenceOptions& opts = {}) {
  ConvergenceResult res;
  run_until_converged(net, x0, observables, cfg, rng, opts, res);
  return res;
}

/// Header line for the diagnostic CSV.
inline std::string diagnostics_header(std::span<const Observable> observables) {
  std::string out = "test_index,total_time,total_jumps";
  for (const auto& o : observables) out += "," + o.name() + ":mean," + o.name() + ":MOE";
  return out;
}

}  // namespace stiffnet
