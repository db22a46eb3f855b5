#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stiffnet/error.hpp"
#include "stiffnet/network.hpp"
#include "stiffnet/rng.hpp"

namespace stiffnet {

/// Girsanov weight W = R - B for every parameter, accumulated online.
///
/// R collects d log lambda_{r*} / d theta_i at each jump, B the time integral
/// of d lambda_0 / d theta_i.
struct ReweightAccumulator {
  Eigen::VectorXd R;
  Eigen::VectorXd B;

  ReweightAccumulator() = default;
  explicit ReweightAccumulator(std::size_t n_params)
      : R(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params))),
        B(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params))) {}

  Eigen::VectorXd W() const { return R - B; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(R.size()); }

  // Hot-path forms used by the simulators, which already hold the rates.
  void add_jump_term(std::size_t param, double ratio) noexcept { R[static_cast<Eigen::Index>(param)] += ratio; }
  void add_compensator(std::span<const double> bhat, double dt) noexcept {
    for (std::size_t i = 0; i < bhat.size(); ++i) B[static_cast<Eigen::Index>(i)] += bhat[i] * dt;
  }
};

/// One jump of reaction `fired` out of state x after holding time dt.
inline void accumulate_jump(ReweightAccumulator& acc, std::span<const int> x, std::size_t fired, double dt,
                            const ReactionNetwork& net, ReactionSubset subset = ReactionSubset::All) {
  const double rate = net.propensity(fired, x, subset);
  if (!(rate > 0.0)) throw ZeroPropensity("fired reaction " + std::to_string(fired) + " has zero propensity");
  const Eigen::MatrixXd d = propensity_derivatives(net, x, subset);
  acc.R += d.row(static_cast<Eigen::Index>(fired)).transpose() / rate;
  acc.B += d.colwise().sum().transpose() * dt;
}

/// Compensator for the final holding interval [T_last, t_final]; no jump term.
inline void finalize_partial(ReweightAccumulator& acc, std::span<const int> x, double residual,
                             const ReactionNetwork& net, ReactionSubset subset = ReactionSubset::All) {
  if (residual < 0.0) throw DomainError("negative residual interval");
  if (residual == 0.0) return;
  std::vector<double> bhat(net.num_params());
  net.propensity_derivative_sums(x, bhat, subset);
  acc.add_compensator(bhat, residual);
}

enum class EstimatorMethod { LR, CLR, ELR, CELR };

inline std::string to_string(EstimatorMethod m) {
  switch (m) {
    case EstimatorMethod::LR:
      return "LR";
    case EstimatorMethod::CLR:
      return "CLR";
    case EstimatorMethod::ELR:
      return "ELR";
    case EstimatorMethod::CELR:
      return "CELR";
  }
  return "?";
}

inline EstimatorMethod parse_estimator(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "lr") return EstimatorMethod::LR;
  if (s == "clr") return EstimatorMethod::CLR;
  if (s == "elr") return EstimatorMethod::ELR;
  if (s == "celr") return EstimatorMethod::CELR;
  throw ValidationError("unknown estimator '" + s + "' (expected lr, clr, elr or celr)");
}

inline bool is_ergodic(EstimatorMethod m) noexcept {
  return m == EstimatorMethod::ELR || m == EstimatorMethod::CELR;
}
inline bool is_centered(EstimatorMethod m) noexcept {
  return m == EstimatorMethod::CLR || m == EstimatorMethod::CELR;
}

struct EstimatorOutput {
  EstimatorMethod method = EstimatorMethod::LR;
  Eigen::VectorXd estimate;
  Eigen::VectorXd ci_half_width;   ///< percentile bootstrap; zero if not requested
  Eigen::VectorXd standard_error;  ///< sd of bootstrap replicates; zero if not requested
  std::size_t n_samples = 0;
};

/// Raw reduction shared by all four estimators. `samples` are terminal
/// values (LR/CLR) or ergodic averages F/T (ELR/CELR); rows of `weights`
/// are replicates, columns parameters.
inline Eigen::VectorXd reweighted_mean(const Eigen::VectorXd& samples, const Eigen::MatrixXd& weights,
                                       bool centered) {
  const auto n = samples.size();
  if (n < 2) throw InsufficientSamples("at least two samples are required");
  if (weights.rows() != n) throw ValidationError("sample and weight counts differ");
  Eigen::VectorXd est = weights.transpose() * samples / static_cast<double>(n);
  if (centered) est -= samples.mean() * weights.colwise().mean().transpose();
  return est;
}

inline Eigen::VectorXd reweighted_mean(const Eigen::VectorXd& samples, const Eigen::MatrixXd& weights,
                                       EstimatorMethod method) {
  return reweighted_mean(samples, weights, is_centered(method));
}

namespace detail {
inline EstimatorOutput plain_output(EstimatorMethod m, const Eigen::VectorXd& f, const Eigen::MatrixXd& w) {
  EstimatorOutput out;
  out.method = m;
  out.estimate = reweighted_mean(f, w, is_centered(m));
  out.ci_half_width = Eigen::VectorXd::Zero(out.estimate.size());
  out.standard_error = Eigen::VectorXd::Zero(out.estimate.size());
  out.n_samples = static_cast<std::size_t>(f.size());
  return out;
}
}  // namespace detail

inline EstimatorOutput lr(const Eigen::VectorXd& terminal_f, const Eigen::MatrixXd& w) {
  return detail::plain_output(EstimatorMethod::LR, terminal_f, w);
}
inline EstimatorOutput clr(const Eigen::VectorXd& terminal_f, const Eigen::MatrixXd& w) {
  return detail::plain_output(EstimatorMethod::CLR, terminal_f, w);
}
inline EstimatorOutput elr(const Eigen::VectorXd& ergodic_f, const Eigen::MatrixXd& w) {
  return detail::plain_output(EstimatorMethod::ELR, ergodic_f, w);
}
inline EstimatorOutput celr(const Eigen::VectorXd& ergodic_f, const Eigen::MatrixXd& w) {
  return detail::plain_output(EstimatorMethod::CELR, ergodic_f, w);
}

struct BootstrapOptions {
  std::size_t resamples = 1000;
  double confidence = 0.95;
  std::uint64_t seed = 0;
};

struct BootstrapResult {
  Eigen::VectorXd half_width;
  Eigen::VectorXd standard_error;
};

/// Linear-interpolated quantile of sorted data.
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Percentile bootstrap over `n` exchangeable units. `estimator` receives the
/// resampled unit indices and returns one value per component.
template <class Estimator>
BootstrapResult bootstrap(std::size_t n, Estimator&& estimator, const BootstrapOptions& opts) {
  if (n < 2) throw InsufficientSamples("bootstrap needs at least two samples");
  if (opts.resamples < 100) throw DomainError("bootstrap needs at least 100 resamples");
  if (!(opts.confidence > 0.0 && opts.confidence < 1.0)) throw DomainError("confidence must lie in (0,1)");
  RngStream rng(opts.seed, 0xB007'5724'0000'0000ULL);
  std::vector<std::size_t> idx(n);
  std::vector<Eigen::VectorXd> reps;
  reps.reserve(opts.resamples);
  for (std::size_t b = 0; b < opts.resamples; ++b) {
    for (auto& i : idx) {
      i = static_cast<std::size_t>((static_cast<uint128>(rng()) * n) >> 64);
    }
    reps.push_back(estimator(std::span<const std::size_t>(idx)));
  }
  const auto dim = reps.front().size();
  BootstrapResult out{Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim)};
  std::vector<double> col(opts.resamples);
  const double alpha = 1.0 - opts.confidence;
  for (Eigen::Index j = 0; j < dim; ++j) {
    double mean = 0.0;
    for (std::size_t b = 0; b < opts.resamples; ++b) {
      col[b] = reps[b][j];
      mean += col[b];
    }
    mean /= static_cast<double>(opts.resamples);
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    out.standard_error[j] = std::sqrt(ss / static_cast<double>(opts.resamples - 1));
    std::sort(col.begin(), col.end());
    out.half_width[j] = 0.5 * (sorted_quantile(col, 1.0 - alpha / 2) - sorted_quantile(col, alpha / 2));
  }
  return out;
}

/// Bootstrap of one of the four estimators, resampling (f, W) pairs.
inline BootstrapResult bootstrap_ci(const Eigen::VectorXd& f, const Eigen::MatrixXd& w, EstimatorMethod method,
                                    const BootstrapOptions& opts) {
  const auto n = static_cast<std::size_t>(f.size());
  Eigen::VectorXd fs(f.size());
  Eigen::MatrixXd ws(w.rows(), w.cols());
  return bootstrap(
      n,
      [&](std::span<const std::size_t> idx) {
        for (std::size_t k = 0; k < idx.size(); ++k) {
          fs[static_cast<Eigen::Index>(k)] = f[static_cast<Eigen::Index>(idx[k])];
          ws.row(static_cast<Eigen::Index>(k)) = w.row(static_cast<Eigen::Index>(idx[k]));
        }
        return reweighted_mean(fs, ws, method);
      },
      opts);
}

/// Estimate plus bootstrap confidence interval.
inline EstimatorOutput estimate_with_ci(EstimatorMethod method, const Eigen::VectorXd& f, const Eigen::MatrixXd& w,
                                        const BootstrapOptions& opts) {
  EstimatorOutput out = detail::plain_output(method, f, w);
  const BootstrapResult b = bootstrap_ci(f, w, method, opts);
  out.ci_half_width = b.half_width;
  out.standard_error = b.standard_error;
  return out;
}

}  // namespace stiffnet
