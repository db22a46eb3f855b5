// Acceptance run: one PASS/FAIL line per criterion. Seeds and tolerances are
// fixed here before anything is simulated; nothing is tuned on the outcome.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli_app.hpp"
#include "stiffnet/stiffnet.hpp"
#include "support.hpp"

using namespace stiffnet;

namespace {

// criterion 1
constexpr std::uint64_t kSeedSweep = 101;
constexpr std::size_t kSweepReplicates = 2000;
constexpr double kSlopeLo = 0.7, kSlopeHi = 1.3;
// criteria 2, 3
constexpr std::uint64_t kSeedTable2 = 202;
constexpr std::uint64_t kSeedBoot = 203;
constexpr std::size_t kTable2Replicates = 1000;
constexpr double kSeMultiple = 3.0;
constexpr double kClrRatioMin = 4.0, kCelrRatioMax = 2.5;
// criterion 4
constexpr std::uint64_t kSeedSsa = 404;
constexpr std::uint64_t kSeedMacro = 405;
constexpr std::size_t kMartingaleReplicates = 10000;
// criterion 5
constexpr double kFdTol = 1e-4, kResidualTol = 1e-10, kRescaleTol = 1e-10;
// criterion 6
constexpr std::uint64_t kSeedMicro = 606;
constexpr std::size_t kMicroRuns = 100, kMicroCoverMin = 90;
// criterion 8
constexpr std::size_t kBfsCap = 10000;

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail, double seconds) {
  if (!ok) ++failures;
  std::printf("%s criterion %d: %s | %s | %.1f s\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str(),
              seconds);
  std::fflush(stdout);
}

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string vec(const Eigen::VectorXd& v, int prec = 3) {
  std::ostringstream s;
  s.precision(prec);
  s << std::fixed << "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) s << (i ? ", " : "") << v[i];
  s << ")";
  return s.str();
}

// ---------------------------------------------------------------------------

void criterion1() {
  const auto t0 = Clock::now();
  cli::RunConfig cfg;
  cfg.t_final = 0.5;
  cfg.replicates = kSweepReplicates;
  cfg.seed = kSeedSweep;
  const State x0{100, 0, 0};
  std::vector<double> eps{0.1, 0.03, 0.01}, err, exact;
  std::ostringstream d;
  // Exact error for reference only: CME at eps against the eps -> 0 DAE limit.
  const Eigen::VectorXd limit = linear_dae_solution(fixtures::isomerization(), x0, {0.5}).means[0];
  for (double e : eps) {
    const auto row = cli::compare_at(fixtures::isomerization(e), x0, e, cfg);
    err.push_back(row.mean_error);
    const auto net = fixtures::isomerization(e);
    const auto space = enumerate_state_space(net, x0);
    const auto p = cme_transient(build_generator(net, space), point_distribution(space, x0), std::vector<double>{0.5});
    Eigen::VectorXd m(3);
    for (std::size_t s = 0; s < 3; ++s) m[static_cast<Eigen::Index>(s)] = p[0].dot(species_vector(space, s));
    exact.push_back((m - limit).norm() / limit.norm());
    d << "eps " << e << " err " << row.mean_error << " (exact " << exact.back() << "); ";
  }
  const auto slope = cli::loglog_slope(eps, err);
  d << "slope " << (slope ? *slope : 0.0) << " in [" << kSlopeLo << ", " << kSlopeHi << "] (exact "
    << *cli::loglog_slope(eps, exact) << ")";
  report(1, slope && *slope >= kSlopeLo && *slope <= kSlopeHi, "O(eps) averaging error, isomerization", d.str(),
         since(t0));
}

// Criteria 2 and 3 share one ensemble.
void criteria2and3() {
  const auto t0 = Clock::now();
  const auto net = fixtures::adsorption();
  const State x0{30, 60, 10};
  const auto f = Observable::species(1, "B");
  TtsEnsembleOptions o;
  o.replicates = kTable2Replicates;
  o.seed = kSeedTable2;
  o.tts.checkpoints = {1.3};
  const auto res = run_tts_ensemble(net, x0, 100.0, std::span<const Observable>(&f, 1), o);
  const BootstrapOptions boot{1000, 0.95, kSeedBoot};
  const auto celr100 = tts_sensitivity(res.snapshots[1], 0, EstimatorMethod::CELR, boot);
  const auto celr13 = tts_sensitivity(res.snapshots[0], 0, EstimatorMethod::CELR, boot);
  const auto clr100 = tts_sensitivity(res.snapshots[1], 0, EstimatorMethod::CLR, boot);
  const auto clr13 = tts_sensitivity(res.snapshots[0], 0, EstimatorMethod::CLR, boot);
  const double secs = since(t0);

  const auto dae = linear_dae_solution(net, x0, {1.3, 100.0});
  const Eigen::VectorXd oracle100 = dae.sensitivities[1].row(1).transpose();
  Eigen::VectorXd printed13(5), printed100(5);
  printed13 << 11.9, -7.9, 9.9, -17.4, -17.4;
  printed100 << 13.9, -9.3, 11.6, -16.5, -16.5;

  const Eigen::VectorXd z100 = (celr100.estimate - oracle100).cwiseAbs().cwiseQuotient(celr100.standard_error);
  const Eigen::VectorXd z13 = (clr13.estimate - printed13).cwiseAbs().cwiseQuotient(clr13.standard_error);
  const bool ok100 = (z100.array() <= kSeMultiple).all();
  const bool ok13 = (z13.array() <= kSeMultiple).all();
  std::ostringstream d;
  d << "CELR(100) " << vec(celr100.estimate) << " se " << vec(celr100.standard_error) << " DAE " << vec(oracle100)
    << " printed " << vec(printed100, 1) << " |z| " << vec(z100, 2) << "; CLR(1.3) " << vec(clr13.estimate) << " se "
    << vec(clr13.standard_error) << " printed " << vec(printed13, 1) << " |z| " << vec(z13, 2) << " DAE(1.3) "
    << vec(dae.sensitivities[0].row(1).transpose()) << "; " << res.kept.size() << " kept, "
    << res.unconverged_visits << " unconverged micro visits";
  report(2, ok100 && ok13, "Table 2 at 1000 macro replicates", d.str(), secs);

  const Eigen::VectorXd clr_ratio = clr100.ci_half_width.cwiseQuotient(clr13.ci_half_width);
  const Eigen::VectorXd celr_ratio = celr100.ci_half_width.cwiseQuotient(celr13.ci_half_width);
  std::ostringstream d3;
  d3 << "CLR hw ratio " << vec(clr_ratio, 2) << " >= " << kClrRatioMin << "; CELR hw ratio " << vec(celr_ratio, 2)
     << " <= " << kCelrRatioMax;
  report(3, (clr_ratio.array() >= kClrRatioMin).all() && (celr_ratio.array() <= kCelrRatioMax).all(),
         "CLR vs CELR half-width growth", d3.str(), 0.0);
}

// Criteria 4 (single-scale part) and 7 share one SSA ensemble.
void criteria4and7() {
  const auto t0 = Clock::now();
  const auto net = fixtures::isomerization(0.01);
  const State x0{100, 0, 0};
  const auto obs = species_observables(net);
  EnsembleOptions eo;
  eo.replicates = kMartingaleReplicates;
  eo.seed = kSeedSsa;
  const auto ssa = run_ensemble(net, x0, 0.5, obs, eo);
  const double ssa_secs = since(t0);

  const auto t1 = Clock::now();
  const auto space = enumerate_state_space(net, x0);
  const auto g = build_generator(net, space);
  const auto p = cme_transient(g, point_distribution(space, x0), std::vector<double>{0.5});
  Eigen::VectorXd cme(3);
  for (std::size_t s = 0; s < 3; ++s) cme[static_cast<Eigen::Index>(s)] = p[0].dot(species_vector(space, s));
  const ColumnStats st = column_stats(ssa.final().terminal);
  const Eigen::VectorXd z7 = (st.mean - cme).cwiseAbs().cwiseQuotient(st.se);
  std::ostringstream d7;
  d7 << "SSA " << vec(st.mean) << " se " << vec(st.se) << " CME " << vec(cme) << " |z| " << vec(z7, 2) << " ("
     << space.size() << " states)";
  const double cme_secs = since(t1);

  // Martingale: single-scale W at t=0.5, macro Wbar slow entries.
  const auto t2 = Clock::now();
  const ColumnStats w = column_stats(ssa.final().weights);
  const Eigen::VectorXd zw = w.mean.cwiseAbs().cwiseQuotient(w.se);
  TtsEnsembleOptions to;
  to.replicates = kMartingaleReplicates;
  to.seed = kSeedMacro;
  const auto tts = run_tts_ensemble(net, x0, 0.5, std::span<const Observable>(obs.data(), 1), to);
  const ColumnStats wb = column_stats(tts.final().weights);
  bool macro_ok = true;
  std::ostringstream d4;
  d4 << "W mean " << vec(w.mean, 4) << " se " << vec(w.se, 4) << " |z| " << vec(zw, 2) << "; Wbar slow";
  for (std::size_t q = 0; q < net.num_params(); ++q) {
    if (net.is_fast_param(q)) continue;
    const auto i = static_cast<Eigen::Index>(q);
    const double z = std::abs(wb.mean[i]) / wb.se[i];
    macro_ok = macro_ok && z <= kSeMultiple;
    d4 << " " << net.params().names[q] << " mean " << wb.mean[i] << " se " << wb.se[i] << " |z| " << z;
  }
  const bool single_ok = (zw.array() <= kSeMultiple).all();
  report(4, single_ok && macro_ok, "martingale mean, isomerization eps=0.01 t=0.5, 1e4 replicates", d4.str(),
         ssa_secs + since(t2));
  report(7, (z7.array() <= kSeMultiple).all(), "SSA vs CME means, isomerization t=0.5, 1e4 replicates", d7.str(),
         ssa_secs + cme_secs);
}

// Stationary expectation of f under the generator built from `net`.
double stationary_mean(const ReactionNetwork& net, const StateSpace& space, const Eigen::VectorXd& f) {
  return stationary(build_generator(net, space)).pi.dot(f);
}

void criterion5() {
  const auto t0 = Clock::now();
  struct Case {
    std::string name;
    ReactionNetwork net;
    State x0;
    std::size_t species;
  };
  std::vector<Case> cases{{"two-state", fixtures::two_state(), {1, 0}, 1},
                          {"adsorption", fixtures::adsorption(), {30, 60, 10}, 1}};
  bool ok = true;
  std::ostringstream d;
  for (const auto& c : cases) {
    const auto space = enumerate_state_space(c.net, c.x0);
    const auto g = build_generator(c.net, space);
    const auto st = stationary(g);
    const Eigen::VectorXd f = species_vector(space, c.species);
    const auto sens = pseudo_inverse_sensitivity(g, generator_derivatives(c.net, space), st.pi, f);
    double worst_fd = 0.0;
    for (std::size_t q = 0; q < c.net.num_params(); ++q) {
      const double th = c.net.params().values[q];
      const double h = 1e-5 * th;
      auto up = c.net.params().values, dn = up;
      up[q] += h;
      dn[q] -= h;
      const double fd = (stationary_mean(c.net.with_values(up), space, f) -
                         stationary_mean(c.net.with_values(dn), space, f)) / (2.0 * h);
      const double an = sens.dexpectation[static_cast<Eigen::Index>(q)];
      worst_fd = std::max(worst_fd, std::abs(an - fd) / std::max(std::abs(fd), 1e-8));
    }
    const double resid = rescaling_identity_check(c.net, space);
    ok = ok && worst_fd <= kFdTol && st.residual <= kResidualTol && resid <= kRescaleTol;
    d << c.name << " (" << space.size() << " states, " << sens.method << "): FD rel " << worst_fd << " |piQ| "
      << st.residual << " rescale " << resid << "; ";
  }
  d << "tol " << kFdTol << "/" << kResidualTol << "/" << kRescaleTol;
  report(5, ok, "oracle self-consistency", d.str(), since(t0));
}

void criterion6() {
  const auto t0 = Clock::now();
  const auto net = fixtures::adsorption();
  const State entry{30, 60, 10};
  std::vector<Observable> obs{Observable::propensity(2), Observable::propensity(3), Observable::propensity(4)};

  // Oracle: stationary law of the fast-only class.
  const auto block = fast_class_generator(net, entry);
  const auto pi = stationary(block.q).pi;
  std::vector<double> oracle(obs.size(), 0.0);
  for (std::size_t k = 0; k < obs.size(); ++k) {
    for (std::size_t x = 0; x < block.space.size(); ++x) {
      oracle[k] += pi[static_cast<Eigen::Index>(x)] * obs[k](block.space.states[x], net);
    }
  }

  const BatchConfig cfg;  // library defaults
  ConvergenceOptions co;
  co.subset = ReactionSubset::FastOnly;
  std::size_t covered = 0, converged = 0, jumps = 0;
  std::vector<double> avg(obs.size(), 0.0);
  for (std::size_t r = 0; r < kMicroRuns; ++r) {
    RngStream rng(kSeedMicro, r);
    const auto res = run_until_converged(net, entry, obs, cfg, rng, co);
    converged += res.converged;
    jumps += res.jumps;
    bool all = true;
    for (std::size_t k = 0; k < obs.size(); ++k) {
      const auto& s = res.summaries[k];
      all = all && std::abs(s.mean - oracle[k]) <= s.moe + 1e-9 * std::abs(oracle[k]);
      avg[k] += s.mean / static_cast<double>(kMicroRuns);
    }
    covered += all;
  }
  const std::vector<double> paper{32.0, 60.0, 24.0};
  bool close = true;
  std::ostringstream d;
  d << "covered " << covered << "/" << kMicroRuns << " (need " << kMicroCoverMin << "), converged " << converged
    << ", mean jumps " << jumps / kMicroRuns << "; oracle (";
  for (std::size_t k = 0; k < obs.size(); ++k) {
    d << (k ? ", " : "") << oracle[k];
    close = close && std::abs(oracle[k] - paper[k]) <= 1e-9 * paper[k] &&
            std::abs(avg[k] - paper[k]) <= cfg.precision * paper[k];
  }
  d << ") stopped average (";
  for (std::size_t k = 0; k < obs.size(); ++k) d << (k ? ", " : "") << avg[k];
  d << ") vs (32, 60, 24) within " << cfg.precision << " relative";
  report(6, covered >= kMicroCoverMin && close, "batch-means calibration, fast class (60,100)", d.str(), since(t0));
}

// Species (A, B, C): fast 2A <-> B, slow A <-> C. Nonlinear fast class.
ReactionNetwork dimer() {
  using fixtures::rx;
  std::vector<Species> sp{{"A", 0}, {"B", 1}, {"C", 2}};
  std::vector<Reaction> r{rx({-2, 1, 0}, {2, 0, 0}, 0, Scale::Fast), rx({2, -1, 0}, {0, 1, 0}, 1, Scale::Fast),
                          rx({-1, 0, 1}, {1, 0, 0}, 2, Scale::Slow), rx({1, 0, -1}, {0, 0, 1}, 3, Scale::Slow)};
  return ReactionNetwork(sp, r, ParameterSet{{"k1", "k2", "k3", "k4"}, {1.0, 2.0, 0.5, 0.7}, 0.01, {}});
}

void criterion8() {
  const auto t0 = Clock::now();
  struct Case {
    std::string name;
    ReactionNetwork net;
    State x0;
  };
  std::vector<Case> cases;
  for (int n : {1, 5, 20, 60, 100}) {
    cases.push_back({"adsorption", fixtures::adsorption(), {0, 0, n}});
    cases.push_back({"isomerization", fixtures::isomerization(), {n, 0, 0}});
    cases.push_back({"dimer", dimer(), {n, 0, 0}});
  }
  cases.push_back({"two-state", fixtures::two_state(), {1, 0}});
  std::size_t spaces = 0, states = 0, mismatches = 0;
  for (const auto& c : cases) {
    const auto space = enumerate_state_space(c.net, c.x0, kBfsCap + 1);
    if (space.truncated || space.size() > kBfsCap) continue;
    ++spaces;
    states += space.size();
    const FastClassPartition part(c.net);
    std::vector<int> seen(space.size(), -1);
    int label = 0;
    for (std::size_t i = 0; i < space.size(); ++i) {
      if (seen[i] >= 0) continue;
      const auto cls = enumerate_state_space(c.net, space.states[i], kBfsCap + 1, ReactionSubset::FastOnly);
      for (const auto& y : cls.states) seen[*space.find(y)] = label;
      const auto key = part.key(space.states[i]);
      for (std::size_t j = 0; j < space.size(); ++j) {
        const bool same_key = part.key(space.states[j]) == key;
        const bool same_bfs = cls.find(space.states[j]).has_value();
        mismatches += same_key != same_bfs;
      }
      ++label;
    }
  }
  std::ostringstream d;
  d << spaces << " spaces, " << states << " states, " << mismatches << " key/BFS disagreements";
  report(8, spaces > 0 && mismatches == 0, "fast_class_key vs fast-only BFS", d.str(), since(t0));
}

void guarded(int id, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(id, false, "threw", e.what(), 0.0);
  }
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  guarded(8, criterion8);
  guarded(5, criterion5);
  guarded(6, criterion6);
  guarded(7, criteria4and7);
  guarded(1, criterion1);
  guarded(2, criteria2and3);
  std::printf("acceptance: %d failing, total %.1f s\n", failures, since(t0));
  return failures == 0 ? 0 : 1;
}
