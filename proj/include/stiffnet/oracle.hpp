#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/numeric/odeint.hpp>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "stiffnet/error.hpp"
#include "stiffnet/fast_class.hpp"
#include "stiffnet/network.hpp"
#include "stiffnet/state_space.hpp"

namespace stiffnet {

using SparseColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

/// Strongly connected components of the transition graph (edges where
/// q(x,y) > 0, x != y), via an iterative Tarjan walk.
inline std::vector<std::vector<std::size_t>> communicating_classes(const GeneratorMatrix& g) {
  const auto& q = g.q;
  const auto n = static_cast<std::size_t>(q.rows());
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> index(n, kUnset), low(n, 0), stack;
  std::vector<bool> on_stack(n, false);
  std::vector<std::vector<std::size_t>> classes;
  std::size_t counter = 0;
  struct Frame {
    std::size_t v;
    Eigen::Index pos;  // next entry of row v to visit
  };
  std::vector<Frame> call;
  const int* outer = q.outerIndexPtr();
  const int* inner = q.innerIndexPtr();
  const double* val = q.valuePtr();
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != kUnset) continue;
    call.push_back({root, outer[root]});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      Frame& fr = call.back();
      const std::size_t v = fr.v;
      bool descended = false;
      while (fr.pos < outer[v + 1]) {
        const auto w = static_cast<std::size_t>(inner[fr.pos]);
        const double rate = val[fr.pos];
        ++fr.pos;
        if (w == v || !(rate > 0.0)) continue;
        if (index[w] == kUnset) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, outer[w]});
          descended = true;
          break;
        }
        if (on_stack[w]) low[v] = std::min(low[v], index[w]);
      }
      if (descended) continue;
      if (low[v] == index[v]) {
        std::vector<std::size_t> comp;
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp.push_back(w);
        } while (w != v);
        std::sort(comp.begin(), comp.end());
        classes.push_back(std::move(comp));
      }
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
    }
  }
  return classes;
}

struct StationarySolution {
  Eigen::VectorXd pi;
  double residual = 0.0;  // ||pi Q||_2
  std::string method;
};

namespace detail {

// Q^T with its last row replaced by ones: the bordered system for pi Q = 0,
// pi 1 = 1. Also serves dpi Q = -pi dQ, dpi 1 = 0 (same matrix).
inline SparseColMatrix bordered_transpose(const GeneratorMatrix& g) {
  const auto m = g.q.rows();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(g.q.nonZeros() + m));
  for (Eigen::Index x = 0; x < g.q.outerSize(); ++x) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(g.q, x); it; ++it) {
      // (Q^T)(col, x) = Q(x, col)
      if (it.col() != m - 1) t.emplace_back(static_cast<int>(it.col()), static_cast<int>(x), it.value());
    }
  }
  for (Eigen::Index j = 0; j < m; ++j) t.emplace_back(static_cast<int>(m - 1), static_cast<int>(j), 1.0);
  SparseColMatrix a(m, m);
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();
  return a;
}

inline double frobenius(const GeneratorMatrix& g) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < g.q.nonZeros(); ++k) s += g.q.valuePtr()[k] * g.q.valuePtr()[k];
  return std::sqrt(s);
}

inline void require_irreducible(const GeneratorMatrix& g) {
  auto classes = communicating_classes(g);
  if (classes.size() > 1) throw Reducible(std::move(classes));
}

}  // namespace detail

/// Solves pi Q = 0, pi 1 = 1 by sparse LU on the bordered transpose.
inline StationarySolution stationary(const GeneratorMatrix& g) {
  const auto m = g.q.rows();
  if (m == 0) throw ValidationError("empty generator");
  detail::require_irreducible(g);
  StationarySolution s;
  s.method = "sparse_lu_bordered";
  if (m == 1) {
    s.pi = Eigen::VectorXd::Ones(1);
    return s;
  }
  const SparseColMatrix a = detail::bordered_transpose(g);
  Eigen::SparseLU<SparseColMatrix> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw NumericalError("stationary: LU factorization failed");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  rhs[m - 1] = 1.0;
  s.pi = lu.solve(rhs);
  if (!s.pi.allFinite()) throw NumericalError("stationary: non-finite solution");
  s.residual = (s.pi.transpose() * g.q).norm();
  return s;
}

struct SensitivityMatrix {
  Eigen::MatrixXd dpi;           // params x states
  Eigen::VectorXd dexpectation;  // per param, when f was given
  std::string method;
};

struct PseudoInverseOptions {
  Eigen::Index dense_limit = 5000;
  double singular_threshold = 1e-12;  // relative to sigma_max
};

/// Eq. (28): dpi/dtheta = pi dQ Q^+ (1 pi - I), Q^+ from an SVD. Above the
/// dense limit the same derivative is obtained from the bordered sparse
/// system dpi Q = -pi dQ, dpi 1 = 0, which has that unique solution.
inline SensitivityMatrix pseudo_inverse_sensitivity(const GeneratorMatrix& g, const std::vector<GeneratorMatrix>& dq,
                                                    const Eigen::VectorXd& pi,
                                                    const std::optional<Eigen::VectorXd>& f = std::nullopt,
                                                    const PseudoInverseOptions& opts = {}) {
  const auto m = g.q.rows();
  if (pi.size() != m) throw ValidationError("pi has wrong length");
  SensitivityMatrix out;
  out.dpi.resize(static_cast<Eigen::Index>(dq.size()), m);
  if (m <= opts.dense_limit) {
    out.method = "svd_pseudo_inverse";
    const Eigen::MatrixXd qd = g.dense();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(qd, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double cut = opts.singular_threshold * (sv.size() ? sv[0] : 0.0);
    Eigen::Index zeros = 0;
    Eigen::VectorXd inv(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      if (sv[i] <= cut) {
        ++zeros;
        inv[i] = 0.0;
      } else {
        inv[i] = 1.0 / sv[i];
      }
    }
    if (zeros > 1) {
      throw RankDeficiencyUnexpected(std::to_string(zeros) + " vanishing singular values; generator is reducible");
    }
    const Eigen::MatrixXd qplus = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    for (std::size_t p = 0; p < dq.size(); ++p) {
      const Eigen::RowVectorXd y = pi.transpose() * dq[p].q * qplus;  // pi dQ Q^+
      // y (1 pi - I) = (y 1) pi - y
      out.dpi.row(static_cast<Eigen::Index>(p)) = y.sum() * pi.transpose() - y;
    }
  } else {
    out.method = "sparse_bordered";
    detail::require_irreducible(g);
    const SparseColMatrix a = detail::bordered_transpose(g);
    Eigen::SparseLU<SparseColMatrix> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw NumericalError("sensitivity: LU factorization failed");
    for (std::size_t p = 0; p < dq.size(); ++p) {
      Eigen::VectorXd rhs = -(pi.transpose() * dq[p].q).transpose();
      rhs[m - 1] = 0.0;
      out.dpi.row(static_cast<Eigen::Index>(p)) = lu.solve(rhs).transpose();
    }
  }
  if (f) {
    if (f->size() != m) throw ValidationError("f has wrong length");
    out.dexpectation = out.dpi * (*f);
  }
  return out;
}

/// Observable values over an enumerated space.
inline Eigen::VectorXd species_vector(const StateSpace& space, std::size_t species) {
  Eigen::VectorXd f(static_cast<Eigen::Index>(space.size()));
  for (std::size_t x = 0; x < space.size(); ++x) f[static_cast<Eigen::Index>(x)] = space.states[x][species];
  return f;
}

/// Generator and all parameter derivatives for the stiff network on a space.
inline std::vector<GeneratorMatrix> generator_derivatives(const ReactionNetwork& net, const StateSpace& space,
                                                          ReactionSubset subset = ReactionSubset::All) {
  std::vector<GeneratorMatrix> dq;
  for (std::size_t p = 0; p < net.num_params(); ++p) dq.push_back(build_generator_derivative(net, space, p, subset));
  return dq;
}

/// Eq. (29): d pi / d alpha^eps = eps * d pi / d alpha. Left side uses the
/// generator parameterized directly by alpha^eps = alpha/eps; returns the
/// max abs difference over fast parameters and states.
inline double rescaling_identity_check(const ReactionNetwork& net, const StateSpace& space,
                                       const PseudoInverseOptions& opts = {}) {
  std::vector<std::size_t> fast;
  for (std::size_t p = 0; p < net.num_params(); ++p) {
    if (net.is_fast_param(p)) fast.push_back(p);
  }
  if (fast.empty()) throw ValidationError("rescaling check needs fast parameters");
  const double eps = net.epsilon();
  std::vector<double> unscaled = net.params().values;
  for (std::size_t p : fast) unscaled[p] /= eps;
  const ReactionNetwork direct = net.with_values(unscaled).with_epsilon(1.0);

  const GeneratorMatrix q = build_generator(net, space);
  const StationarySolution st = stationary(q);
  std::vector<GeneratorMatrix> d_alpha, d_alpha_eps;
  for (std::size_t p : fast) {
    d_alpha.push_back(build_generator_derivative(net, space, p));
    d_alpha_eps.push_back(build_generator_derivative(direct, space, p));
  }
  const SensitivityMatrix lhs = pseudo_inverse_sensitivity(q, d_alpha_eps, st.pi, std::nullopt, opts);
  const SensitivityMatrix rhs = pseudo_inverse_sensitivity(q, d_alpha, st.pi, std::nullopt, opts);
  return (lhs.dpi - eps * rhs.dpi).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// CME transient: dp/dt = p Q, integrated as y' = Q^T y with an L-stable
// SDIRK method of order 4 (Hairer & Wanner, gamma = 1/4) and its embedded
// order-3 solution for step control.

struct Sdirk4Tableau {
  static constexpr double gamma = 0.25;
  static constexpr std::array<double, 5> c{0.25, 0.75, 11.0 / 20.0, 0.5, 1.0};
  static constexpr std::array<std::array<double, 5>, 5> a{{
      {0.25, 0.0, 0.0, 0.0, 0.0},
      {0.5, 0.25, 0.0, 0.0, 0.0},
      {17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0},
      {371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0},
      {25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25},
  }};
  static constexpr std::array<double, 5> b{25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25};
  static constexpr std::array<double, 5> bhat{59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0};
};

struct CmeOptions {
  double rtol = 1e-8;
  double atol = 1e-12;
  double initial_step = 0.0;  // 0 = automatic
  std::size_t max_steps = 1'000'000;
};

struct CmeStats {
  std::size_t steps = 0;
  std::size_t rejected = 0;
  std::size_t factorizations = 0;
};

/// Probability vectors at each requested time (sorted, >= 0).
inline std::vector<Eigen::VectorXd> cme_transient(const GeneratorMatrix& g, const Eigen::VectorXd& p0,
                                                  const std::vector<double>& times, const CmeOptions& opts = {},
                                                  CmeStats* stats = nullptr) {
  const auto m = g.q.rows();
  if (p0.size() != m) throw ValidationError("p0 has wrong length");
  if ((p0.array() < -1e-14).any() || std::abs(p0.sum() - 1.0) > 1e-10) {
    throw ValidationError("p0 is not a probability distribution");
  }
  using T = Sdirk4Tableau;
  const SparseColMatrix qt = SparseColMatrix(g.q.transpose());
  SparseColMatrix eye(m, m);
  eye.setIdentity();
  Eigen::SparseLU<SparseColMatrix> lu;
  double factored_h = -1.0;
  CmeStats local;

  double qmax = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) qmax = std::max(qmax, std::abs(g.q.coeff(i, i)));
  double h = opts.initial_step > 0.0 ? opts.initial_step : (qmax > 0.0 ? 1e-3 / qmax : 1.0);

  std::vector<Eigen::VectorXd> out;
  Eigen::VectorXd y = p0;
  double t = 0.0;
  std::array<Eigen::VectorXd, 5> k;
  Eigen::VectorXd acc(m), ynew(m), err(m);
  lu.analyzePattern(SparseColMatrix(eye - qt));
  for (double target : times) {
    if (target < t) throw DomainError("cme_transient: times must be sorted and nonnegative");
    while (t < target) {
      if (++local.steps > opts.max_steps) throw IntegrationFailure("cme_transient: step limit reached");
      // hs is the step actually taken; h stays the controller's nominal step
      const bool last = t + h >= target;
      const double hs = last ? target - t : h;
      if (hs != factored_h) {
        lu.factorize(SparseColMatrix(eye - (hs * T::gamma) * qt));
        if (lu.info() != Eigen::Success) throw IntegrationFailure("cme_transient: LU failed");
        factored_h = hs;
        ++local.factorizations;
      }
      // Stage i: k_i = Q^T (y + h sum_j a_ij k_j), implicit in k_i.
      for (std::size_t i = 0; i < 5; ++i) {
        acc = y;
        for (std::size_t j = 0; j < i; ++j) acc += (hs * T::a[i][j]) * k[j];
        k[i] = lu.solve(Eigen::VectorXd(qt * acc));
      }
      ynew = y;
      err.setZero();
      for (std::size_t i = 0; i < 5; ++i) {
        ynew += (hs * T::b[i]) * k[i];
        err += (hs * (T::b[i] - T::bhat[i])) * k[i];
      }
      double norm = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double sc = opts.atol + opts.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
        norm += (err[i] / sc) * (err[i] / sc);
      }
      norm = std::sqrt(norm / static_cast<double>(m));
      if (!std::isfinite(norm)) throw IntegrationFailure("cme_transient: non-finite error estimate");
      const double factor = std::clamp(0.9 * std::pow(std::max(norm, 1e-10), -0.25), 0.2, 5.0);
      if (norm <= 1.0) {
        t = last ? target : t + hs;
        y = ynew;
        // growing by less than 1.5x is not worth a new factorization
        if (!last && factor >= 1.5) h *= factor;
      } else {
        ++local.rejected;
        h = hs * std::min(factor, 0.9);
      }
      if (h < 1e-14 * std::max(1.0, target)) throw IntegrationFailure("cme_transient: step size underflow");
    }
    out.push_back(y);
  }
  if (stats) *stats = local;
  return out;
}

inline Eigen::VectorXd cme_transient(const GeneratorMatrix& g, const Eigen::VectorXd& p0, double t,
                                     const CmeOptions& opts = {}) {
  return cme_transient(g, p0, std::vector<double>{t}, opts).front();
}

/// Point mass on state x0 of the space.
inline Eigen::VectorXd point_distribution(const StateSpace& space, const State& x0) {
  const auto i = space.find(x0);
  if (!i) throw ValidationError("initial state is not in the space");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.size()));
  p[static_cast<Eigen::Index>(*i)] = 1.0;
  return p;
}

// ---------------------------------------------------------------------------

struct SpectralGap {
  bool computed = false;  // false when the block exceeds the dense cap
  double kappa_tilde = 0.0;
  std::size_t dimension = 0;

  /// eps log(1/eps) / kappa_tilde, the boundary-layer time scale.
  double relaxation_time(double eps) const { return eps * std::log(1.0 / eps) / kappa_tilde; }
};

/// Theorem 1: kappa = -1/2 max Re(nonzero eigenvalue) of a fast-class generator.
inline SpectralGap spectral_gap(const GeneratorMatrix& g, Eigen::Index dense_cap = 2000) {
  SpectralGap s;
  s.dimension = static_cast<std::size_t>(g.q.rows());
  if (g.q.rows() > dense_cap || g.q.rows() < 2) return s;
  detail::require_irreducible(g);
  Eigen::EigenSolver<Eigen::MatrixXd> es(g.dense(), false);
  if (es.info() != Eigen::Success) throw NumericalError("spectral_gap: eigensolver failed");
  const Eigen::VectorXcd ev = es.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  // drop the single eigenvalue closest to zero
  Eigen::Index zero = 0;
  ev.cwiseAbs().minCoeff(&zero);
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (i == zero) continue;
    best = std::max(best, ev[i].real());
  }
  if (!(best < -1e-12 * scale)) throw NumericalError("spectral_gap: no negative nonzero eigenvalue");
  s.kappa_tilde = -0.5 * best;
  s.computed = true;
  return s;
}

/// Fast-only state space and generator (rescaled rates) of the class of x.
struct FastClassBlock {
  StateSpace space;
  GeneratorMatrix q;
};

inline FastClassBlock fast_class_generator(const ReactionNetwork& net, const State& x,
                                           std::size_t cap = kDefaultStateCap) {
  FastClassBlock b;
  b.space = enumerate_state_space(net, x, cap, ReactionSubset::FastOnly);
  if (b.space.truncated) throw TruncatedSpace("fast class exceeds the state cap");
  b.q = build_generator(net, b.space, ReactionSubset::FastOnly);
  return b;
}

// ---------------------------------------------------------------------------
// Linear-network quasi-equilibrium DAE (first-order mass action).

struct DaeSolution {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> means;        // N(t), species
  std::vector<Eigen::MatrixXd> sensitivities;  // dN/dtheta, species x params
};

struct DaeOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
};

namespace detail {

// lambda_r(N) = K.row(r) N + c[r] for a first-order network; rates are the
// parameter values (fast ones rescaled, no 1/eps). dK/dc by parameter p are
// K and c restricted to reactions with param p, divided by theta_p.
struct LinearRates {
  Eigen::MatrixXd k;  // reactions x species
  Eigen::VectorXd c;
  std::vector<Eigen::MatrixXd> dk;
  std::vector<Eigen::VectorXd> dc;
};

inline LinearRates linear_rates(const ReactionNetwork& net) {
  const auto m = static_cast<Eigen::Index>(net.num_reactions());
  const auto d = static_cast<Eigen::Index>(net.num_species());
  LinearRates lr;
  lr.k = Eigen::MatrixXd::Zero(m, d);
  lr.c = Eigen::VectorXd::Zero(m);
  lr.dk.assign(net.num_params(), Eigen::MatrixXd::Zero(m, d));
  lr.dc.assign(net.num_params(), Eigen::VectorXd::Zero(m));
  for (std::size_t r = 0; r < net.num_reactions(); ++r) {
    const auto& rx = net.reaction(r);
    int total = 0;
    std::size_t which = 0;
    for (std::size_t i = 0; i < rx.orders.size(); ++i) {
      total += rx.orders[i];
      if (rx.orders[i] > 0) which = i;
    }
    if (total > 1) throw NonlinearNetwork("reaction " + std::to_string(r) + " is not first order");
    const double theta = net.params().values[rx.param_index];
    const auto rr = static_cast<Eigen::Index>(r);
    if (total == 0) {
      lr.c[rr] = theta;
      lr.dc[rx.param_index][rr] = 1.0;
    } else {
      lr.k(rr, static_cast<Eigen::Index>(which)) = theta;
      lr.dk[rx.param_index](rr, static_cast<Eigen::Index>(which)) = 1.0;
    }
  }
  return lr;
}

}  // namespace detail

/// Appendix C: slow invariants y_s = T_s N evolve by dy_s/dt = T_s S_s r_s(N)
/// while the fast fluxes balance, S_f r_f(N) = 0. N is recovered from
/// [T_s; S_f K_f] N = [y_s; -S_f c_f]. Forward sensitivities are integrated
/// alongside with the same explicit Dormand-Prince stepper.
inline DaeSolution linear_dae_solution(const ReactionNetwork& net, const State& x0, const std::vector<double>& times,
                                       const DaeOptions& opts = {}) {
  using Eigen::Index;
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const auto d = static_cast<Index>(net.num_species());
  const auto np = net.num_params();
  if (static_cast<Index>(x0.size()) != d) throw ValidationError("initial state has wrong length");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] < times[i - 1]) throw DomainError("times must be sorted");
  }
  if (!times.empty() && times.front() < 0.0) throw DomainError("times must be nonnegative");
  const detail::LinearRates lr = detail::linear_rates(net);

  const Eigen::MatrixXi s_all = net.stoichiometry(ReactionSubset::All);
  const auto& fast = net.fast_reactions();
  const auto& slow = net.slow_reactions();
  MatrixXd sf(d, static_cast<Index>(fast.size())), ss(d, static_cast<Index>(slow.size()));
  MatrixXd kf(static_cast<Index>(fast.size()), d), ks(static_cast<Index>(slow.size()), d);
  VectorXd cf(static_cast<Index>(fast.size())), cs(static_cast<Index>(slow.size()));
  std::vector<MatrixXd> dkf(np), dks(np);
  std::vector<VectorXd> dcf(np), dcs(np);
  for (std::size_t p = 0; p < np; ++p) {
    dkf[p].resize(kf.rows(), d);
    dks[p].resize(ks.rows(), d);
    dcf[p].resize(cf.size());
    dcs[p].resize(cs.size());
  }
  auto fill = [&](const std::vector<std::size_t>& idx, MatrixXd& s, MatrixXd& k, VectorXd& c,
                  std::vector<MatrixXd>& dk, std::vector<VectorXd>& dc) {
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto r = static_cast<Index>(idx[j]);
      const auto jj = static_cast<Index>(j);
      s.col(jj) = s_all.col(r).cast<double>();
      k.row(jj) = lr.k.row(r);
      c[jj] = lr.c[r];
      for (std::size_t p = 0; p < np; ++p) {
        dk[p].row(jj) = lr.dk[p].row(r);
        dc[p][jj] = lr.dc[p][r];
      }
    }
  };
  fill(fast, sf, kf, cf, dkf, dcf);
  fill(slow, ss, ks, cs, dks, dcs);

  const IntMatrix ts_rows = FastClassPartition(net).slow_invariants();
  const auto ns = static_cast<Index>(ts_rows.size());
  MatrixXd ts(ns, d);
  for (Index r = 0; r < ns; ++r) {
    for (Index i = 0; i < d; ++i) ts(r, i) = static_cast<double>(ts_rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)]);
  }
  const Index nfr = sf.rows();
  MatrixXd constraint(ns + nfr, d);
  constraint << ts, sf * kf;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(constraint);
  if (qr.rank() < d) throw NumericalError("fast equilibrium does not determine the state");
  const MatrixXd slow_map = ts * ss;  // T_s S_s
  std::vector<MatrixXd> dconstraint(np);
  std::vector<VectorXd> drhs_fast(np);
  for (std::size_t p = 0; p < np; ++p) {
    dconstraint[p] = MatrixXd::Zero(ns + nfr, d);
    dconstraint[p].bottomRows(nfr) = sf * dkf[p];
    drhs_fast[p] = -sf * dcf[p];
  }
  const VectorXd rhs_fast = -sf * cf;

  // N(y) and dN/dtheta_p given z_p = dy/dtheta_p
  auto state_of = [&](const VectorXd& y) {
    VectorXd rhs(ns + nfr);
    rhs << y, rhs_fast;
    return VectorXd(qr.solve(rhs));
  };
  auto dstate_of = [&](const VectorXd& n, const VectorXd& z, std::size_t p) {
    VectorXd rhs(ns + nfr);
    rhs << z, drhs_fast[p];
    rhs -= dconstraint[p] * n;
    return VectorXd(qr.solve(rhs));
  };

  using Buffer = std::vector<double>;
  const auto ns_u = static_cast<std::size_t>(ns);
  auto rhs = [&](const Buffer& u, Buffer& du, double) {
    const VectorXd y = Eigen::Map<const VectorXd>(u.data(), ns);
    const VectorXd n = state_of(y);
    const VectorXd dy = slow_map * (ks * n + cs);
    std::copy(dy.data(), dy.data() + ns, du.begin());
    for (std::size_t p = 0; p < np; ++p) {
      const VectorXd z = Eigen::Map<const VectorXd>(u.data() + ns_u * (p + 1), ns);
      const VectorXd dn = dstate_of(n, z, p);
      const VectorXd dz = slow_map * (dks[p] * n + ks * dn + dcs[p]);
      std::copy(dz.data(), dz.data() + ns, du.begin() + static_cast<std::ptrdiff_t>(ns_u * (p + 1)));
    }
  };

  Buffer u(ns_u * (np + 1), 0.0);
  {
    VectorXd x = VectorXd(d);
    for (Index i = 0; i < d; ++i) x[i] = x0[static_cast<std::size_t>(i)];
    const VectorXd y0 = ts * x;
    std::copy(y0.data(), y0.data() + ns, u.begin());
  }
  DaeSolution sol;
  auto observe = [&](const Buffer& state, double t) {
    const VectorXd y = Eigen::Map<const VectorXd>(state.data(), ns);
    const VectorXd n = state_of(y);
    MatrixXd sens(d, static_cast<Index>(np));
    for (std::size_t p = 0; p < np; ++p) {
      const VectorXd z = Eigen::Map<const VectorXd>(state.data() + ns_u * (p + 1), ns);
      sens.col(static_cast<Index>(p)) = dstate_of(n, z, p);
    }
    sol.times.push_back(t);
    sol.means.push_back(n);
    sol.sensitivities.push_back(sens);
  };
  if (times.empty()) return sol;
  bool observed_lead = false;
  namespace ode = boost::numeric::odeint;
  if (ns == 0) {
    for (double t : times) observe(u, t);
    return sol;
  }
  auto stepper = ode::make_dense_output(opts.atol, opts.rtol, ode::runge_kutta_dopri5<Buffer>());
  // integrate_times starts at the first listed time, so lead with t = 0
  std::vector<double> grid = times;
  const bool lead = grid.front() > 0.0;
  if (lead) grid.insert(grid.begin(), 0.0);
  auto observe_listed = [&](const Buffer& state, double t) {
    if (lead && !observed_lead) {
      observed_lead = true;
      return;
    }
    observe(state, t);
  };
  try {
    ode::integrate_times(stepper, rhs, u, grid.begin(), grid.end(), 1e-3, observe_listed);
  } catch (const std::exception& e) {
    throw IntegrationFailure(std::string("linear_dae_solution: ") + e.what());
  }
  for (const auto& n : sol.means) {
    if (!n.allFinite()) throw IntegrationFailure("linear_dae_solution: non-finite state");
  }
  return sol;
}

}  // namespace stiffnet
