#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Sparse>

#include "stiffnet/network.hpp"

namespace stiffnet {

struct StateHash {
  std::size_t operator()(const State& x) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int v : x) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(v));
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

/// Finite state space enumerated in breadth-first discovery order.
struct StateSpace {
  std::vector<State> states;
  std::unordered_map<State, std::size_t, StateHash> index_of;
  bool truncated = false;

  std::size_t size() const noexcept { return states.size(); }

  std::optional<std::size_t> find(const State& x) const {
    auto it = index_of.find(x);
    if (it == index_of.end()) return std::nullopt;
    return it->second;
  }
};

inline constexpr std::size_t kDefaultStateCap = 2'000'000;

/// Breadth-first closure of `initial` under every reaction (of `subset`) that
/// is enabled in the visited state. Hitting `cap` sets `truncated`.
inline StateSpace enumerate_state_space(const ReactionNetwork& net, const State& initial,
                                        std::size_t cap = kDefaultStateCap,
                                        ReactionSubset subset = ReactionSubset::All) {
  if (cap == 0) throw DomainError("state cap must be at least 1");
  if (initial.size() != net.num_species()) throw ValidationError("initial state has wrong length");
  for (int v : initial) {
    if (v < 0) throw ValidationError("initial state has negative counts");
  }
  StateSpace space;
  space.states.push_back(initial);
  space.index_of.emplace(initial, 0);
  std::deque<std::size_t> queue{0};
  while (!queue.empty()) {
    const std::size_t cur = queue.front();
    queue.pop_front();
    for (std::size_t r = 0; r < net.num_reactions(); ++r) {
      if (!net.included(r, subset)) continue;
      if (net.mass_action_term(r, space.states[cur]) == 0.0) continue;
      State next = space.states[cur];
      const auto& z = net.reaction(r).stoich;
      for (std::size_t i = 0; i < next.size(); ++i) next[i] += z[i];
      if (space.index_of.count(next) != 0) continue;
      if (space.states.size() >= cap) {
        space.truncated = true;
        continue;
      }
      space.index_of.emplace(next, space.states.size());
      space.states.push_back(std::move(next));
      queue.push_back(space.states.size() - 1);
    }
  }
  return space;
}

/// CTMC generator on an enumerated space. Row x holds the rates out of x.
struct GeneratorMatrix {
  Eigen::SparseMatrix<double, Eigen::RowMajor> q;

  Eigen::Index dimension() const noexcept { return q.rows(); }

  /// max_x |sum_y q(x,y)| / max(1, |q(x,x)|)
  double max_relative_row_sum() const {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < q.outerSize(); ++i) {
      double sum = 0.0;
      double diag = 0.0;
      for (decltype(q)::InnerIterator it(q, i); it; ++it) {
        sum += it.value();
        if (it.col() == i) diag = std::abs(it.value());
      }
      worst = std::max(worst, std::abs(sum) / std::max(1.0, diag));
    }
    return worst;
  }

  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(q); }
};

namespace detail {

// Assembles a generator-shaped matrix whose off-diagonal rate for reaction r
// at state x is weight(r, x); the diagonal balances each row.
template <class Weight>
GeneratorMatrix assemble(const ReactionNetwork& net, const StateSpace& space, ReactionSubset subset,
                         Weight&& weight) {
  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> triplets;
  triplets.reserve(space.size() * (net.num_reactions() + 1));
  State next;
  for (std::size_t x = 0; x < space.size(); ++x) {
    const State& cur = space.states[x];
    double out = 0.0;
    for (std::size_t r = 0; r < net.num_reactions(); ++r) {
      if (!net.included(r, subset)) continue;
      const double rate = weight(r, cur);
      if (rate == 0.0) continue;
      next = cur;
      const auto& z = net.reaction(r).stoich;
      for (std::size_t i = 0; i < next.size(); ++i) next[i] += z[i];
      const auto y = space.find(next);
      if (!y) throw TruncatedSpace("reaction " + std::to_string(r) + " leaves the enumerated state space");
      triplets.emplace_back(static_cast<int>(x), static_cast<int>(*y), rate);
      out += rate;
    }
    triplets.emplace_back(static_cast<int>(x), static_cast<int>(x), -out);
  }
  GeneratorMatrix g;
  const auto m = static_cast<Eigen::Index>(space.size());
  g.q.resize(m, m);
  g.q.setFromTriplets(triplets.begin(), triplets.end());
  g.q.makeCompressed();
  return g;
}

}  // namespace detail

/// Q for the chosen subset: All gives (1/eps) Q_fast(alpha) + Q_slow(beta),
/// FastOnly gives Q_fast(alpha) without the 1/eps factor.
inline GeneratorMatrix build_generator(const ReactionNetwork& net, const StateSpace& space,
                                       ReactionSubset subset = ReactionSubset::All) {
  return detail::assemble(net, space, subset, [&](std::size_t r, const State& x) {
    return net.propensity(r, x, subset);
  });
}

/// dQ/d theta_p; mass-action generators are linear in each rate constant.
inline GeneratorMatrix build_generator_derivative(const ReactionNetwork& net, const StateSpace& space,
                                                  std::size_t param,
                                                  ReactionSubset subset = ReactionSubset::All) {
  return detail::assemble(net, space, subset, [&](std::size_t r, const State& x) {
    if (net.reaction(r).param_index != param) return 0.0;
    return net.derivative_scale(r, subset) * net.mass_action_term(r, x);
  });
}

}  // namespace stiffnet
