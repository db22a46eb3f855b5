#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stiffnet/error.hpp"

namespace stiffnet {

using State = std::vector<int>;

enum class Scale { Fast, Slow };

/// Which reactions take part in a computation.
///
/// `All` is the stiff network Q^eps = (1/eps) Q_fast(alpha) + Q_slow(beta).
/// `FastOnly` keeps only fast reactions at their rescaled rates (no 1/eps),
/// `SlowOnly` keeps only slow reactions.
enum class ReactionSubset { All, FastOnly, SlowOnly };

struct Species {
  std::string name;
  std::size_t index = 0;
};

struct Reaction {
  std::vector<int> stoich;  ///< net change of each species
  std::vector<int> orders;  ///< molecules of each species consumed
  std::size_t param_index = 0;
  Scale scale = Scale::Slow;
};

/// Rate constants. Values of fast parameters are the rescaled alpha; the
/// effective rate in the stiff network is alpha / epsilon.
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<double> values;
  double epsilon = 1.0;
  std::vector<bool> fast_rescaled;  ///< filled in by ReactionNetwork
};

/// Propensity vector of one state and its total.
struct Propensities {
  std::vector<double> rates;
  double total = 0.0;
};

/// Mass-action reaction network with a declared fast/slow split.
///
/// Immutable after construction; all queries are const and thread-safe.
class ReactionNetwork {
 public:
  ReactionNetwork(std::vector<Species> species, std::vector<Reaction> reactions,
                  ParameterSet params)
      : species_(std::move(species)), reactions_(std::move(reactions)), params_(std::move(params)) {
    validate();
    index_reactions();
  }

  std::size_t num_species() const noexcept { return species_.size(); }
  std::size_t num_reactions() const noexcept { return reactions_.size(); }
  std::size_t num_params() const noexcept { return params_.values.size(); }

  const std::vector<Species>& species() const noexcept { return species_; }
  const std::vector<Reaction>& reactions() const noexcept { return reactions_; }
  const Reaction& reaction(std::size_t r) const { return reactions_.at(r); }
  const ParameterSet& params() const noexcept { return params_; }
  double epsilon() const noexcept { return params_.epsilon; }

  const std::vector<std::size_t>& fast_reactions() const noexcept { return fast_; }
  const std::vector<std::size_t>& slow_reactions() const noexcept { return slow_; }
  bool is_fast_param(std::size_t p) const { return params_.fast_rescaled.at(p); }

  std::optional<std::size_t> species_index(const std::string& name) const {
    for (const auto& s : species_) {
      if (s.name == name) return s.index;
    }
    return std::nullopt;
  }

  std::optional<std::size_t> param_index(const std::string& name) const {
    for (std::size_t p = 0; p < params_.names.size(); ++p) {
      if (params_.names[p] == name) return p;
    }
    return std::nullopt;
  }

  bool included(std::size_t r, ReactionSubset subset) const noexcept {
    switch (subset) {
      case ReactionSubset::All:
        return true;
      case ReactionSubset::FastOnly:
        return reactions_[r].scale == Scale::Fast;
      case ReactionSubset::SlowOnly:
        return reactions_[r].scale == Scale::Slow;
    }
    return false;
  }

  /// d lambda_r / d theta_{param(r)} divided by b_r(x): 1/eps for fast
  /// reactions inside the stiff network, 1 otherwise, 0 when excluded.
  double derivative_scale(std::size_t r, ReactionSubset subset) const noexcept {
    if (!included(r, subset)) return 0.0;
    if (subset == ReactionSubset::All && reactions_[r].scale == Scale::Fast) {
      return 1.0 / params_.epsilon;
    }
    return 1.0;
  }

  /// Effective rate constant multiplying b_r(x).
  double rate_constant(std::size_t r, ReactionSubset subset) const noexcept {
    return params_.values[reactions_[r].param_index] * derivative_scale(r, subset);
  }

  /// Combinatorial factor b_r(x) = prod_i x_i! / (x_i - nu_ri)!, zero when
  /// some x_i < nu_ri.
  double mass_action_term(std::size_t r, std::span<const int> x) const noexcept {
    double b = 1.0;
    for (const auto& [i, order] : reactants_[r]) {
      const int xi = x[i];
      if (xi < order) return 0.0;
      for (int k = 0; k < order; ++k) b *= static_cast<double>(xi - k);
    }
    return b;
  }

  double propensity(std::size_t r, std::span<const int> x,
                    ReactionSubset subset = ReactionSubset::All) const noexcept {
    const double c = rate_constant(r, subset);
    return c == 0.0 ? 0.0 : c * mass_action_term(r, x);
  }

  /// Writes lambda_r into `out` (length M) and returns lambda_0.
  double propensities(std::span<const int> x, std::span<double> out,
                      ReactionSubset subset = ReactionSubset::All) const noexcept {
    double total = 0.0;
    for (std::size_t r = 0; r < reactions_.size(); ++r) {
      out[r] = propensity(r, x, subset);
      total += out[r];
    }
    return total;
  }

  /// Sum over reactions of d lambda_r / d theta_i, written into `out` (length P).
  void propensity_derivative_sums(std::span<const int> x, std::span<double> out,
                                  ReactionSubset subset = ReactionSubset::All) const noexcept {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t r = 0; r < reactions_.size(); ++r) {
      const double s = derivative_scale(r, subset);
      if (s != 0.0) out[reactions_[r].param_index] += s * mass_action_term(r, x);
    }
  }

  /// Copy with replaced parameter values (same structure).
  ReactionNetwork with_values(std::vector<double> values) const {
    ParameterSet p = params_;
    p.values = std::move(values);
    return ReactionNetwork(species_, reactions_, std::move(p));
  }

  ReactionNetwork with_epsilon(double epsilon) const {
    ParameterSet p = params_;
    p.epsilon = epsilon;
    return ReactionNetwork(species_, reactions_, std::move(p));
  }

  /// Stoichiometric matrix (d x M) restricted to a subset of reactions.
  Eigen::MatrixXi stoichiometry(ReactionSubset subset = ReactionSubset::All) const {
    std::vector<std::size_t> cols;
    for (std::size_t r = 0; r < reactions_.size(); ++r) {
      if (included(r, subset)) cols.push_back(r);
    }
    Eigen::MatrixXi s(static_cast<Eigen::Index>(num_species()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      for (std::size_t i = 0; i < num_species(); ++i) {
        s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = reactions_[cols[c]].stoich[i];
      }
    }
    return s;
  }

 private:
  void validate() {
    const std::size_t d = species_.size();
    if (d == 0) throw ValidationError("network has no species");
    if (reactions_.empty()) throw ValidationError("network has no reactions");
    std::set<std::string> names;
    for (std::size_t i = 0; i < d; ++i) {
      species_[i].index = i;
      if (species_[i].name.empty()) throw ValidationError("species " + std::to_string(i) + " has no name");
      if (!names.insert(species_[i].name).second) {
        throw ValidationError("duplicate species name '" + species_[i].name + "'");
      }
    }
    const std::size_t np = params_.values.size();
    if (params_.names.size() != np) throw ValidationError("parameter names and values differ in length");
    if (!(params_.epsilon > 0.0) || params_.epsilon > 1.0) {
      throw ValidationError("epsilon must lie in (0, 1]");
    }
    for (std::size_t p = 0; p < np; ++p) {
      if (!(params_.values[p] > 0.0)) {
        throw ValidationError("parameter '" + params_.names[p] + "' must be positive");
      }
    }
    std::vector<int> seen(np, 0);  // bit 1: fast, bit 2: slow
    for (std::size_t r = 0; r < reactions_.size(); ++r) {
      const auto& rx = reactions_[r];
      const std::string tag = "reaction " + std::to_string(r) + ": ";
      if (rx.stoich.size() != d || rx.orders.size() != d) {
        throw ValidationError(tag + "stoich/orders must have one entry per species");
      }
      if (std::all_of(rx.stoich.begin(), rx.stoich.end(), [](int v) { return v == 0; })) {
        throw ValidationError(tag + "zero stoichiometric vector");
      }
      for (std::size_t i = 0; i < d; ++i) {
        if (rx.orders[i] < 0) throw ValidationError(tag + "negative reaction order");
        if (rx.stoich[i] < -rx.orders[i]) {
          throw ValidationError(tag + "consumes more molecules than its order allows");
        }
      }
      if (rx.param_index >= np) throw ValidationError(tag + "parameter index out of range");
      seen[rx.param_index] |= rx.scale == Scale::Fast ? 1 : 2;
    }
    params_.fast_rescaled.assign(np, false);
    for (std::size_t p = 0; p < np; ++p) {
      if (seen[p] == 0) throw ValidationError("parameter '" + params_.names[p] + "' is not used");
      if (seen[p] == 3) {
        throw ValidationError("parameter '" + params_.names[p] + "' is shared by fast and slow reactions");
      }
      params_.fast_rescaled[p] = seen[p] == 1;
    }
  }

  void index_reactions() {
    reactants_.resize(reactions_.size());
    for (std::size_t r = 0; r < reactions_.size(); ++r) {
      for (std::size_t i = 0; i < species_.size(); ++i) {
        if (reactions_[r].orders[i] > 0) reactants_[r].emplace_back(i, reactions_[r].orders[i]);
      }
      (reactions_[r].scale == Scale::Fast ? fast_ : slow_).push_back(r);
    }
  }

  std::vector<Species> species_;
  std::vector<Reaction> reactions_;
  ParameterSet params_;
  std::vector<std::vector<std::pair<std::size_t, int>>> reactants_;
  std::vector<std::size_t> fast_;
  std::vector<std::size_t> slow_;
};

/// lambda_r(x) for every reaction plus lambda_0.
inline Propensities propensities(const ReactionNetwork& net, std::span<const int> x,
                                 ReactionSubset subset = ReactionSubset::All) {
  Propensities p;
  p.rates.resize(net.num_reactions());
  p.total = net.propensities(x, p.rates, subset);
  return p;
}

/// M x P matrix of d lambda_r / d theta_i. Fast entries are with respect to
/// the rescaled alpha, so inside the stiff network they carry the 1/eps.
inline Eigen::MatrixXd propensity_derivatives(const ReactionNetwork& net, std::span<const int> x,
                                              ReactionSubset subset = ReactionSubset::All) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(net.num_reactions()),
                                            static_cast<Eigen::Index>(net.num_params()));
  for (std::size_t r = 0; r < net.num_reactions(); ++r) {
    const double s = net.derivative_scale(r, subset);
    if (s == 0.0) continue;
    d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(net.reaction(r).param_index)) =
        s * net.mass_action_term(r, x);
  }
  return d;
}

}  // namespace stiffnet
