#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stiffnet/network.hpp"

namespace stiffnet {

/// Scalar function of the state, f(x).
///
/// The common kinds (species count, a propensity, a linear combination) are
/// evaluated without indirection; `custom` accepts any callable.
class Observable {
 public:
  enum class Kind { Species, Propensity, Linear, Constant, Custom };

  static Observable species(std::size_t index, std::string name) {
    Observable o(Kind::Species, std::move(name));
    o.index_ = index;
    return o;
  }

  static Observable species(const ReactionNetwork& net, const std::string& name) {
    const auto i = net.species_index(name);
    if (!i) throw ValidationError("unknown species '" + name + "'");
    return species(*i, name);
  }

  /// Propensity of reaction r in the stiff network (slow reactions carry no
  /// epsilon factor, so this is lambda_beta(x; beta)).
  static Observable propensity(std::size_t reaction, std::string name = {}) {
    Observable o(Kind::Propensity, name.empty() ? "lambda_" + std::to_string(reaction) : std::move(name));
    o.index_ = reaction;
    return o;
  }

  static Observable linear(std::vector<double> coefficients, std::string name) {
    Observable o(Kind::Linear, std::move(name));
    o.coeffs_ = std::move(coefficients);
    return o;
  }

  static Observable constant(double value, std::string name = "const") {
    Observable o(Kind::Constant, std::move(name));
    o.value_ = value;
    return o;
  }

  static Observable custom(std::function<double(std::span<const int>)> fn, std::string name) {
    Observable o(Kind::Custom, std::move(name));
    o.fn_ = std::move(fn);
    return o;
  }

  double operator()(std::span<const int> x, const ReactionNetwork& net) const {
    switch (kind_) {
      case Kind::Species:
        return static_cast<double>(x[index_]);
      case Kind::Propensity:
        return net.propensity(index_, x, ReactionSubset::All);
      case Kind::Linear: {
        double v = 0.0;
        for (std::size_t i = 0; i < coeffs_.size(); ++i) v += coeffs_[i] * x[i];
        return v;
      }
      case Kind::Constant:
        return value_;
      case Kind::Custom:
        return fn_(x);
    }
    return 0.0;
  }

  Kind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }

 private:
  Observable(Kind kind, std::string name) : kind_(kind), name_(std::move(name)) {}

  Kind kind_;
  std::string name_;
  std::size_t index_ = 0;
  double value_ = 0.0;
  std::vector<double> coeffs_;
  std::function<double(std::span<const int>)> fn_;
};

/// One species-count observable per species, in species order.
inline std::vector<Observable> species_observables(const ReactionNetwork& net) {
  std::vector<Observable> out;
  for (const auto& s : net.species()) out.push_back(Observable::species(s.index, s.name));
  return out;
}

}  // namespace stiffnet
