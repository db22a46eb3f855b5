#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stiffnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed model or configuration input.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Total propensity vanished; the chain cannot leave the current state.
class AbsorbedState : public Error {
 public:
  explicit AbsorbedState(double time, std::vector<int> state = {})
      : Error("absorbing state reached at t=" + std::to_string(time)), time_(time), state_(std::move(state)) {}
  double time() const noexcept { return time_; }
  /// The absorbing state, when the thrower knows it.
  const std::vector<int>& state() const noexcept { return state_; }

 private:
  double time_;
  std::vector<int> state_;
};

/// A reaction leads out of an enumerated (truncated) state space.
class TruncatedSpace : public Error {
 public:
  using Error::Error;
};

/// Estimators need at least two samples.
class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

/// The fired reaction had zero propensity. Indicates a bookkeeping bug upstream.
class ZeroPropensity : public Error {
 public:
  using Error::Error;
};

/// Generic numerical breakdown (integration failure, unexpected rank loss).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Generator is not irreducible. Carries the communicating classes found.
class Reducible : public NumericalError {
 public:
  explicit Reducible(std::vector<std::vector<std::size_t>> classes)
      : NumericalError("generator is reducible: " + std::to_string(classes.size()) +
                       " communicating classes"),
        classes_(std::move(classes)) {}
  const std::vector<std::vector<std::size_t>>& classes() const noexcept { return classes_; }

 private:
  std::vector<std::vector<std::size_t>> classes_;
};

/// More than one vanishing singular value in the pseudo-inverse.
class RankDeficiencyUnexpected : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Step-size collapse or non-finite state in an ODE integrator.
class IntegrationFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// An oracle that needs linear propensities got a higher-order reaction.
class NonlinearNetwork : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Averaged propensity of the fired slow reaction is zero.
class ZeroMacroPropensity : public Error {
 public:
  using Error::Error;
};

/// All averaged slow propensities vanish in the current fast class.
class MacroAbsorbed : public AbsorbedState {
 public:
  using AbsorbedState::AbsorbedState;
};

}  // namespace stiffnet
