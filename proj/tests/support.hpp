#pragma once

// Shared fixtures and independent reference values for the test suites.

#include <cmath>
#include <vector>

#include "stiffnet/stiffnet.hpp"

namespace fixtures {

using stiffnet::ParameterSet;
using stiffnet::Reaction;
using stiffnet::ReactionNetwork;
using stiffnet::Scale;
using stiffnet::Species;

inline Reaction rx(std::vector<int> stoich, std::vector<int> orders, std::size_t param, Scale scale) {
  return Reaction{std::move(stoich), std::move(orders), param, scale};
}

/// Species (A, B, *): *->A (a1/eps), A->* (a2/eps), A->B b1, B->A b2, B->* b3.
inline ReactionNetwork adsorption(double eps = 0.01, std::vector<double> theta = {1.0, 1.5, 2.0, 1.0, 0.4}) {
  std::vector<Species> sp{{"A", 0}, {"B", 1}, {"*", 2}};
  std::vector<Reaction> r{
      rx({1, 0, -1}, {0, 0, 1}, 0, Scale::Fast), rx({-1, 0, 1}, {1, 0, 0}, 1, Scale::Fast),
      rx({-1, 1, 0}, {1, 0, 0}, 2, Scale::Slow), rx({1, -1, 0}, {0, 1, 0}, 3, Scale::Slow),
      rx({0, -1, 1}, {0, 1, 0}, 4, Scale::Slow)};
  ParameterSet p{{"alpha1", "alpha2", "beta1", "beta2", "beta3"}, std::move(theta), eps, {}};
  return ReactionNetwork(sp, r, p);
}

/// Species (A, B, C): A->B (k1/eps), B->A (k2/eps), B->C k3.
inline ReactionNetwork isomerization(double eps = 0.01, std::vector<double> k = {1.0, 1.5, 2.0}) {
  std::vector<Species> sp{{"A", 0}, {"B", 1}, {"C", 2}};
  std::vector<Reaction> r{rx({-1, 1, 0}, {1, 0, 0}, 0, Scale::Fast), rx({1, -1, 0}, {0, 1, 0}, 1, Scale::Fast),
                          rx({0, -1, 1}, {0, 1, 0}, 2, Scale::Slow)};
  ParameterSet p{{"k1", "k2", "k3"}, std::move(k), eps, {}};
  return ReactionNetwork(sp, r, p);
}

/// One molecule switching * <-> A with rates (c, d); state (N_*, N_A).
inline ReactionNetwork two_state(double c = 1.0, double d = 1.5, double eps = 1.0, Scale scale = Scale::Fast) {
  std::vector<Species> sp{{"*", 0}, {"A", 1}};
  std::vector<Reaction> r{rx({-1, 1}, {1, 0}, 0, scale), rx({1, -1}, {0, 1}, 1, scale)};
  ParameterSet p{{"c", "d"}, {c, d}, eps, {}};
  return ReactionNetwork(sp, r, p);
}

/// Single decay A -> B at rate theta.
inline ReactionNetwork decay(double theta = 2.0) {
  std::vector<Species> sp{{"A", 0}, {"B", 1}};
  std::vector<Reaction> r{rx({-1, 1}, {1, 0}, 0, Scale::Slow)};
  ParameterSet p{{"theta"}, {theta}, 1.0, {}};
  return ReactionNetwork(sp, r, p);
}

// ---------------------------------------------------------------------------
// Closed-form quasi-equilibrium solution of the adsorption network.
// With phi = a1/(a1+a2) the fast pair keeps A = phi (A + *); B obeys
// dB/dt = b1 phi (100 - B) - (b2 + b3) B, so B(t) = ss + (B0 - ss) e^{-kt},
// k = b1 phi + b2 + b3, ss = 100 b1 phi / k.

struct AdsorptionClosedForm {
  double a1 = 1.0, a2 = 1.5, b1 = 2.0, b2 = 1.0, b3 = 0.4;
  double total = 100.0, b0 = 60.0;

  double phi() const { return a1 / (a1 + a2); }
  double rate() const { return b1 * phi() + b2 + b3; }
  double steady() const { return total * b1 * phi() / rate(); }
  double nb(double t) const { return steady() + (b0 - steady()) * std::exp(-rate() * t); }

  /// d N_B(t) / d (a1, a2, b1, b2, b3), differentiated by hand.
  std::vector<double> dnb(double t) const {
    const double s = a1 + a2;
    const double dphi[5] = {a2 / (s * s), -a1 / (s * s), 0.0, 0.0, 0.0};
    const double k = rate();
    const double ss = steady();
    const double e = std::exp(-k * t);
    std::vector<double> out(5);
    for (int p = 0; p < 5; ++p) {
      const double d_b1phi = b1 * dphi[p] + (p == 2 ? phi() : 0.0);
      const double dk = d_b1phi + (p == 3 || p == 4 ? 1.0 : 0.0);
      const double dss = total * (d_b1phi * k - b1 * phi() * dk) / (k * k);
      out[static_cast<std::size_t>(p)] = dss * (1.0 - e) - (b0 - ss) * t * e * dk;
    }
    return out;
  }
};

/// Sample mean and standard error.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  MeanSe m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return m;
}

inline MeanSe mean_se(const Eigen::VectorXd& v) { return mean_se(std::vector<double>(v.data(), v.data() + v.size())); }

}  // namespace fixtures
