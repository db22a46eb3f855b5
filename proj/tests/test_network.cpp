#include <gtest/gtest.h>

#include <deque>
#include <map>
#include <random>
#include <set>

#include "support.hpp"

using namespace stiffnet;

TEST(Propensities, AdsorptionFastRateCarriesInverseEpsilon) {
  const auto net = fixtures::adsorption(0.01);
  const State x{30, 60, 10};
  const auto p = propensities(net, x);
  EXPECT_DOUBLE_EQ(p.rates[0], 1000.0);  // alpha1 N_* / eps
  EXPECT_DOUBLE_EQ(p.rates[1], 1.5 * 30 / 0.01);
  EXPECT_DOUBLE_EQ(p.rates[2], 60.0);
  double sum = 0.0;
  for (double r : p.rates) sum += r;
  EXPECT_DOUBLE_EQ(p.total, sum);
}

TEST(Propensities, IndicatorZeroWhenReactantsMissing) {
  const auto net = fixtures::adsorption();
  const State x{0, 5, 0};
  const auto p = propensities(net, x);
  EXPECT_EQ(p.rates[0], 0.0);
  EXPECT_EQ(p.rates[1], 0.0);
  EXPECT_EQ(p.rates[2], 0.0);
  const Eigen::MatrixXd d = propensity_derivatives(net, x);
  EXPECT_EQ(d.row(0).norm() + d.row(1).norm() + d.row(2).norm(), 0.0);
}

TEST(Propensities, FirstOrderHandValue) {
  const auto net = fixtures::decay(2.0);
  const State x{30, 0};
  EXPECT_DOUBLE_EQ(net.propensity(0, x), 60.0);
  const Eigen::MatrixXd d = propensity_derivatives(net, x);
  EXPECT_DOUBLE_EQ(d(0, 0), 30.0);
}

TEST(Propensities, FastDerivativeIsWithRespectToRescaledAlpha) {
  const auto net = fixtures::adsorption(0.01);
  const Eigen::MatrixXd d = propensity_derivatives(net, State{30, 60, 10});
  EXPECT_DOUBLE_EQ(d(0, 0), 1000.0);
  EXPECT_EQ(d(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(d(2, 2), 30.0);
  // under FastOnly no 1/eps
  const Eigen::MatrixXd df = propensity_derivatives(net, State{30, 60, 10}, ReactionSubset::FastOnly);
  EXPECT_DOUBLE_EQ(df(0, 0), 10.0);
  EXPECT_EQ(df(2, 2), 0.0);
}

TEST(Propensities, HigherOrderCombinatorics) {
  std::vector<Species> sp{{"X", 0}, {"Y", 1}};
  std::vector<Reaction> r{fixtures::rx({-2, 1}, {2, 0}, 0, Scale::Slow)};
  ReactionNetwork net(sp, r, ParameterSet{{"k"}, {0.5}, 1.0, {}});
  EXPECT_DOUBLE_EQ(net.propensity(0, State{5, 0}), 0.5 * 5 * 4);
  EXPECT_EQ(net.propensity(0, State{1, 0}), 0.0);
}

TEST(Propensities, DerivativesMatchCentralDifferences) {
  std::mt19937 gen(7);
  std::uniform_int_distribution<int> count(0, 40);
  const std::vector<double> theta{1.0, 1.5, 2.0, 1.0, 0.4};
  const auto net = fixtures::adsorption(0.01, theta);
  for (int trial = 0; trial < 50; ++trial) {
    const State x{count(gen), count(gen), count(gen)};
    const Eigen::MatrixXd d = propensity_derivatives(net, x);
    for (std::size_t p = 0; p < theta.size(); ++p) {
      auto up = theta, dn = theta;
      const double h = 1e-6 * theta[p];
      up[p] += h;
      dn[p] -= h;
      const auto lu = propensities(net.with_values(up), x).rates;
      const auto ld = propensities(net.with_values(dn), x).rates;
      for (std::size_t r = 0; r < net.num_reactions(); ++r) {
        const double fd = (lu[r] - ld[r]) / (2 * h);
        const double exact = d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p));
        EXPECT_NEAR(fd, exact, 1e-6 * std::max(1.0, std::abs(exact)));
      }
    }
  }
}

TEST(Validation, RejectsMalformedNetworks) {
  using fixtures::rx;
  std::vector<Species> sp{{"A", 0}, {"B", 1}};
  const ParameterSet one{{"k"}, {1.0}, 1.0, {}};
  EXPECT_THROW(ReactionNetwork({{"A", 0}, {"A", 1}}, {rx({-1, 1}, {1, 0}, 0, Scale::Slow)}, one), ValidationError);
  EXPECT_THROW(ReactionNetwork(sp, {rx({0, 0}, {1, 0}, 0, Scale::Slow)}, one), ValidationError);
  EXPECT_THROW(ReactionNetwork(sp, {rx({-2, 1}, {1, 0}, 0, Scale::Slow)}, one), ValidationError);
  EXPECT_THROW(ReactionNetwork(sp, {rx({-1, 1}, {-1, 0}, 0, Scale::Slow)}, one), ValidationError);
  EXPECT_THROW(ReactionNetwork(sp, {rx({-1, 1, 0}, {1, 0, 0}, 0, Scale::Slow)}, one), ValidationError);
  EXPECT_THROW(ReactionNetwork(sp, {rx({-1, 1}, {1, 0}, 1, Scale::Slow)}, one), ValidationError);
  EXPECT_THROW(ReactionNetwork(sp, {rx({-1, 1}, {1, 0}, 0, Scale::Slow)}, ParameterSet{{"k"}, {0.0}, 1.0, {}}),
               ValidationError);
  EXPECT_THROW(ReactionNetwork(sp, {rx({-1, 1}, {1, 0}, 0, Scale::Slow)}, ParameterSet{{"k"}, {1.0}, 0.0, {}}),
               ValidationError);
  EXPECT_THROW(ReactionNetwork(sp, {rx({-1, 1}, {1, 0}, 0, Scale::Slow)}, ParameterSet{{"k"}, {1.0}, 1.5, {}}),
               ValidationError);
  // unused parameter
  EXPECT_THROW(ReactionNetwork(sp, {rx({-1, 1}, {1, 0}, 0, Scale::Slow)},
                               ParameterSet{{"k", "j"}, {1.0, 2.0}, 1.0, {}}),
               ValidationError);
  // one parameter on both scales
  EXPECT_THROW(ReactionNetwork(sp, {rx({-1, 1}, {1, 0}, 0, Scale::Fast), rx({1, -1}, {0, 1}, 0, Scale::Slow)}, one),
               ValidationError);
  EXPECT_THROW(ReactionNetwork(sp, {}, one), ValidationError);
}

TEST(StateSpace, IsomerizationHas5151States) {
  const auto net = fixtures::isomerization();
  const auto space = enumerate_state_space(net, State{100, 0, 0});
  EXPECT_EQ(space.size(), 5151u);
  EXPECT_FALSE(space.truncated);
  EXPECT_EQ(space.states.front(), (State{100, 0, 0}));
}

TEST(StateSpace, AdsorptionHas5151States) {
  const auto space = enumerate_state_space(fixtures::adsorption(), State{30, 60, 10});
  EXPECT_EQ(space.size(), 5151u);
}

TEST(StateSpace, SingleStateWithoutEnabledReactions) {
  const auto space = enumerate_state_space(fixtures::decay(), State{0, 3});
  EXPECT_EQ(space.size(), 1u);
  EXPECT_FALSE(space.truncated);
}

TEST(StateSpace, CapSetsTruncatedFlagAndGeneratorRefuses) {
  const auto net = fixtures::isomerization();
  const auto space = enumerate_state_space(net, State{100, 0, 0}, 100);
  EXPECT_TRUE(space.truncated);
  EXPECT_EQ(space.size(), 100u);
  EXPECT_THROW(build_generator(net, space), TruncatedSpace);
}

TEST(StateSpace, ClosedUnderReactions) {
  const auto net = fixtures::adsorption();
  const auto space = enumerate_state_space(net, State{3, 2, 1});
  for (const auto& x : space.states) {
    for (std::size_t r = 0; r < net.num_reactions(); ++r) {
      if (net.propensity(r, x) == 0.0) continue;
      State y = x;
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += net.reaction(r).stoich[i];
      EXPECT_TRUE(space.find(y).has_value());
    }
  }
}

TEST(Generator, TwoStateHandAssembly) {
  const auto net = fixtures::two_state(1.0, 1.5);
  const auto space = enumerate_state_space(net, State{1, 0});
  const Eigen::MatrixXd q = build_generator(net, space).dense();
  Eigen::MatrixXd expect(2, 2);
  expect << -1.0, 1.0, 1.5, -1.5;
  EXPECT_LT((q - expect).norm(), 1e-15);
}

TEST(Generator, RowsSumToZeroAndDecompositionIdentity) {
  const double eps = 0.01;
  const auto net = fixtures::adsorption(eps);
  const auto space = enumerate_state_space(net, State{6, 3, 1});
  const auto all = build_generator(net, space, ReactionSubset::All);
  const auto fast = build_generator(net, space, ReactionSubset::FastOnly);
  const auto slow = build_generator(net, space, ReactionSubset::SlowOnly);
  EXPECT_LE(all.max_relative_row_sum(), 1e-12);
  EXPECT_LE(fast.max_relative_row_sum(), 1e-12);
  EXPECT_LE(slow.max_relative_row_sum(), 1e-12);
  const Eigen::MatrixXd diff = all.dense() - (fast.dense() / eps + slow.dense());
  EXPECT_LE(diff.cwiseAbs().maxCoeff(), 1e-12 * all.dense().cwiseAbs().maxCoeff());
  const Eigen::MatrixXd q = all.dense();
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      if (i != j) {
        EXPECT_GE(q(i, j), 0.0);
      }
    }
  }
}

TEST(Generator, DerivativeMatchesDifferenceOfGenerators) {
  const auto net = fixtures::adsorption(0.05);
  const auto space = enumerate_state_space(net, State{3, 2, 1});
  for (std::size_t p = 0; p < net.num_params(); ++p) {
    auto up = net.params().values;
    up[p] += 1.0;
    const Eigen::MatrixXd diff =
        build_generator(net.with_values(up), space).dense() - build_generator(net, space).dense();
    const Eigen::MatrixXd dq = build_generator_derivative(net, space, p).dense();
    EXPECT_LE((diff - dq).cwiseAbs().maxCoeff(), 1e-9);  // Q is linear in theta
  }
}

TEST(FastClass, AdsorptionLatticeMatchesAppendixBasis) {
  const auto net = fixtures::adsorption();
  const FastClassPartition part(net);
  const auto& ts = part.slow_invariants();
  ASSERT_EQ(ts.size(), 2u);
  // Our rows are the Hermite normal form of the lattice spanned by the
  // appendix rows (0,1,0), (1,1,1); both bases must generate each other.
  Eigen::MatrixXd ours(2, 3), paper(2, 3);
  for (int r = 0; r < 2; ++r) {
    for (int i = 0; i < 3; ++i) ours(r, i) = static_cast<double>(ts[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)]);
  }
  paper << 0, 1, 0, 1, 1, 1;
  // paper = U ours with U integer and |det U| = 1
  const Eigen::MatrixXd u = paper * ours.transpose() * (ours * ours.transpose()).inverse();
  EXPECT_LT((u * ours - paper).norm(), 1e-12);
  EXPECT_NEAR(std::abs(u.determinant()), 1.0, 1e-12);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(u.data()[i], std::round(u.data()[i]), 1e-12);
}

TEST(FastClass, KeyInvariantUnderFastFirings) {
  const auto net = fixtures::adsorption();
  const FastClassPartition part(net);
  std::mt19937 gen(3);
  std::uniform_int_distribution<int> count(0, 50);
  for (int trial = 0; trial < 200; ++trial) {
    const State x{count(gen), count(gen), count(gen)};
    for (std::size_t r : net.fast_reactions()) {
      State y = x;
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += net.reaction(r).stoich[i];
      EXPECT_EQ(part.key(x), part.key(y));
    }
  }
}

TEST(FastClass, ClassOfInitialStateHas41Members) {
  const auto net = fixtures::adsorption();
  const State x0{30, 60, 10};
  const auto space = enumerate_state_space(net, x0);
  const auto key = fast_class_key(x0, net);
  std::size_t members = 0;
  for (const auto& x : space.states) members += fast_class_key(x, net) == key;
  EXPECT_EQ(members, 41u);
  const auto block = enumerate_state_space(net, x0, kDefaultStateCap, ReactionSubset::FastOnly);
  EXPECT_EQ(block.size(), 41u);
}

TEST(FastClass, FullRankFastStoichiometryHasNoInvariants) {
  std::vector<Species> sp{{"A", 0}};
  std::vector<Reaction> r{fixtures::rx({1}, {0}, 0, Scale::Fast), fixtures::rx({-1}, {1}, 1, Scale::Slow)};
  ReactionNetwork net(sp, r, ParameterSet{{"a", "b"}, {1.0, 1.0}, 0.1, {}});
  const FastClassPartition part(net);
  EXPECT_FALSE(part.has_slow_invariants());
  EXPECT_TRUE(part.key(State{4}).key.empty());
}

TEST(FastClass, IntegerNullSpaceIsExact) {
  Eigen::MatrixXi s(4, 3);
  s << 2, 0, 1, -1, 3, 0, 0, -6, 4, 1, 1, 1;
  const auto basis = integer_left_null_space(s);
  ASSERT_EQ(basis.size(), 1u);
  for (Eigen::Index c = 0; c < s.cols(); ++c) {
    std::int64_t v = 0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) v += basis[0][static_cast<std::size_t>(i)] * s(i, c);
    EXPECT_EQ(v, 0);
  }
}

namespace {

// Fast-only BFS component labels on an enumerated space.
std::vector<std::size_t> fast_components(const ReactionNetwork& net, const StateSpace& space) {
  std::vector<std::size_t> label(space.size(), space.size());
  std::size_t next = 0;
  for (std::size_t s = 0; s < space.size(); ++s) {
    if (label[s] != space.size()) continue;
    std::deque<std::size_t> q{s};
    label[s] = next;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop_front();
      for (std::size_t r : net.fast_reactions()) {
        for (int dir : {1, -1}) {
          // fast moves in both directions connect a class (reversible pairs)
          const State& x = space.states[u];
          if (dir == 1 && net.mass_action_term(r, x) <= 0.0) continue;
          State y = x;
          for (std::size_t i = 0; i < y.size(); ++i) y[i] += dir * net.reaction(r).stoich[i];
          if (dir == -1 && net.mass_action_term(r, y) <= 0.0) continue;
          const auto v = space.find(y);
          if (v && label[*v] == space.size()) {
            label[*v] = next;
            q.push_back(*v);
          }
        }
      }
    }
    ++next;
  }
  return label;
}

}  // namespace

TEST(FastClass, KeyPartitionEqualsFastBfsPartition) {
  for (const auto& [net, x0] : std::vector<std::pair<ReactionNetwork, State>>{
           {fixtures::adsorption(), State{5, 8, 7}},
           {fixtures::isomerization(), State{30, 0, 0}},
           {fixtures::two_state(), State{1, 0}}}) {
    const auto space = enumerate_state_space(net, x0);
    ASSERT_LE(space.size(), 10000u);
    const auto label = fast_components(net, space);
    const FastClassPartition part(net);
    std::map<std::vector<std::int64_t>, std::set<std::size_t>> by_key;
    std::map<std::size_t, std::set<std::vector<std::int64_t>>> by_label;
    for (std::size_t s = 0; s < space.size(); ++s) {
      const auto k = part.key(space.states[s]).key;
      by_key[k].insert(label[s]);
      by_label[label[s]].insert(k);
    }
    for (const auto& [k, labels] : by_key) EXPECT_EQ(labels.size(), 1u);
    for (const auto& [l, keys] : by_label) EXPECT_EQ(keys.size(), 1u);
  }
}

TEST(FastClass, SlowReactionMapsClassToSingleClass) {
  const auto net = fixtures::adsorption();
  const auto space = enumerate_state_space(net, State{4, 5, 3});
  const FastClassPartition part(net);
  std::map<std::pair<std::vector<std::int64_t>, std::size_t>, std::set<std::vector<std::int64_t>>> image;
  for (const auto& x : space.states) {
    for (std::size_t r : net.slow_reactions()) {
      if (net.propensity(r, x) <= 0.0) continue;
      State y = x;
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += net.reaction(r).stoich[i];
      image[{part.key(x).key, r}].insert(part.key(y).key);
    }
  }
  for (const auto& [src, dst] : image) EXPECT_EQ(dst.size(), 1u);
}
