#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "clusterflow/reverse.hpp"
#include "clusterflow/stats.hpp"

namespace {

using namespace clusterflow;

RenewalTrace rho_on(IntWindow w, std::vector<long long> pts) { return {w, std::move(pts), RenewalLaw::rho}; }

std::vector<std::uint64_t> dense(const WeightSequence& w, long long lo, long long hi) {
  std::vector<std::uint64_t> out;
  for (long long i = lo; i <= hi; ++i) out.push_back(w.at(i));
  return out;
}

// Independent oracle for stationary renewal patterns: each Geom(1/2) is a run
// of fair trials, and the site chain tracks which of the two geometrics is
// being drawn. For rho the first trial after a renewal uses no site.
struct PhaseChain {
  Rational stay[2][2];  // P(next phase, no renewal | phase)
  Rational renew[2];    // P(renewal here, next phase | phase 2)
  Rational start[2];    // stationary phase distribution
};

PhaseChain phase_chain(RenewalLaw law) {
  const Rational h(1, 2);
  PhaseChain c;
  c.stay[0][0] = h;
  c.stay[0][1] = h;
  c.stay[1][0] = 0;
  c.stay[1][1] = h;
  if (law == RenewalLaw::rho) {
    c.renew[0] = h * h;
    c.renew[1] = h * h;
    c.start[0] = Rational(1, 3);
    c.start[1] = Rational(2, 3);
  } else {
    c.renew[0] = h;
    c.renew[1] = 0;
    c.start[0] = h;
    c.start[1] = h;
  }
  return c;
}

Rational chain_pattern_probability(RenewalLaw law, long long width, std::uint64_t mask) {
  const auto c = phase_chain(law);
  Rational f[2] = {c.start[0], c.start[1]};
  for (long long k = 0; k < width; ++k) {
    const bool point = (mask >> k) & 1u;
    Rational g[2] = {0, 0};
    for (int to = 0; to < 2; ++to) {
      if (point) g[to] = f[1] * c.renew[to];
      else g[to] = f[0] * c.stay[0][to] + f[1] * c.stay[1][to];
    }
    f[0] = g[0];
    f[1] = g[1];
  }
  return f[0] + f[1];
}

std::vector<long long> mask_points(IntWindow w, std::uint64_t mask) {
  std::vector<long long> pts;
  for (long long k = 0; k < w.length(); ++k)
    if ((mask >> k) & 1u) pts.push_back(w.lo + k);
  return pts;
}

TEST(PatternOracle, ChainStationaryRate) {
  EXPECT_EQ(chain_pattern_probability(RenewalLaw::rho, 1, 1), Rational(1, 3));
  EXPECT_EQ(chain_pattern_probability(RenewalLaw::tau, 1, 1), Rational(1, 4));
}

TEST(PatternOracle, MatchesLibraryPatternProbability) {
  for (auto law : {RenewalLaw::rho, RenewalLaw::tau}) {
    for (long long width = 1; width <= 9; ++width) {
      const IntWindow w{-3, -3 + width - 1};
      Rational total = 0;
      for (std::uint64_t mask = 0; mask < (1u << width); ++mask) {
        const auto p = chain_pattern_probability(law, width, mask);
        ASSERT_EQ(stationary_pattern_probability(law, w, mask_points(w, mask)), p) << width << " " << mask;
        total += p;
      }
      EXPECT_EQ(total, Rational(1));
    }
  }
}

TEST(ReverseStep, TripleAtOrigin) {
  const auto out = reverse_step(WeightSequence::unit(), rho_on({-1, 1}, {0}));
  EXPECT_EQ(out.t, 1u);
  EXPECT_EQ(out.lo(), 0);
  EXPECT_EQ(out.weights, (std::vector<std::uint64_t>{1, 2, 1}));
  EXPECT_EQ(out.total_weight(), 4);
}

TEST(ReverseStep, PairAtOrigin) {
  const auto out = reverse_step(WeightSequence::unit(), rho_on({-1, 1}, {-1, 1}));
  EXPECT_EQ(out.lo(), 0);
  EXPECT_EQ(out.weights, (std::vector<std::uint64_t>{1, 1}));
  EXPECT_EQ(out.total_weight(), 2);
}

TEST(ReverseStep, ClusterTuple) {
  const auto out = reverse_step(WeightSequence::unit(0, WeightVariant::cluster), rho_on({-1, 1}, {0}));
  EXPECT_EQ(dense(out, 0, 2), (std::vector<std::uint64_t>{0, 2, 2}));
  EXPECT_EQ(out.total_weight(), 4);
  EXPECT_EQ(trim(out).weights, (std::vector<std::uint64_t>{2, 2}));
}

TEST(ReverseStep, OverlapsAreSummed) {
  const auto eta = WeightSequence::from_indices({0, 1});
  EXPECT_EQ(dense(reverse_step(eta, rho_on({-1, 2}, {})), 0, 2), (std::vector<std::uint64_t>{1, 2, 1}));
  EXPECT_EQ(dense(reverse_step(eta, rho_on({-1, 2}, {0})), 0, 3), (std::vector<std::uint64_t>{1, 2, 2, 1}));
  EXPECT_EQ(dense(reverse_step(eta, rho_on({-1, 2}, {1})), 0, 3), (std::vector<std::uint64_t>{1, 2, 2, 1}));
}

TEST(ReverseStep, NegativeIndicesShareIndexZero) {
  // tuple -1 is (1, 1) ending at index 0 where tuple 0 begins
  const auto out = reverse_step(WeightSequence::from_indices({-1, 0}), rho_on({-2, 1}, {}));
  EXPECT_EQ(out.lo(), -1);
  EXPECT_EQ(out.weights, (std::vector<std::uint64_t>{1, 2, 1}));
  // a triple at -1 occupies -2..0
  const auto tri = reverse_step(WeightSequence::unit(-1), rho_on({-2, 1}, {-1}));
  EXPECT_EQ(tri.lo(), -2);
  EXPECT_EQ(tri.weights, (std::vector<std::uint64_t>{1, 2, 1}));
}

TEST(ReverseStep, Errors) {
  EXPECT_THROW(reverse_step(WeightSequence::unit(), rho_on({0, 1}, {})), std::invalid_argument);
  EXPECT_THROW(reverse_step(WeightSequence::unit(), RenewalTrace{{-1, 1}, {}, RenewalLaw::tau}),
               std::invalid_argument);
  EXPECT_THROW(detail::checked_add(~std::uint64_t{0}, 1), std::overflow_error);
}

TEST(Mass, Examples) {
  EXPECT_EQ(mass(WeightSequence::unit()), Rational(1));
  const auto triple = reverse_step(WeightSequence::unit(), rho_on({-1, 1}, {0}));
  const auto pair = reverse_step(WeightSequence::unit(), rho_on({-1, 1}, {}));
  EXPECT_EQ(mass(triple), Rational(3, 2));
  EXPECT_EQ(mass(pair), Rational(3, 4));
  const Rational p_in = chain_pattern_probability(RenewalLaw::rho, 1, 1);
  EXPECT_EQ(p_in * mass(triple) + (1 - p_in) * mass(pair), Rational(1));
}

// Exact conditional expectation of M^(t+1) given eta, by enumeration of all
// rho patterns on the layout range (the only sites the step reads).
Rational exact_next_mass(const WeightSequence& eta, std::map<std::vector<std::uint64_t>, Rational>* children,
                         const Rational& weight) {
  const auto range = layout_range(eta);
  const auto window = required_trace_window(eta);
  const long long width = range.length();
  Rational expect = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << width); ++mask) {
    const auto p = chain_pattern_probability(RenewalLaw::rho, width, mask);
    const auto next = reverse_step(eta, rho_on(window, mask_points(range, mask)));
    expect += p * mass(next);
    if (children) {
      std::vector<std::uint64_t> key{static_cast<std::uint64_t>(next.offset)};
      key.insert(key.end(), next.weights.begin(), next.weights.end());
      (*children)[key] += weight * p;
    }
  }
  return expect;
}

TEST(Martingale, ExactEnumerationFromUnitMass) {
  using Level = std::map<std::vector<std::uint64_t>, Rational>;
  Level level{{{0, 1}, Rational(1)}};
  for (unsigned t = 0; t < 3; ++t) {
    Level next;
    Rational expected_mass = 0, prob_total = 0;
    for (const auto& [key, prob] : level) {
      WeightSequence eta{static_cast<long long>(key[0]), {key.begin() + 1, key.end()}, t, WeightVariant::gap};
      ASSERT_EQ(exact_next_mass(eta, &next, prob), mass(eta));
    }
    for (const auto& [key, prob] : next) {
      WeightSequence eta{static_cast<long long>(key[0]), {key.begin() + 1, key.end()}, t + 1, WeightVariant::gap};
      expected_mass += prob * mass(eta);
      prob_total += prob;
    }
    EXPECT_EQ(prob_total, Rational(1));
    EXPECT_EQ(expected_mass, Rational(1)) << "t = " << t + 1;
    level = std::move(next);
  }
}

TEST(Martingale, ExactOnArbitrarySmallSequences) {
  RngStream rng(20, 0);
  for (int rep = 0; rep < 40; ++rep) {
    std::vector<long long> idx;
    const long long lo = static_cast<long long>(rng.below(9)) - 4;
    for (int k = 0; k < 6; ++k) idx.push_back(lo + static_cast<long long>(rng.below(9)));
    auto eta = WeightSequence::from_indices(idx);
    eta.t = static_cast<unsigned>(rng.below(4));
    if (layout_range(eta).length() > 14) continue;
    ASSERT_EQ(exact_next_mass(eta, nullptr, 1), mass(eta));
  }
}

TEST(Martingale, MonteCarloMeanIsOne) {
  const int reps = 2000, T = 20;
  std::vector<MeanAccumulator> acc(T + 1), incr(T + 1);
  for (int r = 0; r < reps; ++r) {
    RngStream rng(21, static_cast<std::uint64_t>(r));
    const auto traj = run_reverse(WeightSequence::unit(), T, rng, false);
    for (int t = 0; t <= T; ++t) {
      acc[t].add(static_cast<double>(traj.ledger[t].mass));
      incr[t].add(static_cast<double>(traj.ledger[t].increment));
    }
  }
  EXPECT_EQ(acc[0].mean(), 1.0);
  for (int t = 1; t <= T; ++t) {
    EXPECT_LE(std::abs(acc[t].mean() - 1.0), 4 * acc[t].stderr_mean()) << t;
    EXPECT_LE(std::abs(incr[t].mean()), 4 * incr[t].stderr_mean()) << t;
  }
}

TEST(Martingale, TwoSeedsHaveMeanTwo) {
  MeanAccumulator acc;
  for (int r = 0; r < 2000; ++r) {
    RngStream rng(22, static_cast<std::uint64_t>(r));
    acc.add(static_cast<double>(run_reverse(WeightSequence::from_indices({0, 5}), 12, rng, false).ledger.back().mass));
  }
  EXPECT_LE(std::abs(acc.mean() - 2.0), 4 * acc.stderr_mean());
}

TEST(RunReverse, WidthAndWeightBounds) {
  for (int r = 0; r < 200; ++r) {
    RngStream rng(23, static_cast<std::uint64_t>(r));
    const auto traj = run_reverse(WeightSequence::unit(), 10, rng);
    for (unsigned t = 0; t <= 10; ++t) {
      const auto& row = traj.ledger[t];
      ASSERT_LE(row.support_width, (std::size_t{2} << t) + 1);
      ASSERT_LE(row.max_weight, std::uint64_t{1} << t);
      ASSERT_LE(row.sum_sq, Rational(pow_big(3, t), pow_big(4, t)) * row.mass);
      ASSERT_EQ(row.mass, mass(traj.states[t]));
    }
  }
}

// The tuple of index 0 always begins at 0, so a run of triples pushes the
// support to the right of the symmetric box.
TEST(RunReverse, LiteralIndexingShiftsSupportRight) {
  auto eta = WeightSequence::unit();
  for (int t = 0; t < 2; ++t) {
    const auto w = required_trace_window(eta);
    std::vector<long long> all;
    for (long long i = w.lo; i <= w.hi; ++i) all.push_back(i);
    eta = reverse_step(eta, rho_on(w, all));
  }
  EXPECT_EQ(eta.lo(), 0);
  EXPECT_EQ(eta.hi(), 6);
  EXPECT_EQ(eta.weights, (std::vector<std::uint64_t>{1, 2, 3, 4, 3, 2, 1}));
}

TEST(RunReverse, ReplayReproducesStates) {
  RngStream rng(24, 0);
  const auto traj = run_reverse(WeightSequence::from_indices({0, 3}), 8, rng);
  const auto again = replay_reverse(WeightSequence::from_indices({0, 3}), traj.traces);
  EXPECT_EQ(again.states, traj.states);
  EXPECT_THROW(run_reverse(WeightSequence::unit(), -1, rng), std::invalid_argument);
}

// Both variants expand an entry into tuples of equal sum, so from the same
// sequence and trace one step gives the same total. Along a trajectory the
// supports differ after one step, so totals agree only in mean.
TEST(RunReverse, GapAndClusterVariantsShareStepTotals) {
  RngStream rng(25, 0);
  for (int r = 0; r < 200; ++r) {
    const auto gap = run_reverse(WeightSequence::unit(), 1 + static_cast<int>(rng.below(8)), rng).states.back();
    auto cluster = gap;
    cluster.variant = WeightVariant::cluster;
    const auto rho = sample_stationary_trace(required_trace_window(gap), RenewalLaw::rho, rng);
    ASSERT_EQ(reverse_step(gap, rho).total_weight(), reverse_step(cluster, rho).total_weight());
  }
  MeanAccumulator acc;
  for (int r = 0; r < 2000; ++r) {
    RngStream stream(26, static_cast<std::uint64_t>(r));
    acc.add(static_cast<double>(run_reverse(WeightSequence::unit(0, WeightVariant::cluster), 15, stream, false)
                                    .ledger.back()
                                    .mass));
  }
  EXPECT_LE(std::abs(acc.mean() - 1.0), 4 * acc.stderr_mean());
}

TEST(Trim, Examples) {
  WeightSequence w{-2, {0, 0, 1, 2, 1, 0}, 1, WeightVariant::gap};
  const auto t = trim(w);
  EXPECT_EQ(t.offset, 0);
  EXPECT_EQ(t.weights, (std::vector<std::uint64_t>{1, 2, 1}));
  EXPECT_EQ(trim(WeightSequence::unit(7)).weights, (std::vector<std::uint64_t>{1}));
  EXPECT_EQ(first_nonzero(w), 0);
  EXPECT_THROW(trim(WeightSequence{0, {0, 0}, 0, WeightVariant::gap}), std::invalid_argument);
}

TEST(StepDistribution, Examples) {
  const StepDistribution f{1, {1, 2, 1}};
  EXPECT_EQ(f.exact(Rational(0)), Rational(3, 8));
  EXPECT_EQ(f.exact(Rational(3, 4)), Rational(9, 8));
  EXPECT_EQ(f.exact(Rational(3, 2)), Rational(3, 2));
  EXPECT_DOUBLE_EQ(f(0.0), 3.0 / 8);
  EXPECT_DOUBLE_EQ(f(0.75), 9.0 / 8);
  EXPECT_DOUBLE_EQ(f(1.5), 1.5);
  EXPECT_DOUBLE_EQ(f(100.0), 1.5);
  EXPECT_EQ(f(-0.1), 0.0);
  EXPECT_EQ(f.total_mass(), Rational(3, 2));

  const auto unit = step_distribution(WeightSequence::unit());
  EXPECT_EQ(unit.size(), 1u);
  EXPECT_EQ(unit(0.0), 1.0);
}

TEST(StepDistribution, TotalEqualsMassAndIsNondecreasing) {
  RngStream rng(26, 0);
  const auto traj = run_reverse(WeightSequence::unit(), 9, rng);
  for (const auto& eta : traj.states) {
    const auto f = step_distribution(eta);
    EXPECT_EQ(f.total_mass(), mass(eta));
    Rational prev = -1;
    for (std::size_t i = 0; i < f.size() + 2; ++i) {
      const auto v = f.cumulative_index(static_cast<long long>(i));
      ASSERT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(Laplace, Examples) {
  const StepDistribution f{1, {1, 2, 1}};
  EXPECT_DOUBLE_EQ(laplace_transform(f, 0.0), 1.5);
  EXPECT_NEAR(laplace_transform(f, 1.0), 0.375 * (1 + 2 * std::exp(-0.75) + std::exp(-1.5)), 1e-15);
  double prev = laplace_transform(f, 0.0);
  for (int k = 1; k <= 50; ++k) {
    const double v = laplace_transform(f, 0.1 * k);
    EXPECT_LE(v, prev);
    prev = v;
  }
  EXPECT_THROW(laplace_transform(f, -1.0), std::invalid_argument);
}

TEST(Laplace, AtZeroIsMass) {
  RngStream rng(27, 0);
  const auto traj = run_reverse(WeightSequence::unit(), 15, rng);
  for (const auto& eta : traj.states)
    EXPECT_NEAR(laplace_transform(step_distribution(eta), 0.0), static_cast<double>(mass(eta)), 1e-12);
}

// Forward gaps at time T are an exact weighted sum of initial gaps with the
// weights produced by replaying the forward steps backwards.
TEST(Coupling, ForwardGapIsPairingWithReplayedWeights) {
  for (int rep = 0; rep < 20; ++rep) {
    RngStream rng(28, static_cast<std::uint64_t>(rep));
    ForwardOptions opt;
    opt.n_points = 4000;
    opt.steps = 6;
    opt.checkpoints = {0, 6};
    opt.record_steps = true;
    const auto fwd = run_forward(opt, rng);
    const auto& g0 = fwd.at(0).gaps;
    const auto& gT = fwd.at(6).gaps;
    for (const auto& seeds : {std::vector<long long>{0}, std::vector<long long>{0, 3}}) {
      const auto palm = static_cast<long long>(rng.below(gT.size()));
      const auto eta0 = WeightSequence::from_indices(seeds);
      const auto coupled = replay_forward_coupled(fwd, eta0, palm);
      const auto& etaT = coupled.trajectory.states.back();
      double lhs = 0.0, rhs = 0.0;
      for (auto s : seeds) lhs += gT.at_cyclic(palm + s);
      for (long long j = etaT.lo(); j <= etaT.hi(); ++j)
        rhs += static_cast<double>(etaT.at(j)) * g0.at_cyclic(j + coupled.final_offset);
      rhs *= std::pow(0.375, 6);
      ASSERT_NEAR(lhs, rhs, 1e-12 * lhs) << rep;
    }
  }
}

TEST(Coupling, ReplayedTracesHaveRhoDensity) {
  RngStream rng(29, 0);
  ForwardOptions opt;
  opt.n_points = 200000;
  opt.steps = 1;
  opt.record_steps = true;
  const auto fwd = run_forward(opt, rng);
  const auto n_out = static_cast<long long>(fwd.point_counts[1]);
  const auto step = dual_trace(fwd.steps[0], 0, {0, n_out - 1});
  EXPECT_NEAR(static_cast<double>(step.rho.points.size()) / static_cast<double>(n_out), 1.0 / 3, 0.005);
  std::vector<std::size_t> counts(30, 0);
  std::vector<double> probs(30, 0.0);
  for (std::size_t k = 1; k < step.rho.points.size(); ++k)
    ++counts[std::min<long long>(step.rho.points[k] - step.rho.points[k - 1], 29)];
  for (long long k = 1; k < 30; ++k) probs[static_cast<std::size_t>(k)] = renewal_pmf_value(RenewalLaw::rho, k);
  counts.erase(counts.begin());
  probs.erase(probs.begin());
  EXPECT_GT(chi_square_gof(counts, probs).p_value, 1e-3);
}

}  // namespace
