#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "clusterflow/analysis.hpp"

namespace {

using namespace clusterflow;

RenewalTrace rho_on(IntWindow w, std::vector<long long> pts) { return {w, std::move(pts), RenewalLaw::rho}; }

ReverseTrajectory one_step(bool origin_in_rho) {
  return replay_reverse(WeightSequence::unit(), {rho_on({-1, 1}, origin_in_rho ? std::vector<long long>{0}
                                                                             : std::vector<long long>{})});
}

TEST(InnerProduct, Examples) {
  const GapSequence g{{0.5, 2.0, 3.0, 1.5}, IntensityMode::theoretical};
  EXPECT_EQ(inner_product(WeightSequence::unit(), g), 0.5);
  EXPECT_EQ(inner_product(WeightSequence::unit(), g, 2), 3.0);
  EXPECT_EQ(inner_product(WeightSequence::unit(-1), g), 1.5);  // cyclic

  const WeightSequence triple{-1, {1, 2, 1}, 1, WeightVariant::gap};
  const GapSequence ones{std::vector<double>(8, 1.0), IntensityMode::theoretical};
  EXPECT_DOUBLE_EQ(inner_product(triple, ones), 1.5);
  EXPECT_DOUBLE_EQ(inner_product(triple, ones), static_cast<double>(mass(triple)));

  GapSequence scaled = g;
  for (auto& x : scaled.gaps) x *= 3.0;
  EXPECT_DOUBLE_EQ(inner_product(triple, scaled, 1), 3.0 * inner_product(triple, g, 1));

  const WeightSequence wide{0, std::vector<std::uint64_t>(5, 1), 0, WeightVariant::gap};
  EXPECT_THROW(inner_product(wide, g), std::invalid_argument);
  EXPECT_EQ(describe(WeightSequence::from_indices({0, 3})), "e0+e3");
}

TEST(ExactMartingale, UnitMassThroughThreeSteps) {
  const auto r = exact_martingale(WeightSequence::unit(), 3);
  ASSERT_EQ(r.expected_mass.size(), 4u);
  for (const auto& m : r.expected_mass) EXPECT_EQ(m, Rational(1));
  EXPECT_TRUE(r.conditional_identity);
  EXPECT_EQ(r.distinct_states[1], 2u);
}

TEST(ExactMartingale, TwoSeeds) {
  const auto r = exact_martingale(WeightSequence::from_indices({0, 5}), 2);
  for (const auto& m : r.expected_mass) EXPECT_EQ(m, Rational(2));
  EXPECT_TRUE(r.conditional_identity);
}

// Hand evaluation of both sides at t = 0, x = 0. With 0 in rho: F_0(0) = 1,
// alpha = (3/4)(2/3) = 1/2, beta = 3/4, F_1(3/4) = (3/8)(1 + 2) = 9/8.
// Without: alpha = -(3/4)(1/3) = -1/4, beta = 0, F_1(0) = 3/8. The sides
// differ by the shared slot (3/8) eta_0 = 3/8 in both cases.
TEST(LemmaStep, UnitMassFirstStepByHand) {
  for (bool in : {true, false}) {
    const auto traj = one_step(in);
    const LemmaStep step(traj.states[0], traj.traces[0], traj.states[1]);
    const Rational zero(0);
    EXPECT_EQ(step.exact_alpha(zero), in ? Rational(1, 2) : Rational(-1, 4));
    EXPECT_EQ(step.exact_beta(zero), in ? Rational(3, 4) : Rational(0));
    EXPECT_EQ(step.exact_lhs(zero), in ? Rational(3, 2) : Rational(3, 4));
    EXPECT_EQ(step.exact_rhs(zero), in ? Rational(9, 8) : Rational(3, 8));
    EXPECT_EQ(step.exact_lhs(zero) - step.exact_rhs(zero), Rational(3, 8));
    EXPECT_EQ(step.exact_boundary(zero), Rational(3, 8));
    EXPECT_NEAR(step.lhs(0.0) - step.rhs(0.0), 0.375, 1e-15);
    // past the support both sides are the full mass
    EXPECT_EQ(step.exact_lhs(Rational(2)), step.exact_rhs(Rational(2)));
    EXPECT_EQ(step.exact_lhs(Rational(2)), mass(traj.states[1]));
    EXPECT_EQ(step.exact_lhs(Rational(-1)), 0);
    EXPECT_EQ(step.exact_rhs(Rational(-1)), 0);
  }
}

TEST(LemmaStep, RejectsClusterVariantAndWrongTimes) {
  const auto traj = one_step(true);
  auto cluster = traj.states[0];
  cluster.variant = WeightVariant::cluster;
  EXPECT_THROW(LemmaStep(cluster, traj.traces[0], traj.states[1]), std::invalid_argument);
  EXPECT_THROW(LemmaStep(traj.states[0], traj.traces[0], traj.states[0]), std::invalid_argument);
  ReverseTrajectory missing = traj;
  missing.traces.clear();
  EXPECT_THROW(lemma_identity_check(missing), std::invalid_argument);
}

// With the shared-slot term added the step identity is exact; without it the
// gap is at most (3/8)^{t+1} 2^t.
TEST(LemmaIdentity, CorrectedFormIsExact) {
  for (int r = 0; r < 30; ++r) {
    RngStream rng(40, static_cast<std::uint64_t>(r));
    const auto traj = run_reverse(WeightSequence::unit(), 5, rng);
    for (const auto& row : lemma_identity_exact(traj, 64)) {
      EXPECT_EQ(row.max_corrected, 0) << "t = " << row.t;
      EXPECT_GT(row.max_residual, 0);
      EXPECT_LE(row.max_residual, Rational(pow_big(3, row.t + 1) * pow_big(2, row.t), pow_big(8, row.t + 1)));
    }
  }
}

TEST(LemmaIdentity, FloatingCheckMatchesExactOracle) {
  RngStream rng(41, 0);
  const auto traj = run_reverse(WeightSequence::unit(), 12, rng);
  const auto rows = lemma_identity_check(traj, 1000);
  ASSERT_EQ(rows.size(), 12u);
  for (const auto& row : rows) {
    EXPECT_LE(row.max_corrected, 1e-12) << row.t;
    EXPECT_LE(row.max_residual, 0.375 * std::pow(0.75, row.t) + 1e-12);
  }
  const auto exact = lemma_identity_exact(traj, 200);
  for (std::size_t k = 0; k < 5; ++k)
    EXPECT_NEAR(rows[k].max_residual, static_cast<double>(exact[k].max_residual), 1e-12);
}

TEST(Laplace, TrajectoryColumnsAndSplitBound) {
  RngStream rng(42, 0);
  const auto traj = run_reverse(WeightSequence::unit(), 10, rng);
  const std::vector<double> s_grid{0.0, 0.5, 1.0, 2.0};
  const auto pts = laplace_trajectory(traj, s_grid);
  ASSERT_EQ(pts.size(), 11u * s_grid.size());
  for (const auto& p : pts) {
    if (p.s == 0.0) {
      EXPECT_NEAR(p.transform, p.mass, 1e-12 * p.mass);
      if (p.t > 0) {
        EXPECT_NEAR(p.split_gap, 0.0, 1e-12);
      }
    }
    EXPECT_LE(p.split_gap, p.split_bound + 1e-12);
  }
  const auto summary = summarize_laplace({pts, pts}, s_grid.size());
  ASSERT_EQ(summary.size(), 10u * s_grid.size());
  EXPECT_LE(summary.back().max_split_excess, 1e-12);
}

TEST(SupDistance, Examples) {
  const StepFunction unit(StepDistribution{0, {1}});
  const StepFunction triple(StepDistribution{1, {1, 2, 1}});
  EXPECT_EQ(sup_distance(unit, unit), 0.0);
  EXPECT_DOUBLE_EQ(sup_distance(unit, triple), 0.625);
  EXPECT_DOUBLE_EQ(sup_distance(triple, unit), 0.625);
}

TEST(Duality, UnitMassBothSidesOne) {
  DualityOptions opt;
  opt.n_points = 500;
  opt.lhs_replicas = 3000;
  opt.rhs_replicas = 3000;
  const auto rep = duality_check(WeightSequence::unit(), 2, opt, 7, 1);
  EXPECT_LE(std::abs(rep.lhs.mean - 1.0), 4 * rep.lhs.se);
  EXPECT_LE(std::abs(rep.rhs.mean - 1.0), 4 * rep.rhs.se);
  EXPECT_LE(std::abs(rep.difference), 4 * rep.pooled_se);
  EXPECT_GT(rep.lhs.se, 0.0);
  EXPECT_EQ(rep.lhs.count, 3000u);
}

TEST(Duality, TimeZeroIsExactOnSharedSamples) {
  DualityOptions opt;
  opt.n_points = 50;
  opt.lhs_replicas = 2000;
  opt.rhs_replicas = 2000;
  const auto rep = duality_check(WeightSequence::from_indices({0, 1}), 0, opt, 8, 2);
  EXPECT_EQ(rep.shared_sample_max_diff, 0.0);
  EXPECT_LE(std::abs(rep.lhs.mean - 2.0), 4 * rep.lhs.se);
  EXPECT_LE(std::abs(rep.difference), 4 * rep.pooled_se);
}

TEST(ClusterScaling, MeanOneAndExactStart) {
  ClusterScalingOptions opt;
  opt.n_points = 20000;
  opt.steps = 10;
  opt.replicas = 200;
  opt.lag = 3;
  opt.cauchy_starts = {2, 4, 7};
  const auto rep = cluster_scaling_diagnostic(opt, 9, 2);
  EXPECT_EQ(rep.scaled_mean[0].mean, 1.0);
  EXPECT_EQ(rep.scaled_variance[0], 0.0);
  for (const auto& m : rep.scaled_mean) EXPECT_LE(std::abs(m.mean - 1.0), 4 * m.se + 1e-12);
  EXPECT_EQ(rep.forward_cauchy.size(), 3u);
  for (const auto& c : rep.reverse_cauchy) EXPECT_GE(c.mean, 0.0);
  opt.cauchy_starts = {9};
  EXPECT_THROW(cluster_scaling_diagnostic(opt, 9, 1), std::invalid_argument);
}

TEST(JointDiagnostic, ProducesOneRowPerCheckpoint) {
  const auto rows = joint_diagnostic(GapLaw::exponential(), 2000, {2, 4, 6}, 300, 10, 2);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].copula_shift, 0.0);
  for (const auto& r : rows) {
    EXPECT_GE(r.spearman, -1.0);
    EXPECT_LE(r.spearman, 1.0);
    EXPECT_EQ(r.samples, 300u);
  }
}

TEST(PipelineComparison, TimeZeroAndUnitMeans) {
  const auto zero = pipeline_comparison(GapLaw::exponential(), 0, 1000, 4, 11, 1);
  for (const auto& row : zero) EXPECT_EQ(row.ks, 0.0);
  const auto one = pipeline_comparison(GapLaw::exponential(), 1, 5000, 4, 11, 2);
  ASSERT_EQ(one.size(), 2u);
  for (const auto& row : one) {
    EXPECT_NEAR(row.exact_mean, 1.0, 1e-12);
    EXPECT_NEAR(row.literal_mean, 1.0, 1e-12);
    EXPECT_GT(row.critical, 0.0);
  }
}

TEST(PalmSample, PoolsEveryGap) {
  const auto s = palm_gap_sample(GapLaw::uniform(), 1000, 3, 3, Algorithm::alg1, "palm-test", 12, 2, 100);
  EXPECT_NEAR(estimate_mean(s.gaps).mean, 1.0, 1e-12);
  EXPECT_EQ(s.neighbours.size(), 100u);
}

TEST(ParallelMap, ResultsIndependentOfThreadCount) {
  auto job = [](std::size_t i) {
    auto rng = replica_stream(99, "job", i);
    return rng.uniform();
  };
  EXPECT_EQ(parallel_map(100, 1, job), parallel_map(100, 4, job));
  EXPECT_NE(replica_stream(1, "a", 0)(), replica_stream(1, "b", 0)());
}

TEST(ParallelMap, RethrowsLowestIndexError) {
  auto job = [](std::size_t i) -> int {
    if (i == 3 || i == 7) throw std::runtime_error("job " + std::to_string(i));
    return static_cast<int>(i);
  };
  try {
    parallel_map(10, 3, job);
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "job 3");
  }
}

TEST(ResolveThreads, EnvironmentFallback) {
  EXPECT_EQ(resolve_threads(3u), 3u);
  ::setenv("CLUSTERFLOW_THREADS", "5", 1);
  EXPECT_EQ(resolve_threads(), 5u);
  ::setenv("CLUSTERFLOW_THREADS", "zero", 1);
  EXPECT_THROW(resolve_threads(), std::invalid_argument);
  ::unsetenv("CLUSTERFLOW_THREADS");
  EXPECT_GE(resolve_threads(), 1u);
}

}  // namespace
