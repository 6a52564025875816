#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "clusterflow/laws.hpp"
#include "clusterflow/renewal.hpp"
#include "clusterflow/stats.hpp"

namespace {

using namespace clusterflow;

// Oracle: P(G1 + G2 - shift = k) by direct convolution of Geom(1/2) pmfs.
Rational convolved_geometric_pmf(long long k, long long shift) {
  const long long sum = k + shift;
  Rational p(0);
  for (long long g = 1; g < sum; ++g) {
    p += Rational(1, pow_big(2, static_cast<unsigned>(g))) * Rational(1, pow_big(2, static_cast<unsigned>(sum - g)));
  }
  return p;
}

TEST(SampleGaps, DeterministicLawIsAllOnes) {
  RngStream rng(1, 0);
  const auto g = sample_gaps(4, GapLaw::deterministic(), rng);
  EXPECT_EQ(g.gaps, (std::vector<double>{1, 1, 1, 1}));
}

TEST(SampleGaps, ExponentialMean) {
  RngStream rng(2, 0);
  const long long n = 100000;
  const auto g = sample_gaps(n, GapLaw::exponential(), rng);
  EXPECT_NEAR(g.mean(), 1.0, 4.0 / std::sqrt(static_cast<double>(n)));
  for (double x : g.gaps) ASSERT_GT(x, 0.0);
}

TEST(SampleGaps, UniformVarianceWithBatchMeans) {
  RngStream rng(3, 0);
  const int batches = 100, per = 1000;
  const auto g = sample_gaps(batches * per, GapLaw::uniform(), rng);
  MeanAccumulator all, batch_vars;
  for (int b = 0; b < batches; ++b) {
    MeanAccumulator acc;
    for (int i = 0; i < per; ++i) {
      acc.add(g.gaps[static_cast<std::size_t>(b * per + i)]);
      all.add(g.gaps[static_cast<std::size_t>(b * per + i)]);
    }
    batch_vars.add(acc.variance());
  }
  EXPECT_NEAR(all.variance(), 1.0 / 3.0, 0.02);
  EXPECT_NEAR(batch_vars.mean(), 1.0 / 3.0, 4.0 * batch_vars.stderr_mean());
  for (double x : g.gaps) {
    ASSERT_GT(x, 0.0);
    ASSERT_LT(x, 2.0);
  }
}

TEST(SampleGaps, GammaHasUnitMean) {
  RngStream rng(4, 0);
  const long long n = 100000;
  const auto g = sample_gaps(n, GapLaw::gamma(2.5), rng);
  EXPECT_NEAR(g.mean(), 1.0, 4.0 * std::sqrt(GapLaw::gamma(2.5).variance() / static_cast<double>(n)));
}

TEST(SampleGaps, Errors) {
  RngStream rng(5, 0);
  EXPECT_THROW(sample_gaps(1, GapLaw::exponential(), rng), std::invalid_argument);
  EXPECT_THROW(sample_gaps(-3, GapLaw::exponential(), rng), std::invalid_argument);
  EXPECT_THROW(GapLaw::parse("cauchy"), std::invalid_argument);
  EXPECT_THROW(GapLaw::parse("gamma:abc"), std::invalid_argument);
  EXPECT_THROW(GapLaw::parse("gamma:-1"), std::invalid_argument);
}

TEST(GapLaw, ParseRoundTrip) {
  for (const auto& law : {GapLaw::exponential(), GapLaw::uniform(), GapLaw::deterministic(), GapLaw::gamma(2.5)}) {
    EXPECT_EQ(GapLaw::parse(law.name()), law);
  }
}

TEST(RenewalLaw, RhoPmfMatchesConvolution) {
  EXPECT_EQ(renewal_pmf(RenewalLaw::rho, 1), Rational(1, 4));
  EXPECT_EQ(renewal_pmf(RenewalLaw::rho, 2), Rational(1, 4));
  EXPECT_EQ(renewal_pmf(RenewalLaw::rho, 3), Rational(3, 16));
  for (long long k = 1; k <= 40; ++k) {
    EXPECT_EQ(renewal_pmf(RenewalLaw::rho, k), convolved_geometric_pmf(k, 1)) << k;
    EXPECT_EQ(renewal_pmf(RenewalLaw::tau, k), convolved_geometric_pmf(k, 0)) << k;
  }
  EXPECT_EQ(renewal_pmf(RenewalLaw::rho, 0), Rational(0));
  EXPECT_EQ(renewal_pmf(RenewalLaw::tau, 1), Rational(0));
}

TEST(RenewalLaw, RhoPmfTailRemainder) {
  for (long long K : {60LL, 80LL, 120LL}) {
    Rational sum(0);
    for (long long k = 1; k <= K; ++k) sum += renewal_pmf(RenewalLaw::rho, k);
    const Rational remainder = Rational(1) - sum;
    EXPECT_GT(remainder, 0);
    // remainder < 2^{-K/2} K
    EXPECT_LT(remainder, Rational(BigInt(K), pow_big(2, static_cast<unsigned>(K / 2))));
    EXPECT_EQ(remainder, renewal_survival(RenewalLaw::rho, K));
  }
}

TEST(RenewalLaw, StationaryDelayMatchesSurvivalOverMean) {
  for (auto law : {RenewalLaw::rho, RenewalLaw::tau}) {
    Rational cdf(0), mean(0), delay_total(0);
    for (long long k = 1; k <= 300; ++k) mean += Rational(k) * convolved_geometric_pmf(k, law == RenewalLaw::rho ? 1 : 0);
    EXPECT_LT(abs(mean - renewal_mean(law)), Rational(1, pow_big(2, 200)));
    for (long long j = 0; j <= 30; ++j) {
      if (j >= 1) cdf += convolved_geometric_pmf(j, law == RenewalLaw::rho ? 1 : 0);
      const Rational oracle = (Rational(1) - cdf) / renewal_mean(law);
      EXPECT_EQ(stationary_delay_pmf(law, j), oracle) << "j=" << j;
      delay_total += oracle;
    }
    EXPECT_LT(Rational(1) - delay_total, Rational(1, 100000));
  }
  EXPECT_EQ(stationary_delay_pmf(RenewalLaw::rho, 0), Rational(1, 3));
}

TEST(SampleRenewalGap, RhoMeanAndMinimum) {
  RngStream rng(6, 0);
  const int n = 1000000;
  double sum = 0.0;
  long long mn = 1000;
  for (int i = 0; i < n; ++i) {
    const auto r = sample_renewal_gap(RenewalLaw::rho, rng);
    sum += static_cast<double>(r);
    mn = std::min(mn, r);
  }
  EXPECT_NEAR(sum / n, 3.0, 0.01);
  EXPECT_EQ(mn, 1);
}

TEST(SampleRenewalGap, TauMinimumIsTwo) {
  RngStream rng(7, 0);
  long long mn = 1000;
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const auto r = sample_renewal_gap(RenewalLaw::tau, rng);
    mn = std::min(mn, r);
    sum += static_cast<double>(r);
  }
  EXPECT_EQ(mn, 2);
  // Var(T) = 4
  EXPECT_NEAR(sum / n, 4.0, 4.0 * 2.0 / std::sqrt(n));
}

TEST(SampleRenewalGap, RhoChiSquareGoodnessOfFit) {
  RngStream rng(8, 0);
  const int n = 1000000;
  const std::size_t K = 40;
  std::vector<std::size_t> counts(K + 1, 0);
  for (int i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(sample_renewal_gap(RenewalLaw::rho, rng));
    ++counts[std::min(r, K)];
  }
  std::vector<double> probs(K + 1, 0.0);
  for (std::size_t k = 1; k <= K; ++k) probs[k] = renewal_pmf_value(RenewalLaw::rho, static_cast<long long>(k));
  // drop the impossible bin 0
  counts.erase(counts.begin());
  probs.erase(probs.begin());
  const auto res = chi_square_gof(counts, probs);
  EXPECT_GT(res.p_value, 1e-3) << "chi2=" << res.statistic << " dof=" << res.dof;
}

// Ten independent streams; under a correct sampler two or more p-values
// below 1e-3 has probability about 4.5e-5.
TEST(SampleStationaryDelay, ChiSquareAgainstDelayPmf) {
  for (auto law : {RenewalLaw::rho, RenewalLaw::tau}) {
    int rejections = 0;
    for (std::uint64_t stream = 0; stream < 10; ++stream) {
      RngStream rng(9, stream * 2 + static_cast<std::uint64_t>(law));
      const int n = 100000;
      const std::size_t K = 40;
      std::vector<std::size_t> counts(K, 0);
      for (int i = 0; i < n; ++i) {
        const auto d = static_cast<std::size_t>(sample_stationary_delay(law, rng));
        ++counts[std::min(d, K - 1)];
      }
      std::vector<double> probs(K);
      for (std::size_t j = 0; j < K; ++j) probs[j] = static_cast<double>(stationary_delay_pmf(law, static_cast<long long>(j)));
      rejections += chi_square_gof(counts, probs).p_value < 1e-3;
    }
    EXPECT_LE(rejections, 1) << to_string(law);
  }
}

TEST(StationaryTrace, DensityMatchesInverseMean) {
  RngStream rng(10, 0);
  const auto rho = sample_stationary_trace({0, 300000 - 1}, RenewalLaw::rho, rng);
  EXPECT_NEAR(static_cast<double>(rho.points.size()) / 300000.0, 1.0 / 3.0, 0.005);
  rho.validate();
  const auto tau = sample_stationary_trace({-200000, 200000 - 1}, RenewalLaw::tau, rng);
  EXPECT_NEAR(static_cast<double>(tau.points.size()) / 400000.0, 0.25, 0.005);
  tau.validate();
}

// Indicator means at each site of a short window are 1/mean whatever the shift.
TEST(StationaryTrace, IndicatorMeansAreShiftInvariant) {
  const int reps = 60000;
  const int width = 12;
  for (auto law : {RenewalLaw::rho, RenewalLaw::tau}) {
    RngStream rng(11, static_cast<std::uint64_t>(law));
    std::vector<int> hits(width, 0);
    for (int r = 0; r < reps; ++r) {
      const auto tr = sample_stationary_trace({0, width - 1}, law, rng);
      for (auto p : tr.points) ++hits[static_cast<std::size_t>(p)];
    }
    const double p = 1.0 / static_cast<double>(renewal_mean(law));
    for (int s = 0; s < width; ++s) {
      EXPECT_NEAR(hits[static_cast<std::size_t>(s)] / static_cast<double>(reps), p, 4.0 * std::sqrt(p * (1 - p) / reps))
          << to_string(law) << " shift " << s;
    }
  }
}

TEST(StationaryTrace, ExactPatternProbabilitiesAreStationary) {
  for (auto law : {RenewalLaw::rho, RenewalLaw::tau}) {
    const IntWindow w{-3, 4};
    const auto len = static_cast<int>(w.length());
    Rational total(0);
    std::vector<Rational> marginal(static_cast<std::size_t>(len), Rational(0));
    for (int mask = 0; mask < (1 << len); ++mask) {
      std::vector<long long> pts;
      for (int b = 0; b < len; ++b)
        if (mask & (1 << b)) pts.push_back(w.lo + b);
      const auto p = stationary_pattern_probability(law, w, pts);
      total += p;
      for (int b = 0; b < len; ++b)
        if (mask & (1 << b)) marginal[static_cast<std::size_t>(b)] += p;
    }
    EXPECT_EQ(total, Rational(1));
    for (const auto& m : marginal) EXPECT_EQ(m, Rational(1, renewal_mean(law)));
  }
}

TEST(StationaryTrace, EmptyWindowRejected) {
  RngStream rng(12, 0);
  EXPECT_THROW(sample_stationary_trace({5, 4}, RenewalLaw::rho, rng), std::invalid_argument);
}

TEST(CountingFunction, Examples) {
  const RenewalTrace tr{{-10, 10}, {-2, 1, 3}, RenewalLaw::tau};
  EXPECT_EQ(counting_function(tr, 2), 0);
  const RenewalTrace empty{{-10, 10}, {}, RenewalLaw::tau};
  for (long long i = 0; i <= 10; ++i) EXPECT_EQ(counting_function(empty, i), 0);
  const RenewalTrace origin{{-10, 10}, {0}, RenewalLaw::tau};
  EXPECT_EQ(counting_function(origin, 5), 1);
  EXPECT_THROW(counting_function(tr, 11), std::out_of_range);
}

}  // namespace
