#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <boost/multiprecision/cpp_int.hpp>
#include <boost/random/gamma_distribution.hpp>

#include "clusterflow/gap_sequence.hpp"
#include "clusterflow/rng.hpp"

namespace clusterflow {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline BigInt pow_big(unsigned base, unsigned exponent) {
  return boost::multiprecision::pow(BigInt(base), exponent);
}

/// Unit-mean laws for the initial gaps.
struct GapLaw {
  enum class Kind { exponential, uniform, deterministic, gamma };

  Kind kind = Kind::exponential;
  double shape = 1.0;  // gamma only; scale is 1/shape

  static GapLaw exponential() { return {Kind::exponential, 1.0}; }
  static GapLaw uniform() { return {Kind::uniform, 1.0}; }
  static GapLaw deterministic() { return {Kind::deterministic, 1.0}; }
  static GapLaw gamma(double shape) {
    if (!(shape > 0.0) || !std::isfinite(shape)) {
      throw std::invalid_argument("gamma shape must be positive and finite");
    }
    return {Kind::gamma, shape};
  }

  double mean() const noexcept { return 1.0; }

  double variance() const noexcept {
    switch (kind) {
      case Kind::exponential: return 1.0;
      case Kind::uniform: return 1.0 / 3.0;
      case Kind::deterministic: return 0.0;
      case Kind::gamma: return 1.0 / shape;
    }
    return 0.0;
  }

  double sample(RngStream& rng) const {
    switch (kind) {
      case Kind::exponential: return -std::log(rng.uniform_open());
      case Kind::uniform: return 2.0 * rng.uniform_open();
      case Kind::deterministic: return 1.0;
      case Kind::gamma: {
        boost::random::gamma_distribution<double> dist(shape, 1.0 / shape);
        double x = dist(rng);
        // gamma with tiny shape can underflow to exactly zero
        while (!(x > 0.0)) x = dist(rng);
        return x;
      }
    }
    throw std::invalid_argument("unknown gap law");
  }

  std::string name() const {
    switch (kind) {
      case Kind::exponential: return "exponential";
      case Kind::uniform: return "uniform";
      case Kind::deterministic: return "deterministic";
      case Kind::gamma: {
        std::string s = std::to_string(shape);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return "gamma:" + s;
      }
    }
    return "?";
  }

  /// Accepts "exponential"/"exp", "uniform"/"unif", "deterministic"/"det",
  /// and "gamma:<shape>".
  static GapLaw parse(std::string_view text) {
    if (text == "exponential" || text == "exp") return exponential();
    if (text == "uniform" || text == "unif") return uniform();
    if (text == "deterministic" || text == "det") return deterministic();
    if (text.substr(0, 6) == "gamma:") {
      const std::string rest(text.substr(6));
      std::size_t used = 0;
      double k = 0.0;
      try {
        k = std::stod(rest, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != rest.size()) {
        throw std::invalid_argument("bad gamma shape in gap law: " + std::string(text));
      }
      return gamma(k);
    }
    throw std::invalid_argument("unknown gap law: " + std::string(text));
  }

  friend bool operator==(const GapLaw&, const GapLaw&) = default;
};

/// n independent unit-mean gaps on a circle.
inline GapSequence sample_gaps(long long n, const GapLaw& law, RngStream& rng,
                               IntensityMode mode = IntensityMode::theoretical) {
  if (n < 2) {
    throw std::invalid_argument("sample_gaps needs n >= 2");
  }
  GapSequence out;
  out.mode = mode;
  out.gaps.resize(static_cast<std::size_t>(n));
  for (double& g : out.gaps) g = law.sample(rng);
  return out;
}

/// Integer renewal laws built from two independent Geom(1/2) variables on
/// {1, 2, ...}.
///
/// tau: G1 + G2, the spacing of merge sites (mean 4, minimum 2).
/// rho: G1 + G2 - 1, the spacing of un-merge sites (mean 3, minimum 1).
enum class RenewalLaw { tau, rho };

inline std::string_view to_string(RenewalLaw law) {
  return law == RenewalLaw::tau ? "tau" : "rho";
}

inline long long renewal_min(RenewalLaw law) noexcept { return law == RenewalLaw::tau ? 2 : 1; }
inline long long renewal_mean(RenewalLaw law) noexcept { return law == RenewalLaw::tau ? 4 : 3; }

/// Exact P(R = k).
inline Rational renewal_pmf(RenewalLaw law, long long k) {
  if (k < renewal_min(law)) return Rational(0);
  if (law == RenewalLaw::tau) {
    return Rational(BigInt(k - 1), pow_big(2, static_cast<unsigned>(k)));
  }
  return Rational(BigInt(k), pow_big(2, static_cast<unsigned>(k + 1)));
}

/// Exact P(R > j) for j >= 0.
inline Rational renewal_survival(RenewalLaw law, long long j) {
  if (j < 0) return Rational(1);
  if (law == RenewalLaw::tau) {
    return Rational(BigInt(j + 1), pow_big(2, static_cast<unsigned>(j)));
  }
  return Rational(BigInt(j + 2), pow_big(2, static_cast<unsigned>(j + 1)));
}

/// Exact stationary delay P(D = j) = P(R > j) / E R.
inline Rational stationary_delay_pmf(RenewalLaw law, long long j) {
  if (j < 0) return Rational(0);
  return renewal_survival(law, j) / renewal_mean(law);
}

inline double renewal_pmf_value(RenewalLaw law, long long k) {
  if (k < renewal_min(law)) return 0.0;
  const double kk = static_cast<double>(k);
  return law == RenewalLaw::tau ? (kk - 1.0) * std::ldexp(1.0, static_cast<int>(-k))
                                : kk * std::ldexp(1.0, static_cast<int>(-(k + 1)));
}

/// One inter-renewal draw.
inline long long sample_renewal_gap(RenewalLaw law, RngStream& rng) {
  const auto g = rng.geometric_half() + rng.geometric_half();
  return static_cast<long long>(g) - (law == RenewalLaw::rho ? 1 : 0);
}

/// One draw of the stationary delay (distance from a fixed site to the first
/// renewal at or after it).
///
/// tau: P(D=j) = (j+1) 2^-(j+2), i.e. D = G1 + G2 - 2.
/// rho: P(D=j) = (j+2) 2^-(j+1) / 3, the mixture 2/3 (G1 + G2 - 2) + 1/3 (G - 1).
inline long long sample_stationary_delay(RenewalLaw law, RngStream& rng) {
  if (law == RenewalLaw::tau) {
    return static_cast<long long>(rng.geometric_half() + rng.geometric_half()) - 2;
  }
  const bool pair = rng.below(3) < 2;
  if (pair) {
    return static_cast<long long>(rng.geometric_half() + rng.geometric_half()) - 2;
  }
  return static_cast<long long>(rng.geometric_half()) - 1;
}

}  // namespace clusterflow
