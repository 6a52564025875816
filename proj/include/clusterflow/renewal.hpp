#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "clusterflow/laws.hpp"
#include "clusterflow/rng.hpp"

namespace clusterflow {

/// Closed integer interval [lo, hi].
struct IntWindow {
  long long lo = 0;
  long long hi = -1;

  bool empty() const noexcept { return hi < lo; }
  long long length() const noexcept { return empty() ? 0 : hi - lo + 1; }
  bool contains(long long i) const noexcept { return lo <= i && i <= hi; }
  bool covers(IntWindow other) const noexcept {
    return other.empty() || (lo <= other.lo && other.hi <= hi);
  }
  friend bool operator==(const IntWindow&, const IntWindow&) = default;
};

/// A realization of a stationary integer renewal process restricted to a
/// window. Points are strictly increasing and inside the window.
struct RenewalTrace {
  IntWindow window;
  std::vector<long long> points;
  RenewalLaw law = RenewalLaw::rho;

  bool contains(long long i) const {
    return std::binary_search(points.begin(), points.end(), i);
  }

  /// |points ∩ [a, b]|; empty when b < a.
  long long count_in(long long a, long long b) const {
    if (b < a) return 0;
    const auto first = std::lower_bound(points.begin(), points.end(), a);
    const auto last = std::upper_bound(first, points.end(), b);
    return static_cast<long long>(last - first);
  }

  /// The same realization viewed from a shifted origin: point p becomes p - s.
  RenewalTrace shifted(long long s) const {
    RenewalTrace out{{window.lo - s, window.hi - s}, points, law};
    for (auto& p : out.points) p -= s;
    return out;
  }

  void validate() const {
    for (std::size_t k = 0; k < points.size(); ++k) {
      if (!window.contains(points[k]) || (k > 0 && points[k] <= points[k - 1])) {
        throw std::logic_error("renewal trace points must be sorted, distinct and in window");
      }
    }
  }

  friend bool operator==(const RenewalTrace&, const RenewalTrace&) = default;
};

/// Stationary two-sided renewal process seen through `window`: the first
/// point at or after window.lo is placed by the stationary delay law, later
/// points by i.i.d. inter-renewal draws.
inline RenewalTrace sample_stationary_trace(IntWindow window, RenewalLaw law, RngStream& rng) {
  if (window.empty()) {
    throw std::invalid_argument("renewal trace window is empty");
  }
  RenewalTrace trace{window, {}, law};
  trace.points.reserve(static_cast<std::size_t>(window.length() / renewal_mean(law) + 4));
  long long site = window.lo + sample_stationary_delay(law, rng);
  while (site <= window.hi) {
    trace.points.push_back(site);
    site += sample_renewal_gap(law, rng);
  }
  return trace;
}

/// N(i) = |points ∩ [0, i]| - |points ∩ [-i, 0)|.
inline long long counting_function(const RenewalTrace& trace, long long i) {
  const long long reach = i < 0 ? -i : i;
  if (i >= 0 && (!trace.window.contains(-reach) || !trace.window.contains(reach))) {
    throw std::out_of_range("counting_function query outside the trace window");
  }
  return trace.count_in(0, i) - trace.count_in(-i, -1);
}

/// Exact probability that a stationary renewal process has exactly the points
/// `points` (sorted, inside `window`) and no others in the window.
inline Rational stationary_pattern_probability(RenewalLaw law, IntWindow window,
                                               const std::vector<long long>& points) {
  if (window.empty()) return Rational(1);
  if (points.empty()) {
    Rational none(1);
    for (long long j = 0; j <= window.hi - window.lo; ++j) none -= stationary_delay_pmf(law, j);
    return none;
  }
  Rational p = stationary_delay_pmf(law, points.front() - window.lo);
  for (std::size_t k = 1; k < points.size(); ++k) {
    p *= renewal_pmf(law, points[k] - points[k - 1]);
  }
  return p * renewal_survival(law, window.hi - points.back());
}

}  // namespace clusterflow
