#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "clusterflow/forward.hpp"
#include "clusterflow/laws.hpp"
#include "clusterflow/renewal.hpp"
#include "clusterflow/rng.hpp"

namespace clusterflow {

/// gap: tuples (w, w) and (w, 2w, w). cluster: tuples (w, w) and (0, 2w, 2w).
enum class WeightVariant { gap, cluster };

inline std::string_view to_string(WeightVariant v) { return v == WeightVariant::gap ? "gap" : "cluster"; }

/// Finitely supported nonnegative integer weights on ℤ after t reverse steps.
///
/// Stored as a dense core starting at `offset`; leading and trailing zeros
/// are stripped, so an all-zero sequence has no entries.
struct WeightSequence {
  long long offset = 0;
  std::vector<std::uint64_t> weights;
  unsigned t = 0;
  WeightVariant variant = WeightVariant::gap;

  static WeightSequence unit(long long index = 0, WeightVariant variant = WeightVariant::gap) {
    return {index, {1}, 0, variant};
  }

  /// Sum of unit masses at the given indices (repeats add up).
  static WeightSequence from_indices(const std::vector<long long>& indices,
                                     WeightVariant variant = WeightVariant::gap) {
    if (indices.empty()) return {0, {}, 0, variant};
    const auto [mn, mx] = std::minmax_element(indices.begin(), indices.end());
    WeightSequence w{*mn, std::vector<std::uint64_t>(static_cast<std::size_t>(*mx - *mn + 1), 0), 0, variant};
    for (auto i : indices) ++w.weights[static_cast<std::size_t>(i - *mn)];
    return w;
  }

  bool empty() const noexcept { return weights.empty(); }
  long long lo() const noexcept { return offset; }
  long long hi() const noexcept { return offset + static_cast<long long>(weights.size()) - 1; }
  std::size_t width() const noexcept { return weights.size(); }

  std::uint64_t at(long long i) const {
    if (i < lo() || i > hi()) return 0;
    return weights[static_cast<std::size_t>(i - offset)];
  }

  std::uint64_t max_weight() const {
    return weights.empty() ? 0 : *std::max_element(weights.begin(), weights.end());
  }

  BigInt total_weight() const {
    BigInt s = 0;
    for (auto w : weights) s += w;
    return s;
  }

  BigInt sum_of_squares() const {
    BigInt s = 0;
    for (auto w : weights) s += BigInt(w) * w;
    return s;
  }

  void strip_zeros() {
    const auto first = std::find_if(weights.begin(), weights.end(), [](auto w) { return w != 0; });
    if (first == weights.end()) {
      weights.clear();
      offset = 0;
      return;
    }
    const auto last = std::find_if(weights.rbegin(), weights.rend(), [](auto w) { return w != 0; }).base();
    offset += first - weights.begin();
    weights = std::vector<std::uint64_t>(first, last);
  }

  friend bool operator==(const WeightSequence&, const WeightSequence&) = default;
};

/// Index range whose tuples are laid out by a reverse step: the support
/// together with the anchor index 0.
inline IntWindow layout_range(const WeightSequence& eta) {
  if (eta.empty()) return {0, 0};
  return {std::min(eta.lo(), 0LL), std::max(eta.hi(), 0LL)};
}

/// Trace window a reverse step needs: the layout range plus one index of
/// slack on each side.
inline IntWindow required_trace_window(const WeightSequence& eta) {
  const auto r = layout_range(eta);
  return {r.lo - 1, r.hi + 1};
}

namespace detail {

inline std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_add_overflow(a, b, &out)) throw std::overflow_error("weight overflow in reverse step");
  return out;
}

inline std::uint64_t checked_twice(std::uint64_t a) { return checked_add(a, a); }

}  // namespace detail

/// One step of the time-reversed weight process.
///
/// Index i is replaced by a tuple (length 3 when i ∈ rho, else 2);
/// consecutive tuples overlap in one slot whose entries are summed. The left
/// element of tuple 0 (plus the right element of tuple -1) lands at index 0.
inline WeightSequence reverse_step(const WeightSequence& eta, const RenewalTrace& rho) {
  if (rho.law != RenewalLaw::rho) {
    throw std::invalid_argument("reverse step needs a rho-law trace");
  }
  const IntWindow range = layout_range(eta);
  if (!rho.window.covers(required_trace_window(eta))) {
    throw std::invalid_argument("rho trace window too small for the weight support");
  }
  const auto count = static_cast<std::size_t>(range.length());
  std::vector<long long> start(count);
  std::vector<std::uint8_t> triple(count);
  for (std::size_t k = 0; k < count; ++k) triple[k] = rho.contains(range.lo + static_cast<long long>(k));

  // tuple 0 starts at 0; each tuple starts where the previous one ends
  const auto zero = static_cast<std::size_t>(-range.lo);
  start[zero] = 0;
  for (std::size_t k = zero + 1; k < count; ++k) start[k] = start[k - 1] + 1 + triple[k - 1];
  for (std::size_t k = zero; k-- > 0;) start[k] = start[k + 1] - 1 - triple[k];

  const long long out_lo = start.front();
  const long long out_hi = start.back() + 1 + triple.back();
  WeightSequence out{out_lo, std::vector<std::uint64_t>(static_cast<std::size_t>(out_hi - out_lo + 1), 0),
                     eta.t + 1, eta.variant};
  auto add = [&](long long pos, std::uint64_t v) {
    auto& slot = out.weights[static_cast<std::size_t>(pos - out_lo)];
    slot = detail::checked_add(slot, v);
  };
  for (std::size_t k = 0; k < count; ++k) {
    const std::uint64_t w = eta.at(range.lo + static_cast<long long>(k));
    if (w == 0) continue;
    const long long p = start[k];
    if (!triple[k]) {
      add(p, w);
      add(p + 1, w);
    } else if (eta.variant == WeightVariant::gap) {
      add(p, w);
      add(p + 1, detail::checked_twice(w));
      add(p + 2, w);
    } else {
      add(p + 1, detail::checked_twice(w));
      add(p + 2, detail::checked_twice(w));
    }
  }
  out.strip_zeros();
  return out;
}

/// M = (3/8)^t * Σ weights, exact.
inline Rational mass(const WeightSequence& eta) {
  return Rational(eta.total_weight() * pow_big(3, eta.t), pow_big(8, eta.t));
}

/// Σ ((3/8)^t w_i)^2, exact.
inline Rational sum_sq_scaled(const WeightSequence& eta) {
  return Rational(eta.sum_of_squares() * pow_big(9, eta.t), pow_big(64, eta.t));
}

struct MassLedgerRow {
  unsigned t = 0;
  BigInt total_weight;
  Rational mass;
  Rational increment;  // M^(t) - M^(t-1); zero at t = 0
  Rational sum_sq;
  std::uint64_t max_weight = 0;
  std::size_t support_width = 0;
};

inline MassLedgerRow ledger_row(const WeightSequence& eta, const Rational& previous_mass) {
  MassLedgerRow row;
  row.t = eta.t;
  row.total_weight = eta.total_weight();
  row.mass = Rational(row.total_weight * pow_big(3, eta.t), pow_big(8, eta.t));
  row.increment = eta.t == 0 ? Rational(0) : row.mass - previous_mass;
  row.sum_sq = sum_sq_scaled(eta);
  row.max_weight = eta.max_weight();
  row.support_width = eta.width();
  return row;
}

/// Checks the gap-variant bounds max w <= 2^t max w0 and
/// Σ X_i^2 <= (3/4)^t max w0 M. Throws std::logic_error on violation.
inline void assert_gap_bounds(const MassLedgerRow& row, std::uint64_t initial_max) {
  const BigInt cap = pow_big(2, row.t) * initial_max;
  if (BigInt(row.max_weight) > cap) {
    throw std::logic_error("reverse invariant violated: max weight exceeds 2^t bound at t = " +
                           std::to_string(row.t));
  }
  const Rational bound = Rational(pow_big(3, row.t), pow_big(4, row.t)) * initial_max * row.mass;
  if (row.sum_sq > bound) {
    throw std::logic_error("reverse invariant violated: sum of squares exceeds (3/4)^t M at t = " +
                           std::to_string(row.t));
  }
}

struct ReverseTrajectory {
  std::vector<WeightSequence> states;  // t = 0..T when kept, else only the final state
  std::vector<MassLedgerRow> ledger;   // t = 0..T
  std::vector<RenewalTrace> traces;    // traces[t] drives step t -> t+1
};

/// Runs T reverse steps from `traces` (replayed, not sampled).
inline ReverseTrajectory replay_reverse(const WeightSequence& eta0, const std::vector<RenewalTrace>& traces,
                                        bool keep_states = true) {
  ReverseTrajectory traj;
  WeightSequence eta = eta0;
  const std::uint64_t initial_max = eta0.max_weight();
  traj.ledger.push_back(ledger_row(eta, Rational(0)));
  if (keep_states) traj.states.push_back(eta);
  for (const auto& rho : traces) {
    eta = reverse_step(eta, rho);
    traj.ledger.push_back(ledger_row(eta, traj.ledger.back().mass));
    if (eta.variant == WeightVariant::gap) assert_gap_bounds(traj.ledger.back(), initial_max);
    if (keep_states) traj.states.push_back(eta);
  }
  if (!keep_states) traj.states.push_back(eta);
  traj.traces = traces;
  return traj;
}

/// T reverse steps, each driven by a fresh stationary rho trace sampled on
/// the window the step needs. Traces are kept for replay.
inline ReverseTrajectory run_reverse(const WeightSequence& eta0, int steps, RngStream& rng,
                                     bool keep_states = true) {
  if (steps < 0) throw std::invalid_argument("steps must be nonnegative");
  ReverseTrajectory traj;
  WeightSequence eta = eta0;
  const std::uint64_t initial_max = eta0.max_weight();
  traj.ledger.push_back(ledger_row(eta, Rational(0)));
  if (keep_states) traj.states.push_back(eta);
  traj.traces.reserve(static_cast<std::size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    traj.traces.push_back(sample_stationary_trace(required_trace_window(eta), RenewalLaw::rho, rng));
    eta = reverse_step(eta, traj.traces.back());
    traj.ledger.push_back(ledger_row(eta, traj.ledger.back().mass));
    if (eta.variant == WeightVariant::gap) assert_gap_bounds(traj.ledger.back(), initial_max);
    if (keep_states) traj.states.push_back(eta);
  }
  if (!keep_states) traj.states.push_back(eta);
  return traj;
}

/// Re-indexes from the first nonzero weight. Throws on an all-zero sequence.
inline WeightSequence trim(const WeightSequence& eta) {
  WeightSequence out = eta;
  out.strip_zeros();
  if (out.empty()) throw std::invalid_argument("cannot trim an all-zero weight sequence");
  out.offset = 0;
  return out;
}

/// Index of the first nonzero weight (the shift `trim` removes).
inline long long first_nonzero(const WeightSequence& eta) {
  for (std::size_t k = 0; k < eta.weights.size(); ++k)
    if (eta.weights[k] != 0) return eta.offset + static_cast<long long>(k);
  throw std::invalid_argument("all-zero weight sequence has no first nonzero entry");
}

/// floor(z) for a double that should be integral up to representation error
/// snaps to the integer.
inline long long snapped_floor(double z) {
  const double r = std::nearbyint(z);
  if (std::abs(z - r) <= 1e-9 * std::max(1.0, std::abs(z))) return static_cast<long long>(r);
  return static_cast<long long>(std::floor(z));
}

inline BigInt floor_rational(const Rational& q) {
  const BigInt num = boost::multiprecision::numerator(q);
  const BigInt den = boost::multiprecision::denominator(q);
  BigInt f = num / den;
  if (num < 0 && f * den != num) f -= 1;
  return f;
}

/// Step function F(x) = Σ_{i <= floor((4/3)^t x)} (3/8)^t w_i over trimmed
/// weights, with atoms at x_i = (3/4)^t i.
struct StepDistribution {
  unsigned t = 0;
  std::vector<std::uint64_t> weights;

  double space_scale() const { return std::pow(0.75, static_cast<double>(t)); }
  double mass_scale() const { return std::pow(0.375, static_cast<double>(t)); }
  std::size_t size() const noexcept { return weights.size(); }

  double support(std::size_t i) const { return space_scale() * static_cast<double>(i); }

  Rational exact_mass(std::size_t i) const {
    return Rational(BigInt(weights[i]) * pow_big(3, t), pow_big(8, t));
  }
  double mass(std::size_t i) const { return mass_scale() * static_cast<double>(weights[i]); }

  Rational total_mass() const {
    BigInt s = 0;
    for (auto w : weights) s += w;
    return Rational(s * pow_big(3, t), pow_big(8, t));
  }

  /// Sum of scaled weights with index <= k (exact).
  Rational cumulative_index(long long k) const {
    if (k < 0) return Rational(0);
    BigInt s = 0;
    const auto last = std::min<long long>(k, static_cast<long long>(weights.size()) - 1);
    for (long long i = 0; i <= last; ++i) s += weights[static_cast<std::size_t>(i)];
    return Rational(s * pow_big(3, t), pow_big(8, t));
  }

  /// Atom index floor((4/3)^t x) evaluated in floating point.
  long long index_of(double x) const {
    return snapped_floor(x * std::pow(4.0 / 3.0, static_cast<double>(t)));
  }

  /// Atom index floor((4/3)^t x) for an exact rational x.
  long long index_of(const Rational& x) const {
    return static_cast<long long>(floor_rational(x * Rational(pow_big(4, t), pow_big(3, t))));
  }

  double operator()(double x) const { return static_cast<double>(cumulative_index(index_of(x))); }
  Rational exact(const Rational& x) const { return cumulative_index(index_of(x)); }
};

inline StepDistribution step_distribution(const WeightSequence& eta) {
  const auto trimmed = trim(eta);
  return {trimmed.t, trimmed.weights};
}

/// Σ mass_i exp(-s x_i).
inline double laplace_transform(const StepDistribution& f, double s) {
  if (s < 0.0) throw std::invalid_argument("laplace transform needs s >= 0");
  double total = 0.0;
  const double h = f.space_scale();
  const double m = f.mass_scale();
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.weights[i] != 0) total += m * static_cast<double>(f.weights[i]) * std::exp(-s * h * static_cast<double>(i));
  }
  return total;
}

// Forward/reverse coupling. In the exact gap map an output gap whose
// endpoints moved (L,R) is the weight triple (1/2, 1, 1/2) over three input
// gaps, every other surviving gap a pair (1/2, 1/2), and consecutive tuples
// share one input gap. Reading those (L,R) outputs as rho sites and
// replaying the forward steps backwards makes
//   gap_k(T) = Σ_j (3/8)^T eta_j(T) gap_{j + offset}(0)
// hold pathwise under theoretical rescaling.

struct DualStep {
  RenewalTrace rho;
  long long next_offset = 0;  // input-frame gap index of the new index 0
};

/// Rho trace for one recorded forward step, in a frame where weight index j
/// is output gap (j + offset) mod n_out.
inline DualStep dual_trace(const StepRecord& rec, long long offset, IntWindow window) {
  const auto n_in = static_cast<long long>(rec.dirs.size());
  const auto n_out = static_cast<long long>(rec.merges.survivors.size());
  if (window.length() > n_out) throw std::invalid_argument("weight support wider than the forward configuration");
  std::vector<std::uint8_t> merged(static_cast<std::size_t>(n_in), 0);
  for (auto i : rec.merges.merged_gap_indices) merged[i] = 1;
  auto input_gap = [&](long long k) {
    const auto s = static_cast<long long>(rec.merges.survivors[static_cast<std::size_t>(((k % n_out) + n_out) % n_out)]);
    return merged[static_cast<std::size_t>(s)] ? (s + 1) % n_in : s;
  };
  auto dir = [&](long long i) { return rec.dirs[static_cast<std::size_t>(((i % n_in) + n_in) % n_in)]; };

  DualStep out;
  out.rho = {window, {}, RenewalLaw::rho};
  for (long long j = window.lo; j <= window.hi; ++j) {
    const long long g = input_gap(j + offset);
    if (dir(g) == Direction::left && dir(g + 1) == Direction::right) out.rho.points.push_back(j);
  }
  const long long g0 = input_gap(offset);
  const long long tuple_start = (dir(g0) == Direction::right && dir(g0 + 1) == Direction::right) ? g0 : g0 - 1;
  out.next_offset = ((tuple_start % n_in) + n_in) % n_in;
  return out;
}

struct CoupledReverse {
  ReverseTrajectory trajectory;
  long long final_offset = 0;  // weight index j pairs with initial gap j + final_offset
};

/// Replays a recorded forward run backwards from eta0, where eta0's index j
/// refers to gap (j + palm_index) of the final forward configuration.
inline CoupledReverse replay_forward_coupled(const ForwardTrajectory& fwd, const WeightSequence& eta0,
                                             long long palm_index) {
  if (fwd.steps.size() + 1 != fwd.point_counts.size()) {
    throw std::invalid_argument("forward trajectory was run without record_steps");
  }
  std::vector<RenewalTrace> traces;
  WeightSequence eta = eta0;
  long long offset = palm_index;
  for (auto it = fwd.steps.rbegin(); it != fwd.steps.rend(); ++it) {
    auto step = dual_trace(*it, offset, required_trace_window(eta));
    eta = reverse_step(eta, step.rho);
    offset = step.next_offset;
    traces.push_back(std::move(step.rho));
  }
  return {replay_reverse(eta0, traces), offset};
}

}  // namespace clusterflow
