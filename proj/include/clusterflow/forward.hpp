#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "clusterflow/gap_sequence.hpp"
#include "clusterflow/laws.hpp"
#include "clusterflow/renewal.hpp"
#include "clusterflow/rng.hpp"

namespace clusterflow {

/// alg1: fair coin per point. alg2: coin biased so each move is mean-zero.
enum class Algorithm { alg1, alg2 };

inline std::string_view to_string(Algorithm alg) { return alg == Algorithm::alg1 ? "alg1" : "alg2"; }

inline Algorithm parse_algorithm(std::string_view name) {
  if (name == "alg1" || name == "1") return Algorithm::alg1;
  if (name == "alg2" || name == "2") return Algorithm::alg2;
  throw std::invalid_argument("unknown algorithm: " + std::string(name));
}

enum class Direction : std::uint8_t { left, right };

struct DirectionField {
  std::vector<Direction> dirs;
  Algorithm algorithm = Algorithm::alg1;

  std::size_t size() const noexcept { return dirs.size(); }
  Direction operator[](std::size_t i) const { return dirs[i]; }
};

/// Which gaps closed in one step and where every old point went.
struct MergeRecord {
  std::vector<std::size_t> merged_gap_indices;  // sorted, no two cyclically adjacent
  std::vector<std::size_t> survivor_map;        // old point -> new point
  std::vector<std::size_t> survivors;           // new point k -> old representative
};

/// Number of initial points absorbed into each current point.
struct Genealogy {
  std::vector<std::uint64_t> multiplicity;

  static Genealogy initial(std::size_t n) { return {std::vector<std::uint64_t>(n, 1)}; }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto m : multiplicity) s += m;
    return s;
  }
};

/// Points on a circle of the given circumference; positions strictly
/// increasing and spanning less than one circumference.
struct PointConfiguration {
  std::vector<double> positions;
  double circumference = 0.0;

  std::size_t size() const noexcept { return positions.size(); }
  double anchor() const { return positions.front(); }

  GapSequence gaps(IntensityMode mode = IntensityMode::theoretical) const {
    GapSequence out;
    out.mode = mode;
    const std::size_t n = positions.size();
    out.gaps.resize(n);
    for (std::size_t i = 0; i + 1 < n; ++i) out.gaps[i] = positions[i + 1] - positions[i];
    out.gaps[n - 1] = positions[0] + circumference - positions[n - 1];
    return out;
  }

  static PointConfiguration from_gaps(const GapSequence& gaps, double anchor = 0.0) {
    PointConfiguration pc;
    pc.positions.resize(gaps.size());
    double x = anchor;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
      pc.positions[i] = x;
      x += gaps[i];
    }
    pc.circumference = gaps.total_length();
    return pc;
  }
};

/// P(point i moves right).
///
/// alg1: 1/2. alg2: the unique p with p * gap_i / 2 = (1 - p) * gap_{i-1} / 2,
/// i.e. p = gap_{i-1} / (gap_{i-1} + gap_i).
inline double right_probability(const GapSequence& gaps, std::size_t i, Algorithm alg) {
  if (alg == Algorithm::alg1) return 0.5;
  const double left_gap = gaps.at_cyclic(static_cast<long long>(i) - 1);
  return left_gap / (left_gap + gaps[i]);
}

inline DirectionField sample_directions(const GapSequence& gaps, Algorithm alg, RngStream& rng) {
  DirectionField field;
  field.algorithm = alg;
  field.dirs.resize(gaps.size());
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const bool right = alg == Algorithm::alg1 ? rng.coin() : rng.bernoulli(right_probability(gaps, i, alg));
    field.dirs[i] = right ? Direction::right : Direction::left;
  }
  return field;
}

namespace detail {

/// Merge pattern: point i moves right and point i+1 moves left.
inline std::vector<std::uint8_t> merge_flags(const DirectionField& dirs) {
  const std::size_t n = dirs.size();
  std::vector<std::uint8_t> merged(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    merged[i] = dirs[i] == Direction::right && dirs[(i + 1) % n] == Direction::left;
  }
  return merged;
}

inline MergeRecord make_merge_record(const std::vector<std::uint8_t>& merged) {
  const std::size_t n = merged.size();
  MergeRecord rec;
  rec.survivor_map.assign(n, 0);
  std::vector<std::uint8_t> absorbed(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    if (merged[j]) {
      rec.merged_gap_indices.push_back(j);
      if (merged[(j + 1) % n]) {
        throw std::logic_error("adjacent merges: a point cannot move both ways");
      }
    }
    absorbed[j] = merged[(j + n - 1) % n];
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!absorbed[j]) {
      rec.survivor_map[j] = rec.survivors.size();
      rec.survivors.push_back(j);
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (absorbed[j]) rec.survivor_map[j] = rec.survivor_map[(j + n - 1) % n];
  }
  return rec;
}

inline double rescale_factor(IntensityMode mode, std::size_t count, double length) {
  switch (mode) {
    case IntensityMode::theoretical: return 0.75;
    case IntensityMode::empirical: return static_cast<double>(count) / length;
    case IntensityMode::unscaled: return 1.0;
  }
  return 1.0;
}

}  // namespace detail

struct TentativeGaps {
  std::vector<double> values;
  MergeRecord merges;
};

/// Gaps after every point moves halfway, before merged points are folded.
///
/// With (d_i, d_{i+1}) the moves of the endpoints of gap i:
///   (R,R) -> (g_i + g_{i+1}) / 2
///   (L,L) -> (g_{i-1} + g_i) / 2
///   (L,R) -> g_{i-1} / 2 + g_i + g_{i+1} / 2
///   (R,L) -> 0, and i is recorded as merged.
/// Merges come from the direction pattern, never from comparing floats.
inline TentativeGaps tentative_gaps(const GapSequence& gaps, const DirectionField& dirs) {
  const std::size_t n = gaps.size();
  if (dirs.size() != n) {
    throw std::invalid_argument("direction field and gap sequence lengths differ");
  }
  TentativeGaps out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double prev = gaps[(i + n - 1) % n];
    const double cur = gaps[i];
    const double next = gaps[(i + 1) % n];
    const bool a_right = dirs[i] == Direction::right;
    const bool b_right = dirs[(i + 1) % n] == Direction::right;
    if (a_right && b_right) {
      out.values[i] = 0.5 * (cur + next);
    } else if (!a_right && !b_right) {
      out.values[i] = 0.5 * (prev + cur);
    } else if (!a_right && b_right) {
      out.values[i] = 0.5 * prev + cur + 0.5 * next;
    } else {
      out.values[i] = 0.0;
    }
  }
  out.merges = detail::make_merge_record(detail::merge_flags(dirs));
  return out;
}

/// Drops merged gaps, reindexes from the first surviving point and rescales.
///
/// New gap k is the gap to the right of the k-th surviving point's cluster.
inline GapSequence fold_and_rescale(const std::vector<double>& tentative, const MergeRecord& merges,
                                    IntensityMode mode) {
  const std::size_t n = tentative.size();
  std::vector<std::uint8_t> merged(n, 0);
  for (auto i : merges.merged_gap_indices) {
    if (i >= n) throw std::invalid_argument("merged gap index out of range");
    if (tentative[i] != 0.0) throw std::invalid_argument("merged gap must have tentative value 0");
    merged[i] = 1;
  }
  if (merges.survivors.size() < 2) {
    throw std::domain_error("degenerate configuration: fewer than two points survive the merge");
  }
  GapSequence out;
  out.mode = mode;
  out.gaps.reserve(merges.survivors.size());
  double length = 0.0;
  for (auto s : merges.survivors) {
    const double g = merged[s] ? tentative[(s + 1) % n] : tentative[s];
    out.gaps.push_back(g);
    length += g;
  }
  const double factor = detail::rescale_factor(mode, out.gaps.size(), length);
  for (double& g : out.gaps) g *= factor;
  return out;
}

/// Gap-level state: gaps, cluster multiplicities and the position of point 0.
struct ForwardState {
  GapSequence gaps;
  Genealogy genealogy;
  double anchor = 0.0;

  static ForwardState from_gaps(GapSequence gaps) {
    ForwardState s;
    s.genealogy = Genealogy::initial(gaps.size());
    s.gaps = std::move(gaps);
    return s;
  }
};

struct StepRecord {
  DirectionField dirs;
  MergeRecord merges;
  double factor = 1.0;
};

/// Deterministic part of one step: apply a given direction field.
inline StepRecord advance(ForwardState& state, const DirectionField& dirs, IntensityMode mode) {
  if (dirs.algorithm == Algorithm::alg2 && mode == IntensityMode::theoretical) {
    throw std::invalid_argument("algorithm 2 has no closed-form intensity; use empirical rescaling");
  }
  const GapSequence& g = state.gaps;
  const std::size_t n = g.size();
  auto tentative = tentative_gaps(g, dirs);
  GapSequence next = fold_and_rescale(tentative.values, tentative.merges, mode);

  const auto& rec = tentative.merges;
  const std::size_t s0 = rec.survivors.front();
  double x = state.anchor + (s0 == 1 ? g[0] : 0.0);
  x += dirs[s0] == Direction::right ? 0.5 * g[s0] : -0.5 * g[(s0 + n - 1) % n];

  // merged entries are exactly zero, so this is the folded length
  double length = 0.0;
  for (double v : tentative.values) length += v;
  const double factor = detail::rescale_factor(mode, rec.survivors.size(), length);

  Genealogy gen;
  gen.multiplicity.assign(rec.survivors.size(), 0);
  for (std::size_t j = 0; j < n; ++j) gen.multiplicity[rec.survivor_map[j]] += state.genealogy.multiplicity[j];

  state.gaps = std::move(next);
  state.genealogy = std::move(gen);
  state.anchor = x * factor;
  return {dirs, std::move(tentative.merges), factor};
}

/// One forward iteration: sample directions, move, merge, rescale.
inline StepRecord forward_step(ForwardState& state, Algorithm alg, IntensityMode mode, RngStream& rng) {
  const auto dirs = sample_directions(state.gaps, alg, rng);
  return advance(state, dirs, mode);
}

/// Point-level step driven by a given direction field: each point moves
/// halfway to the chosen neighbour, co-located pairs keep one point, then
/// positions and circumference are rescaled.
inline std::pair<PointConfiguration, MergeRecord> point_step(const PointConfiguration& points,
                                                             const DirectionField& dirs,
                                                             IntensityMode mode) {
  const std::size_t n = points.size();
  if (dirs.size() != n) throw std::invalid_argument("direction field and point count differ");
  const auto& p = points.positions;
  std::vector<double> moved(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (dirs[i] == Direction::right) {
      const double next = i + 1 < n ? p[i + 1] : p[0] + points.circumference;
      moved[i] = p[i] + 0.5 * (next - p[i]);
    } else {
      const double prev = i > 0 ? p[i - 1] : p[n - 1] - points.circumference;
      moved[i] = p[i] - 0.5 * (p[i] - prev);
    }
  }
  auto rec = detail::make_merge_record(detail::merge_flags(dirs));
  if (rec.survivors.size() < 2) {
    throw std::domain_error("degenerate configuration: fewer than two points survive the merge");
  }
  PointConfiguration out;
  out.positions.reserve(rec.survivors.size());
  for (auto s : rec.survivors) out.positions.push_back(moved[s]);
  const double factor = detail::rescale_factor(mode, rec.survivors.size(), points.circumference);
  for (double& x : out.positions) x *= factor;
  out.circumference = points.circumference * factor;
  return {std::move(out), std::move(rec)};
}

/// Translates a uniformly chosen point to the origin and relabels it 0.
inline PointConfiguration palm_shift(const PointConfiguration& points, RngStream& rng) {
  const std::size_t n = points.size();
  if (n == 0) throw std::invalid_argument("palm_shift needs at least one point");
  const std::size_t k = static_cast<std::size_t>(rng.below(n));
  PointConfiguration out;
  out.circumference = points.circumference;
  out.positions.resize(n);
  const double origin = points.positions[k];
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = (k + j) % n;
    double x = points.positions[src] - origin;
    if (src < k) x += points.circumference;
    out.positions[j] = x;
  }
  out.positions[0] = 0.0;
  return out;
}

/// Options for a multi-step forward run.
struct ForwardOptions {
  long long n_points = 1000;
  GapLaw law = GapLaw::exponential();
  Algorithm algorithm = Algorithm::alg1;
  IntensityMode mode = IntensityMode::theoretical;
  int steps = 0;
  std::vector<int> checkpoints;      // empty: every step 0..steps
  bool record_steps = false;         // keep direction fields and merge records
  bool record_unscaled_points = false;
};

struct ForwardSnapshot {
  int t = 0;
  GapSequence gaps;
  Genealogy genealogy;
  double anchor = 0.0;
};

struct ForwardTrajectory {
  std::vector<ForwardSnapshot> snapshots;
  std::vector<std::size_t> point_counts;               // per t = 0..steps
  std::vector<StepRecord> steps;                       // when record_steps
  std::vector<PointConfiguration> unscaled_points;     // per t, when requested

  const ForwardSnapshot& at(int t) const {
    for (const auto& s : snapshots)
      if (s.t == t) return s;
    throw std::out_of_range("no snapshot recorded at t = " + std::to_string(t));
  }
};

inline bool wants_checkpoint(const ForwardOptions& opt, int t) {
  return opt.checkpoints.empty() ||
         std::find(opt.checkpoints.begin(), opt.checkpoints.end(), t) != opt.checkpoints.end();
}

/// Runs `steps` forward iterations from fresh i.i.d. gaps.
inline ForwardTrajectory run_forward_from(ForwardState state, const ForwardOptions& opt, RngStream& rng) {
  if (opt.steps < 0) throw std::invalid_argument("steps must be nonnegative");
  ForwardTrajectory traj;
  std::optional<PointConfiguration> raw;
  if (opt.record_unscaled_points) {
    raw = PointConfiguration::from_gaps(state.gaps, state.anchor);
    traj.unscaled_points.push_back(*raw);
  }
  traj.point_counts.push_back(state.gaps.size());
  if (wants_checkpoint(opt, 0)) traj.snapshots.push_back({0, state.gaps, state.genealogy, state.anchor});
  for (int t = 1; t <= opt.steps; ++t) {
    auto dirs = sample_directions(state.gaps, opt.algorithm, rng);
    if (raw) {
      raw = point_step(*raw, dirs, IntensityMode::unscaled).first;
      traj.unscaled_points.push_back(*raw);
    }
    auto rec = advance(state, dirs, opt.mode);
    traj.point_counts.push_back(state.gaps.size());
    if (opt.record_steps) traj.steps.push_back(std::move(rec));
    if (wants_checkpoint(opt, t)) traj.snapshots.push_back({t, state.gaps, state.genealogy, state.anchor});
  }
  return traj;
}

inline ForwardTrajectory run_forward(const ForwardOptions& opt, RngStream& rng) {
  auto gaps = sample_gaps(opt.n_points, opt.law, rng, opt.mode);
  return run_forward_from(ForwardState::from_gaps(std::move(gaps)), opt, rng);
}

// Literal operator pipeline: averaging rows with independent fair coins,
// then folding rows driven by an independently sampled renewal trace. Kept
// apart from the exact dynamics above, which couples neighbouring coins.

/// Row i is (e_i + e_{i+1}) / 2 or (e_i + e_{i-1}) / 2 with probability 1/2,
/// rows independent; indices are cyclic.
inline std::vector<double> averaging_operator(const GapSequence& gaps, RngStream& rng) {
  const std::size_t n = gaps.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double other = rng.coin() ? gaps[(i + 1) % n] : gaps[(i + n - 1) % n];
    out[i] = 0.5 * (gaps[i] + other);
  }
  return out;
}

/// Folding rows on the window [0, n): output i reads input i + N(i) with
/// N(i) = |trace ∩ [0, i]|; rows at trace points sum the two inputs
/// i + N(i) - 1 and i + N(i). Output stops once an input index would leave
/// the window. Scale 3/4 (theoretical) or exact unit mean (empirical).
inline GapSequence folding_operator(const std::vector<double>& seq, const RenewalTrace& trace,
                                         IntensityMode mode = IntensityMode::theoretical) {
  const auto n = static_cast<long long>(seq.size());
  if (!trace.window.covers({0, n - 1})) {
    throw std::invalid_argument("folding trace window must cover the sequence indices");
  }
  GapSequence out;
  out.mode = mode;
  long long count = 0;
  for (long long i = 0;; ++i) {
    const bool fold = trace.contains(i);
    count += fold ? 1 : 0;
    const long long k = i + count;
    if (k > n - 1) break;
    const auto ku = static_cast<std::size_t>(k);
    out.gaps.push_back(fold ? seq[ku - 1] + seq[ku] : seq[ku]);
  }
  if (out.gaps.size() < 2) throw std::domain_error("folding left fewer than two gaps");
  const double factor = detail::rescale_factor(mode, out.gaps.size(), out.total_length());
  for (double& g : out.gaps) g *= factor;
  return out;
}

}  // namespace clusterflow
