#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "clusterflow/forward.hpp"
#include "clusterflow/parallel.hpp"
#include "clusterflow/reverse.hpp"
#include "clusterflow/stats.hpp"

namespace clusterflow {

/// Σ (3/8)^t eta_i gaps_{palm + i}, indices cyclic.
inline double inner_product(const WeightSequence& eta, const GapSequence& gaps, long long palm_index = 0) {
  if (eta.empty()) return 0.0;
  if (eta.width() > gaps.size()) throw std::invalid_argument("weight support wider than the gap sequence");
  double s = 0.0;
  for (long long i = eta.lo(); i <= eta.hi(); ++i) {
    const auto w = eta.at(i);
    if (w != 0) s += static_cast<double>(w) * gaps.at_cyclic(palm_index + i);
  }
  return s * std::pow(0.375, static_cast<double>(eta.t));
}

/// "e0+e3" style label; repeated indices repeat.
inline std::string describe(const WeightSequence& eta) {
  std::string out;
  for (long long i = eta.lo(); i <= eta.hi(); ++i) {
    for (std::uint64_t k = 0; k < eta.at(i); ++k) {
      if (!out.empty()) out += '+';
      out += "e" + std::to_string(i);
    }
  }
  return out.empty() ? "0" : out;
}

// ---------------------------------------------------------------------------
// Exact martingale enumeration

struct ExactMartingale {
  std::vector<Rational> expected_mass;       // E M^(t), t = 0..steps
  std::vector<std::size_t> distinct_states;  // reachable sequences per level
  bool conditional_identity = true;          // E[M^(t+1) | eta] = M^(t) at every reachable eta
};

/// Propagates the exact law of eta^(t) by enumerating every rho pattern on
/// the layout range of each reachable state, weighted by its stationary
/// probability.
inline ExactMartingale exact_martingale(const WeightSequence& eta0, unsigned steps) {
  using Key = std::pair<long long, std::vector<std::uint64_t>>;
  std::map<Key, Rational> level{{{eta0.offset, eta0.weights}, Rational(1)}};
  ExactMartingale out;
  auto level_mass = [&](unsigned t) {
    Rational e = 0;
    for (const auto& [key, p] : level) e += p * mass(WeightSequence{key.first, key.second, t, eta0.variant});
    return e;
  };
  out.expected_mass.push_back(level_mass(eta0.t));
  out.distinct_states.push_back(level.size());
  for (unsigned s = 0; s < steps; ++s) {
    const unsigned t = eta0.t + s;
    std::map<Key, Rational> next;
    for (const auto& [key, prob] : level) {
      const WeightSequence eta{key.first, key.second, t, eta0.variant};
      const IntWindow range = layout_range(eta);
      if (range.length() > 24) throw std::length_error("exact enumeration limited to 24 layout sites");
      const IntWindow window = required_trace_window(eta);
      Rational conditional = 0;
      for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << range.length()); ++mask) {
        std::vector<long long> pts;
        for (long long k = 0; k < range.length(); ++k)
          if ((mask >> k) & 1u) pts.push_back(range.lo + k);
        const Rational p = stationary_pattern_probability(RenewalLaw::rho, range, pts);
        const auto child = reverse_step(eta, RenewalTrace{window, std::move(pts), RenewalLaw::rho});
        conditional += p * mass(child);
        next[{child.offset, child.weights}] += prob * p;
      }
      if (conditional != mass(eta)) out.conditional_identity = false;
    }
    level = std::move(next);
    out.expected_mass.push_back(level_mass(t + 1));
    out.distinct_states.push_back(level.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Step-distribution dynamics over one reverse step

/// Right-continuous step function with atoms at (3/4)^t i, evaluated in
/// double precision from prefix sums.
class StepFunction {
 public:
  explicit StepFunction(const StepDistribution& f) : t_(f.t), prefix_(f.size()) {
    const double m = f.mass_scale();
    double acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      acc += m * static_cast<double>(f.weights[i]);
      prefix_[i] = acc;
    }
  }

  unsigned t() const noexcept { return t_; }
  std::size_t size() const noexcept { return prefix_.size(); }
  double total() const noexcept { return prefix_.empty() ? 0.0 : prefix_.back(); }
  double atom(std::size_t i) const { return std::pow(0.75, static_cast<double>(t_)) * static_cast<double>(i); }

  double at_index(long long k) const {
    if (k < 0 || prefix_.empty()) return 0.0;
    return prefix_[static_cast<std::size_t>(std::min<long long>(k, static_cast<long long>(prefix_.size()) - 1))];
  }

  double operator()(double x) const {
    return at_index(snapped_floor(x * std::pow(4.0 / 3.0, static_cast<double>(t_))));
  }

 private:
  unsigned t_;
  std::vector<double> prefix_;
};

/// sup_x |a(x) - b(x)|, attained at an atom of one of the two functions.
inline double sup_distance(const StepFunction& a, const StepFunction& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a(a.atom(i)) - b(a.atom(i))));
  for (std::size_t i = 0; i < b.size(); ++i) d = std::max(d, std::abs(a(b.atom(i)) - b(b.atom(i))));
  return d;
}

/// Quantities of one reverse step t -> t+1 seen through the trimmed step
/// distributions: the mass-correction term alpha_x, the location shift
/// beta_x and the two sides of
///   F_t(x) + alpha_x = F_{t+1}(x + beta_x).
/// Trace indices are taken relative to the first nonzero weight at time t.
/// Gap variant only.
class LemmaStep {
 public:
  LemmaStep(const WeightSequence& eta, const RenewalTrace& rho, const WeightSequence& next)
      : before_(step_distribution(eta)),
        after_(step_distribution(next)),
        f_before_(before_),
        f_after_(after_),
        rho_(rho),
        shift_(first_nonzero(eta)) {
    if (eta.variant != WeightVariant::gap || next.variant != WeightVariant::gap) {
      throw std::invalid_argument("lemma dynamics are defined for the gap variant");
    }
    if (next.t != eta.t + 1) throw std::invalid_argument("lemma step needs consecutive times");
    if (rho.law != RenewalLaw::rho || !rho.window.covers(layout_range(eta))) {
      throw std::invalid_argument("lemma step needs the rho trace that drove the step");
    }
    const auto L = before_.size();
    const double up = std::pow(4.0 / 3.0, static_cast<double>(t()));
    const double down = std::pow(0.75, static_cast<double>(t()));
    alpha_prefix_.resize(L);
    count_prefix_.resize(L);
    double acc = 0.0;
    long long count = 0;
    for (std::size_t n = 0; n < L; ++n) {
      const auto nn = static_cast<double>(n);
      const bool in = in_rho(static_cast<long long>(n));
      const double increment = f_before_(down * nn) - f_before_(down * (nn - 1.0));
      acc += up * increment * ((in ? 1.0 : 0.0) - 1.0 / 3.0);
      count += in ? 1 : 0;
      alpha_prefix_[n] = acc;
      count_prefix_[n] = count;
    }
  }

  unsigned t() const noexcept { return before_.t; }
  const StepDistribution& before() const noexcept { return before_; }
  const StepDistribution& after() const noexcept { return after_; }
  const StepFunction& before_function() const noexcept { return f_before_; }
  const StepFunction& after_function() const noexcept { return f_after_; }

  bool in_rho(long long n) const { return rho_.contains(n + shift_); }

  /// |rho ∩ [0, n]| in trimmed coordinates.
  long long count_upto(long long n) const {
    if (n < 0) return 0;
    if (n < static_cast<long long>(count_prefix_.size())) return count_prefix_[static_cast<std::size_t>(n)];
    return rho_.count_in(shift_, shift_ + n);
  }

  double alpha(double x) const {
    const long long m = f_before_.size() == 0 ? -1 : snapped_floor(x * up());
    if (m < 0) return 0.0;
    const auto k = static_cast<std::size_t>(std::min<long long>(m, static_cast<long long>(alpha_prefix_.size()) - 1));
    return std::pow(0.75, static_cast<double>(t() + 1)) * alpha_prefix_[k];
  }

  double beta(double x) const {
    const double u = x * up();
    const long long m = snapped_floor(u);
    return std::pow(0.75, static_cast<double>(t() + 1)) * (static_cast<double>(count_upto(m)) - u / 3.0);
  }

  double lhs(double x) const { return f_before_(x) + alpha(x); }
  double rhs(double x) const { return f_after_(x + beta(x)); }

  /// Mass of the slot tuple m shares with tuple m+1, which the right side
  /// leaves out: (3/8)^{t+1} eta_m for m = floor((4/3)^t x).
  double boundary(double x) const {
    const long long m = snapped_floor(x * up());
    if (m < 0 || m >= static_cast<long long>(before_.size())) return 0.0;
    return std::pow(0.375, static_cast<double>(t() + 1)) * static_cast<double>(before_.weights[static_cast<std::size_t>(m)]);
  }

  Rational exact_alpha(const Rational& x) const {
    const long long m = before_.index_of(x);
    if (m < 0 || alpha_prefix_.empty()) return 0;
    const auto k = static_cast<std::size_t>(std::min<long long>(m, static_cast<long long>(alpha_prefix_.size()) - 1));
    return Rational(pow_big(3, t() + 1), pow_big(4, t() + 1)) * exact_alpha_prefix()[k];
  }

  Rational exact_beta(const Rational& x) const {
    const Rational u = x * Rational(pow_big(4, t()), pow_big(3, t()));
    const auto m = static_cast<long long>(floor_rational(u));
    return Rational(pow_big(3, t() + 1), pow_big(4, t() + 1)) * (Rational(count_upto(m)) - u / 3);
  }

  Rational exact_lhs(const Rational& x) const { return before_.exact(x) + exact_alpha(x); }
  Rational exact_rhs(const Rational& x) const { return after_.exact(x + exact_beta(x)); }

  Rational exact_boundary(const Rational& x) const {
    const long long m = before_.index_of(x);
    if (m < 0 || m >= static_cast<long long>(before_.size())) return 0;
    return Rational(BigInt(before_.weights[static_cast<std::size_t>(m)]) * pow_big(3, t() + 1), pow_big(8, t() + 1));
  }

  /// Transform split of G_{t+1}(s): the atoms of F_t and the jumps of alpha,
  /// both carried to x + beta_x.
  std::pair<double, double> laplace_split(double s) const {
    double h_beta = 0.0, h_alpha = 0.0;
    const double up_t = up();
    const double scale = std::pow(0.75, static_cast<double>(t() + 1));
    for (std::size_t n = 0; n < before_.size(); ++n) {
      const double x = f_before_.atom(n);
      const double weight = std::exp(-s * (x + beta(x)));
      const double m = before_.mass(n);
      h_beta += m * weight;
      h_alpha += scale * up_t * m * ((in_rho(static_cast<long long>(n)) ? 1.0 : 0.0) - 1.0 / 3.0) * weight;
    }
    return {h_beta, h_alpha};
  }

 private:
  double up() const { return std::pow(4.0 / 3.0, static_cast<double>(t())); }

  const std::vector<Rational>& exact_alpha_prefix() const {
    if (exact_alpha_prefix_.size() == before_.size()) return exact_alpha_prefix_;
    const Rational down(pow_big(3, t()), pow_big(4, t()));
    const Rational up(pow_big(4, t()), pow_big(3, t()));
    Rational acc = 0;
    exact_alpha_prefix_.clear();
    for (std::size_t n = 0; n < before_.size(); ++n) {
      const auto nn = static_cast<long long>(n);
      const Rational increment = before_.exact(down * nn) - before_.exact(down * (nn - 1));
      acc += up * increment * (Rational(in_rho(nn) ? 1 : 0) - Rational(1, 3));
      exact_alpha_prefix_.push_back(acc);
    }
    return exact_alpha_prefix_;
  }

  StepDistribution before_;
  StepDistribution after_;
  StepFunction f_before_;
  StepFunction f_after_;
  RenewalTrace rho_;
  long long shift_;
  std::vector<double> alpha_prefix_;
  mutable std::vector<Rational> exact_alpha_prefix_;
  std::vector<long long> count_prefix_;
};

struct LemmaResidual {
  unsigned t = 0;
  std::size_t grid_points = 0;
  double x_max = 0.0;
  double max_residual = 0.0;   // |F_t(x) + alpha_x - F_{t+1}(x + beta_x)|
  double max_relative = 0.0;   // divided by the total mass of F_{t+1}
  double worst_x = 0.0;
  double max_corrected = 0.0;  // same, with the shared-slot term added to the right side
};

struct ExactLemmaResidual {
  unsigned t = 0;
  std::size_t grid_points = 0;
  Rational max_residual;
  Rational max_corrected;
};

namespace detail {

inline void require_recorded(const ReverseTrajectory& traj) {
  if (traj.states.size() != traj.ledger.size() || traj.traces.size() + 1 != traj.states.size()) {
    throw std::invalid_argument("lemma check needs every state and its rho trace (trace missing)");
  }
}

}  // namespace detail

/// Residual of the step identity for every step of a recorded trajectory on
/// an evenly spaced grid over [0, (3/4)^t len].
inline std::vector<LemmaResidual> lemma_identity_check(const ReverseTrajectory& traj, std::size_t grid_points = 1000) {
  detail::require_recorded(traj);
  if (grid_points < 2) throw std::invalid_argument("lemma grid needs at least two points");
  std::vector<LemmaResidual> out;
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    const LemmaStep step(traj.states[k], traj.traces[k], traj.states[k + 1]);
    LemmaResidual r;
    r.t = step.t();
    r.grid_points = grid_points;
    r.x_max = std::pow(0.75, static_cast<double>(r.t)) * static_cast<double>(step.before().size());
    const double total = step.after_function().total();
    for (std::size_t g = 0; g < grid_points; ++g) {
      const double x = r.x_max * static_cast<double>(g) / static_cast<double>(grid_points - 1);
      const double lhs = step.lhs(x);
      const double rhs = step.rhs(x);
      const double res = std::abs(lhs - rhs);
      if (res > r.max_residual) {
        r.max_residual = res;
        r.worst_x = x;
      }
      r.max_corrected = std::max(r.max_corrected, std::abs(lhs - rhs - step.boundary(x)));
    }
    r.max_relative = r.max_residual / total;
    out.push_back(r);
  }
  return out;
}

/// Exact-rational version on a grid of `grid_points` rational points over
/// [0, (3/4)^t len] together with every atom of F_t.
inline std::vector<ExactLemmaResidual> lemma_identity_exact(const ReverseTrajectory& traj,
                                                            std::size_t grid_points = 1000) {
  detail::require_recorded(traj);
  if (grid_points < 2) throw std::invalid_argument("lemma grid needs at least two points");
  std::vector<ExactLemmaResidual> out;
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    const LemmaStep step(traj.states[k], traj.traces[k], traj.states[k + 1]);
    const unsigned t = step.t();
    const auto len = static_cast<long long>(step.before().size());
    const Rational unit(pow_big(3, t), pow_big(4, t));
    std::vector<Rational> grid;
    for (std::size_t g = 0; g < grid_points; ++g)
      grid.push_back(unit * Rational(static_cast<long long>(g) * len, static_cast<long long>(grid_points - 1)));
    for (long long n = 0; n < len; ++n) grid.push_back(unit * n);
    ExactLemmaResidual r;
    r.t = t;
    r.grid_points = grid.size();
    for (const auto& x : grid) {
      const Rational diff = step.exact_lhs(x) - step.exact_rhs(x);
      r.max_residual = std::max(r.max_residual, diff < 0 ? Rational(-diff) : diff);
      const Rational corrected = diff - step.exact_boundary(x);
      r.max_corrected = std::max(r.max_corrected, corrected < 0 ? Rational(-corrected) : corrected);
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Laplace transforms along a reverse trajectory

struct LaplacePoint {
  unsigned t = 0;
  double s = 0.0;
  double transform = 0.0;     // G_t(s)
  double mass = 0.0;          // M^(t)
  double h_beta = 0.0;        // split of G_t from step t-1 -> t (zero at t = 0)
  double h_alpha = 0.0;
  double split_gap = 0.0;     // |H_beta + H_alpha - G_t(s)|
  double split_bound = 0.0;   // M^(t) (1 - exp(-s (3/4)^t))
};

inline std::vector<LaplacePoint> laplace_trajectory(const ReverseTrajectory& traj, const std::vector<double>& s_grid) {
  detail::require_recorded(traj);
  std::vector<LaplacePoint> out;
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const auto f = step_distribution(traj.states[k]);
    std::optional<LemmaStep> step;
    if (k > 0) step.emplace(traj.states[k - 1], traj.traces[k - 1], traj.states[k]);
    const double m = static_cast<double>(traj.ledger[k].mass);
    for (double s : s_grid) {
      LaplacePoint p;
      p.t = f.t;
      p.s = s;
      p.transform = laplace_transform(f, s);
      p.mass = m;
      if (step) {
        std::tie(p.h_beta, p.h_alpha) = step->laplace_split(s);
        p.split_gap = std::abs(p.h_beta + p.h_alpha - p.transform);
        p.split_bound = m * (1.0 - std::exp(-s * std::pow(0.75, static_cast<double>(f.t))));
      }
      out.push_back(p);
    }
  }
  return out;
}

struct LaplaceSummaryRow {
  unsigned t = 0;               // increments compare t and t+1
  double s = 0.0;
  double median_increment = 0.0;
  double q90_increment = 0.0;
  double max_split_gap = 0.0;   // for the split of G_{t+1}
  double max_split_excess = 0.0;  // max(gap - bound), <= 0 when the bound holds
};

/// Per (t, s) quantiles of |G_{t+1}(s) - G_t(s)| across replicas.
inline std::vector<LaplaceSummaryRow> summarize_laplace(const std::vector<std::vector<LaplacePoint>>& replicas,
                                                        std::size_t s_count) {
  if (replicas.empty()) return {};
  const std::size_t rows = replicas.front().size();
  std::vector<LaplaceSummaryRow> out;
  for (std::size_t k = 0; k + s_count < rows; ++k) {
    std::vector<double> inc;
    LaplaceSummaryRow r;
    r.t = replicas.front()[k].t;
    r.s = replicas.front()[k].s;
    r.max_split_excess = -std::numeric_limits<double>::infinity();
    for (const auto& rep : replicas) {
      const auto& a = rep[k];
      const auto& b = rep[k + s_count];
      inc.push_back(std::abs(b.transform - a.transform));
      r.max_split_gap = std::max(r.max_split_gap, b.split_gap);
      r.max_split_excess = std::max(r.max_split_excess, b.split_gap - b.split_bound);
    }
    r.median_increment = quantile(inc, 0.5);
    r.q90_increment = quantile(inc, 0.9);
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Duality

struct DualityOptions {
  long long n_points = 1000;
  std::size_t lhs_replicas = 10000;
  std::size_t rhs_replicas = 10000;
  GapLaw law = GapLaw::exponential();
};

struct DualityReport {
  int t = 0;
  std::string eta0;
  MeanEstimate lhs;
  MeanEstimate rhs;
  double difference = 0.0;
  double pooled_se = 0.0;
  double shared_sample_max_diff = 0.0;  // t = 0 only: both sides on the same gaps
};

/// Forward side: <eta0, Gamma^(t)> at a uniform Palm point of a forward run.
/// Reverse side: <(3/8)^t eta^(t), Gamma^(0)> against fresh i.i.d. gaps.
inline DualityReport duality_check(const WeightSequence& eta0, int t, const DualityOptions& opt, std::uint64_t seed,
                                   unsigned threads) {
  if (t < 0) throw std::invalid_argument("duality time must be nonnegative");
  DualityReport rep;
  rep.t = t;
  rep.eta0 = describe(eta0);
  const std::string tag = "duality/" + rep.eta0 + "/" + std::to_string(t);
  ForwardOptions fopt;
  fopt.n_points = opt.n_points;
  fopt.law = opt.law;
  fopt.steps = t;
  fopt.checkpoints = {t};

  const auto lhs = parallel_map(opt.lhs_replicas, threads, [&](std::size_t r) {
    auto rng = replica_stream(seed, tag + "/lhs", r);
    const auto traj = run_forward(fopt, rng);
    const auto& g = traj.at(t).gaps;
    return inner_product(eta0, g, static_cast<long long>(rng.below(g.size())));
  });
  const auto rhs = parallel_map(opt.rhs_replicas, threads, [&](std::size_t r) {
    auto rng = replica_stream(seed, tag + "/rhs", r);
    const auto eta = run_reverse(eta0, t, rng, false).states.back();
    GapSequence fresh;
    fresh.gaps.resize(std::max<std::size_t>(eta.width(), 1));
    for (auto& x : fresh.gaps) x = opt.law.sample(rng);
    return inner_product(eta, fresh, -eta.lo());
  });
  rep.lhs = estimate_mean(lhs);
  rep.rhs = estimate_mean(rhs);
  rep.difference = rep.lhs.mean - rep.rhs.mean;
  rep.pooled_se = std::sqrt(rep.lhs.se * rep.lhs.se + rep.rhs.se * rep.rhs.se);

  if (t == 0) {
    const auto diffs = parallel_map(opt.lhs_replicas, threads, [&](std::size_t r) {
      auto rng = replica_stream(seed, tag + "/shared", r);
      const auto g = run_forward(fopt, rng).at(0).gaps;
      const auto palm = static_cast<long long>(rng.below(g.size()));
      const auto eta = run_reverse(eta0, 0, rng, false).states.back();
      return std::abs(inner_product(eta0, g, palm) - inner_product(eta, g, palm));
    });
    rep.shared_sample_max_diff = *std::max_element(diffs.begin(), diffs.end());
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Cluster sizes

struct ClusterScalingOptions {
  long long n_points = 100000;
  int steps = 20;
  std::size_t replicas = 1000;
  int lag = 5;
  std::vector<int> cauchy_starts{5, 10, 15};
  GapLaw law = GapLaw::exponential();
};

struct ClusterScalingReport {
  std::vector<MeanEstimate> scaled_mean;  // (3/4)^t G^(t), t = 0..steps
  std::vector<double> scaled_variance;
  std::vector<MeanEstimate> forward_cauchy;  // E|Y_s - Y_{s+lag}|^2 following the tagged point's cluster
  std::vector<MeanEstimate> reverse_cauchy;  // same statistic for the cluster-variant mass martingale
};

/// G^(t) is the multiplicity of a uniformly chosen current point.
inline ClusterScalingReport cluster_scaling_diagnostic(const ClusterScalingOptions& opt, std::uint64_t seed,
                                                       unsigned threads) {
  struct Replica {
    std::vector<double> scaled;
    std::vector<double> fwd;
    std::vector<double> rev;
  };
  for (int s : opt.cauchy_starts)
    if (s < 0 || s + opt.lag > opt.steps) throw std::invalid_argument("cauchy window outside the run");
  const std::size_t K = opt.cauchy_starts.size();
  const auto reps = parallel_map(opt.replicas, threads, [&](std::size_t r) {
    auto rng = replica_stream(seed, "cluster-scaling", r);
    Replica out;
    out.fwd.assign(K, 0.0);
    out.rev.assign(K, 0.0);
    std::vector<long long> tag(K, -1);
    std::vector<double> start_value(K, 0.0);
    auto state = ForwardState::from_gaps(sample_gaps(opt.n_points, opt.law, rng));
    for (int t = 0; t <= opt.steps; ++t) {
      const double scale = std::pow(0.75, t);
      const auto& mult = state.genealogy.multiplicity;
      out.scaled.push_back(scale * static_cast<double>(mult[rng.below(mult.size())]));
      for (std::size_t k = 0; k < K; ++k) {
        if (t == opt.cauchy_starts[k]) {
          tag[k] = static_cast<long long>(rng.below(mult.size()));
          start_value[k] = scale * static_cast<double>(mult[static_cast<std::size_t>(tag[k])]);
        }
        if (t == opt.cauchy_starts[k] + opt.lag) {
          const double y = scale * static_cast<double>(mult[static_cast<std::size_t>(tag[k])]);
          out.fwd[k] = (y - start_value[k]) * (y - start_value[k]);
        }
      }
      if (t == opt.steps) break;
      const auto rec = forward_step(state, Algorithm::alg1, IntensityMode::theoretical, rng);
      for (auto& g : tag)
        if (g >= 0) g = static_cast<long long>(rec.merges.survivor_map[static_cast<std::size_t>(g)]);
    }
    auto rev_rng = rng.fork(1);
    const auto rev = run_reverse(WeightSequence::unit(0, WeightVariant::cluster), opt.steps, rev_rng, false);
    for (std::size_t k = 0; k < K; ++k) {
      const double a = static_cast<double>(rev.ledger[static_cast<std::size_t>(opt.cauchy_starts[k])].mass);
      const double b = static_cast<double>(rev.ledger[static_cast<std::size_t>(opt.cauchy_starts[k] + opt.lag)].mass);
      out.rev[k] = (a - b) * (a - b);
    }
    return out;
  });

  ClusterScalingReport rep;
  for (int t = 0; t <= opt.steps; ++t) {
    MeanAccumulator acc;
    for (const auto& r : reps) acc.add(r.scaled[static_cast<std::size_t>(t)]);
    rep.scaled_mean.push_back({acc.mean(), acc.stderr_mean(), acc.count()});
    rep.scaled_variance.push_back(acc.variance());
  }
  for (std::size_t k = 0; k < K; ++k) {
    MeanAccumulator f, b;
    for (const auto& r : reps) {
      f.add(r.fwd[k]);
      b.add(r.rev[k]);
    }
    rep.forward_cauchy.push_back({f.mean(), f.stderr_mean(), f.count()});
    rep.reverse_cauchy.push_back({b.mean(), b.stderr_mean(), b.count()});
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Joint behaviour of the Palm gap and its cluster size

struct JointRow {
  int t = 0;
  double spearman = 0.0;
  double copula_shift = 0.0;  // copula distance to the previous checkpoint
  std::size_t samples = 0;
};

/// Pairs (gap to the right of a uniform point, (3/4)^t times its
/// multiplicity) taken from the same forward trajectories at each checkpoint.
inline std::vector<JointRow> joint_diagnostic(const GapLaw& law, long long n, const std::vector<int>& checkpoints,
                                              std::size_t replicas, std::uint64_t seed, unsigned threads) {
  if (checkpoints.empty()) return {};
  ForwardOptions opt;
  opt.n_points = n;
  opt.law = law;
  opt.steps = *std::max_element(checkpoints.begin(), checkpoints.end());
  opt.checkpoints = checkpoints;
  const auto samples = parallel_map(replicas, threads, [&](std::size_t r) {
    auto rng = replica_stream(seed, "joint", r);
    const auto traj = run_forward(opt, rng);
    std::vector<std::pair<double, double>> out;
    for (int t : checkpoints) {
      const auto& snap = traj.at(t);
      const auto p = rng.below(snap.gaps.size());
      out.emplace_back(snap.gaps[p], std::pow(0.75, t) * static_cast<double>(snap.genealogy.multiplicity[p]));
    }
    return out;
  });
  std::vector<JointRow> rows;
  std::vector<std::pair<double, double>> previous;
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    std::vector<std::pair<double, double>> pairs;
    std::vector<double> xs, ys;
    for (const auto& s : samples) {
      pairs.push_back(s[k]);
      xs.push_back(s[k].first);
      ys.push_back(s[k].second);
    }
    JointRow row;
    row.t = checkpoints[k];
    row.samples = pairs.size();
    row.spearman = spearman(xs, ys);
    row.copula_shift = previous.empty() ? 0.0 : copula_distance(previous, pairs);
    rows.push_back(row);
    previous = std::move(pairs);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Palm gap samples

struct PalmSample {
  std::vector<double> gaps;                          // all gaps of every replica
  std::vector<std::pair<double, double>> neighbours;  // adjacent pairs, evenly subsampled
};

/// Pools final gap sequences (empirical rescale) across replicas.
inline PalmSample palm_gap_sample(const GapLaw& law, long long n, int steps, std::size_t replicas, Algorithm alg,
                                  std::string_view tag, std::uint64_t seed, unsigned threads,
                                  std::size_t max_pairs = 2000) {
  ForwardOptions opt;
  opt.n_points = n;
  opt.law = law;
  opt.algorithm = alg;
  opt.mode = IntensityMode::empirical;
  opt.steps = steps;
  opt.checkpoints = {steps};
  const auto finals = parallel_map(replicas, threads, [&](std::size_t r) {
    auto rng = replica_stream(seed, tag, r);
    return run_forward(opt, rng).at(steps).gaps;
  });
  PalmSample out;
  std::size_t total = 0;
  for (const auto& g : finals) total += g.size();
  const std::size_t stride = std::max<std::size_t>(1, total / std::max<std::size_t>(max_pairs, 1));
  std::size_t k = 0;
  for (const auto& g : finals) {
    for (std::size_t i = 0; i < g.size(); ++i, ++k) {
      out.gaps.push_back(g[i]);
      if (k % stride == 0 && out.neighbours.size() < max_pairs) out.neighbours.emplace_back(g[i], g[(i + 1) % g.size()]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact dynamics versus the literal operator pipeline

struct PipelineComparison {
  int t = 0;
  RenewalLaw fold_law = RenewalLaw::tau;
  double ks = 0.0;
  double critical = 0.0;
  bool within = true;
  double exact_mean = 0.0;
  double literal_mean = 0.0;
  std::size_t exact_samples = 0;
  std::size_t literal_samples = 0;
};

/// Both pipelines start from the same initial gaps in every replica and use
/// empirical rescaling. One row per folding-trace law.
inline std::vector<PipelineComparison> pipeline_comparison(const GapLaw& law, int t, long long n, std::size_t replicas,
                                                           std::uint64_t seed, unsigned threads) {
  if (t < 0) throw std::invalid_argument("pipeline comparison needs t >= 0");
  std::vector<PipelineComparison> rows;
  for (auto fold_law : {RenewalLaw::tau, RenewalLaw::rho}) {
    const std::string tag = std::string("pipeline/") + std::string(to_string(fold_law));
    const auto both = parallel_map(replicas, threads, [&](std::size_t r) {
      auto rng = replica_stream(seed, tag, r);
      const auto g0 = sample_gaps(n, law, rng, IntensityMode::empirical);
      auto exact_rng = rng.fork(1);
      auto literal_rng = rng.fork(2);
      ForwardState state = ForwardState::from_gaps(g0);
      for (int s = 0; s < t; ++s) forward_step(state, Algorithm::alg1, IntensityMode::empirical, exact_rng);
      GapSequence lit = g0;
      for (int s = 0; s < t; ++s) {
        const auto averaged = averaging_operator(lit, literal_rng);
        const auto trace = sample_stationary_trace({0, static_cast<long long>(averaged.size()) - 1}, fold_law,
                                                   literal_rng);
        lit = folding_operator(averaged, trace, IntensityMode::empirical);
      }
      return std::make_pair(std::move(state.gaps.gaps), std::move(lit.gaps));
    });
    std::vector<double> exact, literal;
    for (const auto& [a, b] : both) {
      exact.insert(exact.end(), a.begin(), a.end());
      literal.insert(literal.end(), b.begin(), b.end());
    }
    PipelineComparison row;
    row.t = t;
    row.fold_law = fold_law;
    row.exact_samples = exact.size();
    row.literal_samples = literal.size();
    row.exact_mean = estimate_mean(exact).mean;
    row.literal_mean = estimate_mean(literal).mean;
    row.ks = ks_distance(EmpiricalDistribution(std::move(exact)), EmpiricalDistribution(std::move(literal)));
    row.critical = ks_critical_value(row.exact_samples, row.literal_samples, 1e-3);
    row.within = row.ks <= row.critical;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace clusterflow
