#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "clusterflow/analysis.hpp"
#include "clusterflow/io.hpp"

namespace clusterflow {

/// Problem sizes of the verification suite. Defaults are the full-size runs.
struct AcceptanceConfig {
  unsigned exact_martingale_steps = 3;

  std::size_t martingale_replicas = 10000;
  int martingale_steps = 20;

  long long merge_points = 100000;

  std::size_t equivalence_replicas = 100;
  long long equivalence_points = 1000;
  int equivalence_steps = 10;

  long long initial_law_points = 200000;
  int initial_law_steps = 25;
  std::size_t initial_law_replicas = 8;

  int lemma_steps = 12;
  std::size_t lemma_grid = 1000;
  std::size_t lemma_replicas = 100;
  int lemma_exact_steps = 4;
  std::size_t lemma_exact_grid = 100;

  std::vector<std::vector<long long>> duality_eta0{{0}, {0, 1}, {0, 3}};
  std::vector<int> duality_times{1, 2, 3};
  std::size_t duality_replicas = 10000;
  long long duality_points = 1000;

  long long cluster_points = 100000;
  int cluster_steps = 20;
  std::size_t cluster_replicas = 1000;

  std::size_t step_increments_replicas = 1000;
  int step_increments_steps = 20;
  int step_increments_from = 10;
  double step_increments_fraction = 0.9;

  std::vector<double> laplace_s{0.0, 0.5, 1.0, 2.0, 4.0};
  std::size_t laplace_replicas = 1000;
  int laplace_steps = 20;

  long long pipeline_points = 100000;
  std::size_t pipeline_replicas = 1;

  std::vector<int> joint_checkpoints{5, 10, 15, 20};
  std::size_t joint_replicas = 1000;
  long long joint_points = 20000;

  unsigned determinism_threads = 4;

  /// Reduced sizes, used by the determinism check and quick runs.
  static AcceptanceConfig smoke() {
    AcceptanceConfig c;
    c.exact_martingale_steps = 2;
    c.martingale_replicas = 200;
    c.martingale_steps = 8;
    c.merge_points = 20000;
    c.equivalence_replicas = 4;
    c.equivalence_points = 200;
    c.equivalence_steps = 4;
    c.initial_law_points = 4000;
    c.initial_law_steps = 6;
    c.initial_law_replicas = 2;
    c.lemma_steps = 5;
    c.lemma_grid = 100;
    c.lemma_replicas = 4;
    c.lemma_exact_steps = 2;
    c.lemma_exact_grid = 20;
    c.duality_times = {1};
    c.duality_replicas = 200;
    c.duality_points = 200;
    c.cluster_points = 2000;
    c.cluster_steps = 8;
    c.cluster_replicas = 20;
    c.step_increments_replicas = 20;
    c.step_increments_steps = 8;
    c.step_increments_from = 4;
    c.laplace_replicas = 20;
    c.laplace_steps = 6;
    c.pipeline_points = 2000;
    c.joint_checkpoints = {2, 4};
    c.joint_replicas = 50;
    c.joint_points = 500;
    c.determinism_threads = 2;
    return c;
  }
};

struct Verdict {
  int criterion = 0;  // 0 for diagnostics outside the numbered list
  std::string check;
  bool asserting = true;
  double statistic = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string detail;
};

struct SuiteOptions {
  std::uint64_t seed = 20240611;
  unsigned threads = 1;
  std::string filter;   // substring of check names; empty runs everything
  bool nested = false;  // skip the determinism check
  int criterion = -1;   // run only this criterion number when >= 0
};

struct SuiteResult {
  std::vector<Verdict> verdicts;
  Artifacts artifacts;

  bool all_asserts_pass() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return !v.asserting || v.pass; });
  }
};

inline std::string verdict_json(const std::vector<Verdict>& verdicts) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& v : verdicts) {
    nlohmann::ordered_json j;
    j["check"] = v.check;
    j["kind"] = v.asserting ? "assert" : "report";
    j["statistic"] = std::isfinite(v.statistic) ? nlohmann::ordered_json(v.statistic) : nlohmann::ordered_json(format_double(v.statistic));
    j["threshold"] = v.threshold;
    j["pass"] = v.pass;
    j["criterion"] = v.criterion;
    if (!v.detail.empty()) j["detail"] = v.detail;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

inline SuiteResult run_suite(const AcceptanceConfig& cfg, const SuiteOptions& opt);

namespace acceptance {

struct Context {
  const AcceptanceConfig& cfg;
  const SuiteOptions& opt;
  SuiteResult& result;

  void add(Verdict v) { result.verdicts.push_back(std::move(v)); }
  Artifacts& files() { return result.artifacts; }
};

inline Verdict at_most(int criterion, std::string check, double stat, double threshold, bool asserting = true,
                       std::string detail = {}) {
  return {criterion, std::move(check), asserting, stat, threshold, stat <= threshold, std::move(detail)};
}

inline Verdict at_least(int criterion, std::string check, double stat, double threshold, bool asserting = true,
                        std::string detail = {}) {
  return {criterion, std::move(check), asserting, stat, threshold, stat >= threshold, std::move(detail)};
}

// 1 -------------------------------------------------------------------------
inline void martingale_exact(Context& c) {
  const auto r = exact_martingale(WeightSequence::unit(), c.cfg.exact_martingale_steps);
  CsvWriter csv({"t", "expected_mass_num", "expected_mass_den", "distinct_states"});
  double worst = 0.0;
  bool exact = r.conditional_identity;
  for (std::size_t t = 0; t < r.expected_mass.size(); ++t) {
    const auto& m = r.expected_mass[t];
    csv.row(t, BigInt(boost::multiprecision::numerator(m)), BigInt(boost::multiprecision::denominator(m)),
            r.distinct_states[t]);
    worst = std::max(worst, std::abs(static_cast<double>(m - 1)));
    exact = exact && m == 1;
  }
  c.files()["martingale_exact.csv"] = csv.str();
  Verdict v = at_most(1, "martingale_exact", worst, 0.0);
  v.pass = exact;
  v.detail = "E M^(t) for t <= " + std::to_string(c.cfg.exact_martingale_steps) + " by enumeration";
  c.add(v);
}

// 2 -------------------------------------------------------------------------
inline void martingale_mc(Context& c) {
  const int T = c.cfg.martingale_steps;
  struct Row {
    std::vector<double> mass;
    bool bounds_ok = true;
    std::string error;
  };
  const auto rows = parallel_map(c.cfg.martingale_replicas, c.opt.threads, [&](std::size_t r) {
    auto rng = replica_stream(c.opt.seed, "martingale-mc", r);
    Row row;
    try {
      const auto traj = run_reverse(WeightSequence::unit(), T, rng, false);
      for (const auto& l : traj.ledger) row.mass.push_back(static_cast<double>(l.mass));
    } catch (const std::logic_error& e) {
      row.bounds_ok = false;
      row.error = e.what();
      row.mass.assign(static_cast<std::size_t>(T) + 1, 1.0);
    }
    return row;
  });
  std::size_t violations = 0;
  std::string first_error;
  for (const auto& r : rows) {
    if (!r.bounds_ok) {
      ++violations;
      if (first_error.empty()) first_error = r.error;
    }
  }
  CsvWriter csv({"t", "mean", "se", "variance", "variance_first_half", "increment_mean", "increment_se",
                 "max_abs_increment"});
  double z_max = 0.0, incr_z_max = 0.0;
  std::vector<double> variance, max_incr;
  double stability = 0.0;
  const std::size_t half = rows.size() / 2;
  for (int t = 0; t <= T; ++t) {
    MeanAccumulator acc, first, incr;
    double mx = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const double m = rows[k].mass[static_cast<std::size_t>(t)];
      acc.add(m);
      if (k < half) first.add(m);
      if (t > 0) {
        const double d = m - rows[k].mass[static_cast<std::size_t>(t - 1)];
        incr.add(d);
        mx = std::max(mx, std::abs(d));
      }
    }
    if (t > 0) {
      z_max = std::max(z_max, acc.stderr_mean() > 0 ? std::abs(acc.mean() - 1.0) / acc.stderr_mean()
                                                    : (acc.mean() == 1.0 ? 0.0 : INFINITY));
      incr_z_max = std::max(incr_z_max, incr.stderr_mean() > 0 ? std::abs(incr.mean()) / incr.stderr_mean() : 0.0);
      max_incr.push_back(mx);
    }
    variance.push_back(acc.variance());
    if (acc.variance() > 0) stability = std::max(stability, std::abs(first.variance() - acc.variance()) / acc.variance());
    csv.row(t, acc.mean(), acc.stderr_mean(), acc.variance(), first.variance(), incr.mean(), incr.stderr_mean(), mx);
  }
  c.files()["martingale_mc.csv"] = csv.str();
  c.add(at_most(2, "martingale_mean", z_max, 4.0, true, "max_t |mean M^(t) - 1| / SE"));
  c.add(at_most(2, "martingale_bounds", static_cast<double>(violations), 0.0, true,
                violations == 0 ? "max weight <= 2^t and sum_sq <= (3/4)^t M on every step" : first_error));
  c.add(at_most(2, "martingale_increment_mean", incr_z_max, 4.0, false, "max_t |mean N^(t)| / SE"));
  std::size_t decreases = 0;
  for (std::size_t t = 1; t < variance.size(); ++t) decreases += variance[t] < variance[t - 1];
  c.add(at_most(2, "martingale_second_moment_nondecreasing", static_cast<double>(decreases), 0.0, false,
                "count of t with Var M^(t) below Var M^(t-1)"));
  c.add(at_most(2, "martingale_second_moment_stable", stability, 0.1, false,
                "max relative change of Var M^(t) between half and full replica sets"));
  // geometric decay rate of the largest increment, least squares on t >= T/4
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (std::size_t k = max_incr.size() / 4; k < max_incr.size(); ++k) {
    if (max_incr[k] <= 0) continue;
    const double x = static_cast<double>(k + 1), y = std::log(max_incr[k]);
    sx += x, sy += y, sxx += x * x, sxy += x * y, n += 1;
  }
  const double rate = n > 1 ? std::exp((n * sxy - sx * sy) / (n * sxx - sx * sx)) : 0.0;
  c.add(at_most(2, "martingale_increment_decay_rate", rate, std::sqrt(0.75), false, "fitted per-step ratio of max |N^(t)|"));
}

// 3 -------------------------------------------------------------------------
inline void merge_statistics(Context& c) {
  auto rng = replica_stream(c.opt.seed, "merge-statistics", 0);
  const auto n = c.cfg.merge_points;
  ForwardState state = ForwardState::from_gaps(sample_gaps(n, GapLaw::exponential(), rng));
  const auto rec = forward_step(state, Algorithm::alg1, IntensityMode::theoretical, rng);
  const auto& m = rec.merges.merged_gap_indices;
  const double fraction = static_cast<double>(m.size()) / static_cast<double>(n);
  const std::size_t K = 40;
  std::vector<std::size_t> counts(K + 1, 0);
  for (std::size_t k = 1; k < m.size(); ++k) ++counts[std::min(m[k] - m[k - 1], K)];
  std::vector<double> probs(K + 1, 0.0);
  for (std::size_t k = 2; k <= K; ++k) probs[k] = renewal_pmf_value(RenewalLaw::tau, static_cast<long long>(k));
  const std::size_t below_min = counts[0] + counts[1];
  std::vector<std::size_t> obs(counts.begin() + 2, counts.end());
  std::vector<double> pr(probs.begin() + 2, probs.end());
  const auto chi = chi_square_gof(obs, pr);
  CsvWriter csv({"distance", "observed", "expected"});
  const double total = static_cast<double>(m.size() > 0 ? m.size() - 1 : 0);
  for (std::size_t k = 2; k <= K; ++k) csv.row(k, counts[k], probs[k] * total);
  c.files()["merge_distances.csv"] = csv.str();
  c.add(at_most(3, "merge_fraction", std::abs(fraction - 0.25), 0.01, true, "|merged fraction - 1/4|"));
  Verdict chi_v = at_least(3, "merge_distance_chi_square", chi.p_value, 1e-3, true,
                           "p-value against (k-1) 2^-k, dof " + std::to_string(chi.dof));
  chi_v.pass = chi_v.pass && below_min == 0;
  c.add(chi_v);
  const double survivors = static_cast<double>(state.gaps.size());
  c.add(at_most(3, "survivor_band", std::abs(survivors - 0.75 * static_cast<double>(n)),
                3.0 * std::sqrt(3.0 * static_cast<double>(n) / 16.0), false, "|survivors - 3n/4|"));
}

// 4 -------------------------------------------------------------------------
inline double shared_coin_error(std::uint64_t seed, std::string_view tag, std::size_t r, long long n, int steps,
                                Algorithm alg, IntensityMode mode) {
  auto rng = replica_stream(seed, tag, r);
  ForwardState s = ForwardState::from_gaps(sample_gaps(n, GapLaw::exponential(), rng));
  PointConfiguration pc = PointConfiguration::from_gaps(s.gaps, s.anchor);
  double worst = 0.0;
  for (int t = 0; t < steps; ++t) {
    const auto dirs = sample_directions(s.gaps, alg, rng);
    auto [next, rec] = point_step(pc, dirs, mode);
    advance(s, dirs, mode);
    pc = std::move(next);
    const auto pg = pc.gaps(mode);
    if (pg.size() != s.gaps.size()) return INFINITY;
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < pg.size(); ++i) {
      diff = std::max(diff, std::abs(pg[i] - s.gaps[i]));
      scale = std::max(scale, std::abs(s.gaps[i]));
    }
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

inline void point_gap_equivalence(Context& c) {
  const auto& cfg = c.cfg;
  const auto errs = parallel_map(cfg.equivalence_replicas, c.opt.threads, [&](std::size_t r) {
    return shared_coin_error(c.opt.seed, "equivalence", r, cfg.equivalence_points, cfg.equivalence_steps,
                             Algorithm::alg1, IntensityMode::theoretical);
  });
  const auto errs2 = parallel_map(cfg.equivalence_replicas, c.opt.threads, [&](std::size_t r) {
    return shared_coin_error(c.opt.seed, "equivalence-alg2", r, cfg.equivalence_points, cfg.equivalence_steps,
                             Algorithm::alg2, IntensityMode::empirical);
  });
  CsvWriter csv({"replica", "alg1_max_relative_error", "alg2_max_relative_error"});
  for (std::size_t r = 0; r < errs.size(); ++r) csv.row(r, errs[r], errs2[r]);
  c.files()["equivalence.csv"] = csv.str();
  c.add(at_most(4, "point_gap_equivalence", *std::max_element(errs.begin(), errs.end()), 1e-12, true,
                "max relative error, every step and replica"));
  c.add(at_most(4, "point_gap_equivalence_alg2", *std::max_element(errs2.begin(), errs2.end()), 1e-12, false,
                "same with the gap-weighted rule and empirical rescale"));
}

// 5 -------------------------------------------------------------------------
inline std::vector<double> cdf_on_grid(const std::vector<double>& sample, const std::vector<double>& grid) {
  EmpiricalDistribution d(sample);
  std::vector<double> out;
  for (double x : grid) out.push_back(d.cdf(x));
  return out;
}

inline void initial_law_independence(Context& c) {
  const auto& cfg = c.cfg;
  const auto n = cfg.initial_law_points;
  const auto R = cfg.initial_law_replicas;
  auto arm = [&](const GapLaw& law, const char* name, int steps, Algorithm alg) {
    return palm_gap_sample(law, n, steps, R, alg, std::string("initial-law/") + name + "/" + std::string(to_string(alg)),
                           c.opt.seed, c.opt.threads);
  };
  auto ks = [](const PalmSample& a, const PalmSample& b) {
    return ks_distance(EmpiricalDistribution(a.gaps), EmpiricalDistribution(b.gaps));
  };
  CsvWriter csv({"algorithm", "t", "ks_exp_unif", "ks_exp_exp", "ratio", "energy_exp_unif", "energy_exp_exp",
                 "samples_exp", "samples_unif"});
  Figure fig("Palm gap distribution, exponential vs uniform start");
  double ratio_T = 0, ratio_0 = 0, ratio_alg2 = 0, energy_ratio = 0;
  for (auto alg : {Algorithm::alg1, Algorithm::alg2}) {
    for (int t : {0, cfg.initial_law_steps}) {
      if (alg == Algorithm::alg2 && t == 0) continue;
      const auto exp_a = arm(GapLaw::exponential(), "exp-a", t, alg);
      const auto exp_b = arm(GapLaw::exponential(), "exp-b", t, alg);
      const auto unif = arm(GapLaw::uniform(), "unif", t, alg);
      const double d = ks(exp_a, unif), base = ks(exp_a, exp_b);
      const double e = energy_distance(exp_a.neighbours, unif.neighbours);
      const double eb = energy_distance(exp_a.neighbours, exp_b.neighbours);
      const double ratio = base > 0 ? d / base : INFINITY;
      csv.row(std::string(to_string(alg)), t, d, base, ratio, e, eb, exp_a.gaps.size(), unif.gaps.size());
      if (alg == Algorithm::alg1 && t == 0) ratio_0 = ratio;
      if (alg == Algorithm::alg1 && t == cfg.initial_law_steps) {
        ratio_T = ratio;
        energy_ratio = eb > 0 ? e / eb : INFINITY;
      }
      if (alg == Algorithm::alg2) ratio_alg2 = ratio;

      const double hi = std::max(quantile(exp_a.gaps, 0.999), quantile(unif.gaps, 0.999));
      std::vector<double> grid;
      for (int k = 0; k <= 200; ++k) grid.push_back(hi * k / 200.0);
      Panel p;
      p.title = std::string(to_string(alg)) + ", t = " + std::to_string(t);
      p.x_label = "gap";
      p.y_label = "empirical CDF";
      p.series.push_back({"exponential start", grid, cdf_on_grid(exp_a.gaps, grid), true});
      p.series.push_back({"uniform start", grid, cdf_on_grid(unif.gaps, grid), true});
      fig.add_panel(std::move(p));
    }
  }
  c.files()["initial_law.csv"] = csv.str();
  fig.emit(c.files(), "gap_cdf");
  c.add(at_most(5, "initial_law_converged", ratio_T, 3.0, true, "KS(exp, unif) / KS(exp, exp) at the final step"));
  Verdict start = at_least(5, "initial_law_distinct_start", ratio_0, 10.0, true, "same ratio at t = 0");
  start.pass = ratio_0 > 10.0;
  c.add(start);
  c.add(at_most(5, "initial_law_adjacent_pairs", energy_ratio, 3.0, false, "energy distance ratio of adjacent gap pairs"));
  c.add(at_least(5, "initial_law_alg2_distinct", ratio_alg2, 3.0, false, "KS ratio under the gap-weighted rule"));
}

// 6 -------------------------------------------------------------------------
inline void lemma_identity(Context& c) {
  const auto& cfg = c.cfg;
  struct Row {
    std::vector<LemmaResidual> fl;
    std::vector<ExactLemmaResidual> ex;
  };
  const auto rows = parallel_map(cfg.lemma_replicas, c.opt.threads, [&](std::size_t r) {
    auto rng = replica_stream(c.opt.seed, "lemma", r);
    const auto traj = run_reverse(WeightSequence::unit(), cfg.lemma_steps, rng);
    ReverseTrajectory head;
    const auto k = static_cast<std::size_t>(std::min(cfg.lemma_exact_steps, cfg.lemma_steps)) + 1;
    head.states.assign(traj.states.begin(), traj.states.begin() + static_cast<std::ptrdiff_t>(k + 1 <= traj.states.size() ? k + 1 : traj.states.size()));
    head.ledger.assign(traj.ledger.begin(), traj.ledger.begin() + static_cast<std::ptrdiff_t>(head.states.size()));
    head.traces.assign(traj.traces.begin(), traj.traces.begin() + static_cast<std::ptrdiff_t>(head.states.size() - 1));
    return Row{lemma_identity_check(traj, cfg.lemma_grid), lemma_identity_exact(head, cfg.lemma_exact_grid)};
  });
  CsvWriter csv({"replica", "t", "max_residual", "max_relative", "worst_x", "max_corrected"});
  CsvWriter exact_csv({"replica", "t", "max_residual_num", "max_residual_den", "max_corrected_num", "max_corrected_den"});
  double max_rel = 0.0, max_corr = 0.0;
  Rational max_exact = 0, max_exact_corr = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const auto& l : rows[r].fl) {
      csv.row(r, l.t, l.max_residual, l.max_relative, l.worst_x, l.max_corrected);
      max_rel = std::max(max_rel, l.max_relative);
      max_corr = std::max(max_corr, l.max_corrected);
    }
    for (const auto& e : rows[r].ex) {
      exact_csv.row(r, e.t, BigInt(boost::multiprecision::numerator(e.max_residual)),
                    BigInt(boost::multiprecision::denominator(e.max_residual)),
                    BigInt(boost::multiprecision::numerator(e.max_corrected)),
                    BigInt(boost::multiprecision::denominator(e.max_corrected)));
      max_exact = std::max(max_exact, e.max_residual);
      max_exact_corr = std::max(max_exact_corr, e.max_corrected);
    }
  }
  c.files()["lemma.csv"] = csv.str();
  c.files()["lemma_exact.csv"] = exact_csv.str();
  c.add(at_most(6, "lemma_identity", max_rel, 1e-9, true, "max |F_t(x) + alpha - F_{t+1}(x + beta)| / mass"));
  c.add(at_most(6, "lemma_identity_exact", static_cast<double>(max_exact), 0.0, true,
                "rational residual for t <= " + std::to_string(cfg.lemma_exact_steps)));
  c.add(at_most(6, "lemma_identity_with_shared_slot", max_corr, 1e-9, false,
                "residual after adding (3/8)^{t+1} eta_m to the right side"));
  c.add(at_most(6, "lemma_identity_with_shared_slot_exact", static_cast<double>(max_exact_corr), 0.0, false));
}

// 7 -------------------------------------------------------------------------
inline void duality(Context& c) {
  const auto& cfg = c.cfg;
  DualityOptions opt;
  opt.n_points = cfg.duality_points;
  opt.lhs_replicas = cfg.duality_replicas;
  opt.rhs_replicas = cfg.duality_replicas;
  CsvWriter csv({"eta0", "t", "lhs_mean", "lhs_se", "rhs_mean", "rhs_se", "difference", "pooled_se",
                 "shared_sample_max_diff", "lhs_replicas", "rhs_replicas"});
  std::vector<int> times{0};
  times.insert(times.end(), cfg.duality_times.begin(), cfg.duality_times.end());
  for (const auto& idx : cfg.duality_eta0) {
    const auto eta0 = WeightSequence::from_indices(idx);
    for (int t : times) {
      const auto rep = duality_check(eta0, t, opt, c.opt.seed, c.opt.threads);
      csv.row(rep.eta0, t, rep.lhs.mean, rep.lhs.se, rep.rhs.mean, rep.rhs.se, rep.difference, rep.pooled_se,
              rep.shared_sample_max_diff, rep.lhs.count, rep.rhs.count);
      const std::string name = "duality_" + rep.eta0 + "_t" + std::to_string(t);
      if (t == 0) {
        c.add(at_most(7, name, rep.shared_sample_max_diff, 0.0, true, "both sides on shared samples"));
      } else {
        c.add(at_most(7, name, std::abs(rep.difference) / rep.pooled_se, 4.0, true, "|LHS - RHS| / pooled SE"));
      }
    }
  }
  c.files()["duality.csv"] = csv.str();
}

// 8 -------------------------------------------------------------------------
inline void cluster_scaling(Context& c) {
  const auto& cfg = c.cfg;
  ClusterScalingOptions opt;
  opt.n_points = cfg.cluster_points;
  opt.steps = cfg.cluster_steps;
  opt.replicas = cfg.cluster_replicas;
  opt.lag = 5;
  opt.cauchy_starts.clear();
  for (int s = 5; s + opt.lag <= opt.steps && s <= 15; s += 5) opt.cauchy_starts.push_back(s);
  if (opt.cauchy_starts.empty()) opt.cauchy_starts = {0};
  opt.lag = std::min(opt.lag, opt.steps - opt.cauchy_starts.back());
  const auto rep = cluster_scaling_diagnostic(opt, c.opt.seed, c.opt.threads);
  CsvWriter csv({"t", "mean", "se", "variance"});
  double z = 0.0;
  for (std::size_t t = 0; t < rep.scaled_mean.size(); ++t) {
    const auto& m = rep.scaled_mean[t];
    csv.row(t, m.mean, m.se, rep.scaled_variance[t]);
    z = std::max(z, m.se > 0 ? std::abs(m.mean - 1.0) / m.se : (m.mean == 1.0 ? 0.0 : INFINITY));
  }
  c.files()["cluster_scaling.csv"] = csv.str();
  CsvWriter cau({"start", "lag", "forward_mean", "forward_ci_low", "forward_ci_high", "reverse_mean", "reverse_ci_low",
                 "reverse_ci_high"});
  std::size_t fwd_up = 0, rev_up = 0;
  for (std::size_t k = 0; k < opt.cauchy_starts.size(); ++k) {
    const auto& f = rep.forward_cauchy[k];
    const auto& b = rep.reverse_cauchy[k];
    cau.row(opt.cauchy_starts[k], opt.lag, f.mean, f.mean - 1.96 * f.se, f.mean + 1.96 * f.se, b.mean,
            b.mean - 1.96 * b.se, b.mean + 1.96 * b.se);
    if (k > 0) {
      fwd_up += f.mean >= rep.forward_cauchy[k - 1].mean;
      rev_up += b.mean >= rep.reverse_cauchy[k - 1].mean;
    }
  }
  c.files()["cluster_cauchy.csv"] = cau.str();
  c.add(at_most(8, "cluster_scaling_mean", z, 4.0, true, "max_t |mean (3/4)^t G^(t) - 1| / SE"));
  c.add(at_most(8, "cluster_cauchy_forward_decreasing", static_cast<double>(fwd_up), 0.0, false,
                "non-decreases of E|Y_s - Y_{s+5}|^2 following a tagged cluster"));
  c.add(at_most(8, "cluster_cauchy_reverse_decreasing", static_cast<double>(rev_up), 0.0, false,
                "same statistic on the cluster-size mass martingale"));
}

// 9 -------------------------------------------------------------------------
inline std::vector<double> successive_sup_increments(const ReverseTrajectory& traj) {
  std::vector<StepFunction> fs;
  for (const auto& eta : traj.states) fs.emplace_back(step_distribution(eta));
  std::vector<double> d;
  for (std::size_t t = 0; t + 1 < fs.size(); ++t) d.push_back(sup_distance(fs[t], fs[t + 1]));
  return d;
}

inline void step_increments(Context& c) {
  const auto& cfg = c.cfg;
  const int T = cfg.step_increments_steps;
  const auto incs = parallel_map(cfg.step_increments_replicas, c.opt.threads, [&](std::size_t r) {
    auto rng = replica_stream(c.opt.seed, "step_distributions", r);
    return successive_sup_increments(run_reverse(WeightSequence::unit(), T, rng));
  });
  std::size_t monotone = 0;
  CsvWriter inc_csv({"replica", "t", "sup_increment"});
  for (std::size_t r = 0; r < incs.size(); ++r) {
    bool ok = true;
    for (std::size_t t = 0; t < incs[r].size(); ++t) {
      inc_csv.row(r, t, incs[r][t]);
      if (static_cast<int>(t) > cfg.step_increments_from && incs[r][t] > incs[r][t - 1]) ok = false;
    }
    monotone += ok;
  }
  c.files()["step_increments.csv"] = inc_csv.str();
  std::size_t median_rises = 0;
  double previous_median = INFINITY;
  for (int t = 0; t < T; ++t) {
    std::vector<double> col;
    for (const auto& r : incs) col.push_back(r[static_cast<std::size_t>(t)]);
    const double med = quantile(col, 0.5);
    if (t > cfg.step_increments_from) median_rises += med > previous_median;
    previous_median = med;
  }

  Figure fig("Step distributions across time, two independent runs");
  CsvWriter fcsv({"replica", "t", "x", "cumulative_mass"});
  std::size_t panels_ok = 0;
  for (std::uint64_t r = 0; r < 2; ++r) {
    auto rng = replica_stream(c.opt.seed, "step_distributions-panels", r);
    const auto traj = run_reverse(WeightSequence::unit(), T, rng);
    Panel p;
    p.title = "run " + std::to_string(r + 1);
    p.x_label = "x";
    p.y_label = "cumulative mass";
    bool consistent = true;
    for (int t = 0; t <= T; ++t) {
      const auto f = step_distribution(traj.states[static_cast<std::size_t>(t)]);
      const StepFunction fn(f);
      Series s{"t = " + std::to_string(t), {}, {}, true};
      for (std::size_t i = 0; i < f.size(); ++i) {
        fcsv.row(r, t, fn.atom(i), fn.at_index(static_cast<long long>(i)));
        s.x.push_back(fn.atom(i));
        s.y.push_back(fn.at_index(static_cast<long long>(i)));
      }
      consistent = consistent && f.total_mass() == traj.ledger[static_cast<std::size_t>(t)].mass;
      if (t % 5 == 0 || t == T) p.series.push_back(std::move(s));
    }
    panels_ok += consistent;
    fig.add_panel(std::move(p));
  }
  c.files()["step_increments_F.csv"] = fcsv.str();
  fig.emit(c.files(), "step_distributions");
  c.add(at_least(9, "step_increments_emission", static_cast<double>(panels_ok), 2.0, true,
                 "panels emitted with total mass equal to the ledger"));
  c.add(at_least(9, "step_increments_monotone_fraction",
                 static_cast<double>(monotone) / static_cast<double>(std::max<std::size_t>(incs.size(), 1)),
                 cfg.step_increments_fraction, false, "share of replicas with nonincreasing sup increments after t0"));
  c.add(at_most(9, "step_increments_median_nonincreasing", static_cast<double>(median_rises), 0.0, false,
                "rises of the median sup increment after t0"));
}

// 10 ------------------------------------------------------------------------

inline void determinism(Context& c) {
  const auto smoke = AcceptanceConfig::smoke();
  const SuiteOptions a{c.opt.seed, 1, "", true};
  const SuiteOptions b{c.opt.seed, std::max(2u, c.cfg.determinism_threads), "", true};
  const auto ra = clusterflow::run_suite(smoke, a);
  const auto rb = clusterflow::run_suite(smoke, b);
  std::size_t differing = 0;
  for (const auto& [name, body] : ra.artifacts) {
    const auto it = rb.artifacts.find(name);
    differing += it == rb.artifacts.end() || it->second != body;
  }
  differing += rb.artifacts.size() != ra.artifacts.size();
  c.add(at_most(10, "determinism", static_cast<double>(differing), 0.0, true,
                std::to_string(ra.artifacts.size()) + " artifacts compared across 1 and " + std::to_string(b.threads) +
                    " threads"));
}

// Diagnostics ---------------------------------------------------------------
inline void laplace_convergence(Context& c) {
  const auto& cfg = c.cfg;
  const auto per = parallel_map(cfg.laplace_replicas, c.opt.threads, [&](std::size_t r) {
    auto rng = replica_stream(c.opt.seed, "laplace", r);
    return laplace_trajectory(run_reverse(WeightSequence::unit(), cfg.laplace_steps, rng), cfg.laplace_s);
  });
  const auto rows = summarize_laplace(per, cfg.laplace_s.size());
  CsvWriter csv({"t", "s", "median_increment", "q90_increment", "max_split_gap", "max_split_excess"});
  double split_excess = -INFINITY, split_gap = 0.0, zero_col = 0.0;
  std::vector<double> median_at_one;
  for (const auto& r : rows) {
    csv.row(r.t, r.s, r.median_increment, r.q90_increment, r.max_split_gap, r.max_split_excess);
    split_excess = std::max(split_excess, r.max_split_excess);
    if (r.s > 0) split_gap = std::max(split_gap, r.max_split_gap);
    if (r.s == 1.0) median_at_one.push_back(r.median_increment);
  }
  for (const auto& rep : per)
    for (const auto& p : rep)
      if (p.s == 0.0) zero_col = std::max(zero_col, std::abs(p.transform - p.mass) / p.mass);
  c.files()["laplace_summary.csv"] = csv.str();
  std::size_t rises = 0;
  for (std::size_t k = 1; k < median_at_one.size(); ++k) rises += median_at_one[k] >= median_at_one[k - 1];
  c.add(at_most(0, "laplace_zero_is_mass", zero_col, 1e-12, false, "relative |G_t(0) - M^(t)|"));
  c.add(at_most(0, "laplace_median_increment_decreasing", static_cast<double>(rises), 0.0, false,
                "non-decreases of median |G_{t+1}(1) - G_t(1)|"));
  c.add(at_most(0, "laplace_split_identity", split_gap, 1e-9, false, "max |H_beta + H_alpha - G_{t+1}(s)|, s > 0"));
  c.add(at_most(0, "laplace_split_bound", split_excess, 1e-12, false,
                "max of split gap minus M (1 - exp(-s (3/4)^{t+1}))"));
}

inline void pipeline(Context& c) {
  CsvWriter csv({"t", "fold_law", "ks", "critical", "within", "exact_mean", "literal_mean", "exact_samples",
                 "literal_samples"});
  for (int t : {0, 1}) {
    for (const auto& row : pipeline_comparison(GapLaw::exponential(), t, c.cfg.pipeline_points,
                                               c.cfg.pipeline_replicas, c.opt.seed, c.opt.threads)) {
      csv.row(t, std::string(to_string(row.fold_law)), row.ks, row.critical, row.within, row.exact_mean,
              row.literal_mean, row.exact_samples, row.literal_samples);
      c.add(at_most(0, "pipeline_t" + std::to_string(t) + "_" + std::string(to_string(row.fold_law)), row.ks,
                    row.critical, false, "KS between exact and operator pipelines"));
    }
  }
  c.files()["pipeline.csv"] = csv.str();
}

inline void joint_coupling(Context& c) {
  const auto rows = joint_diagnostic(GapLaw::exponential(), c.cfg.joint_points, c.cfg.joint_checkpoints,
                                     c.cfg.joint_replicas, c.opt.seed, c.opt.threads);
  CsvWriter csv({"t", "spearman", "copula_shift", "samples"});
  for (const auto& r : rows) csv.row(r.t, r.spearman, r.copula_shift, r.samples);
  c.files()["joint.csv"] = csv.str();
  if (rows.size() > 1) {
    c.add(at_most(0, "joint_copula_shift", rows.back().copula_shift, rows[1].copula_shift, false,
                  "copula distance between the last two checkpoints vs the first two"));
  }
}

struct CheckEntry {
  int criterion;
  std::string_view name;
  void (*run)(Context&);
};

inline const std::vector<CheckEntry>& registry() {
  static const std::vector<CheckEntry> checks{
      {1, "martingale_exact", martingale_exact},
      {2, "martingale_mc", martingale_mc},
      {3, "merge_statistics", merge_statistics},
      {4, "point_gap_equivalence", point_gap_equivalence},
      {5, "initial_law_independence", initial_law_independence},
      {6, "lemma_identity", lemma_identity},
      {7, "duality", duality},
      {8, "cluster_scaling", cluster_scaling},
      {9, "step_increments", step_increments},
      {10, "determinism", determinism},
      {0, "laplace_convergence", laplace_convergence},
      {0, "pipeline_comparison", pipeline},
      {0, "joint_coupling", joint_coupling},
  };
  return checks;
}

}  // namespace acceptance

/// Runs every registered check whose name contains `opt.filter` and
/// collects verdicts and artifacts, including `verdict.json`.
inline SuiteResult run_suite(const AcceptanceConfig& cfg, const SuiteOptions& opt) {
  SuiteResult result;
  acceptance::Context ctx{cfg, opt, result};
  for (const auto& entry : acceptance::registry()) {
    if (!opt.filter.empty() && entry.name.find(opt.filter) == std::string_view::npos) continue;
    if (opt.nested && entry.criterion == 10) continue;
    if (opt.criterion >= 0 && entry.criterion != opt.criterion) continue;
    try {
      entry.run(ctx);
    } catch (const std::exception& e) {
      result.verdicts.push_back({entry.criterion, std::string(entry.name), true, INFINITY, 0.0, false,
                                 std::string("error: ") + e.what()});
    }
  }
  result.artifacts["verdict.json"] = verdict_json(result.verdicts);
  return result;
}

}  // namespace clusterflow
