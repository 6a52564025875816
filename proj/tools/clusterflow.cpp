// clusterflow command-line runner.
//
// Every subcommand reads an optional JSON config, runs its experiment on a
// worker pool and writes all artifacts plus the resolved config.json into
// --out once the work is done.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "clusterflow/clusterflow.hpp"

namespace cf = clusterflow;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "clusterflow-out";
  std::optional<unsigned> threads;
  std::string filter;
};

struct Run {
  cf::ExperimentConfig cfg;
  unsigned threads = 1;
  cf::Artifacts files;
};

std::string join_indices(const std::vector<long long>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

// forward -------------------------------------------------------------------

void cmd_forward(Run& run) {
  const auto& cfg = run.cfg;
  std::vector<int> checkpoints = cfg.forward.checkpoints;
  if (checkpoints.empty()) checkpoints.push_back(cfg.steps);
  checkpoints.push_back(0);
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());

  const auto mode = cf::parse_intensity_mode(cfg.intensity_mode);
  cf::CsvWriter cdf({"algorithm", "gap_law", "t", "x", "cdf"});
  cf::CsvWriter hist({"algorithm", "gap_law", "t", "bin_low", "bin_high", "count"});
  cf::CsvWriter summary({"algorithm", "gap_law", "t", "samples", "mean", "variance", "ks_vs_first_law"});
  cf::Figure fig("Palm gap CDF by initial law");

  for (const auto& alg_name : cfg.forward.algorithms) {
    const auto alg = cf::parse_algorithm(alg_name);
    // pooled[law][checkpoint] = gaps of every replica
    std::vector<std::vector<std::vector<double>>> pooled;
    for (const auto& law_name : cfg.forward.gap_laws) {
      cf::ForwardOptions opt;
      opt.n_points = cfg.n_points;
      opt.law = cf::GapLaw::parse(law_name);
      opt.algorithm = alg;
      opt.mode = mode;
      opt.steps = checkpoints.back();
      opt.checkpoints = checkpoints;
      const std::string tag = "forward/" + law_name + "/" + alg_name;
      const auto per = cf::parallel_map(cfg.replicas, run.threads, [&](std::size_t r) {
        auto rng = cf::replica_stream(cfg.seed, tag, r);
        const auto traj = cf::run_forward(opt, rng);
        std::vector<std::vector<double>> out;
        for (int t : checkpoints) out.push_back(traj.at(t).gaps.gaps);
        return out;
      });
      std::vector<std::vector<double>> merged(checkpoints.size());
      for (const auto& rep : per)
        for (std::size_t k = 0; k < checkpoints.size(); ++k)
          merged[k].insert(merged[k].end(), rep[k].begin(), rep[k].end());
      pooled.push_back(std::move(merged));
    }

    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
      const int t = checkpoints[k];
      double hi = 0.0;
      for (const auto& law : pooled) hi = std::max(hi, cf::quantile(law[k], 0.999));
      std::vector<double> grid;
      for (std::size_t i = 0; i < cfg.forward.cdf_points; ++i)
        grid.push_back(hi * static_cast<double>(i) / static_cast<double>(cfg.forward.cdf_points - 1));
      cf::Panel panel;
      panel.title = alg_name + ", t = " + std::to_string(t);
      panel.x_label = "gap";
      panel.y_label = "empirical CDF";
      const cf::EmpiricalDistribution first(pooled.front()[k]);
      for (std::size_t l = 0; l < pooled.size(); ++l) {
        const auto& law_name = cfg.forward.gap_laws[l];
        const auto& sample = pooled[l][k];
        const cf::EmpiricalDistribution d(sample);
        cf::Series s{law_name, grid, {}, true};
        for (double x : grid) {
          s.y.push_back(d.cdf(x));
          cdf.row(alg_name, law_name, t, x, s.y.back());
        }
        panel.series.push_back(std::move(s));

        const std::size_t bins = 50;
        std::vector<std::size_t> counts(bins, 0);
        for (double g : sample)
          if (g < hi) ++counts[std::min(bins - 1, static_cast<std::size_t>(g / hi * bins))];
        for (std::size_t b = 0; b < bins; ++b)
          hist.row(alg_name, law_name, t, hi * b / bins, hi * (b + 1) / bins, counts[b]);

        const auto est = cf::estimate_mean(sample);
        cf::MeanAccumulator acc;
        for (double g : sample) acc.add(g);
        summary.row(alg_name, law_name, t, sample.size(), est.mean, acc.variance(), cf::ks_distance(first, d));
      }
      fig.add_panel(std::move(panel));
    }
  }
  run.files["cdf.csv"] = cdf.str();
  run.files["histogram.csv"] = hist.str();
  run.files["summary.csv"] = summary.str();
  fig.emit(run.files, "gap_cdf");
}

// tree ----------------------------------------------------------------------

void cmd_tree(Run& run) {
  const auto& cfg = run.cfg;
  cf::ForwardOptions opt;
  opt.n_points = cfg.tree.n_points;
  opt.law = cf::GapLaw::parse(cfg.gap_law);
  opt.algorithm = cf::parse_algorithm(cfg.algorithm);
  opt.mode = opt.algorithm == cf::Algorithm::alg2 ? cf::IntensityMode::empirical : cf::IntensityMode::theoretical;
  opt.steps = cfg.tree.steps;
  opt.record_steps = true;
  opt.record_unscaled_points = true;
  auto rng = cf::replica_stream(cfg.seed, "tree", 0);
  const auto traj = cf::run_forward(opt, rng);

  cf::CsvWriter csv({"t", "point_id", "parent_id", "position_unrescaled", "multiplicity"});
  cf::Figure fig("Point trajectories without rescaling");
  cf::Panel p;
  p.title = std::to_string(opt.n_points) + " points, " + std::to_string(opt.steps) + " steps";
  p.x_label = "position";
  p.y_label = "t";
  p.flip_y = true;
  for (int t = 0; t <= opt.steps; ++t) {
    const auto& pts = traj.unscaled_points[static_cast<std::size_t>(t)].positions;
    const auto& mult = traj.at(t).genealogy.multiplicity;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (t < opt.steps) {
        const auto parent = traj.steps[static_cast<std::size_t>(t)].merges.survivor_map[i];
        const auto& next = traj.unscaled_points[static_cast<std::size_t>(t) + 1];
        csv.row(t, i, parent, pts[i], mult[i]);
        // draw to the periodic copy of the parent nearest to the point
        double to = next.positions[parent];
        to -= next.circumference * std::round((to - pts[i]) / next.circumference);
        p.segments.push_back({pts[i], static_cast<double>(t), to, static_cast<double>(t + 1)});
      } else {
        csv.row(t, i, std::string(), pts[i], mult[i]);
      }
    }
  }
  // with no steps every trajectory is a single point at t = 0
  if (opt.steps == 0)
    for (double x : traj.unscaled_points.front().positions) p.segments.push_back({x, 0.0, x, 0.0});
  fig.add_panel(std::move(p));
  run.files["tree.csv"] = csv.str();
  fig.emit(run.files, "genealogy");
}

// reverse -------------------------------------------------------------------

void cmd_reverse(Run& run) {
  const auto& cfg = run.cfg;
  const auto& rc = cfg.reverse;
  const auto eta0 = cf::WeightSequence::from_indices(rc.eta0);
  const auto trajs = cf::parallel_map(rc.replicas, run.threads, [&](std::size_t r) {
    auto rng = cf::replica_stream(cfg.seed, "reverse", r);
    return cf::run_reverse(eta0, rc.steps, rng);
  });

  cf::CsvWriter ledger({"replica", "t", "total_weight", "M_num", "M_den", "increment", "sum_sq_num", "sum_sq_den",
                        "max_weight", "support_width"});
  cf::CsvWriter weights({"replica", "t", "index", "weight"});
  cf::CsvWriter fcsv({"replica", "t", "x", "F"});
  cf::CsvWriter lap({"replica", "t", "s", "transform", "mass", "h_beta", "h_alpha", "split_gap", "split_bound"});
  cf::Figure fig("Step distributions across time");

  double x_max = 0.0;
  for (const auto& traj : trajs)
    for (const auto& eta : traj.states) {
      const auto f = cf::step_distribution(eta);
      x_max = std::max(x_max, f.support(f.size() - 1));
    }
  if (x_max <= 0.0) x_max = 1.0;
  std::vector<double> grid;
  for (std::size_t i = 0; i < rc.x_points; ++i)
    grid.push_back(x_max * static_cast<double>(i) / static_cast<double>(rc.x_points - 1));

  for (std::size_t r = 0; r < trajs.size(); ++r) {
    const auto& traj = trajs[r];
    for (const auto& row : traj.ledger) {
      ledger.row(r, row.t, row.total_weight, row.total_weight * cf::pow_big(3, row.t), cf::pow_big(8, row.t),
                 static_cast<double>(row.increment), cf::BigInt(traj.states[row.t].sum_of_squares() * cf::pow_big(9, row.t)),
                 cf::pow_big(64, row.t), row.max_weight, row.support_width);
    }
    const auto& last = traj.states.back();
    for (std::size_t i = 0; i < last.width(); ++i)
      if (last.weights[i] != 0) weights.row(r, last.t, last.offset + static_cast<long long>(i), last.weights[i]);

    cf::Panel p;
    p.title = "replica " + std::to_string(r);
    p.x_label = "x";
    p.y_label = "F";
    for (const auto& eta : traj.states) {
      const cf::StepFunction fn(cf::step_distribution(eta));
      cf::Series s{"t = " + std::to_string(eta.t), grid, {}, true};
      for (double x : grid) {
        s.y.push_back(fn(x));
        fcsv.row(r, eta.t, x, s.y.back());
      }
      if (eta.t % 5 == 0 || static_cast<int>(eta.t) == rc.steps) p.series.push_back(std::move(s));
    }
    fig.add_panel(std::move(p));

    for (const auto& pt : cf::laplace_trajectory(traj, rc.s_grid))
      lap.row(r, pt.t, pt.s, pt.transform, pt.mass, pt.h_beta, pt.h_alpha, pt.split_gap, pt.split_bound);
  }
  run.files["ledger.csv"] = ledger.str();
  run.files["weights.csv"] = weights.str();
  run.files["F.csv"] = fcsv.str();
  run.files["laplace.csv"] = lap.str();
  fig.emit(run.files, "step_distributions");
}

// duality -------------------------------------------------------------------

void cmd_duality(Run& run) {
  const auto& cfg = run.cfg;
  cf::DualityOptions opt;
  opt.n_points = cfg.duality.n_points;
  opt.lhs_replicas = cfg.duality.replicas;
  opt.rhs_replicas = cfg.duality.replicas;
  opt.law = cf::GapLaw::parse(cfg.gap_law);
  cf::CsvWriter csv({"eta0", "indices", "t", "lhs_mean", "lhs_se", "rhs_mean", "rhs_se", "difference", "pooled_se",
                     "z", "shared_sample_max_diff"});
  for (const auto& idx : cfg.duality.eta0) {
    const auto eta0 = cf::WeightSequence::from_indices(idx);
    for (int t : cfg.duality.times) {
      const auto rep = cf::duality_check(eta0, t, opt, cfg.seed, run.threads);
      csv.row(rep.eta0, join_indices(idx), t, rep.lhs.mean, rep.lhs.se, rep.rhs.mean, rep.rhs.se, rep.difference,
              rep.pooled_se, rep.pooled_se > 0 ? rep.difference / rep.pooled_se : 0.0, rep.shared_sample_max_diff);
    }
  }
  run.files["duality.csv"] = csv.str();
}

// verify --------------------------------------------------------------------

int cmd_verify(Run& run, const std::string& filter) {
  const auto result = cf::run_suite(run.cfg.verify, {run.cfg.seed, run.threads, filter, false});
  for (const auto& [name, body] : result.artifacts) run.files[name] = body;
  for (const auto& v : result.verdicts) {
    std::cout << (v.pass ? "PASS " : "FAIL ") << (v.asserting ? "assert " : "report ") << v.check
              << " statistic=" << cf::format_double(v.statistic) << " threshold=" << cf::format_double(v.threshold)
              << "\n";
  }
  return result.all_asserts_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and verification runner for a stochastic clustering model on the line"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config; defaults apply when omitted")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "master seed, overrides the config");
    sub->add_option("--out", common.out, "output directory")->capture_default_str();
    sub->add_option("--threads", common.threads, "worker threads (default: CLUSTERFLOW_THREADS, then all cores)")
        ->check(CLI::PositiveNumber);
  };
  auto* forward = app.add_subcommand("forward", "gap distribution CDFs for several initial laws");
  auto* tree = app.add_subcommand("tree", "genealogy trace of a small configuration without rescaling");
  auto* reverse = app.add_subcommand("reverse", "reverse weight dynamics, ledger and step distributions");
  auto* duality = app.add_subcommand("duality", "forward and reverse sides of the duality relation");
  auto* verify = app.add_subcommand("verify", "acceptance suite with a JSON verdict");
  for (auto* sub : {forward, tree, reverse, duality, verify}) add_common(sub);
  verify->add_option("--filter", common.filter, "run only checks whose name contains this text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  Run run;
  try {
    run.cfg = common.config_path.empty() ? cf::ExperimentConfig{} : cf::load_config(common.config_path);
    if (common.seed) run.cfg.seed = *common.seed;
    run.cfg.validate();
    run.threads = cf::resolve_threads(common.threads);
  } catch (const std::exception& e) {
    std::cerr << "clusterflow: " << e.what() << "\n";
    return 2;
  }

  int code = 0;
  try {
    if (*forward) cmd_forward(run);
    if (*tree) cmd_tree(run);
    if (*reverse) cmd_reverse(run);
    if (*duality) cmd_duality(run);
    if (*verify) code = cmd_verify(run, common.filter);
    run.files["config.json"] = cf::to_json(run.cfg);
    cf::write_artifacts(common.out, run.files);
  } catch (const std::exception& e) {
    std::cerr << "clusterflow: " << e.what() << "\n";
    return 3;
  }
  return code;
}
