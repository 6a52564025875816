#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "clusterflow/acceptance.hpp"

namespace clusterflow {

inline constexpr int config_schema_version = 1;

/// Malformed or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ForwardConfig {
  std::vector<std::string> gap_laws{"exp", "unif"};
  std::vector<std::string> algorithms{"alg1", "alg2"};
  std::vector<int> checkpoints{20, 25};
  std::size_t cdf_points = 256;
};

struct TreeConfig {
  long long n_points = 64;
  int steps = 6;
};

struct ReverseConfig {
  int steps = 20;
  std::size_t replicas = 2;
  std::vector<long long> eta0{0};
  std::vector<double> s_grid{0.0, 0.5, 1.0, 2.0, 4.0};
  std::size_t x_points = 256;
};

struct DualityConfig {
  std::vector<std::vector<long long>> eta0{{0}, {0, 1}, {0, 3}};
  std::vector<int> times{0, 1, 2, 3};
  std::size_t replicas = 10000;
  long long n_points = 1000;
};

/// Everything a run needs. Each subcommand reads the shared fields plus its
/// own block.
struct ExperimentConfig {
  int schema_version = config_schema_version;
  std::uint64_t seed = 20240611;
  long long n_points = 200000;
  std::string gap_law = "exp";
  std::string algorithm = "alg1";
  int steps = 25;
  std::size_t replicas = 1;
  std::string intensity_mode = "empirical";

  ForwardConfig forward;
  TreeConfig tree;
  ReverseConfig reverse;
  DualityConfig duality;
  AcceptanceConfig verify;

  void validate() const;
};

namespace detail {

using ojson = nlohmann::ordered_json;

/// Reads keys from one JSON object and rejects any key it was not asked for.
class ObjectReader {
 public:
  ObjectReader(const ojson& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where() + "." + key + " has the wrong type");
    }
  }

  const ojson* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key " + where() + "." + k);
  }

  std::string where() const { return path_.empty() ? "config" : path_; }

 private:
  const ojson& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Fn>
void with_block(ObjectReader& parent, const char* key, Fn&& fn) {
  if (const auto* b = parent.child(key)) {
    ObjectReader r(*b, parent.where() + "." + key);
    fn(r);
    r.finish();
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  detail::ojson j;
  try {
    j = detail::ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  detail::ObjectReader r(j, "");
  c.schema_version = -1;
  r.get("schema_version", c.schema_version);
  if (c.schema_version != config_schema_version) {
    throw ConfigError("schema_version must be " + std::to_string(config_schema_version));
  }
  r.get("seed", c.seed);
  r.get("n_points", c.n_points);
  r.get("gap_law", c.gap_law);
  r.get("algorithm", c.algorithm);
  r.get("steps", c.steps);
  r.get("replicas", c.replicas);
  r.get("intensity_mode", c.intensity_mode);
  detail::with_block(r, "forward", [&](detail::ObjectReader& b) {
    b.get("gap_laws", c.forward.gap_laws);
    b.get("algorithms", c.forward.algorithms);
    b.get("checkpoints", c.forward.checkpoints);
    b.get("cdf_points", c.forward.cdf_points);
  });
  detail::with_block(r, "tree", [&](detail::ObjectReader& b) {
    b.get("n_points", c.tree.n_points);
    b.get("steps", c.tree.steps);
  });
  detail::with_block(r, "reverse", [&](detail::ObjectReader& b) {
    b.get("steps", c.reverse.steps);
    b.get("replicas", c.reverse.replicas);
    b.get("eta0", c.reverse.eta0);
    b.get("s_grid", c.reverse.s_grid);
    b.get("x_points", c.reverse.x_points);
  });
  detail::with_block(r, "duality", [&](detail::ObjectReader& b) {
    b.get("eta0", c.duality.eta0);
    b.get("times", c.duality.times);
    b.get("replicas", c.duality.replicas);
    b.get("n_points", c.duality.n_points);
  });
  detail::with_block(r, "verify", [&](detail::ObjectReader& b) {
    bool smoke = false;
    b.get("smoke", smoke);
    if (smoke) c.verify = AcceptanceConfig::smoke();
    auto& v = c.verify;
    b.get("exact_martingale_steps", v.exact_martingale_steps);
    b.get("martingale_replicas", v.martingale_replicas);
    b.get("martingale_steps", v.martingale_steps);
    b.get("merge_points", v.merge_points);
    b.get("equivalence_replicas", v.equivalence_replicas);
    b.get("equivalence_points", v.equivalence_points);
    b.get("equivalence_steps", v.equivalence_steps);
    b.get("initial_law_points", v.initial_law_points);
    b.get("initial_law_steps", v.initial_law_steps);
    b.get("initial_law_replicas", v.initial_law_replicas);
    b.get("lemma_steps", v.lemma_steps);
    b.get("lemma_grid", v.lemma_grid);
    b.get("lemma_replicas", v.lemma_replicas);
    b.get("lemma_exact_steps", v.lemma_exact_steps);
    b.get("lemma_exact_grid", v.lemma_exact_grid);
    b.get("duality_eta0", v.duality_eta0);
    b.get("duality_times", v.duality_times);
    b.get("duality_replicas", v.duality_replicas);
    b.get("duality_points", v.duality_points);
    b.get("cluster_points", v.cluster_points);
    b.get("cluster_steps", v.cluster_steps);
    b.get("cluster_replicas", v.cluster_replicas);
    b.get("step_increments_replicas", v.step_increments_replicas);
    b.get("step_increments_steps", v.step_increments_steps);
    b.get("step_increments_from", v.step_increments_from);
    b.get("step_increments_fraction", v.step_increments_fraction);
    b.get("laplace_s", v.laplace_s);
    b.get("laplace_replicas", v.laplace_replicas);
    b.get("laplace_steps", v.laplace_steps);
    b.get("pipeline_points", v.pipeline_points);
    b.get("pipeline_replicas", v.pipeline_replicas);
    b.get("joint_checkpoints", v.joint_checkpoints);
    b.get("joint_replicas", v.joint_replicas);
    b.get("joint_points", v.joint_points);
    b.get("determinism_threads", v.determinism_threads);
  });
  r.finish();
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  try {
    GapLaw::parse(gap_law);
    parse_algorithm(algorithm);
    parse_intensity_mode(intensity_mode);
    for (const auto& g : forward.gap_laws) GapLaw::parse(g);
    for (const auto& a : forward.algorithms) parse_algorithm(a);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  require(n_points >= 2, "n_points must be at least 2");
  require(steps >= 0, "steps must be nonnegative");
  require(replicas >= 1, "replicas must be positive");
  require(!forward.gap_laws.empty() && !forward.algorithms.empty(), "forward needs a gap law and an algorithm");
  for (int t : forward.checkpoints) require(t >= 0, "forward.checkpoints must be nonnegative");
  require(forward.cdf_points >= 2, "forward.cdf_points must be at least 2");
  require(tree.n_points >= 2 && tree.n_points <= 512, "tree.n_points must lie in [2, 512]");
  require(tree.steps >= 0, "tree.steps must be nonnegative");
  require(reverse.steps >= 0 && reverse.steps <= 25, "reverse.steps must lie in [0, 25]");
  require(reverse.replicas >= 1, "reverse.replicas must be positive");
  require(!reverse.eta0.empty(), "reverse.eta0 must name at least one index");
  require(reverse.x_points >= 2, "reverse.x_points must be at least 2");
  require(!duality.eta0.empty() && !duality.times.empty(), "duality needs eta0 and times");
  for (const auto& e : duality.eta0) require(!e.empty(), "duality.eta0 entries must be nonempty");
  for (int t : duality.times) require(t >= 0, "duality.times must be nonnegative");
  require(duality.replicas >= 2, "duality.replicas must be at least 2");
  require(duality.n_points >= 2, "duality.n_points must be at least 2");
  require(verify.martingale_steps <= 25 && verify.lemma_steps <= 25 && verify.step_increments_steps <= 25 &&
              verify.laplace_steps <= 25,
          "reverse runs in verify are limited to 25 steps");
  require(verify.initial_law_replicas >= 1 && verify.martingale_replicas >= 2, "verify replica counts too small");
}

/// The fully resolved config, suitable for re-running.
inline std::string to_json(const ExperimentConfig& c) {
  detail::ojson j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  j["n_points"] = c.n_points;
  j["gap_law"] = c.gap_law;
  j["algorithm"] = c.algorithm;
  j["steps"] = c.steps;
  j["replicas"] = c.replicas;
  j["intensity_mode"] = c.intensity_mode;
  j["forward"] = {{"gap_laws", c.forward.gap_laws},
                  {"algorithms", c.forward.algorithms},
                  {"checkpoints", c.forward.checkpoints},
                  {"cdf_points", c.forward.cdf_points}};
  j["tree"] = {{"n_points", c.tree.n_points}, {"steps", c.tree.steps}};
  j["reverse"] = {{"steps", c.reverse.steps},
                  {"replicas", c.reverse.replicas},
                  {"eta0", c.reverse.eta0},
                  {"s_grid", c.reverse.s_grid},
                  {"x_points", c.reverse.x_points}};
  j["duality"] = {{"eta0", c.duality.eta0},
                  {"times", c.duality.times},
                  {"replicas", c.duality.replicas},
                  {"n_points", c.duality.n_points}};
  const auto& v = c.verify;
  detail::ojson vj;
  vj["exact_martingale_steps"] = v.exact_martingale_steps;
  vj["martingale_replicas"] = v.martingale_replicas;
  vj["martingale_steps"] = v.martingale_steps;
  vj["merge_points"] = v.merge_points;
  vj["equivalence_replicas"] = v.equivalence_replicas;
  vj["equivalence_points"] = v.equivalence_points;
  vj["equivalence_steps"] = v.equivalence_steps;
  vj["initial_law_points"] = v.initial_law_points;
  vj["initial_law_steps"] = v.initial_law_steps;
  vj["initial_law_replicas"] = v.initial_law_replicas;
  vj["lemma_steps"] = v.lemma_steps;
  vj["lemma_grid"] = v.lemma_grid;
  vj["lemma_replicas"] = v.lemma_replicas;
  vj["lemma_exact_steps"] = v.lemma_exact_steps;
  vj["lemma_exact_grid"] = v.lemma_exact_grid;
  vj["duality_eta0"] = v.duality_eta0;
  vj["duality_times"] = v.duality_times;
  vj["duality_replicas"] = v.duality_replicas;
  vj["duality_points"] = v.duality_points;
  vj["cluster_points"] = v.cluster_points;
  vj["cluster_steps"] = v.cluster_steps;
  vj["cluster_replicas"] = v.cluster_replicas;
  vj["step_increments_replicas"] = v.step_increments_replicas;
  vj["step_increments_steps"] = v.step_increments_steps;
  vj["step_increments_from"] = v.step_increments_from;
  vj["step_increments_fraction"] = v.step_increments_fraction;
  vj["laplace_s"] = v.laplace_s;
  vj["laplace_replicas"] = v.laplace_replicas;
  vj["laplace_steps"] = v.laplace_steps;
  vj["pipeline_points"] = v.pipeline_points;
  vj["pipeline_replicas"] = v.pipeline_replicas;
  vj["joint_checkpoints"] = v.joint_checkpoints;
  vj["joint_replicas"] = v.joint_replicas;
  vj["joint_points"] = v.joint_points;
  vj["determinism_threads"] = v.determinism_threads;
  j["verify"] = std::move(vj);
  return j.dump(2) + "\n";
}

}  // namespace clusterflow
