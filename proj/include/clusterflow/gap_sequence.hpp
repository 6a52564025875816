#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace clusterflow {

/// How space is rescaled after each merge step.
///
/// theoretical: multiply by 3/4, the model's exact operator.
/// empirical: renormalize so the mean gap is exactly 1.
/// unscaled: no rescaling (raw trajectories for tree plots).
enum class IntensityMode { theoretical, empirical, unscaled };

inline std::string_view to_string(IntensityMode mode) {
  switch (mode) {
    case IntensityMode::theoretical: return "theoretical";
    case IntensityMode::empirical: return "empirical";
    case IntensityMode::unscaled: return "unscaled";
  }
  return "?";
}

inline IntensityMode parse_intensity_mode(std::string_view name) {
  if (name == "theoretical") return IntensityMode::theoretical;
  if (name == "empirical") return IntensityMode::empirical;
  if (name == "unscaled") return IntensityMode::unscaled;
  throw std::invalid_argument("unknown intensity mode: " + std::string(name));
}

/// Circular sequence of strictly positive gaps; gap i separates point i from
/// point i+1 (mod size).
struct GapSequence {
  std::vector<double> gaps;
  IntensityMode mode = IntensityMode::theoretical;

  std::size_t size() const noexcept { return gaps.size(); }
  double operator[](std::size_t i) const { return gaps[i]; }

  double total_length() const { return std::accumulate(gaps.begin(), gaps.end(), 0.0); }
  double mean() const { return total_length() / static_cast<double>(gaps.size()); }

  /// Gap at a signed, cyclically wrapped index.
  double at_cyclic(long long i) const {
    const auto n = static_cast<long long>(gaps.size());
    return gaps[static_cast<std::size_t>(((i % n) + n) % n)];
  }

  void validate() const {
    if (gaps.size() < 2) {
      throw std::invalid_argument("gap sequence needs at least two gaps");
    }
    for (double g : gaps) {
      if (!(g > 0.0)) {
        throw std::invalid_argument("gap sequence entries must be positive");
      }
    }
  }
};

}  // namespace clusterflow
