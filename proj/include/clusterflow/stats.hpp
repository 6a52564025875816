#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

namespace clusterflow {

/// Running mean / variance (Welford); standard error of the mean.
class MeanAccumulator {
 public:
  void add(double x) noexcept {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }

  std::size_t count() const noexcept { return count_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0; }
  double stderr_mean() const noexcept {
    return count_ > 0 ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0;
  }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct MeanEstimate {
  double mean = 0.0;
  double se = 0.0;
  std::size_t count = 0;
};

inline MeanEstimate estimate_mean(const std::vector<double>& xs) {
  MeanAccumulator acc;
  for (double x : xs) acc.add(x);
  return {acc.mean(), acc.stderr_mean(), acc.count()};
}

/// Sample quantile by linear interpolation between order statistics.
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

/// Sorted sample with optional nonnegative weights summing to one.
class EmpiricalDistribution {
 public:
  EmpiricalDistribution() = default;

  explicit EmpiricalDistribution(std::vector<double> values) : values_(std::move(values)) {
    for (double v : values_)
      if (!std::isfinite(v)) throw std::invalid_argument("empirical distribution values must be finite");
    std::sort(values_.begin(), values_.end());
  }

  EmpiricalDistribution(std::vector<double> values, std::vector<double> weights) {
    if (values.size() != weights.size()) throw std::invalid_argument("values and weights differ in length");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be nonnegative");
      total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument("weights must have positive total");
    for (auto k : order) {
      if (!std::isfinite(values[k])) throw std::invalid_argument("empirical distribution values must be finite");
      values_.push_back(values[k]);
      weights_.push_back(weights[k] / total);
    }
  }

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  bool weighted() const noexcept { return !weights_.empty(); }
  const std::vector<double>& values() const noexcept { return values_; }
  double weight(std::size_t i) const {
    return weights_.empty() ? 1.0 / static_cast<double>(values_.size()) : weights_[i];
  }

  double cdf(double x) const {
    const auto end = std::upper_bound(values_.begin(), values_.end(), x);
    const auto k = static_cast<std::size_t>(end - values_.begin());
    if (weights_.empty()) return static_cast<double>(k) / static_cast<double>(values_.size());
    return std::accumulate(weights_.begin(), weights_.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
  }

 private:
  std::vector<double> values_;
  std::vector<double> weights_;
};

/// sup_x |F_a(x) - F_b(x)| between two empirical CDFs, merging the sorted
/// samples and stepping past tied values together.
inline double ks_distance(const EmpiricalDistribution& a, const EmpiricalDistribution& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_distance needs nonempty samples");
  const auto& va = a.values();
  const auto& vb = b.values();
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, d = 0.0;
  while (i < va.size() || j < vb.size()) {
    double x = 0.0;
    if (j == vb.size() || (i < va.size() && va[i] <= vb[j])) x = va[i];
    else x = vb[j];
    while (i < va.size() && va[i] == x) fa += a.weight(i++);
    while (j < vb.size() && vb[j] == x) fb += b.weight(j++);
    d = std::max(d, std::abs(fa - fb));
  }
  return std::min(d, 1.0);
}

/// Asymptotic two-sample KS critical value c(alpha) sqrt((n+m)/(n m)),
/// c(alpha) = sqrt(-ln(alpha/2) / 2).
inline double ks_critical_value(std::size_t n, std::size_t m, double alpha) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  const auto dn = static_cast<double>(n);
  const auto dm = static_cast<double>(m);
  return c * std::sqrt((dn + dm) / (dn * dm));
}

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  std::size_t bins = 0;
};

/// Pearson goodness of fit. `probs[k]` is the model probability of bin k;
/// trailing bins are pooled until each expected count is at least
/// `min_expected`, and the last bin absorbs the remaining probability.
inline ChiSquareResult chi_square_gof(const std::vector<std::size_t>& observed, const std::vector<double>& probs,
                                      double min_expected = 5.0) {
  if (observed.size() != probs.size() || observed.empty()) {
    throw std::invalid_argument("chi-square needs matching nonempty observed and probability vectors");
  }
  std::size_t total = 0;
  for (auto o : observed) total += o;
  if (total == 0) throw std::invalid_argument("chi-square needs at least one observation");
  const auto n = static_cast<double>(total);

  std::vector<double> obs, expct;
  double acc_o = 0.0, acc_p = 0.0, used_p = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    acc_o += static_cast<double>(observed[k]);
    acc_p += probs[k];
    if (acc_p * n >= min_expected) {
      obs.push_back(acc_o);
      expct.push_back(acc_p * n);
      used_p += acc_p;
      acc_o = 0.0;
      acc_p = 0.0;
    }
  }
  // leftover plus unmodelled tail mass goes into the last bin
  const double tail_p = std::max(0.0, 1.0 - used_p - acc_p);
  if (obs.empty()) {
    obs.push_back(acc_o);
    expct.push_back((acc_p + tail_p) * n);
  } else {
    obs.back() += acc_o;
    expct.back() += (acc_p + tail_p) * n;
  }
  ChiSquareResult r;
  r.bins = obs.size();
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const double diff = obs[k] - expct[k];
    r.statistic += diff * diff / expct[k];
  }
  r.dof = static_cast<int>(obs.size()) - 1;
  if (r.dof < 1) return r;
  const boost::math::chi_squared dist(r.dof);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  return r;
}

/// Energy distance between two planar samples,
/// 2 E|X - Y| - E|X - X'| - E|Y - Y'|, from all pairs.
inline double energy_distance(const std::vector<std::pair<double, double>>& a,
                              const std::vector<std::pair<double, double>>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("energy distance needs nonempty samples");
  auto dist = [](const auto& p, const auto& q) { return std::hypot(p.first - q.first, p.second - q.second); };
  auto mean_cross = [&](const auto& u, const auto& v) {
    double s = 0.0;
    for (const auto& p : u)
      for (const auto& q : v) s += dist(p, q);
    return s / (static_cast<double>(u.size()) * static_cast<double>(v.size()));
  };
  return 2.0 * mean_cross(a, b) - mean_cross(a, a) - mean_cross(b, b);
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman needs paired samples");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j);
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(rx.size());
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(ry.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return (sxx > 0.0 && syy > 0.0) ? sxy / std::sqrt(sxx * syy) : 0.0;
}

/// Sup distance between the empirical copulas of two paired samples,
/// evaluated on a grid x grid lattice of rank levels.
inline double copula_distance(const std::vector<std::pair<double, double>>& a,
                              const std::vector<std::pair<double, double>>& b, int grid = 20) {
  auto pseudo = [](const std::vector<std::pair<double, double>>& s) {
    std::vector<double> xs, ys;
    for (const auto& p : s) {
      xs.push_back(p.first);
      ys.push_back(p.second);
    }
    std::vector<double> sx = xs, sy = ys;
    std::sort(sx.begin(), sx.end());
    std::sort(sy.begin(), sy.end());
    const auto n = static_cast<double>(s.size());
    std::vector<std::pair<double, double>> u;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto rx = static_cast<double>(std::upper_bound(sx.begin(), sx.end(), xs[i]) - sx.begin());
      const auto ry = static_cast<double>(std::upper_bound(sy.begin(), sy.end(), ys[i]) - sy.begin());
      u.emplace_back(rx / n, ry / n);
    }
    return u;
  };
  const auto ua = pseudo(a);
  const auto ub = pseudo(b);
  double d = 0.0;
  for (int i = 1; i <= grid; ++i) {
    for (int j = 1; j <= grid; ++j) {
      const double u = static_cast<double>(i) / grid;
      const double v = static_cast<double>(j) / grid;
      auto c = [&](const auto& s) {
        std::size_t k = 0;
        for (const auto& p : s) k += (p.first <= u && p.second <= v);
        return static_cast<double>(k) / static_cast<double>(s.size());
      };
      d = std::max(d, std::abs(c(ua) - c(ub)));
    }
  }
  return d;
}

}  // namespace clusterflow
