#include "nnsb/density.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nnsb/error.hpp"
#include "neighbors.hpp"

namespace nnsb {

SmoothingSpec SmoothingSpec::gaussian(double sigma, std::vector<int> m_values) {
  require(sigma > 0.0, "SmoothingSpec::gaussian: sigma must be positive");
  SmoothingSpec s;
  double total = 0.0;
  for (std::size_t k = 0; k < window_offsets.size(); ++k) {
    const double o = window_offsets[k];
    s.window_weights[k] = std::exp(-o * o / (2.0 * sigma * sigma));
    total += s.window_weights[k];
  }
  for (double& w : s.window_weights) w /= total;
  s.m_values = std::move(m_values);
  return s;
}

SmoothingSpec SmoothingSpec::unsmoothed(std::vector<int> m_values) {
  SmoothingSpec s;
  s.m_values = std::move(m_values);
  return s;
}

SmoothingSpec SmoothingSpec::uniform(std::vector<int> m_values) {
  SmoothingSpec s;
  s.window_weights.fill(0.2);
  s.m_values = std::move(m_values);
  return s;
}

SmoothingSpec SmoothingSpec::defaults() { return gaussian(1.0, {5, 10, 20}); }

int SmoothingSpec::max_offset_used() const {
  int off = 0;
  for (std::size_t k = 0; k < window_offsets.size(); ++k) {
    if (window_weights[k] != 0.0) off = std::max(off, window_offsets[k]);
  }
  return off;
}

int SmoothingSpec::min_rank() const {
  int lowest_offset = 0;
  for (std::size_t k = 0; k < window_offsets.size(); ++k) {
    if (window_weights[k] != 0.0) lowest_offset = std::min(lowest_offset, window_offsets[k]);
  }
  return *std::min_element(m_values.begin(), m_values.end()) + lowest_offset;
}

int SmoothingSpec::max_rank() const {
  return *std::max_element(m_values.begin(), m_values.end()) + max_offset_used();
}

void SmoothingSpec::validate() const {
  double total = 0.0;
  for (double w : window_weights) {
    require(w >= 0.0, "SmoothingSpec: window weights must be nonnegative");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-12, "SmoothingSpec: window weights must sum to 1");
  require(!m_values.empty(), "SmoothingSpec: m_values must not be empty");
  for (int m : m_values) require(m >= 1, "SmoothingSpec: every M must be positive");
  require(min_rank() >= 1, "SmoothingSpec: smallest M plus smallest used offset must be >= 1");
}

SampleSet::SampleSet(std::vector<double> points) : sorted_(std::move(points)) {
  require(!sorted_.empty(), "SampleSet must not be empty");
  for (double v : sorted_) require(std::isfinite(v), "SampleSet: non-finite point");
  std::sort(sorted_.begin(), sorted_.end());
}

namespace {

void check_rank(int M, const SampleSet& set, bool exclude_self) {
  const auto available = static_cast<long>(set.size()) - (exclude_self ? 1 : 0);
  if (M < 1 || M > available) {
    throw ContractViolation("neighbor rank " + std::to_string(M) + " out of range for a set of " +
                            std::to_string(set.size()) + (exclude_self ? " (self excluded)" : ""));
  }
}

}  // namespace

std::vector<double> neighbor_distances(double z, const SampleSet& set, std::size_t k, bool exclude_self) {
  check_rank(static_cast<int>(k), set, exclude_self);
  std::vector<double> out;
  out.reserve(k);
  bool skipped = !exclude_self;
  detail::walk_neighbors(set.sorted(), z, [&](std::size_t, double d) {
    if (!skipped && d == 0.0) {
      skipped = true;
      return true;
    }
    out.push_back(d);
    return out.size() < k;
  });
  return out;
}

double epsilon(double z, const SampleSet& set, int M, bool exclude_self) {
  check_rank(M, set, exclude_self);
  return neighbor_distances(z, set, static_cast<std::size_t>(M), exclude_self).back();
}

namespace {

// Weighted radius for rank M given the ascending neighbor distances.
double smoothed_from(std::span<const double> dist, const SmoothingSpec& spec, int M) {
  double eps = 0.0;
  for (std::size_t k = 0; k < spec.window_offsets.size(); ++k) {
    if (spec.window_weights[k] == 0.0) continue;
    const int rank = M + spec.window_offsets[k];
    eps += spec.window_weights[k] * dist[static_cast<std::size_t>(rank - 1)];
  }
  return eps;
}

void check_window(const SmoothingSpec& spec, int M, const SampleSet& set, bool exclude_self) {
  for (std::size_t k = 0; k < spec.window_offsets.size(); ++k) {
    if (spec.window_weights[k] != 0.0) check_rank(M + spec.window_offsets[k], set, exclude_self);
  }
}

}  // namespace

double epsilon_smoothed(double z, const SampleSet& set, const SmoothingSpec& spec, int M,
                        bool exclude_self) {
  check_window(spec, M, set, exclude_self);
  const int top = M + spec.max_offset_used();
  const auto dist = neighbor_distances(z, set, static_cast<std::size_t>(top), exclude_self);
  return smoothed_from(dist, spec, M);
}

Estimate density_at(double z, const SampleSet& set, const SmoothingSpec& spec, bool exclude_self) {
  spec.validate();
  const std::size_t n = set.size();
  for (int m : spec.m_values) check_window(spec, m, set, exclude_self);
  const auto dist = neighbor_distances(z, set, static_cast<std::size_t>(spec.max_rank()), exclude_self);
  Estimate est;
  for (int m : spec.m_values) {
    double eps = smoothed_from(dist, spec, m);
    if (eps < kEpsFloor) {
      eps = kEpsFloor;
      ++est.clamped;
    }
    est.value += (static_cast<double>(m) / static_cast<double>(n)) / (eps * kUnitBall1d);
  }
  est.value /= static_cast<double>(spec.m_values.size());
  return est;
}

int scaled_rank(int M, std::size_t n_p, std::size_t n_q) {
  require(n_q > 0, "scaled_rank: empty reference set");
  const double scaled = static_cast<double>(n_p) / static_cast<double>(n_q) * M;
  return std::max(1, static_cast<int>(std::lround(scaled)));
}

Estimate density_ratio(double z, const SampleSet& p_set, const SampleSet& q_set, const SmoothingSpec& spec,
                       bool exclude_self_p, bool exclude_self_q) {
  spec.validate();
  const std::size_t np = p_set.size(), nq = q_set.size();
  int top_p = 0;
  for (int m : spec.m_values) {
    check_window(spec, m, q_set, exclude_self_q);
    const int mp = scaled_rank(m, np, nq);
    check_window(spec, mp, p_set, exclude_self_p);
    top_p = std::max(top_p, mp + spec.max_offset_used());
  }
  const auto dq = neighbor_distances(z, q_set, static_cast<std::size_t>(spec.max_rank()), exclude_self_q);
  const auto dp = neighbor_distances(z, p_set, static_cast<std::size_t>(top_p), exclude_self_p);

  Estimate est;
  double q_density = 0.0, p_density = 0.0;
  for (int m : spec.m_values) {
    double eq = smoothed_from(dq, spec, m);
    double ep = smoothed_from(dp, spec, scaled_rank(m, np, nq));
    if (eq < kEpsFloor) {
      eq = kEpsFloor;
      ++est.clamped;
    }
    if (ep < kEpsFloor) {
      ep = kEpsFloor;
      ++est.clamped;
    }
    // Both densities carry the same mass m / N_q, so the unit-ball constant
    // and the mass cancel in the single-M case.
    q_density += static_cast<double>(m) / eq;
    p_density += static_cast<double>(m) / ep;
  }
  est.value = q_density / p_density;
  return est;
}

}  // namespace nnsb
