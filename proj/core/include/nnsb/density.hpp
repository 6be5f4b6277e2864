#pragma once

// Nearest-neighbor density and density-ratio estimation on 1-D samples.
//
// The density at z is estimated from the distance eps(z, M) to its M-th
// nearest neighbor:  p(z) = (M / N) / (eps(z, M) * c)  with c = 2, the length
// of the 1-D unit ball. The ratio of two such estimates on nested sets is a
// ratio of neighbor radii, with M scaled by the set-size ratio so both radii
// enclose the same probability mass.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace nnsb {

/// Distances below this are clamped (duplicate points).
inline constexpr double kEpsFloor = 1e-9;

/// 1-D unit-ball volume.
inline constexpr double kUnitBall1d = 2.0;

/// Rank window and neighbor counts used to smooth radius estimates.
struct SmoothingSpec {
  static constexpr std::array<int, 5> window_offsets{-2, -1, 0, 1, 2};
  std::array<double, 5> window_weights{0.0, 0.0, 1.0, 0.0, 0.0};
  /// Neighbor counts M averaged over. A single-M estimate uses one entry.
  std::vector<int> m_values{10};

  /// Weights exp(-o^2 / (2 sigma^2)) over the offsets, normalized.
  static SmoothingSpec gaussian(double sigma, std::vector<int> m_values);
  /// Window of weight 1 on rank M only.
  static SmoothingSpec unsmoothed(std::vector<int> m_values);
  static SmoothingSpec uniform(std::vector<int> m_values);
  /// Gaussian sigma = 1 over offsets, M in {5, 10, 20}.
  static SmoothingSpec defaults();

  /// Smallest and largest rank touched by a nonzero window weight.
  int min_rank() const;
  int max_rank() const;
  int max_offset_used() const;

  void validate() const;
};

/// A set of 1-D points kept sorted for neighbor queries.
class SampleSet {
 public:
  SampleSet() = default;
  explicit SampleSet(std::vector<double> points);

  std::size_t size() const { return sorted_.size(); }
  std::span<const double> sorted() const { return sorted_; }

 private:
  std::vector<double> sorted_;
};

/// Distance from z to its M-th nearest point of `set` (M is 1-based). With
/// `exclude_self`, one zero-distance match is skipped first.
double epsilon(double z, const SampleSet& set, int M, bool exclude_self);

/// The first `k` neighbor distances of z in ascending order. Same exclusion rule.
std::vector<double> neighbor_distances(double z, const SampleSet& set, std::size_t k, bool exclude_self);

/// sum_k window_weights[k] * epsilon(z, set, M + window_offsets[k]). Zero-weight
/// ranks are not evaluated.
double epsilon_smoothed(double z, const SampleSet& set, const SmoothingSpec& spec, int M,
                        bool exclude_self);

struct Estimate {
  double value = 0.0;
  /// Number of radii that were clamped to kEpsFloor.
  std::size_t clamped = 0;
};

/// Mean over m in spec.m_values of (m / N) / (max(eps_smoothed, floor) * 2).
Estimate density_at(double z, const SampleSet& set, const SmoothingSpec& spec, bool exclude_self);

/// Neighbor count used in the larger set: round(n_p / n_q * M), at least 1.
int scaled_rank(int M, std::size_t n_p, std::size_t n_q);

/// Estimate of q(z) / p(z) for z drawn from q's population:
///   mean_m (m/N_q)/eps_q(m)  /  mean_m (m/N_q)/eps_p(scaled m).
/// With one M this is eps_p(round(N_p/N_q * M)) / eps_q(M).
Estimate density_ratio(double z, const SampleSet& p_set, const SampleSet& q_set,
                       const SmoothingSpec& spec, bool exclude_self_p, bool exclude_self_q);

}  // namespace nnsb
