#pragma once

// Dependency losses built on the nearest-neighbor density ratio.
//
// For a latent value z with sensitive label s_z, the conditional density
// p(z | s_z) is estimated inside the same-label half of the batch and the
// marginal p(z) inside the whole batch (at the scaled neighbor rank). Their
// log-ratio averaged over the batch is the Monte-Carlo estimate of I(Z; S).

#include <cstddef>
#include <span>
#include <vector>

#include "nnsb/autodiff.hpp"
#include "nnsb/density.hpp"

namespace nnsb {

/// One latent dimension of a batch with its binary sensitive labels.
struct LatentBatch {
  std::vector<double> z;
  std::vector<int> s;  // each -1 or +1

  /// Equal lengths, labels in {-1,+1}, both present in equal numbers.
  void validate() const;
};

enum class LossPhase { SqDiff, SqRatio, LogRatio };

struct PhaseSchedule {
  double switch_threshold_sqdiff = 1e-3;
  /// Trailing sq-ratio mean under which a dimension is reported as converged.
  double switch_threshold_sqratio = 1e-3;
  std::size_t window = 10;

  void validate() const;
};

/// Conditional and marginal density estimates at every batch point (n x 1 each).
struct BatchDensities {
  Var conditional;
  Var marginal;
  std::size_t clamped = 0;
};

/// Recorded densities for z (n x 1). Neighbor identities are chosen from the
/// current values and then held fixed; gradients flow through the distances.
BatchDensities batch_densities(Var z, std::span<const int> s, const SmoothingSpec& spec);

/// mean_z (p(z|s_z) - p(z))^2
Var loss_sq_diff(Var z, std::span<const int> s, const SmoothingSpec& spec, std::size_t* clamped = nullptr);
/// mean_z (1 - p(z|s_z) / p(z))^2
Var loss_sq_ratio(Var z, std::span<const int> s, const SmoothingSpec& spec, std::size_t* clamped = nullptr);

double loss_sq_diff(const LatentBatch& batch, const SmoothingSpec& spec);
double loss_sq_ratio(const LatentBatch& batch, const SmoothingSpec& spec);

/// Training loss for the given phase. LogRatio is evaluation-only and rejected.
Var phase_loss(LossPhase phase, Var z, std::span<const int> s, const SmoothingSpec& spec,
               std::size_t* clamped = nullptr);

/// (1/N) sum_z log[p(z|s_z) / p(z)]. Not differentiable by design.
Estimate mi_estimate(const LatentBatch& batch, const SmoothingSpec& spec);

/// KL(P || Q) from samples: mean over z in P of log[P(z) / Q(z)].
Estimate kl_estimate(std::span<const double> p_samples, std::span<const double> q_samples,
                     const SmoothingSpec& spec);

/// Sum of per-dimension estimates. All batches must share the same labels.
double mi_upper_bound(std::span<const LatentBatch> dims, const SmoothingSpec& spec);

/// SqDiff switches to SqRatio once the trailing mean of the last `window`
/// loss values drops below the threshold. Other phases are unchanged.
LossPhase select_phase(std::span<const double> history, LossPhase current, const PhaseSchedule& schedule);

const char* to_string(LossPhase phase);

}  // namespace nnsb
