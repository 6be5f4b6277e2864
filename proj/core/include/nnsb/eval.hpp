#pragma once

// Attacker/utility probes and the trade-off report.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nnsb/data.hpp"
#include "nnsb/density.hpp"
#include "nnsb/mlp.hpp"
#include "nnsb/pipeline.hpp"

namespace nnsb {

struct ProbeConfig {
  /// Relu hidden widths; empty gives a linear (softmax regression) probe.
  std::vector<std::size_t> hidden{64, 64};
  TrainConfig train{.learning_rate = 1e-3, .batch_size = 64, .epochs = 10};

  void validate() const;
};

struct ProbeReport {
  double best_test_accuracy = 0.0;   // max over epochs
  double final_test_accuracy = 0.0;  // after the last epoch
  std::vector<double> test_accuracy;  // per epoch
  std::vector<double> train_loss;     // per epoch
  bool diverged = false;
};

/// Trains on (train_x, train_y), evaluating test accuracy after each epoch.
/// Inputs are standardized with training-split statistics. Labels are class
/// indices in [0, num_classes). A non-finite loss stops training and sets
/// `diverged`; the epochs completed so far are reported. Inputs must be finite.
ProbeReport train_probe(const Tensor& train_x, std::span<const int> train_y, const Tensor& test_x,
                        std::span<const int> test_y, std::size_t num_classes, const ProbeConfig& cfg,
                        std::mt19937_64& rng);

/// Maps s in {-1,+1} to class indices {0,1}.
std::vector<int> sensitive_classes(std::span<const int> s);

struct TradeoffReport {
  std::string variant;
  ProbeReport sensitive;
  ProbeReport target;
  /// |sensitive - target| on best-of-epochs accuracies.
  double gap = 0.0;
  /// Per-dimension MI estimates on dims 1..D-1 (latent variants only).
  std::vector<double> mi_per_dim;
  double mi_bound = 0.0;
};

double tradeoff_gap(const ProbeReport& sensitive, const ProbeReport& target);

struct EvalConfig {
  ProbeConfig probe{};
  /// Neighbor counts for reported MI. Larger than the training defaults: the
  /// estimator's null bias is roughly 1/(4M) per dimension.
  SmoothingSpec mi_spec = SmoothingSpec::gaussian(1.0, {20, 40, 80});
  std::uint64_t seed = 0;

  void validate() const;
};

/// Variants "raw", "x_prime", "z_enc" and "vae_only", each probed for s and
/// the target. MI is reported for z_enc and for the masked VAE latent
/// (vae_only) over all rows of `d`.
std::vector<TradeoffReport> evaluate_pipeline(const PipelineCheckpoint& ckpt, const Dataset& d,
                                              const EvalConfig& cfg);

/// Per-dimension MI over dims 1..D-1 of a latent matrix.
std::vector<double> latent_mi(const Tensor& z, std::span<const int> s, const SmoothingSpec& spec);

struct NoisyLabelResult {
  double ratio = 0.0;
  ProbeReport raw;
  ProbeReport transformed;
};

/// For each ratio, corrupts training targets once and trains target probes on
/// raw images and on x'. Test labels stay clean.
std::vector<NoisyLabelResult> noisy_label_experiment(const PipelineCheckpoint& ckpt, const Dataset& d,
                                                     std::span<const double> ratios, const EvalConfig& cfg);

/// Long format `variant,metric,epoch,value`; epoch is empty for summary metrics.
void write_metrics_csv(std::ostream& out, std::span<const TradeoffReport> reports);
/// One row per report.
void write_summary_csv(std::ostream& out, std::span<const TradeoffReport> reports);
/// Long format with variants noisy_raw / noisy_transformed and a ratio column.
void write_noisy_csv(std::ostream& out, std::span<const NoisyLabelResult> results);

}  // namespace nnsb
