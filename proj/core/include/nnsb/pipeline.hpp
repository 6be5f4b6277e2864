#pragma once

// Two-stage transformation: frozen VAE -> mask z0 -> per-dimension latent
// encoders -> decoder.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nnsb/data.hpp"
#include "nnsb/miloss.hpp"
#include "nnsb/mlp.hpp"
#include "nnsb/vae.hpp"

namespace nnsb {

/// Mask value for z0: midpoint of the two prior means.
inline constexpr double kMaskValue = 0.0;

/// Copy of z (n x D) with column 0 set to kMaskValue.
Tensor mask_z0(const Tensor& z);

struct Stage2Config {
  /// Weight of mean((f(z) - z)^2) against the dependency loss.
  double proximity_weight = 1.0;
  SmoothingSpec spec = SmoothingSpec::defaults();
  PhaseSchedule schedule{};
  std::vector<std::size_t> hidden{16};
  TrainConfig train{.learning_rate = 3e-3, .batch_size = 512, .epochs = 20};
  /// Train on z ~ q(z|x) rather than the posterior mean.
  bool sample_latents = true;

  void validate() const;
};

/// One residual scalar encoder per latent dimension 1..D-1:
/// f_i(z) = z + g_i(z), g_i a tanh MLP with a zero-initialized output layer,
/// so a fresh bank is exactly the identity.
class LatentEncoderBank {
 public:
  LatentEncoderBank() = default;
  LatentEncoderBank(std::vector<Mlp> residuals, double proximity_weight);

  static LatentEncoderBank identity(std::size_t latent_dim, std::span<const std::size_t> hidden,
                                    double proximity_weight, std::mt19937_64& rng);

  std::size_t latent_dim() const { return residuals_.size() + 1; }
  double proximity_weight() const { return proximity_weight_; }

  /// Residual network of dimension i (1 <= i < D).
  const Mlp& residual(std::size_t dim) const;
  Mlp& residual(std::size_t dim);

  /// f_i on a column of values.
  Tensor apply(std::size_t dim, const Tensor& z) const;
  /// z_enc = [0, f_1(z_1), ..., f_{D-1}(z_{D-1})] for z (n x D).
  Tensor encode(const Tensor& z) const;

  friend bool operator==(const LatentEncoderBank&, const LatentEncoderBank&) = default;

 private:
  std::vector<Mlp> residuals_;
  double proximity_weight_ = 1.0;
};

/// f(z) = z + g(z) recorded on g's tape.
Var residual_forward(const BoundMlp& g, Var z);

struct DimensionHistory {
  std::vector<double> dependency_loss;  // per step, in the active phase
  std::vector<double> proximity_loss;   // per step
  std::vector<LossPhase> phase;         // per step
  std::size_t clamped = 0;
  bool diverged = false;
  std::string diagnostic;
};

/// Trains one residual encoder on latents of a single dimension. With
/// non-empty `log_var`, each step draws z = mu + exp(lv/2) * noise.
/// On a non-finite loss the encoder is reset to identity and the history
/// is marked diverged.
DimensionHistory train_dimension(Mlp& residual, std::span<const double> mu, std::span<const double> log_var,
                                 std::span<const int> s, const Stage2Config& cfg, std::mt19937_64& rng);

/// Stage 2 on the frozen VAE's latents of x. Dimensions are trained in
/// order 1..D-1, each on its own sub-stream of `rng`'s seed material.
std::vector<DimensionHistory> train_stage2(LatentEncoderBank& bank, const VaeModel& vae, const Tensor& x,
                                           std::span<const int> s, const Stage2Config& cfg,
                                           std::uint64_t seed);

struct PipelineCheckpoint {
  VaeModel vae;
  std::optional<LatentEncoderBank> bank;
  std::string fingerprint;

  std::vector<std::string> stages() const;
  friend bool operator==(const PipelineCheckpoint&, const PipelineCheckpoint&) = default;
};

struct Transformed {
  Tensor z_vae;    // posterior means
  Tensor z_enc;    // masked and encoded
  Tensor x_prime;  // decoded z_enc
};

/// Deterministic (noise = 0). Without a bank the encoders are the identity.
Transformed transform(const PipelineCheckpoint& ckpt, const Tensor& x);
/// decode(mask_z0(mu_e(x))).
Tensor transform_vae_only(const PipelineCheckpoint& ckpt, const Tensor& x);

/// Table of contents (name, offset, length) followed by the fragments
/// "meta", "vae" and, when trained, "bank".
void save_checkpoint(std::ostream& out, const PipelineCheckpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const PipelineCheckpoint& ckpt);
/// Throws IoError on malformed input, a VAE checksum mismatch, or (when
/// `expected_fingerprint` is given) a fingerprint mismatch.
PipelineCheckpoint load_checkpoint(std::istream& in, const std::optional<std::string>& expected_fingerprint = {});
PipelineCheckpoint load_checkpoint(const std::filesystem::path& path,
                                   const std::optional<std::string>& expected_fingerprint = {});

/// CSV: sample_id, s, target, z_vae_0..D-1, z_enc_0..D-1 at 17 significant digits.
void export_latents(std::ostream& out, const PipelineCheckpoint& ckpt, const Dataset& d);
void export_latents(const std::filesystem::path& path, const PipelineCheckpoint& ckpt, const Dataset& d);

}  // namespace nnsb
