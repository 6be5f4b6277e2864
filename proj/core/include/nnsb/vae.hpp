#pragma once

// Variational autoencoder whose prior mean follows the sensitive label:
// p(z | s) = N([s, 0, ..., 0], I). Latent dimension 0 is pushed to carry s.

#include <cstddef>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nnsb/autodiff.hpp"
#include "nnsb/mlp.hpp"

namespace nnsb {

struct VaeConfig {
  std::size_t latent_dim = 8;
  std::vector<std::size_t> encoder_hidden{128};
  std::vector<std::size_t> decoder_hidden{128};
  /// KL weight against the per-element MSE. The MSE is averaged over pixels,
  /// so weights near 1 collapse the posterior onto the prior.
  double beta_kl = 0.001;
  TrainConfig train{.learning_rate = 1e-3, .batch_size = 64, .epochs = 250};

  void validate() const;
};

struct VaeModel {
  Mlp encoder;  // in -> 2D: [mu_e, log_var]
  Mlp decoder;  // D -> in
  std::size_t latent_dim = 0;

  /// Relu hidden layers, identity outputs.
  static VaeModel create(std::size_t input_dim, const VaeConfig& cfg, std::mt19937_64& rng);

  std::size_t input_dim() const { return encoder.in_dim(); }
  /// Encoder width 2D, decoder input D, decoder output == encoder input.
  void validate() const;

  friend bool operator==(const VaeModel&, const VaeModel&) = default;
};

struct Encoding {
  Tensor mu;       // n x D
  Tensor log_var;  // n x D
};

Encoding encode(const VaeModel& m, const Tensor& x);
Tensor decode(const VaeModel& m, const Tensor& z);

/// n x D prior means: column 0 holds s, the rest 0.
Tensor target_mean(std::span<const int> s, std::size_t latent_dim);

/// z = mu + exp(log_var / 2) * noise; noise is a constant.
Var reparameterize(Var mu, Var log_var, const Tensor& noise);

/// 1/2 sum_d (exp(lv) + (mu - t(s))^2 - 1 - lv), averaged over rows.
Var kl_conditional_prior(Var mu, Var log_var, std::span<const int> s);
double kl_conditional_prior(const Tensor& mu, const Tensor& log_var, std::span<const int> s);

struct VaeLoss {
  Var total;
  Var reconstruction;  // mean over all elements of (x_hat - x)^2
  Var kl;
};

/// Encoder and decoder must already be bound to the tape holding x.
VaeLoss vae_loss(const BoundMlp& encoder, const BoundMlp& decoder, std::size_t latent_dim, Var x,
                 std::span<const int> s, const Tensor& noise, double beta_kl);

struct VaeHistory {
  std::vector<double> loss;            // per epoch, mean over batches
  std::vector<double> reconstruction;  // per epoch
  std::vector<double> kl;              // per epoch
};

/// Minibatch Adam on the ELBO. Throws DivergenceError on a non-finite loss.
VaeHistory train_vae(VaeModel& m, const Tensor& x, std::span<const int> s, const VaeConfig& cfg,
                     std::mt19937_64& rng);

/// Mean squared reconstruction error of the posterior-mean path.
double reconstruction_error(const VaeModel& m, const Tensor& x);

void write_vae(std::ostream& out, const VaeModel& m);
VaeModel read_vae(std::istream& in);

/// SHA-256 (hex) of the serialized model.
std::string checksum(const VaeModel& m);

}  // namespace nnsb
