#include "nnsb/vae.hpp"

#include <cmath>
#include <sstream>

#include "binary_io.hpp"
#include "nnsb/error.hpp"
#include "nnsb/hash.hpp"
#include "nnsb/random.hpp"

namespace nnsb {

void VaeConfig::validate() const {
  require(latent_dim >= 2, "vae.latent_dim must be >= 2");
  require(beta_kl > 0.0, "vae.beta_kl must be > 0");
  for (std::size_t w : encoder_hidden) require(w > 0, "vae.encoder_hidden widths must be positive");
  for (std::size_t w : decoder_hidden) require(w > 0, "vae.decoder_hidden widths must be positive");
  train.validate();
}

VaeModel VaeModel::create(std::size_t input_dim, const VaeConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  require(input_dim > 0, "VaeModel::create: input_dim must be positive");
  std::vector<std::size_t> enc{input_dim};
  enc.insert(enc.end(), cfg.encoder_hidden.begin(), cfg.encoder_hidden.end());
  enc.push_back(2 * cfg.latent_dim);
  std::vector<std::size_t> dec{cfg.latent_dim};
  dec.insert(dec.end(), cfg.decoder_hidden.begin(), cfg.decoder_hidden.end());
  dec.push_back(input_dim);
  VaeModel m;
  m.encoder = Mlp::create(enc, Activation::relu, Activation::identity, rng);
  m.decoder = Mlp::create(dec, Activation::relu, Activation::identity, rng);
  m.latent_dim = cfg.latent_dim;
  return m;
}

void VaeModel::validate() const {
  require(!encoder.empty() && !decoder.empty(), "VaeModel: empty encoder or decoder");
  require(encoder.out_dim() == 2 * latent_dim, "VaeModel: encoder output width must be 2D");
  require(decoder.in_dim() == latent_dim, "VaeModel: decoder input width must be D");
  require(decoder.out_dim() == encoder.in_dim(), "VaeModel: decoder output must match encoder input");
}

Encoding encode(const VaeModel& m, const Tensor& x) {
  const Tensor out = m.encoder.predict(x);
  const std::size_t n = out.rows(), d = m.latent_dim;
  Encoding e{Tensor({n, d}), Tensor({n, d})};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      e.mu(i, k) = out(i, k);
      e.log_var(i, k) = out(i, d + k);
    }
  }
  return e;
}

Tensor decode(const VaeModel& m, const Tensor& z) { return m.decoder.predict(z); }

Tensor target_mean(std::span<const int> s, std::size_t latent_dim) {
  Tensor t({s.size(), latent_dim});
  for (std::size_t i = 0; i < s.size(); ++i) {
    require(s[i] == 1 || s[i] == -1, "target_mean: labels must be -1 or +1");
    t(i, 0) = s[i];
  }
  return t;
}

Var reparameterize(Var mu, Var log_var, const Tensor& noise) {
  require(mu.shape() == log_var.shape() && mu.shape() == noise.shape(), "reparameterize: shape mismatch");
  Var eps = mu.tape().constant(noise);
  return add(mu, mul(exp(scale(log_var, 0.5)), eps));
}

Var kl_conditional_prior(Var mu, Var log_var, std::span<const int> s) {
  require(mu.shape() == log_var.shape(), "kl_conditional_prior: shape mismatch");
  require(mu.shape().rows == s.size(), "kl_conditional_prior: one label per row");
  Var t = mu.tape().constant(target_mean(s, mu.shape().cols));
  Var terms = sub(add(exp(log_var), square(sub(mu, t))), log_var);
  const double n = static_cast<double>(s.size());
  const double count = static_cast<double>(mu.value().size());
  // sum over all elements of (... - 1), halved, per row.
  return scale(add_scalar(sum(terms), -count), 0.5 / n);
}

double kl_conditional_prior(const Tensor& mu, const Tensor& log_var, std::span<const int> s) {
  Tape tape;
  return kl_conditional_prior(tape.constant(mu), tape.constant(log_var), s).item();
}

VaeLoss vae_loss(const BoundMlp& encoder, const BoundMlp& decoder, std::size_t latent_dim, Var x,
                 std::span<const int> s, const Tensor& noise, double beta_kl) {
  require(beta_kl > 0.0, "vae_loss: beta_kl must be > 0");
  Var out = encoder.forward(x);
  Var mu = slice_cols(out, 0, latent_dim);
  Var lv = slice_cols(out, latent_dim, 2 * latent_dim);
  Var z = reparameterize(mu, lv, noise);
  Var recon = mean(square(sub(decoder.forward(z), x)));
  Var kl = kl_conditional_prior(mu, lv, s);
  return VaeLoss{add(recon, scale(kl, beta_kl)), recon, kl};
}

VaeHistory train_vae(VaeModel& m, const Tensor& x, std::span<const int> s, const VaeConfig& cfg,
                     std::mt19937_64& rng) {
  cfg.validate();
  m.validate();
  require(x.rows() == s.size(), "train_vae: one label per sample");
  require(x.cols() == m.input_dim(), "train_vae: input width mismatch");
  const std::size_t n = x.rows(), d = m.latent_dim;
  const std::size_t bs = std::min(cfg.train.batch_size, n);
  std::normal_distribution<double> normal(0.0, 1.0);
  VaeHistory hist;
  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const auto order = permutation(n, rng);
    double loss_sum = 0.0, recon_sum = 0.0, kl_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<int> sb;
      for (std::size_t i : idx) sb.push_back(s[i]);
      Tensor noise({idx.size(), d});
      for (double& v : noise.values()) v = normal(rng);

      Tape tape;
      const BoundMlp enc = m.encoder.bind(tape);
      const BoundMlp dec = m.decoder.bind(tape);
      Var xb = tape.constant(x.select_rows(idx));
      const VaeLoss loss = vae_loss(enc, dec, d, xb, sb, noise, cfg.beta_kl);
      const double value = loss.total.item();
      if (!std::isfinite(value)) {
        throw DivergenceError("train_vae: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batches));
      }
      const GradientMap g = tape.backward(loss.total);
      const auto ge = enc.gradients(g);
      const auto gd = dec.gradients(g);
      m.encoder.adam_step(ge, cfg.train);
      m.decoder.adam_step(gd, cfg.train);
      loss_sum += value;
      recon_sum += loss.reconstruction.item();
      kl_sum += loss.kl.item();
      ++batches;
    }
    hist.loss.push_back(loss_sum / static_cast<double>(batches));
    hist.reconstruction.push_back(recon_sum / static_cast<double>(batches));
    hist.kl.push_back(kl_sum / static_cast<double>(batches));
  }
  return hist;
}

double reconstruction_error(const VaeModel& m, const Tensor& x) {
  const Tensor xr = decode(m, encode(m, x).mu);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += (xr[i] - x[i]) * (xr[i] - x[i]);
  return total / static_cast<double>(x.size());
}

void write_vae(std::ostream& out, const VaeModel& m) {
  m.validate();
  detail::put_u32(out, static_cast<std::uint32_t>(m.latent_dim));
  write_mlp(out, m.encoder);
  write_mlp(out, m.decoder);
}

VaeModel read_vae(std::istream& in) {
  VaeModel m;
  m.latent_dim = detail::get_u32(in);
  m.encoder = read_mlp(in);
  m.decoder = read_mlp(in);
  try {
    m.validate();
  } catch (const ContractViolation& e) {
    throw IoError(std::string("malformed VAE fragment: ") + e.what());
  }
  return m;
}

std::string checksum(const VaeModel& m) {
  std::ostringstream buf;
  write_vae(buf, m);
  return sha256_hex(buf.str());
}

}  // namespace nnsb
