#include "nnsb/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "nnsb/error.hpp"
#include "nnsb/random.hpp"

namespace nnsb {

Tensor mask_z0(const Tensor& z) {
  require(z.cols() >= 1, "mask_z0: latent has no columns");
  Tensor out = z;
  for (std::size_t i = 0; i < out.rows(); ++i) out(i, 0) = kMaskValue;
  return out;
}

void Stage2Config::validate() const {
  require(proximity_weight > 0.0 && std::isfinite(proximity_weight), "stage2.lambda must be > 0");
  spec.validate();
  schedule.validate();
  for (std::size_t w : hidden) require(w > 0, "stage2.hidden widths must be positive");
  train.validate();
  require(train.batch_size % 2 == 0, "stage2.batch_size must be even (balanced batches)");
}

LatentEncoderBank::LatentEncoderBank(std::vector<Mlp> residuals, double proximity_weight)
    : residuals_(std::move(residuals)), proximity_weight_(proximity_weight) {
  require(!residuals_.empty(), "LatentEncoderBank: need at least one encoder");
  require(proximity_weight_ > 0.0, "LatentEncoderBank: proximity weight must be > 0");
  for (const Mlp& g : residuals_) {
    require(!g.empty() && g.in_dim() == 1 && g.out_dim() == 1, "LatentEncoderBank: encoders map a scalar to a scalar");
  }
}

LatentEncoderBank LatentEncoderBank::identity(std::size_t latent_dim, std::span<const std::size_t> hidden,
                                              double proximity_weight, std::mt19937_64& rng) {
  require(latent_dim >= 2, "LatentEncoderBank: latent_dim must be >= 2");
  std::vector<std::size_t> widths{1};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  std::vector<Mlp> residuals;
  for (std::size_t i = 1; i < latent_dim; ++i) {
    Mlp g = Mlp::create(widths, Activation::tanh, Activation::identity, rng);
    for (double& w : g.layers().back().weight.values()) w = 0.0;
    residuals.push_back(std::move(g));
  }
  return LatentEncoderBank(std::move(residuals), proximity_weight);
}

const Mlp& LatentEncoderBank::residual(std::size_t dim) const {
  require(dim >= 1 && dim < latent_dim(), "LatentEncoderBank: dimension out of range (0 has no encoder)");
  return residuals_[dim - 1];
}

Mlp& LatentEncoderBank::residual(std::size_t dim) {
  return const_cast<Mlp&>(std::as_const(*this).residual(dim));
}

Tensor LatentEncoderBank::apply(std::size_t dim, const Tensor& z) const {
  require(z.cols() == 1, "LatentEncoderBank::apply: z must be a column");
  Tensor out = residual(dim).predict(z);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += z[i];
  return out;
}

Tensor LatentEncoderBank::encode(const Tensor& z) const {
  require(z.cols() == latent_dim(), "LatentEncoderBank::encode: latent width mismatch");
  Tensor out = mask_z0(z);
  for (std::size_t d = 1; d < latent_dim(); ++d) {
    const Tensor f = apply(d, z.column_at(d));
    for (std::size_t i = 0; i < z.rows(); ++i) out(i, d) = f[i];
  }
  return out;
}

Var residual_forward(const BoundMlp& g, Var z) { return add(z, g.forward(z)); }

namespace {

// Balanced minibatches: each epoch walks both label groups in a fresh
// order and pairs them up, half a batch from each.
class BalancedSampler {
 public:
  BalancedSampler(std::span<const int> s, std::size_t batch_size) : half_(batch_size / 2) {
    for (std::size_t i = 0; i < s.size(); ++i) (s[i] == 1 ? pos_ : neg_).push_back(i);
    require(!pos_.empty() && !neg_.empty(), "stage2: both labels must be present");
    half_ = std::min({half_, pos_.size(), neg_.size()});
  }

  std::size_t batches_per_epoch() const { return std::min(pos_.size(), neg_.size()) / half_; }

  void shuffle(std::mt19937_64& rng) {
    order_pos_ = permutation(pos_.size(), rng);
    order_neg_ = permutation(neg_.size(), rng);
  }

  void batch(std::size_t b, std::vector<std::size_t>& idx, std::vector<int>& labels) const {
    idx.clear();
    labels.clear();
    for (std::size_t k = 0; k < half_; ++k) {
      idx.push_back(neg_[order_neg_[b * half_ + k]]);
      labels.push_back(-1);
    }
    for (std::size_t k = 0; k < half_; ++k) {
      idx.push_back(pos_[order_pos_[b * half_ + k]]);
      labels.push_back(1);
    }
  }

 private:
  std::size_t half_;
  std::vector<std::size_t> pos_, neg_, order_pos_, order_neg_;
};

}  // namespace

DimensionHistory train_dimension(Mlp& residual, std::span<const double> mu, std::span<const double> log_var,
                                 std::span<const int> s, const Stage2Config& cfg, std::mt19937_64& rng) {
  cfg.validate();
  require(mu.size() == s.size(), "train_dimension: one label per latent");
  require(log_var.empty() || log_var.size() == mu.size(), "train_dimension: log_var length mismatch");
  require(residual.in_dim() == 1 && residual.out_dim() == 1, "train_dimension: encoder must be scalar");
  const Mlp initial = residual;
  BalancedSampler sampler(s, cfg.train.batch_size);
  std::normal_distribution<double> normal(0.0, 1.0);
  DimensionHistory hist;
  LossPhase phase = LossPhase::SqDiff;
  std::vector<double> sqdiff_history;
  std::vector<std::size_t> idx;
  std::vector<int> labels;

  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    sampler.shuffle(rng);
    for (std::size_t b = 0; b < sampler.batches_per_epoch(); ++b) {
      sampler.batch(b, idx, labels);
      Tensor z({idx.size(), 1});
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const std::size_t i = idx[k];
        z[k] = mu[i];
        if (cfg.sample_latents && !log_var.empty()) z[k] += std::exp(0.5 * log_var[i]) * normal(rng);
      }
      Tape tape;
      const BoundMlp g = residual.bind(tape);
      Var zin = tape.constant(std::move(z));
      Var gz = g.forward(zin);
      Var f = add(zin, gz);
      std::size_t clamped = 0;
      Var dep = phase_loss(phase, f, labels, cfg.spec, &clamped);
      Var prox = mean(square(gz));
      Var total = add(dep, scale(prox, cfg.proximity_weight));
      const double value = total.item();
      if (!std::isfinite(value)) {
        residual = initial;
        hist.diverged = true;
        hist.diagnostic = "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                          " in phase " + to_string(phase);
        return hist;
      }
      const GradientMap grads = tape.backward(total);
      residual.adam_step(g.gradients(grads), cfg.train);

      hist.dependency_loss.push_back(dep.item());
      hist.proximity_loss.push_back(prox.item());
      hist.phase.push_back(phase);
      hist.clamped += clamped;
      if (phase == LossPhase::SqDiff) {
        sqdiff_history.push_back(dep.item());
        phase = select_phase(sqdiff_history, phase, cfg.schedule);
      }
    }
  }
  return hist;
}

std::vector<DimensionHistory> train_stage2(LatentEncoderBank& bank, const VaeModel& vae, const Tensor& x,
                                           std::span<const int> s, const Stage2Config& cfg,
                                           std::uint64_t seed) {
  cfg.validate();
  require(bank.latent_dim() == vae.latent_dim, "train_stage2: bank and VAE latent widths differ");
  const Encoding enc = encode(vae, x);
  std::vector<DimensionHistory> out;
  for (std::size_t d = 1; d < bank.latent_dim(); ++d) {
    auto rng = make_stream(seed, Stream::stage2, static_cast<std::uint32_t>(d));
    const Tensor mu = enc.mu.column_at(d);
    const Tensor lv = enc.log_var.column_at(d);
    out.push_back(train_dimension(bank.residual(d), mu.values(), lv.values(), s, cfg, rng));
  }
  return out;
}

std::vector<std::string> PipelineCheckpoint::stages() const {
  std::vector<std::string> out{"vae"};
  if (bank) out.emplace_back("encoder");
  return out;
}

Transformed transform(const PipelineCheckpoint& ckpt, const Tensor& x) {
  Transformed t;
  t.z_vae = encode(ckpt.vae, x).mu;
  t.z_enc = ckpt.bank ? ckpt.bank->encode(t.z_vae) : mask_z0(t.z_vae);
  t.x_prime = decode(ckpt.vae, t.z_enc);
  return t;
}

Tensor transform_vae_only(const PipelineCheckpoint& ckpt, const Tensor& x) {
  return decode(ckpt.vae, mask_z0(encode(ckpt.vae, x).mu));
}

namespace {

constexpr char kCheckpointMagic[5] = "NNSC";
constexpr std::uint32_t kCheckpointVersion = 1;

void write_bank(std::ostream& out, const LatentEncoderBank& bank) {
  detail::put_f64(out, bank.proximity_weight());
  detail::put_u32(out, static_cast<std::uint32_t>(bank.latent_dim()));
  for (std::size_t d = 1; d < bank.latent_dim(); ++d) write_mlp(out, bank.residual(d));
}

LatentEncoderBank read_bank(std::istream& in) {
  const double lambda = detail::get_f64(in);
  const std::uint32_t dim = detail::get_u32(in);
  if (dim < 2 || dim > 4096) throw IoError("malformed bank fragment: bad latent width");
  std::vector<Mlp> residuals;
  for (std::uint32_t d = 1; d < dim; ++d) residuals.push_back(read_mlp(in));
  try {
    return LatentEncoderBank(std::move(residuals), lambda);
  } catch (const ContractViolation& e) {
    throw IoError(std::string("malformed bank fragment: ") + e.what());
  }
}

std::string meta_text(const PipelineCheckpoint& ckpt) {
  std::ostringstream m;
  m << "fingerprint=" << ckpt.fingerprint << '\n';
  m << "latent_dim=" << ckpt.vae.latent_dim << '\n';
  m << "stages=";
  const auto st = ckpt.stages();
  for (std::size_t i = 0; i < st.size(); ++i) m << (i ? "," : "") << st[i];
  m << '\n' << "vae_sha256=" << checksum(ckpt.vae) << '\n';
  return m.str();
}

std::map<std::string, std::string> parse_meta(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed checkpoint meta line: " + line);
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace

void save_checkpoint(std::ostream& out, const PipelineCheckpoint& ckpt) {
  std::vector<std::pair<std::string, std::string>> fragments;
  fragments.emplace_back("meta", meta_text(ckpt));
  std::ostringstream vae;
  write_vae(vae, ckpt.vae);
  fragments.emplace_back("vae", vae.str());
  if (ckpt.bank) {
    require(ckpt.bank->latent_dim() == ckpt.vae.latent_dim, "save_checkpoint: bank and VAE latent widths differ");
    std::ostringstream bank;
    write_bank(bank, *ckpt.bank);
    fragments.emplace_back("bank", bank.str());
  }
  // Header: magic, version, count, then (name_len u32, name, offset u64, length u64).
  std::uint64_t header = 4 + 4 + 4;
  for (const auto& [name, bytes] : fragments) header += 4 + name.size() + 8 + 8;
  detail::put_magic(out, kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(fragments.size()));
  std::uint64_t offset = header;
  for (const auto& [name, bytes] : fragments) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u64(out, offset);
    detail::put_u64(out, bytes.size());
    offset += bytes.size();
  }
  for (const auto& [name, bytes] : fragments) out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void save_checkpoint(const std::filesystem::path& path, const PipelineCheckpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  save_checkpoint(out, ckpt);
  if (!out) throw IoError("write failed: " + path.string());
}

PipelineCheckpoint load_checkpoint(std::istream& in, const std::optional<std::string>& expected_fingerprint) {
  const std::string all{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::istringstream hdr(all);
  detail::expect_magic(hdr, kCheckpointMagic);
  if (detail::get_u32(hdr) != kCheckpointVersion) throw IoError("unsupported checkpoint version");
  const std::uint32_t count = detail::get_u32(hdr);
  if (count > 16) throw IoError("malformed checkpoint: too many fragments");
  std::map<std::string, std::string> frag;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = detail::get_u32(hdr);
    if (len > 64) throw IoError("malformed checkpoint: fragment name too long");
    std::string name(len, '\0');
    hdr.read(name.data(), len);
    const std::uint64_t offset = detail::get_u64(hdr);
    const std::uint64_t length = detail::get_u64(hdr);
    if (!hdr || offset > all.size() || length > all.size() - offset) {
      throw IoError("malformed checkpoint: fragment '" + name + "' out of bounds");
    }
    frag[name] = all.substr(offset, length);
  }
  if (!frag.contains("meta") || !frag.contains("vae")) throw IoError("checkpoint lacks meta or vae fragment");
  const auto meta = parse_meta(frag["meta"]);

  PipelineCheckpoint ckpt;
  std::istringstream vae(frag["vae"]);
  ckpt.vae = read_vae(vae);
  if (frag.contains("bank")) {
    std::istringstream bank(frag["bank"]);
    ckpt.bank = read_bank(bank);
    if (ckpt.bank->latent_dim() != ckpt.vae.latent_dim) throw IoError("checkpoint bank and VAE latent widths differ");
  }
  ckpt.fingerprint = meta.contains("fingerprint") ? meta.at("fingerprint") : "";
  if (!meta.contains("vae_sha256") || meta.at("vae_sha256") != checksum(ckpt.vae)) {
    throw IoError("checkpoint VAE checksum mismatch");
  }
  if (expected_fingerprint && *expected_fingerprint != ckpt.fingerprint) {
    throw IoError("checkpoint config fingerprint mismatch: stored " + ckpt.fingerprint + ", expected " +
                  *expected_fingerprint);
  }
  return ckpt;
}

PipelineCheckpoint load_checkpoint(const std::filesystem::path& path,
                                   const std::optional<std::string>& expected_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  try {
    return load_checkpoint(in, expected_fingerprint);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void export_latents(std::ostream& out, const PipelineCheckpoint& ckpt, const Dataset& d) {
  const Transformed t = transform(ckpt, d.x);
  const std::size_t D = ckpt.vae.latent_dim;
  out << "sample_id,s,target";
  for (std::size_t k = 0; k < D; ++k) out << ",z_vae_" << k;
  for (std::size_t k = 0; k < D; ++k) out << ",z_enc_" << k;
  out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << i << ',' << d.s[i] << ',' << d.target[i];
    for (std::size_t k = 0; k < D; ++k) out << ',' << t.z_vae(i, k);
    for (std::size_t k = 0; k < D; ++k) out << ',' << t.z_enc(i, k);
    out << '\n';
  }
}

void export_latents(const std::filesystem::path& path, const PipelineCheckpoint& ckpt, const Dataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  export_latents(out, ckpt, d);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace nnsb
