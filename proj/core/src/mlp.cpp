#include "nnsb/mlp.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "binary_io.hpp"
#include "nnsb/error.hpp"

namespace nnsb {

namespace {
constexpr std::uint32_t kFragmentVersion = 1;
}

void TrainConfig::validate() const {
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning_rate must be >= 0");
  require(adam_beta1 > 0.0 && adam_beta1 < 1.0, "adam_beta1 must lie in (0,1)");
  require(adam_beta2 > 0.0 && adam_beta2 < 1.0, "adam_beta2 must lie in (0,1)");
  require(adam_eps > 0.0, "adam_eps must be > 0");
  require(batch_size > 0, "batch_size must be positive");
  require(epochs > 0, "epochs must be positive");
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  require(!layers_.empty(), "Mlp needs at least one layer");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer& l = layers_[k];
    require(l.bias.rows() == 1 && l.bias.cols() == l.out_dim(), "Mlp: bias must be 1 x out");
    if (k + 1 < layers_.size()) {
      require(l.out_dim() == layers_[k + 1].in_dim(), "Mlp: consecutive layer widths do not chain");
    }
  }
  reset_optimizer();
}

Mlp Mlp::create(std::span<const std::size_t> widths, Activation hidden, Activation output,
                std::mt19937_64& rng) {
  require(widths.size() >= 2, "Mlp::create needs at least input and output widths");
  std::vector<Layer> layers;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const std::size_t in = widths[k], out = widths[k + 1];
    require(in > 0 && out > 0, "Mlp::create: widths must be positive");
    const Activation act = (k + 2 == widths.size()) ? output : hidden;
    const double limit = act == Activation::relu ? std::sqrt(6.0 / static_cast<double>(in))
                                                 : std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor w({out, in});
    for (double& v : w.values()) v = dist(rng);
    layers.push_back(Layer{std::move(w), Tensor({1, out}), act});
  }
  return Mlp(std::move(layers));
}

const Tensor& Mlp::parameter(std::size_t i) const {
  require(i < parameter_count(), "Mlp::parameter index out of range");
  const Layer& l = layers_[i / 2];
  return i % 2 == 0 ? l.weight : l.bias;
}

Tensor& Mlp::parameter(std::size_t i) {
  return const_cast<Tensor&>(std::as_const(*this).parameter(i));
}

void Mlp::reset_optimizer() {
  adam_ = AdamState{};
  for (std::size_t i = 0; i < parameter_count(); ++i) {
    adam_.first_moment.emplace_back(parameter(i).shape());
    adam_.second_moment.emplace_back(parameter(i).shape());
  }
}

BoundMlp Mlp::bind(Tape& tape) const { return BoundMlp(*this, tape); }

Tensor apply_activation(Activation act, Tensor x) {
  switch (act) {
    case Activation::identity:
      break;
    case Activation::tanh:
      for (double& v : x.values()) v = std::tanh(v);
      break;
    case Activation::relu:
      for (double& v : x.values()) v = v > 0.0 ? v : 0.0;
      break;
  }
  return x;
}

Tensor Mlp::predict(const Tensor& x) const {
  require(x.cols() == in_dim(), "Mlp::predict: input width does not match first layer");
  // Reuse the recorded path on a throwaway tape of constants; nothing is kept
  // for backward since no node requires a gradient.
  Tape tape;
  Var h = tape.constant(x);
  for (const Layer& l : layers_) {
    h = affine(h, tape.constant(l.weight), tape.constant(l.bias));
    switch (l.activation) {
      case Activation::identity: break;
      case Activation::tanh: h = nnsb::tanh(h); break;
      case Activation::relu: h = relu(h); break;
    }
  }
  return h.value();
}

void Mlp::adam_step(std::span<const Tensor> grads, const TrainConfig& cfg) {
  require(grads.size() == parameter_count(), "adam_step: missing gradient for a parameter");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    require(grads[i].shape() == parameter(i).shape(), "adam_step: gradient shape mismatch");
  }
  adam_.step += 1;
  const double t = static_cast<double>(adam_.step);
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Tensor& p = parameter(i);
    Tensor& m = adam_.first_moment[i];
    Tensor& v = adam_.second_moment[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * g[k];
      v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t k = 0; k < a.layers_.size(); ++k) {
    const Layer& la = a.layers_[k];
    const Layer& lb = b.layers_[k];
    if (la.activation != lb.activation || !(la.weight == lb.weight) || !(la.bias == lb.bias)) return false;
  }
  return true;
}

BoundMlp::BoundMlp(const Mlp& mlp, Tape& tape) : mlp_(&mlp) {
  params_.reserve(mlp.parameter_count());
  for (std::size_t i = 0; i < mlp.parameter_count(); ++i) params_.push_back(tape.variable(mlp.parameter(i)));
}

Var BoundMlp::forward(Var x) const {
  require(x.shape().cols == mlp_->in_dim(), "mlp_forward: input width does not match first layer");
  Var h = x;
  const auto& layers = mlp_->layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    h = affine(h, params_[2 * k], params_[2 * k + 1]);
    switch (layers[k].activation) {
      case Activation::identity: break;
      case Activation::tanh: h = nnsb::tanh(h); break;
      case Activation::relu: h = relu(h); break;
    }
  }
  return h;
}

std::vector<Tensor> BoundMlp::gradients(const GradientMap& grads) const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const Var& p : params_) out.push_back(grads.at(p));
  return out;
}

void write_mlp(std::ostream& out, const Mlp& mlp) {
  detail::put_magic(out, "NNSB");
  detail::put_u32(out, kFragmentVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(mlp.layers().size()));
  for (const Layer& l : mlp.layers()) {
    detail::put_u32(out, static_cast<std::uint32_t>(l.out_dim()));
    detail::put_u32(out, static_cast<std::uint32_t>(l.in_dim()));
    detail::put_u8(out, static_cast<std::uint8_t>(l.activation));
    for (double v : l.weight.values()) detail::put_f64(out, v);
    for (double v : l.bias.values()) detail::put_f64(out, v);
  }
}

Mlp read_mlp(std::istream& in) {
  detail::expect_magic(in, "NNSB");
  const std::uint32_t version = detail::get_u32(in);
  if (version != kFragmentVersion) throw IoError("unsupported NNSB fragment version " + std::to_string(version));
  const std::uint32_t count = detail::get_u32(in);
  if (count == 0) throw IoError("NNSB fragment with zero layers");
  std::vector<Layer> layers;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::size_t rows = detail::get_u32(in);
    const std::size_t cols = detail::get_u32(in);
    const std::uint8_t tag = detail::get_u8(in);
    if (tag > 2) throw IoError("unknown activation tag " + std::to_string(tag));
    if (rows == 0 || cols == 0) throw IoError("NNSB layer with zero width");
    Tensor w({rows, cols});
    for (double& v : w.values()) v = detail::get_f64(in);
    Tensor b({1, rows});
    for (double& v : b.values()) v = detail::get_f64(in);
    layers.push_back(Layer{std::move(w), std::move(b), static_cast<Activation>(tag)});
  }
  try {
    return Mlp(std::move(layers));
  } catch (const ContractViolation& e) {
    throw IoError(std::string("inconsistent NNSB fragment: ") + e.what());
  }
}

}  // namespace nnsb
