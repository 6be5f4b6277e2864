#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "nnsb/autodiff.hpp"
#include "nnsb/tensor.hpp"

namespace nnsb {

enum class Activation : std::uint8_t { identity = 0, tanh = 1, relu = 2 };

struct Layer {
  Tensor weight;  // out x in
  Tensor bias;    // 1 x out
  Activation activation = Activation::identity;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

/// Adam hyperparameters plus the minibatch loop settings shared by every trainer.
struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;

  /// Throws ContractViolation naming the first field out of bounds.
  void validate() const;
};

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

class BoundMlp;

/// Stack of affine layers with per-layer activation and Adam state.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers);

  /// widths = {in, hidden..., out}. Hidden layers use `hidden`, the last layer
  /// `output`. Xavier-uniform init for tanh/identity layers, He-uniform for relu.
  static Mlp create(std::span<const std::size_t> widths, Activation hidden, Activation output,
                    std::mt19937_64& rng);

  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }
  bool empty() const { return layers_.empty(); }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  const AdamState& optimizer_state() const { return adam_; }

  /// Parameter count in (w0, b0, w1, b1, ...) order.
  std::size_t parameter_count() const { return 2 * layers_.size(); }
  const Tensor& parameter(std::size_t i) const;
  Tensor& parameter(std::size_t i);

  /// Registers all parameters as variables on `tape`.
  BoundMlp bind(Tape& tape) const;

  /// Forward pass without recording.
  Tensor predict(const Tensor& x) const;

  /// One Adam update. `grads` must hold one tensor per parameter, in
  /// parameter order, each shaped like its parameter.
  void adam_step(std::span<const Tensor> grads, const TrainConfig& cfg);

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  void reset_optimizer();

  std::vector<Layer> layers_;
  AdamState adam_;
};

/// An Mlp whose parameters are variables on a particular tape.
class BoundMlp {
 public:
  BoundMlp(const Mlp& mlp, Tape& tape);

  Var forward(Var x) const;
  std::span<const Var> parameters() const { return params_; }
  /// Gradients in parameter order; throws if any parameter is unreachable.
  std::vector<Tensor> gradients(const GradientMap& grads) const;

 private:
  const Mlp* mlp_;
  std::vector<Var> params_;
};

Tensor apply_activation(Activation act, Tensor x);

/// Binary fragment: "NNSB", version u32, layer count u32, then per layer rows
/// u32, cols u32, activation u8, weights then biases as little-endian f64.
void write_mlp(std::ostream& out, const Mlp& mlp);
Mlp read_mlp(std::istream& in);

}  // namespace nnsb
