#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "finite_diff.hpp"
#include "nnsb/error.hpp"
#include "nnsb/mlp.hpp"

namespace nnsb {
namespace {

Tensor linspace_column(std::size_t n, double lo, double hi) {
  Tensor t({n, 1});
  for (std::size_t i = 0; i < n; ++i) t[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return t;
}

TEST(Mlp, ZeroWeightsIdentityActivationGivesBias) {
  Mlp m({Layer{Tensor({3, 2}), Tensor({1, 3}, {0.5, -1.0, 2.0}), Activation::identity}});
  const Tensor x({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  const Tensor y = m.predict(x);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(y(r, 0), 0.5);
    EXPECT_EQ(y(r, 1), -1.0);
    EXPECT_EQ(y(r, 2), 2.0);
  }
}

TEST(Mlp, IdentityLayerPassesInputThrough) {
  Mlp m({Layer{Tensor({2, 2}, {1, 0, 0, 1}), Tensor({1, 2}), Activation::identity}});
  const Tensor x({3, 2}, {1.5, -2, 0.25, 7, -3, 4});
  EXPECT_EQ(m.predict(x), x);
  Tape tape;
  EXPECT_EQ(m.bind(tape).forward(tape.constant(x)).value(), x);
}

TEST(Mlp, ShapeMismatchIsContractViolation) {
  std::mt19937_64 rng(1);
  const std::size_t widths[] = {3, 4, 1};
  const Mlp m = Mlp::create(widths, Activation::tanh, Activation::identity, rng);
  EXPECT_THROW(m.predict(Tensor({2, 2})), ContractViolation);
  Tape tape;
  EXPECT_THROW(m.bind(tape).forward(tape.constant(Tensor({2, 5}))), ContractViolation);
}

TEST(Mlp, LayersMustChain) {
  EXPECT_THROW(Mlp({Layer{Tensor({3, 2}), Tensor({1, 3}), Activation::tanh},
                    Layer{Tensor({1, 4}), Tensor({1, 1}), Activation::identity}}),
               ContractViolation);
}

TEST(Mlp, ParameterGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(42);
  const std::size_t widths[] = {3, 5, 2};
  const Mlp mlp = Mlp::create(widths, Activation::tanh, Activation::identity, rng);
  std::normal_distribution<double> nd;
  Tensor x({6, 3});
  for (double& v : x.values()) v = nd(rng);

  Tape tape;
  const BoundMlp bound = mlp.bind(tape);
  Var loss = mean(square(bound.forward(tape.constant(x))));
  const auto grads = bound.gradients(tape.backward(loss));

  double worst = 0.0;
  for (std::size_t p = 0; p < mlp.parameter_count(); ++p) {
    auto f = [&](const Tensor& value) {
      Mlp copy = mlp;
      copy.parameter(p) = value;
      Tensor y = copy.predict(x);
      double s = 0.0;
      for (double v : y.values()) s += v * v;
      return s / static_cast<double>(y.size());
    };
    const Tensor numeric = testing::central_difference(f, mlp.parameter(p));
    worst = std::max(worst, testing::max_relative_error(grads[p], numeric));
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(Mlp, FitsLinearTarget) {
  std::mt19937_64 rng(5);
  const std::size_t widths[] = {1, 4, 1};
  Mlp mlp = Mlp::create(widths, Activation::tanh, Activation::identity, rng);
  const Tensor x = linspace_column(64, -1.0, 1.0);
  Tensor y = x;
  for (double& v : y.values()) v *= 2.0;
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  double mse = 0.0;
  for (int step = 0; step < 2000; ++step) {
    Tape tape;
    const BoundMlp bound = mlp.bind(tape);
    Var loss = mean(square(sub(bound.forward(tape.constant(x)), tape.constant(y))));
    mse = loss.item();
    mlp.adam_step(bound.gradients(tape.backward(loss)), cfg);
  }
  EXPECT_LT(mse, 1e-3);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::mt19937_64 rng(2);
  const std::size_t widths[] = {2, 3, 1};
  Mlp mlp = Mlp::create(widths, Activation::relu, Activation::identity, rng);
  const Mlp before = mlp;
  std::vector<Tensor> zeros;
  for (std::size_t i = 0; i < mlp.parameter_count(); ++i) zeros.emplace_back(mlp.parameter(i).shape());
  mlp.adam_step(zeros, TrainConfig{});
  EXPECT_EQ(mlp, before);
  EXPECT_EQ(mlp.optimizer_state().step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Mlp mlp({Layer{Tensor({1, 1}), Tensor({1, 1}), Activation::identity}});
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  mlp.adam_step(std::vector<Tensor>{Tensor::scalar(1.0), Tensor::scalar(0.0)}, cfg);
  EXPECT_NEAR(mlp.parameter(0).item(), -0.1, 1e-6);
}

TEST(Adam, QuadraticBowlConverges) {
  Mlp mlp({Layer{Tensor({1, 1}), Tensor({1, 1}), Activation::identity}});
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  for (int step = 0; step < 500; ++step) {
    const double w = mlp.parameter(0).item();
    mlp.adam_step(std::vector<Tensor>{Tensor::scalar(2.0 * (w - 3.0)), Tensor::scalar(0.0)}, cfg);
  }
  EXPECT_LT(std::abs(mlp.parameter(0).item() - 3.0), 1e-2);
}

TEST(Adam, MissingGradientIsContractViolation) {
  Mlp mlp({Layer{Tensor({1, 1}), Tensor({1, 1}), Activation::identity}});
  EXPECT_THROW(mlp.adam_step(std::vector<Tensor>{Tensor::scalar(1.0)}, TrainConfig{}), ContractViolation);
}

TEST(Mlp, TrainingIsDeterministicForASeed) {
  auto run = [] {
    std::mt19937_64 rng(99);
    const std::size_t widths[] = {2, 8, 1};
    Mlp mlp = Mlp::create(widths, Activation::tanh, Activation::identity, rng);
    std::normal_distribution<double> nd;
    Tensor x({32, 2});
    for (double& v : x.values()) v = nd(rng);
    for (int step = 0; step < 50; ++step) {
      Tape tape;
      const BoundMlp bound = mlp.bind(tape);
      Var loss = mean(square(bound.forward(tape.constant(x))));
      mlp.adam_step(bound.gradients(tape.backward(loss)), TrainConfig{});
    }
    return mlp;
  };
  EXPECT_EQ(run(), run());
}

TEST(MlpFragment, RoundTripIsExact) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    std::uniform_int_distribution<std::size_t> width(1, 9);
    const std::size_t widths[] = {width(rng), width(rng), width(rng), width(rng)};
    const Mlp mlp = Mlp::create(widths, trial % 2 ? Activation::relu : Activation::tanh, Activation::identity, rng);
    std::stringstream buf;
    write_mlp(buf, mlp);
    const std::string bytes = buf.str();
    EXPECT_EQ(bytes.substr(0, 4), "NNSB");
    const Mlp back = read_mlp(buf);
    EXPECT_EQ(back, mlp);
    std::stringstream again;
    write_mlp(again, back);
    EXPECT_EQ(again.str(), bytes);
  }
}

TEST(MlpFragment, LayoutIsLittleEndian) {
  Mlp mlp({Layer{Tensor({1, 1}, {1.0}), Tensor({1, 1}, {-2.0}), Activation::tanh}});
  std::stringstream buf;
  write_mlp(buf, mlp);
  const std::string b = buf.str();
  ASSERT_EQ(b.size(), 4u + 4 + 4 + 4 + 4 + 1 + 8 + 8);
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 1u);   // version
  EXPECT_EQ(static_cast<unsigned char>(b[8]), 1u);   // layer count
  EXPECT_EQ(static_cast<unsigned char>(b[20]), 1u);  // tanh tag
  // 1.0 = 0x3FF0000000000000, least significant byte first.
  EXPECT_EQ(static_cast<unsigned char>(b[21 + 7]), 0x3Fu);
  EXPECT_EQ(static_cast<unsigned char>(b[21 + 6]), 0xF0u);
}

TEST(MlpFragment, TruncatedInputIsIoError) {
  std::stringstream buf;
  write_mlp(buf, Mlp({Layer{Tensor({2, 2}), Tensor({1, 2}), Activation::relu}}));
  std::string bytes = buf.str();
  bytes.resize(bytes.size() - 3);
  std::stringstream cut(bytes);
  EXPECT_THROW(read_mlp(cut), IoError);
}

}  // namespace
}  // namespace nnsb
