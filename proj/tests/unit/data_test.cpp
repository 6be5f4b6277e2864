#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "nnsb/data.hpp"
#include "nnsb/error.hpp"
#include "nnsb/random.hpp"

namespace nnsb {
namespace {

// Independent oracle for the two-Gaussian mixture MI: composite Simpson rule
// on a wide fixed grid.
double simpson_mixture_mi(double delta, double sigma) {
  auto pdf = [&](double x, double m) {
    return std::exp(-0.5 * (x - m) * (x - m) / (sigma * sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
  };
  auto f = [&](double x) {
    const double a = pdf(x, 0.0), b = pdf(x, delta), m = 0.5 * (a + b);
    double v = 0.0;
    if (a > 0) v += 0.5 * a * std::log(a / m);
    if (b > 0) v += 0.5 * b * std::log(b / m);
    return v;
  };
  const double lo = std::min(0.0, delta) - 15 * sigma, hi = std::max(0.0, delta) + 15 * sigma;
  const int n = 20000;
  const double h = (hi - lo) / n;
  double total = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) total += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return total * h / 3.0;
}

ShapesSpec small_shapes(std::uint64_t seed = 3) {
  ShapesSpec spec;
  spec.n_samples = 1000;
  spec.seed = seed;
  return spec;
}

TEST(GenShapes, PixelsInUnitInterval) {
  const Dataset d = gen_shapes(small_shapes());
  EXPECT_EQ(d.x.cols(), 256u);
  for (double v : d.x.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(GenShapes, ExactBalanceAndStratifiedSplit) {
  const Dataset d = gen_shapes(small_shapes());
  ASSERT_EQ(d.size(), 1000u);
  std::map<std::tuple<int, int, Split>, int> cells;
  int pos = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    cells[{d.s[i], d.target[i], d.split[i]}] += 1;
    pos += d.s[i] == 1;
  }
  EXPECT_EQ(pos, 500);
  for (int s : {-1, 1}) {
    for (int g = 0; g < 4; ++g) {
      EXPECT_EQ((cells[{s, g, Split::train}] + cells[{s, g, Split::test}]), 125);
      EXPECT_EQ((cells[{s, g, Split::test}]), 25);
    }
  }
  EXPECT_NO_THROW(d.validate());
}

TEST(GenShapes, ReproducibleForSeed) {
  const Dataset a = gen_shapes(small_shapes(4)), b = gen_shapes(small_shapes(4)), c = gen_shapes(small_shapes(5));
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.s, b.s);
  EXPECT_EQ(a.target, b.target);
  EXPECT_EQ(a.split, b.split);
  EXPECT_NE(a.x, c.x);
}

TEST(GenShapes, NoiselessImagesShowTheDeclaredLevels) {
  ShapesSpec spec = small_shapes();
  spec.noise_std = 0.0;
  const Dataset d = gen_shapes(spec);
  for (std::size_t i = 0; i < 20; ++i) {
    std::map<double, int> levels;
    for (double v : d.x.row_span(i)) levels[v] += 1;
    for (const auto& [v, n] : levels) EXPECT_TRUE(v == 0.0 || v == kBackgroundLevel || v == kGlyphLevel) << v;
    EXPECT_GT(levels[kBackgroundLevel], 20);
    EXPECT_GE(levels[kGlyphLevel], 9);
  }
}

TEST(GenShapes, ValidationRejectsBadSpecs) {
  ShapesSpec spec;
  spec.n_samples = 1001;
  EXPECT_THROW(gen_shapes(spec), ContractViolation);
  spec = ShapesSpec{};
  spec.glyph_classes = 5;
  EXPECT_THROW(gen_shapes(spec), ContractViolation);
  spec = ShapesSpec{};
  spec.image_side = 8;
  EXPECT_THROW(gen_shapes(spec), ContractViolation);
}

TEST(GaussianPair, ClassMeansAndBalance) {
  GaussianPairSpec spec;
  spec.delta = 3.0;
  spec.sigma = 0.5;
  spec.n_per_class = 2000;
  const Dataset d = gen_gaussian_pair(spec);
  double m[2] = {0, 0};
  for (std::size_t i = 0; i < d.size(); ++i) m[d.s[i] == 1] += d.x[i] / 2000.0;
  EXPECT_NEAR(m[0], 0.0, 0.05);
  EXPECT_NEAR(m[1], 3.0, 0.05);
  EXPECT_NO_THROW(d.validate());
  spec.n_per_class = 99;
  EXPECT_THROW(gen_gaussian_pair(spec), ContractViolation);
}

TEST(GaussianPairMi, QuadratureOracle) {
  EXPECT_NEAR(gaussian_pair_mi(0.0, 1.0), 0.0, 1e-10);
  EXPECT_NEAR(gaussian_pair_mi(1.0, 1.0), simpson_mixture_mi(1.0, 1.0), 1e-9);
  EXPECT_NEAR(gaussian_pair_mi(2.0, 0.7), simpson_mixture_mi(2.0, 0.7), 1e-9);
  EXPECT_NEAR(gaussian_pair_mi(60.0, 1.0), std::log(2.0), 1e-9);
  EXPECT_LT(gaussian_pair_mi(1.0, 1.0), gaussian_pair_mi(2.0, 1.0));
}

TEST(LabelNoise, RatioZeroIsIdentity) {
  const Dataset d = gen_shapes(small_shapes());
  std::mt19937_64 rng(1);
  const Dataset n = inject_label_noise(d, 0.0, rng);
  EXPECT_EQ(n.target, d.target);
}

TEST(LabelNoise, RatioOneIsChanceAgreementAndTestUntouched) {
  ShapesSpec spec = small_shapes();
  spec.n_samples = 8000;
  const Dataset d = gen_shapes(spec);
  std::mt19937_64 rng(2);
  const Dataset n = inject_label_noise(d, 1.0, rng);
  int agree = 0, train = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.split[i] == Split::test) {
      EXPECT_EQ(n.target[i], d.target[i]);
    } else {
      ++train;
      agree += n.target[i] == d.target[i];
    }
  }
  EXPECT_NEAR(static_cast<double>(agree) / train, 0.25, 0.03);
}

TEST(LabelNoise, ExactCountAndDeterminism) {
  const Dataset d = gen_shapes(small_shapes());
  std::mt19937_64 a(7), b(7);
  const Dataset n1 = inject_label_noise(d, 0.4, a), n2 = inject_label_noise(d, 0.4, b);
  EXPECT_EQ(n1.target, n2.target);
  int changed = 0;
  for (std::size_t i = 0; i < d.size(); ++i) changed += n1.target[i] != d.target[i];
  // 320 of 800 training rows are redrawn; a quarter of those keep their class.
  EXPECT_LE(changed, 320);
  EXPECT_GE(changed, 200);
  std::mt19937_64 c(7);
  EXPECT_THROW(inject_label_noise(d, 1.5, c), ContractViolation);
  EXPECT_THROW(inject_label_noise(d, -0.1, c), ContractViolation);
}

TEST(DatasetCsv, RoundTripAtNineDigits) {
  const Dataset d = gen_shapes(small_shapes()).subset(Split::test);
  std::stringstream buf;
  write_dataset_csv(buf, d);
  std::string header;
  std::getline(std::stringstream(buf.str()), header);
  EXPECT_EQ(header.substr(0, 17), "target,s,p0,p1,p2");
  EXPECT_NE(header.find(",p255"), std::string::npos);
  const Dataset back = read_dataset_csv(buf, Split::test);
  EXPECT_EQ(back.s, d.s);
  EXPECT_EQ(back.target, d.target);
  EXPECT_EQ(back.num_classes, 4u);
  ASSERT_EQ(back.x.shape(), d.x.shape());
  for (std::size_t i = 0; i < d.x.size(); ++i) EXPECT_NEAR(back.x[i], d.x[i], 5e-9 * std::max(1.0, std::abs(d.x[i])));
}

TEST(DatasetCsv, MalformedInputIsIoError) {
  std::stringstream bad_header("a,b,c\n1,1,0\n");
  EXPECT_THROW(read_dataset_csv(bad_header, Split::train), IoError);
  std::stringstream bad_label("target,s,p0\n1,2,0.5\n");
  EXPECT_THROW(read_dataset_csv(bad_label, Split::train), IoError);
  std::stringstream short_row("target,s,p0,p1\n1,1,0.5\n");
  EXPECT_THROW(read_dataset_csv(short_row, Split::train), IoError);
  EXPECT_THROW(read_dataset_csv(std::filesystem::path("/nonexistent/x.csv"), Split::train), IoError);
}

TEST(RandomStreams, NamedStreamsDiffer) {
  auto a = make_stream(1, Stream::data), b = make_stream(1, Stream::vae), c = make_stream(1, Stream::data);
  const auto va = a(), vb = b(), vc = c();
  EXPECT_NE(va, vb);
  EXPECT_EQ(va, vc);
  std::mt19937_64 r(3);
  auto p = permutation(50, r);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(p[i], i);
}

}  // namespace
}  // namespace nnsb
