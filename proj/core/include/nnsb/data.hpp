#pragma once

// Synthetic datasets and the analytic oracle used to validate the estimators.
//
// Shapes: 16x16 gray images with an outlined square or circle background
// (the sensitive label) and one of several bright glyphs (the target label).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "nnsb/tensor.hpp"

namespace nnsb {

enum class Split : std::uint8_t { train = 0, test = 1 };

struct Dataset {
  Tensor x;                 // n x features
  std::vector<int> s;       // -1 (square) / +1 (circle)
  std::vector<int> target;  // 0 .. num_classes-1
  std::vector<Split> split;
  std::size_t num_classes = 0;

  std::size_t size() const { return s.size(); }
  /// Rows of one split, in dataset order.
  Dataset subset(Split which) const;
  /// Lengths agree, labels in range, s balanced within each split.
  void validate() const;
};

struct ShapesSpec {
  std::size_t image_side = 16;
  std::size_t n_samples = 8000;
  std::size_t glyph_classes = 4;
  double noise_std = 0.05;
  int jitter = 2;
  std::uint64_t seed = 0;

  /// n_samples divisible by 2 * glyph_classes; 2 <= glyph_classes <= 4;
  /// image_side >= 12 so every shape fits.
  void validate() const;
};

struct GaussianPairSpec {
  double delta = 1.0;
  double sigma = 1.0;
  std::size_t n_per_class = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr double kBackgroundLevel = 0.4;
inline constexpr double kGlyphLevel = 1.0;
inline constexpr double kTestFraction = 0.2;

/// Balanced over (s, glyph); 80/20 split stratified by (s, glyph).
Dataset gen_shapes(const ShapesSpec& spec);

/// 1-D samples: s = -1 ~ N(0, sigma^2), s = +1 ~ N(delta, sigma^2);
/// target = (s + 1) / 2. Split 80/20 stratified by s.
Dataset gen_gaussian_pair(const GaussianPairSpec& spec);

/// I(X;S) in nats for the equal-weight mixture N(0, sigma^2) / N(delta, sigma^2),
/// by adaptive Gauss-Kronrod quadrature.
double gaussian_pair_mi(double delta, double sigma);

/// Replaces round(ratio * n_train) randomly chosen training targets with
/// uniformly drawn classes. Test rows are untouched.
Dataset inject_label_noise(const Dataset& d, double ratio, std::mt19937_64& rng);

/// Header `target,s,p0,...,pK`, 9 significant digits. Split tags are not
/// stored; train and test go to separate files.
void write_dataset_csv(std::ostream& out, const Dataset& d);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& d);
/// Rows are tagged with `split`; num_classes = max target + 1.
Dataset read_dataset_csv(std::istream& in, Split split);
Dataset read_dataset_csv(const std::filesystem::path& path, Split split);

/// Concatenates rows (train file then test file, typically).
Dataset concat(const Dataset& a, const Dataset& b);

}  // namespace nnsb
