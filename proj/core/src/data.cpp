#include "nnsb/data.hpp"

#include <algorithm>
#include <array>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "nnsb/error.hpp"
#include "nnsb/random.hpp"

namespace nnsb {

namespace {

using Glyph = std::array<const char*, 5>;

// Distinct 5x5 bitmaps; none is a closed box, so no glyph mimics the square background.
constexpr std::array<Glyph, 4> kGlyphs{{
    {"..#..", "..#..", "#####", "..#..", "..#.."},
    {"#...#", ".#.#.", "..#..", ".#.#.", "#...#"},
    {"#....", "#....", "#....", "#....", "#####"},
    {"#####", ".....", "#####", ".....", "#####"},
}};

void draw_background(std::span<double> img, std::size_t side, int s) {
  const double hi = static_cast<double>(side) - 2.0;
  if (s == -1) {
    for (std::size_t r = 1; r + 1 < side; ++r) {
      for (std::size_t c = 1; c + 1 < side; ++c) {
        if (r == 1 || c == 1 || static_cast<double>(r) == hi || static_cast<double>(c) == hi) {
          img[r * side + c] = kBackgroundLevel;
        }
      }
    }
    return;
  }
  const double center = (static_cast<double>(side) - 1.0) / 2.0;
  const double radius = center - 1.0;
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const double d = std::hypot(static_cast<double>(r) - center, static_cast<double>(c) - center);
      if (std::abs(d - radius) < 0.5) img[r * side + c] = kBackgroundLevel;
    }
  }
}

void draw_glyph(std::span<double> img, std::size_t side, std::size_t glyph, int dr, int dc) {
  const int base = (static_cast<int>(side) - 5) / 2;
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      if (kGlyphs[glyph][static_cast<std::size_t>(r)][c] != '#') continue;
      const auto rr = static_cast<std::size_t>(base + dr + r);
      const auto cc = static_cast<std::size_t>(base + dc + c);
      img[rr * side + cc] = std::max(img[rr * side + cc], kGlyphLevel);
    }
  }
}

// Shuffles rows so cells and splits interleave.
Dataset shuffled(const Dataset& d, std::mt19937_64& rng) {
  const auto order = permutation(d.size(), rng);
  Dataset out;
  out.x = d.x.select_rows(order);
  out.num_classes = d.num_classes;
  for (std::size_t i : order) {
    out.s.push_back(d.s[i]);
    out.target.push_back(d.target[i]);
    out.split.push_back(d.split[i]);
  }
  return out;
}

std::size_t test_count(std::size_t cell) {
  return static_cast<std::size_t>(std::llround(kTestFraction * static_cast<double>(cell)));
}

}  // namespace

Dataset Dataset::subset(Split which) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < size(); ++i)
    if (split[i] == which) rows.push_back(i);
  Dataset out;
  out.x = x.select_rows(rows);
  out.num_classes = num_classes;
  for (std::size_t i : rows) {
    out.s.push_back(s[i]);
    out.target.push_back(target[i]);
    out.split.push_back(split[i]);
  }
  return out;
}

void Dataset::validate() const {
  require(x.rows() == s.size() && target.size() == s.size() && split.size() == s.size(),
          "Dataset: x, s, target and split differ in length");
  std::array<std::array<std::size_t, 2>, 2> counts{};
  for (std::size_t i = 0; i < size(); ++i) {
    require(s[i] == 1 || s[i] == -1, "Dataset: s must be -1 or +1");
    require(target[i] >= 0 && static_cast<std::size_t>(target[i]) < num_classes, "Dataset: target out of range");
    counts[static_cast<std::size_t>(split[i])][s[i] == 1 ? 1 : 0] += 1;
  }
  for (const auto& c : counts) require(c[0] == c[1], "Dataset: s is not balanced within a split");
}

void ShapesSpec::validate() const {
  require(image_side >= 12, "dataset.image_side must be >= 12");
  require(glyph_classes >= 2 && glyph_classes <= kGlyphs.size(), "dataset.glyph_classes must be in [2, 4]");
  require(n_samples > 0 && n_samples % (2 * glyph_classes) == 0,
          "dataset.n_samples must be a positive multiple of 2 * glyph_classes");
  require(noise_std >= 0.0, "dataset.noise_std must be >= 0");
  require(jitter >= 0 && 2 * jitter + 5 <= static_cast<int>(image_side) - 4, "dataset.jitter too large for image_side");
}

void GaussianPairSpec::validate() const {
  require(sigma > 0.0, "gaussian pair sigma must be > 0");
  require(std::isfinite(delta), "gaussian pair delta must be finite");
  require(n_per_class >= 100, "gaussian pair n_per_class must be >= 100");
}

Dataset gen_shapes(const ShapesSpec& spec) {
  spec.validate();
  auto rng = make_stream(spec.seed, Stream::data);
  std::uniform_int_distribution<int> jit(-spec.jitter, spec.jitter);
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  const std::size_t side = spec.image_side, pixels = side * side;
  const std::size_t cell = spec.n_samples / (2 * spec.glyph_classes);
  const std::size_t n_test = test_count(cell);

  Dataset d;
  d.num_classes = spec.glyph_classes;
  d.x = Tensor({spec.n_samples, pixels});
  std::size_t row = 0;
  for (int s : {-1, 1}) {
    for (std::size_t g = 0; g < spec.glyph_classes; ++g) {
      for (std::size_t k = 0; k < cell; ++k, ++row) {
        std::span<double> img = d.x.row_span(row);
        draw_background(img, side, s);
        const int dr = jit(rng), dc = jit(rng);
        draw_glyph(img, side, g, dr, dc);
        for (double& v : img) v = std::clamp(v + (spec.noise_std > 0 ? noise(rng) : 0.0), 0.0, 1.0);
        d.s.push_back(s);
        d.target.push_back(static_cast<int>(g));
        d.split.push_back(k < n_test ? Split::test : Split::train);
      }
    }
  }
  return shuffled(d, rng);
}

Dataset gen_gaussian_pair(const GaussianPairSpec& spec) {
  spec.validate();
  auto rng = make_stream(spec.seed, Stream::data);
  std::normal_distribution<double> nd(0.0, spec.sigma);
  const std::size_t n = spec.n_per_class;
  const std::size_t n_test = test_count(n);
  Dataset d;
  d.num_classes = 2;
  d.x = Tensor({2 * n, 1});
  std::size_t row = 0;
  for (int s : {-1, 1}) {
    for (std::size_t k = 0; k < n; ++k, ++row) {
      d.x[row] = (s == 1 ? spec.delta : 0.0) + nd(rng);
      d.s.push_back(s);
      d.target.push_back((s + 1) / 2);
      d.split.push_back(k < n_test ? Split::test : Split::train);
    }
  }
  return shuffled(d, rng);
}

double gaussian_pair_mi(double delta, double sigma) {
  require(sigma > 0.0, "gaussian_pair_mi: sigma must be > 0");
  const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::acos(-1.0)));
  // log(a / m) = log 2 - softplus(log b - log a); stays finite in the far tails.
  auto softplus = [](double t) { return t > 30.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); };
  auto integrand = [&](double x) {
    const double la = -0.5 * x * x / (sigma * sigma);
    const double lb = -0.5 * (x - delta) * (x - delta) / (sigma * sigma);
    const double ln2 = std::log(2.0);
    const double a = norm * std::exp(la);
    const double b = norm * std::exp(lb);
    double f = 0.0;
    if (a > 0.0) f += 0.5 * a * (ln2 - softplus(lb - la));
    if (b > 0.0) f += 0.5 * b * (ln2 - softplus(la - lb));
    return f;
  };
  const double lo = std::min(0.0, delta) - 40.0 * sigma;
  const double hi = std::max(0.0, delta) + 40.0 * sigma;
  // Split at the component means so the quadrature sees both peaks.
  double total = 0.0;
  const std::array<double, 4> knots{lo, std::min(0.0, delta), std::max(0.0, delta), hi};
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    if (knots[k + 1] > knots[k]) {
      total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, knots[k], knots[k + 1], 15,
                                                                            1e-14);
    }
  }
  return total;
}

Dataset inject_label_noise(const Dataset& d, double ratio, std::mt19937_64& rng) {
  require(ratio >= 0.0 && ratio <= 1.0, "inject_label_noise: ratio must be in [0, 1]");
  require(d.num_classes > 0, "inject_label_noise: dataset has no classes");
  Dataset out = d;
  std::vector<std::size_t> train_rows;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.split[i] == Split::train) train_rows.push_back(i);
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(train_rows.size())));
  const auto order = permutation(train_rows.size(), rng);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(d.num_classes) - 1);
  for (std::size_t k = 0; k < count; ++k) out.target[train_rows[order[k]]] = cls(rng);
  return out;
}

void write_dataset_csv(std::ostream& out, const Dataset& d) {
  out << "target,s";
  for (std::size_t p = 0; p < d.x.cols(); ++p) out << ",p" << p;
  out << '\n' << std::setprecision(9);
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << d.target[i] << ',' << d.s[i];
    for (double v : d.x.row_span(i)) out << ',' << v;
    out << '\n';
  }
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  write_dataset_csv(out, d);
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset read_dataset_csv(std::istream& in, Split split) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset CSV is empty");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 3 || line.rfind("target,s,", 0) != 0) throw IoError("dataset CSV header must start with target,s,p0");
  const std::size_t features = columns - 2;
  Dataset d;
  std::vector<double> values;
  std::size_t lineno = 1;
  int max_target = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (start <= line.size()) {
      const std::size_t end = std::min(line.find(',', start), line.size());
      double v = 0.0;
      const auto res = std::from_chars(line.data() + start, line.data() + end, v);
      if (res.ec != std::errc() || res.ptr != line.data() + end) {
        throw IoError("dataset CSV line " + std::to_string(lineno) + ": bad number");
      }
      row.push_back(v);
      start = end + 1;
    }
    if (row.size() != columns) throw IoError("dataset CSV line " + std::to_string(lineno) + ": wrong column count");
    const int target = static_cast<int>(row[0]);
    const int s = static_cast<int>(row[1]);
    if (static_cast<double>(target) != row[0] || target < 0 || (s != 1 && s != -1) || static_cast<double>(s) != row[1]) {
      throw IoError("dataset CSV line " + std::to_string(lineno) + ": bad label");
    }
    d.target.push_back(target);
    d.s.push_back(s);
    d.split.push_back(split);
    max_target = std::max(max_target, target);
    values.insert(values.end(), row.begin() + 2, row.end());
  }
  d.x = Tensor({d.s.size(), features}, std::move(values));
  d.num_classes = static_cast<std::size_t>(max_target + 1);
  return d;
}

Dataset read_dataset_csv(const std::filesystem::path& path, Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path.string());
  try {
    return read_dataset_csv(in, split);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Dataset concat(const Dataset& a, const Dataset& b) {
  require(a.x.cols() == b.x.cols(), "concat: feature widths differ");
  Dataset out;
  std::vector<double> v(a.x.values().begin(), a.x.values().end());
  v.insert(v.end(), b.x.values().begin(), b.x.values().end());
  out.x = Tensor({a.size() + b.size(), a.x.cols()}, std::move(v));
  out.s = a.s;
  out.s.insert(out.s.end(), b.s.begin(), b.s.end());
  out.target = a.target;
  out.target.insert(out.target.end(), b.target.begin(), b.target.end());
  out.split = a.split;
  out.split.insert(out.split.end(), b.split.begin(), b.split.end());
  out.num_classes = std::max(a.num_classes, b.num_classes);
  return out;
}

}  // namespace nnsb
