#pragma once

// Run configuration for the nnsb tool: INI sections, `--set` overrides and the
// canonical text the stage fingerprints are computed from.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "nnsb/data.hpp"
#include "nnsb/eval.hpp"
#include "nnsb/pipeline.hpp"
#include "nnsb/vae.hpp"

namespace nnsb::cli {

/// Invalid config text, unknown key, or a value out of bounds. The message
/// names the offending `section.key`.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataKind { shapes, gaussian_pair };

struct Smoothing {
  std::string kind = "gaussian";  // gaussian | uniform | none
  double sigma = 1.0;
  std::vector<int> m_values;

  SmoothingSpec build() const;
};

struct Config {
  std::uint64_t seed = 1;

  DataKind data_kind = DataKind::shapes;
  ShapesSpec shapes{};
  GaussianPairSpec gaussian{};

  VaeConfig vae{};

  Stage2Config stage2{};
  Smoothing stage2_smoothing{"gaussian", 1.0, {5, 10, 20}};

  EvalConfig eval{};
  Smoothing eval_smoothing{"gaussian", 1.0, {20, 40, 80}};
  std::vector<double> noise_ratios{0.0, 0.2, 0.4, 0.6};

  std::filesystem::path out = "nnsb_run";

  /// Pushes seeds and smoothing into the module configs and runs every
  /// module's validation; failures become ConfigError with the section name.
  void finalize();
};

/// Parses INI text, applies `overrides` (each `section.key=value`), then
/// finalizes. Missing keys keep their defaults.
Config parse_config(const std::string& text, const std::vector<std::string>& overrides);
Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// Every key with its effective value, sections in a fixed order.
std::string canonical_text(const Config& cfg);

/// SHA-256 over the canonical text of the sections a stage depends on:
/// "data" covers run and data, "vae" adds vae, "encoder" adds stage2.
std::string stage_fingerprint(const Config& cfg, const std::string& stage);

}  // namespace nnsb::cli
