// Acceptance gate: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes. Runs the full shapes pipeline for seeds 1..3 with the
// tool's default configuration.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "config.hpp"
#include "nnsb/density.hpp"
#include "nnsb/eval.hpp"
#include "nnsb/miloss.hpp"
#include "nnsb/pipeline.hpp"
#include "nnsb/random.hpp"
#include "unit/finite_diff.hpp"

namespace {

using namespace nnsb;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1: density consistency ---------------------------------------------

Verdict density_consistency() {
  auto rng = make_stream(1, Stream::data, 101);
  std::normal_distribution<double> nd;
  std::vector<double> pts(10000);
  for (double& v : pts) v = nd(rng);
  const SampleSet set(pts);
  const SmoothingSpec spec = SmoothingSpec::gaussian(1.0, {10, 20, 40});
  const auto t0 = Clock::now();
  const double est = density_at(0.0, set, spec, false).value;
  const double secs = seconds_since(t0);
  const double truth = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const double rel = std::abs(est - truth) / truth;
  return {rel <= 0.10 && secs < 1.0,
          fmt("density at 0 = %.4f vs %.4f (rel err %.3f, tol 0.10); %.2e s (limit 1 s)", est, truth, rel, secs)};
}

// ---- 2: divergence recovery ---------------------------------------------

Verdict divergence_recovery() {
  auto rng = make_stream(1, Stream::data, 102);
  std::normal_distribution<double> nd;
  std::vector<double> p(5000), q(5000), q0(5000);
  for (double& v : p) v = nd(rng);
  for (double& v : q) v = 1.0 + nd(rng);
  for (double& v : q0) v = nd(rng);
  const SmoothingSpec spec = SmoothingSpec::defaults();
  const double kl = kl_estimate(p, q, spec).value;
  const double null = kl_estimate(p, q0, spec).value;
  return {std::abs(kl - 0.5) <= 0.1 && std::abs(null) <= 0.05,
          fmt("KL(N(0,1)||N(1,1)) = %.4f (0.5 +- 0.1); null = %.4f (0 +- 0.05)", kl, null)};
}

// ---- 3: gradient suite --------------------------------------------------

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Tensor t(shape);
  for (double& v : t.values()) v = nd(rng);
  return t;
}

double mlp_gradient_error(std::mt19937_64& rng) {
  const std::vector<std::size_t> widths{4, 6, 5, 3};
  Mlp mlp = Mlp::create(widths, Activation::tanh, Activation::identity, rng);
  const Tensor x = random_tensor({7, 4}, rng), target = random_tensor({7, 3}, rng);
  const std::vector<int> labels{0, 2, 1, 1, 0, 2, 2};
  double worst = 0.0;
  for (int loss_kind = 0; loss_kind < 2; ++loss_kind) {
    auto loss_of = [&](const Mlp& m, Tape& tape) {
      const BoundMlp b = m.bind(tape);
      Var out = b.forward(tape.constant(x));
      return loss_kind == 0 ? mean(square(sub(out, tape.constant(target)))) : softmax_cross_entropy(out, labels);
    };
    Tape tape;
    const BoundMlp b = mlp.bind(tape);
    Var out = b.forward(tape.constant(x));
    Var loss = loss_kind == 0 ? mean(square(sub(out, tape.constant(target)))) : softmax_cross_entropy(out, labels);
    const std::vector<Tensor> grads = b.gradients(tape.backward(loss));
    for (std::size_t k = 0; k < mlp.parameter_count(); ++k) {
      auto f = [&](const Tensor& p) {
        Mlp m = mlp;
        m.parameter(k) = p;
        Tape t;
        return loss_of(m, t).item();
      };
      const Tensor fd = testing::central_difference(f, mlp.parameter(k), 1e-6);
      worst = std::max(worst, testing::max_relative_error(grads[k], fd));
    }
  }
  return worst;
}

double miloss_gradient_error(std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> z;
  std::vector<int> s;
  for (int i = 0; i < 60; ++i) {
    s.push_back(i < 30 ? -1 : 1);
    z.push_back((i < 30 ? -0.3 : 0.3) + nd(rng));
  }
  const SmoothingSpec spec = SmoothingSpec::gaussian(1.0, {3, 5});
  double worst = 0.0;
  for (LossPhase phase : {LossPhase::SqDiff, LossPhase::SqRatio}) {
    auto value = [&](const Tensor& v) {
      Tape tape;
      return phase_loss(phase, tape.constant(v), s, spec).item();
    };
    const Tensor z0 = Tensor::column(z);
    Tape tape;
    Var zv = tape.variable(z0);
    const GradientMap g = tape.backward(phase_loss(phase, zv, s, spec));
    worst = std::max(worst, testing::max_relative_error(g.at(zv), testing::central_difference(value, z0, 1e-6)));
  }
  return worst;
}

double reparam_gradient_error(std::mt19937_64& rng) {
  const Tensor mu0 = random_tensor({5, 3}, rng), lv0 = random_tensor({5, 3}, rng, 0.5);
  const Tensor noise = random_tensor({5, 3}, rng);
  auto value = [&](const Tensor& mu, const Tensor& lv) {
    Tape t;
    return mean(square(reparameterize(t.constant(mu), t.constant(lv), noise))).item();
  };
  Tape tape;
  Var mu = tape.variable(mu0), lv = tape.variable(lv0);
  const GradientMap g = tape.backward(mean(square(reparameterize(mu, lv, noise))));
  const Tensor fd_mu = testing::central_difference([&](const Tensor& m) { return value(m, lv0); }, mu0, 1e-6);
  const Tensor fd_lv = testing::central_difference([&](const Tensor& l) { return value(mu0, l); }, lv0, 1e-6);
  return std::max(testing::max_relative_error(g.at(mu), fd_mu), testing::max_relative_error(g.at(lv), fd_lv));
}

Verdict gradient_suite() {
  auto rng = make_stream(1, Stream::data, 103);
  double mlp = 0.0, rep = 0.0, nn = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    mlp = std::max(mlp, mlp_gradient_error(rng));
    rep = std::max(rep, reparam_gradient_error(rng));
    nn = std::max(nn, miloss_gradient_error(rng));
  }
  return {mlp <= 1e-5 && rep <= 1e-5 && nn <= 1e-4,
          fmt("max rel err: MLP %.2e, reparameterization %.2e (tol 1e-5); sq_diff/sq_ratio %.2e (tol 1e-4)", mlp,
              rep, nn)};
}

// ---- shared shapes pipeline ---------------------------------------------

struct SeedRun {
  std::uint64_t seed = 0;
  Dataset data;
  PipelineCheckpoint ckpt;
  std::map<std::string, TradeoffReport> reports;
  NoisyLabelResult noisy;
  double pipeline_seconds = 0.0;
};

SeedRun run_seed(std::uint64_t seed) {
  const cli::Config cfg = cli::parse_config("", {"run.seed=" + std::to_string(seed)});
  SeedRun r;
  r.seed = seed;
  const auto t0 = Clock::now();
  r.data = gen_shapes(cfg.shapes);
  const Dataset tr = r.data.subset(Split::train);
  auto vae_rng = make_stream(seed, Stream::vae);
  r.ckpt.vae = VaeModel::create(tr.x.cols(), cfg.vae, vae_rng);
  train_vae(r.ckpt.vae, tr.x, tr.s, cfg.vae, vae_rng);
  auto bank_rng = make_stream(seed, Stream::stage2);
  LatentEncoderBank bank =
      LatentEncoderBank::identity(cfg.vae.latent_dim, cfg.stage2.hidden, cfg.stage2.proximity_weight, bank_rng);
  train_stage2(bank, r.ckpt.vae, tr.x, tr.s, cfg.stage2, seed);
  r.ckpt.bank = std::move(bank);
  for (TradeoffReport& rep : evaluate_pipeline(r.ckpt, r.data, cfg.eval)) r.reports[rep.variant] = std::move(rep);
  r.pipeline_seconds = seconds_since(t0);
  const std::vector<double> ratio{0.4};
  r.noisy = noisy_label_experiment(r.ckpt, r.data, ratio, cfg.eval).front();
  std::fprintf(stderr, "seed %llu: pipeline %.1f s\n", static_cast<unsigned long long>(seed), r.pipeline_seconds);
  return r;
}

// ---- 4: VAE prior ---------------------------------------------------------

Verdict vae_prior(const SeedRun& run) {
  const std::vector<int> plus{1}, minus{-1};
  const double k1 = kl_conditional_prior(Tensor::row({1.0, 0.0}), Tensor::row({0.0, 0.0}), plus);
  const double k2 = kl_conditional_prior(Tensor::row({2.0}), Tensor::row({0.0}), plus);
  const double k3 = kl_conditional_prior(Tensor::row({-1.0}), Tensor::row({std::log(2.0)}), minus);
  const double closed = std::max({std::abs(k1), std::abs(k2 - 0.5), std::abs(k3 - 0.5 * (1.0 - std::log(2.0)))});

  const Tensor mu = encode(run.ckpt.vae, run.data.x).mu;
  std::vector<std::size_t> tr, te;
  for (std::size_t i = 0; i < run.data.size(); ++i) (run.data.split[i] == Split::train ? tr : te).push_back(i);
  std::vector<int> s_tr, s_te;
  for (std::size_t i : tr) s_tr.push_back((run.data.s[i] + 1) / 2);
  for (std::size_t i : te) s_te.push_back((run.data.s[i] + 1) / 2);
  const Tensor mu0 = mu.column_at(0);
  ProbeConfig linear;
  linear.hidden = {};
  auto rng = make_stream(run.seed, Stream::probes, 500);
  const double probe = train_probe(mu0.select_rows(tr), s_tr, mu0.select_rows(te), s_te, 2, linear, rng)
                           .best_test_accuracy;
  double worst_mean = 0.0, min_var = 1e9, max_var = 0.0;
  for (std::size_t k = 1; k < mu.cols(); ++k) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < mu.rows(); ++i) m += mu(i, k) / static_cast<double>(mu.rows());
    for (std::size_t i = 0; i < mu.rows(); ++i) v += (mu(i, k) - m) * (mu(i, k) - m) / static_cast<double>(mu.rows());
    worst_mean = std::max(worst_mean, std::abs(m));
    min_var = std::min(min_var, v);
    max_var = std::max(max_var, v);
  }
  return {closed <= 1e-12 && probe >= 0.9 && worst_mean <= 0.3,
          fmt("closed-form KL max err %.1e (tol 1e-12); linear probe on mu[0] %.3f (>= 0.9); max |mean| dims "
              "1..D-1 %.3f (<= 0.3); var range [%.2f, %.2f]",
              closed, probe, worst_mean, min_var, max_var)};
}

// ---- 5..8 -------------------------------------------------------------------

Verdict tradeoff(const SeedRun& run) {
  const TradeoffReport& raw = run.reports.at("raw");
  const TradeoffReport& xp = run.reports.at("x_prime");
  const TradeoffReport& ze = run.reports.at("z_enc");
  const bool ok = raw.sensitive.best_test_accuracy >= 0.95 && xp.sensitive.best_test_accuracy <= 0.60 &&
                  xp.target.best_test_accuracy >= 0.90 && run.pipeline_seconds <= 900.0;
  return {ok, fmt("raw sensitive %.3f (>= 0.95); x' sensitive %.3f (<= 0.60), target %.3f (>= 0.90); "
                  "z_enc sensitive %.3f, target %.3f; run %.0f s (<= 900)",
                  raw.sensitive.best_test_accuracy, xp.sensitive.best_test_accuracy, xp.target.best_test_accuracy,
                  ze.sensitive.best_test_accuracy, ze.target.best_test_accuracy, run.pipeline_seconds)};
}

Verdict ablation(const std::vector<SeedRun>& runs) {
  int wins = 0;
  std::string detail;
  for (const SeedRun& r : runs) {
    const TradeoffReport& full = r.reports.at("x_prime");
    const TradeoffReport& vo = r.reports.at("vae_only");
    const bool ok = vo.sensitive.best_test_accuracy >= full.sensitive.best_test_accuracy && full.gap > vo.gap;
    wins += ok ? 1 : 0;
    detail += fmt("seed %llu: sensitive vae-only %.3f vs full %.3f, gap full %.3f vs vae-only %.3f [%s]; ",
                  static_cast<unsigned long long>(r.seed), vo.sensitive.best_test_accuracy,
                  full.sensitive.best_test_accuracy, full.gap, vo.gap, ok ? "ok" : "no");
  }
  return {2 * wins > static_cast<int>(runs.size()), detail + fmt("%d/%zu seeds", wins, runs.size())};
}

Verdict mi_bound(const SeedRun& run) {
  const TradeoffReport& ze = run.reports.at("z_enc");
  double lowest = 1e9;
  std::string dims;
  for (double m : ze.mi_per_dim) {
    lowest = std::min(lowest, m);
    dims += fmt("%.3f ", m);
  }
  return {ze.mi_bound <= 0.1 && lowest >= -0.05,
          fmt("sum over z_enc dims = %.4f (<= 0.1); per dim [%s] (each >= -0.05); vae-only latent sum %.4f",
              ze.mi_bound, dims.c_str(), run.reports.at("vae_only").mi_bound)};
}

Verdict noisy_labels(const std::vector<SeedRun>& runs) {
  int wins = 0;
  std::string detail;
  for (const SeedRun& r : runs) {
    const bool ok = r.noisy.transformed.best_test_accuracy >= r.noisy.raw.best_test_accuracy;
    wins += ok ? 1 : 0;
    detail += fmt("seed %llu: transformed %.3f vs raw %.3f (final %.3f vs %.3f) [%s]; ",
                  static_cast<unsigned long long>(r.seed), r.noisy.transformed.best_test_accuracy,
                  r.noisy.raw.best_test_accuracy, r.noisy.transformed.final_test_accuracy,
                  r.noisy.raw.final_test_accuracy, ok ? "ok" : "no");
  }
  return {2 * wins > static_cast<int>(runs.size()), detail + fmt("%d/%zu seeds", wins, runs.size())};
}

// ---- 9: determinism -------------------------------------------------------

std::map<std::string, std::string> artifact_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.ends_with(".manifest.json")) continue;  // carries wall time
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    out[name] = bytes.str();
  }
  return out;
}

Verdict determinism() {
  const fs::path dir = fs::temp_directory_path() / "nnsb_acceptance_determinism";
  fs::remove_all(dir);
  const std::vector<std::string> common = {
      "--out",   dir.string(),           "--seed", "7",
      "--set",   "data.n_samples=800",   "--set",  "vae.epochs=3",
      "--set",   "stage2.epochs=2",      "--set",  "stage2.batch_size=128",
      "--set",   "eval.epochs=2",        "--set",  "eval.noise_ratios=0,0.4"};
  std::vector<std::map<std::string, std::string>> passes;
  std::ostringstream chatter;  // subcommand progress lines
  std::streambuf* const saved = std::cout.rdbuf(chatter.rdbuf());
  struct Restore {
    std::streambuf* buf;
    ~Restore() { std::cout.rdbuf(buf); }
  } restore{saved};
  for (int pass = 0; pass < 2; ++pass) {
    for (const std::string& cmd : cli::subcommands()) {
      std::vector<std::string> args{"nnsb", cmd};
      args.insert(args.end(), common.begin(), common.end());
      std::vector<char*> argv;
      for (std::string& a : args) argv.push_back(a.data());
      const int code = cli::run(static_cast<int>(argv.size()), argv.data());
      if (code != 0) return {false, fmt("`nnsb %s` exited with %d", cmd.c_str(), code)};
    }
    passes.push_back(artifact_bytes(dir));
  }
  std::size_t differing = 0;
  std::string names;
  for (const auto& [name, bytes] : passes[0]) {
    const auto it = passes[1].find(name);
    if (it == passes[1].end() || it->second != bytes) {
      ++differing;
      names += name + " ";
    }
  }
  fs::remove_all(dir);
  return {differing == 0 && passes[0].size() == passes[1].size() && !passes[0].empty(),
          fmt("%zu artifacts from %zu subcommands compared across two runs; %zu differ %s", passes[0].size(),
              cli::subcommands().size(), differing, names.c_str())};
}

}  // namespace

int main() {
  std::vector<std::pair<int, Verdict>> verdicts;
  auto emit = [&](int id, const char* name, Verdict v) {
    std::printf("criterion %d %-24s %s | %s\n", id, name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    verdicts.emplace_back(id, std::move(v));
  };
  emit(1, "density-consistency", density_consistency());
  emit(2, "divergence-recovery", divergence_recovery());
  emit(3, "gradient-suite", gradient_suite());

  std::vector<SeedRun> runs;
  for (std::uint64_t seed : {1, 2, 3}) runs.push_back(run_seed(seed));
  emit(4, "vae-prior", vae_prior(runs.front()));
  emit(5, "end-to-end-tradeoff", tradeoff(runs.front()));
  emit(6, "ablation-ordering", ablation(runs));
  emit(7, "per-dimension-mi", mi_bound(runs.front()));
  emit(8, "noisy-label-robustness", noisy_labels(runs));
  emit(9, "determinism", determinism());

  int failed = 0;
  for (const auto& [id, v] : verdicts) failed += v.pass ? 0 : 1;
  std::printf("%d/%zu criteria passed\n", static_cast<int>(verdicts.size()) - failed, verdicts.size());
  return failed == 0 ? 0 : 1;
}
