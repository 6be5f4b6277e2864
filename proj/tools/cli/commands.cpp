#include "commands.hpp"

#include <CLI11.hpp>
#include <boost/io/ios_state.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "config.hpp"
#include "nnsb/error.hpp"
#include "nnsb/hash.hpp"
#include "nnsb/random.hpp"

namespace nnsb::cli {
namespace {

namespace fs = std::filesystem;

/// An upstream artifact is missing or was produced under another config.
class DependencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kTrainCsv = "data_train.csv";
constexpr const char* kTestCsv = "data_test.csv";
constexpr const char* kVaeCkpt = "vae.ckpt";
constexpr const char* kPipelineCkpt = "pipeline.ckpt";

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string mi_source = "data";
};

struct Context {
  std::string command;
  Config cfg;
  fs::path out;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

Context make_context(const std::string& command, const Options& opt) {
  std::vector<std::string> overrides = opt.overrides;
  if (opt.seed) overrides.push_back("run.seed=" + std::to_string(*opt.seed));
  if (!opt.out.empty()) overrides.push_back("paths.out=" + opt.out);
  Context ctx{command, opt.config_path.empty() ? parse_config("", overrides) : load_config(opt.config_path, overrides),
              {}};
  ctx.out = ctx.cfg.out;
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec || !fs::is_directory(ctx.out)) throw ConfigError("paths.out: cannot create directory " + ctx.out.string());
  return ctx;
}

std::string file_sha256(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return sha256_hex(bytes.str());
}

/// `<artifact>.manifest.json`: enough to re-run the command that wrote it.
void write_manifest(const Context& ctx, const fs::path& artifact, const std::string& stage) {
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.start).count();
  nlohmann::json m;
  m["command"] = ctx.command;
  m["artifact"] = artifact.filename().string();
  m["artifact_sha256"] = file_sha256(artifact);
  m["config_fingerprint"] = sha256_hex(canonical_text(ctx.cfg));
  m["stage_fingerprint"] = stage_fingerprint(ctx.cfg, stage);
  m["seed"] = ctx.cfg.seed;
  m["versions"] = {{"nnsb", NNSB_VERSION}, {"compiler", __VERSION__}, {"cplusplus", __cplusplus}};
  m["wall_time_seconds"] = wall;
  m["config"] = canonical_text(ctx.cfg);
  fs::path path = artifact;
  path += ".manifest.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << m.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  return out;
}

void require_artifact(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) throw DependencyError("missing " + p.string() + "; run `nnsb " + producer + "` first");
}

Dataset load_data(const Context& ctx) {
  const fs::path tr = ctx.out / kTrainCsv, te = ctx.out / kTestCsv;
  require_artifact(tr, "gen-data");
  require_artifact(te, "gen-data");
  return concat(read_dataset_csv(tr, Split::train), read_dataset_csv(te, Split::test));
}

PipelineCheckpoint load_stage(const Context& ctx, const char* file, const std::string& stage,
                              const std::string& producer) {
  const fs::path p = ctx.out / file;
  require_artifact(p, producer);
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  PipelineCheckpoint ckpt = load_checkpoint(in);
  if (ckpt.fingerprint != stage_fingerprint(ctx.cfg, stage)) {
    throw DependencyError(p.string() + " was produced under a different config; re-run `nnsb " + producer + "`");
  }
  return ckpt;
}

void write_rows(const fs::path& path, const Dataset& d) { write_dataset_csv(path, d); }

// ---- subcommands --------------------------------------------------------

void gen_data(Context& ctx) {
  const Dataset d =
      ctx.cfg.data_kind == DataKind::shapes ? gen_shapes(ctx.cfg.shapes) : gen_gaussian_pair(ctx.cfg.gaussian);
  for (auto [file, split] : {std::pair{kTrainCsv, Split::train}, std::pair{kTestCsv, Split::test}}) {
    const fs::path p = ctx.out / file;
    write_rows(p, d.subset(split));
    write_manifest(ctx, p, "data");
  }
  std::cout << "wrote " << d.size() << " rows to " << ctx.out.string() << '\n';
}

void train_vae_cmd(Context& ctx) {
  const Dataset d = load_data(ctx);
  const Dataset tr = d.subset(Split::train);
  auto rng = make_stream(ctx.cfg.seed, Stream::vae);
  PipelineCheckpoint ckpt{VaeModel::create(tr.x.cols(), ctx.cfg.vae, rng), std::nullopt,
                          stage_fingerprint(ctx.cfg, "vae")};
  const VaeHistory h = train_vae(ckpt.vae, tr.x, tr.s, ctx.cfg.vae, rng);

  const fs::path hist = ctx.out / "vae_history.csv";
  {
    auto out = open_out(hist);
    out << "epoch,loss,reconstruction,kl\n";
    for (std::size_t e = 0; e < h.loss.size(); ++e)
      out << e + 1 << ',' << h.loss[e] << ',' << h.reconstruction[e] << ',' << h.kl[e] << '\n';
  }
  write_manifest(ctx, hist, "vae");
  const fs::path p = ctx.out / kVaeCkpt;
  save_checkpoint(p, ckpt);
  write_manifest(ctx, p, "vae");
  std::cout << "vae: final loss " << h.loss.back() << ", reconstruction " << reconstruction_error(ckpt.vae, d.x)
            << '\n';
}

void train_encoder_cmd(Context& ctx) {
  const Dataset d = load_data(ctx);
  PipelineCheckpoint ckpt = load_stage(ctx, kVaeCkpt, "vae", "train-vae");
  const Dataset tr = d.subset(Split::train);
  auto rng = make_stream(ctx.cfg.seed, Stream::stage2);
  LatentEncoderBank bank =
      LatentEncoderBank::identity(ckpt.vae.latent_dim, ctx.cfg.stage2.hidden, ctx.cfg.stage2.proximity_weight, rng);
  const auto hist = train_stage2(bank, ckpt.vae, tr.x, tr.s, ctx.cfg.stage2, ctx.cfg.seed);
  ckpt.bank = std::move(bank);
  ckpt.fingerprint = stage_fingerprint(ctx.cfg, "encoder");

  const fs::path hp = ctx.out / "stage2_history.csv";
  {
    auto out = open_out(hp);
    out << "dim,step,phase,dependency_loss,proximity_loss\n";
    for (std::size_t k = 0; k < hist.size(); ++k) {
      const DimensionHistory& h = hist[k];
      if (h.diverged) std::cerr << "warning: dimension " << k + 1 << " diverged: " << h.diagnostic << '\n';
      for (std::size_t t = 0; t < h.dependency_loss.size(); ++t) {
        out << k + 1 << ',' << t << ',' << to_string(h.phase[t]) << ',' << h.dependency_loss[t] << ','
            << h.proximity_loss[t] << '\n';
      }
    }
  }
  write_manifest(ctx, hp, "encoder");
  const fs::path p = ctx.out / kPipelineCkpt;
  save_checkpoint(p, ckpt);
  write_manifest(ctx, p, "encoder");
  std::cout << "stage 2: trained " << hist.size() << " latent encoders\n";
}

void transform_cmd(Context& ctx) {
  Dataset d = load_data(ctx);
  const PipelineCheckpoint ckpt = load_stage(ctx, kPipelineCkpt, "encoder", "train-encoder");
  d.x = transform(ckpt, d.x).x_prime;
  for (auto [file, split] :
       {std::pair{"transformed_train.csv", Split::train}, std::pair{"transformed_test.csv", Split::test}}) {
    const fs::path p = ctx.out / file;
    write_rows(p, d.subset(split));
    write_manifest(ctx, p, "encoder");
  }
  std::cout << "transformed " << d.size() << " rows\n";
}

void write_reports(Context& ctx, const std::vector<TradeoffReport>& reports, const std::string& prefix,
                   const std::string& stage) {
  const fs::path mp = ctx.out / (prefix + "metrics.csv"), sp = ctx.out / (prefix + "summary.csv");
  {
    auto out = open_out(mp);
    write_metrics_csv(out, reports);
  }
  {
    auto out = open_out(sp);
    write_summary_csv(out, reports);
  }
  write_manifest(ctx, mp, stage);
  write_manifest(ctx, sp, stage);
  const boost::io::ios_all_saver keep(std::cout);
  std::cout << std::fixed << std::setprecision(4);
  for (const TradeoffReport& r : reports) {
    std::cout << r.variant << ": sensitive " << r.sensitive.best_test_accuracy << " target "
              << r.target.best_test_accuracy << " gap " << r.gap;
    if (!r.mi_per_dim.empty()) std::cout << " mi_bound " << r.mi_bound;
    std::cout << '\n';
  }
}

void evaluate_cmd(Context& ctx) {
  const Dataset d = load_data(ctx);
  const PipelineCheckpoint ckpt = load_stage(ctx, kPipelineCkpt, "encoder", "train-encoder");
  write_reports(ctx, evaluate_pipeline(ckpt, d, ctx.cfg.eval), "", "encoder");
}

void ablate_cmd(Context& ctx) {
  const Dataset d = load_data(ctx);
  const PipelineCheckpoint ckpt = load_stage(ctx, kVaeCkpt, "vae", "train-vae");
  std::vector<TradeoffReport> reports;
  for (TradeoffReport& r : evaluate_pipeline(ckpt, d, ctx.cfg.eval))
    if (r.variant == "raw" || r.variant == "vae_only") reports.push_back(std::move(r));
  write_reports(ctx, reports, "ablation_", "vae");
}

void estimate_mi_cmd(Context& ctx, const std::string& source) {
  if (source != "data" && source != "z_vae" && source != "z_enc") {
    throw ConfigError("--source: expected data, z_vae or z_enc, got '" + source + "'");
  }
  const Dataset d = load_data(ctx);
  Tensor z;
  std::size_t first = 0;
  std::string stage = "data";
  if (source == "data") {
    z = d.x;
  } else {
    const PipelineCheckpoint ckpt = load_stage(ctx, kPipelineCkpt, "encoder", "train-encoder");
    const Transformed t = transform(ckpt, d.x);
    z = source == "z_vae" ? t.z_vae : t.z_enc;
    first = 1;
    stage = "encoder";
  }
  const fs::path p = ctx.out / ("mi_" + source + ".csv");
  double total = 0.0;
  {
    auto out = open_out(p);
    out << "source,column,mi,clamped\n";
    for (std::size_t c = first; c < z.cols(); ++c) {
      const Tensor col = z.column_at(c);
      const Estimate e = mi_estimate(LatentBatch{{col.values().begin(), col.values().end()}, d.s}, ctx.cfg.eval.mi_spec);
      total += e.value;
      out << source << ',' << c << ',' << e.value << ',' << e.clamped << '\n';
      if (z.cols() - first <= 16) std::cout << "mi[" << c << "] = " << e.value << '\n';
    }
    out << source << ",total," << total << ",\n";
  }
  write_manifest(ctx, p, stage);
  std::cout << "mi total = " << total << '\n';
  if (ctx.cfg.data_kind == DataKind::gaussian_pair && source == "data") {
    std::cout << "analytic = " << gaussian_pair_mi(ctx.cfg.gaussian.delta, ctx.cfg.gaussian.sigma) << '\n';
  }
}

void export_cmd(Context& ctx) {
  const Dataset d = load_data(ctx);
  const PipelineCheckpoint ckpt = load_stage(ctx, kPipelineCkpt, "encoder", "train-encoder");
  const fs::path p = ctx.out / "latents.csv";
  export_latents(p, ckpt, d);
  write_manifest(ctx, p, "encoder");
  std::cout << "exported " << d.size() << " latent rows\n";
}

void noisy_cmd(Context& ctx) {
  const Dataset d = load_data(ctx);
  const PipelineCheckpoint ckpt = load_stage(ctx, kPipelineCkpt, "encoder", "train-encoder");
  const auto results = noisy_label_experiment(ckpt, d, ctx.cfg.noise_ratios, ctx.cfg.eval);
  const fs::path p = ctx.out / "noisy_metrics.csv";
  {
    auto out = open_out(p);
    write_noisy_csv(out, results);
  }
  write_manifest(ctx, p, "encoder");
  const boost::io::ios_all_saver keep(std::cout);
  std::cout << std::fixed << std::setprecision(4);
  for (const NoisyLabelResult& r : results) {
    std::cout << "ratio " << r.ratio << ": raw " << r.raw.best_test_accuracy << " transformed "
              << r.transformed.best_test_accuracy << '\n';
  }
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"gen-data",     "train-vae",      "train-encoder",
                                                 "transform",    "evaluate",       "estimate-mi",
                                                 "export-latents", "noisy-labels", "ablate-vae-only"};
  return names;
}

int run(int argc, char** argv) {
  CLI::App app{"Nearest-neighbor sensitive-information removal: data, training and evaluation"};
  app.require_subcommand(1);
  Options opt;
  const std::vector<std::pair<std::string, std::string>> help = {
      {"gen-data", "Generate the configured dataset (train/test CSV)"},
      {"train-vae", "Train the conditional-prior VAE"},
      {"train-encoder", "Train the per-dimension latent encoders on the frozen VAE"},
      {"transform", "Write x' for every row"},
      {"evaluate", "Probe raw, x', z_enc and vae-only variants; write metrics"},
      {"estimate-mi", "Per-column MI with the sensitive label"},
      {"export-latents", "Write z_vae and z_enc for every row"},
      {"noisy-labels", "Target probes on raw vs x' under training-label noise"},
      {"ablate-vae-only", "Evaluate VAE masking without latent encoders"},
  };
  for (const auto& [name, text] : help) {
    CLI::App* sub = app.add_subcommand(name, text);
    sub->add_option("--config", opt.config_path, "Config file (INI)")->check(CLI::ExistingFile);
    sub->add_option("--set", opt.overrides, "Override section.key=value (repeatable)");
    sub->add_option("--out", opt.out, "Output directory (paths.out)");
    sub->add_option("--seed", opt.seed, "Root seed (run.seed)");
    if (name == "estimate-mi") sub->add_option("--source", opt.mi_source, "data, z_vae or z_enc");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    Context ctx = make_context(command, opt);
    if (command == "gen-data") gen_data(ctx);
    if (command == "train-vae") train_vae_cmd(ctx);
    if (command == "train-encoder") train_encoder_cmd(ctx);
    if (command == "transform") transform_cmd(ctx);
    if (command == "evaluate") evaluate_cmd(ctx);
    if (command == "estimate-mi") estimate_mi_cmd(ctx, opt.mi_source);
    if (command == "export-latents") export_cmd(ctx);
    if (command == "noisy-labels") noisy_cmd(ctx);
    if (command == "ablate-vae-only") ablate_cmd(ctx);
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << '\n';
    return kExitDependency;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace nnsb::cli
