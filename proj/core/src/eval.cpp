#include "nnsb/eval.hpp"

#include <cmath>
#include <iomanip>
#include <limits>

#include "nnsb/error.hpp"
#include "nnsb/miloss.hpp"
#include "nnsb/random.hpp"

namespace nnsb {

void ProbeConfig::validate() const {
  for (std::size_t w : hidden) require(w > 0, "eval.probe_hidden widths must be positive");
  train.validate();
}

void EvalConfig::validate() const {
  probe.validate();
  mi_spec.validate();
}

std::vector<int> sensitive_classes(std::span<const int> s) {
  std::vector<int> out;
  out.reserve(s.size());
  for (int v : s) {
    require(v == 1 || v == -1, "sensitive_classes: labels must be -1 or +1");
    out.push_back((v + 1) / 2);
  }
  return out;
}

namespace {

struct Standardizer {
  std::vector<double> mean, inv_sd;

  explicit Standardizer(const Tensor& x) : mean(x.cols(), 0.0), inv_sd(x.cols(), 1.0) {
    const double n = static_cast<double>(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += x(i, c) / n;
    std::vector<double> var(x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t c = 0; c < x.cols(); ++c) var[c] += (x(i, c) - mean[c]) * (x(i, c) - mean[c]) / n;
    // Constant features are only centered.
    for (std::size_t c = 0; c < x.cols(); ++c) inv_sd[c] = var[c] > 1e-12 ? 1.0 / std::sqrt(var[c]) : 1.0;
  }

  Tensor apply(const Tensor& x) const {
    Tensor out = x;
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t c = 0; c < x.cols(); ++c) out(i, c) = (x(i, c) - mean[c]) * inv_sd[c];
    return out;
  }
};

double accuracy(const Mlp& m, const Tensor& x, std::span<const int> y) {
  const Tensor logits = m.predict(x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row_span(i);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == y[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace

ProbeReport train_probe(const Tensor& train_x, std::span<const int> train_y, const Tensor& test_x,
                        std::span<const int> test_y, std::size_t num_classes, const ProbeConfig& cfg,
                        std::mt19937_64& rng) {
  cfg.validate();
  require(train_x.rows() == train_y.size() && test_x.rows() == test_y.size(), "train_probe: one label per row");
  require(train_x.rows() > 0 && test_x.rows() > 0, "train_probe: empty split");
  require(train_x.cols() == test_x.cols(), "train_probe: train and test widths differ");
  require(num_classes >= 2, "train_probe: need at least two classes");
  for (int y : train_y) require(y >= 0 && static_cast<std::size_t>(y) < num_classes, "train_probe: label out of range");
  for (int y : test_y) require(y >= 0 && static_cast<std::size_t>(y) < num_classes, "train_probe: label out of range");

  for (double v : train_x.values()) require(std::isfinite(v), "train_probe: non-finite training input");
  for (double v : test_x.values()) require(std::isfinite(v), "train_probe: non-finite test input");

  const Standardizer norm(train_x);
  const Tensor xtr = norm.apply(train_x), xte = norm.apply(test_x);
  std::vector<std::size_t> widths{train_x.cols()};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(num_classes);
  Mlp m = Mlp::create(widths, Activation::relu, Activation::identity, rng);

  ProbeReport rep;
  const std::size_t n = xtr.rows(), bs = std::min(cfg.train.batch_size, n);
  std::vector<int> yb;
  for (std::size_t epoch = 0; epoch < cfg.train.epochs && !rep.diverged; ++epoch) {
    const auto order = permutation(n, rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(n, start + bs) - start);
      yb.clear();
      for (std::size_t i : idx) yb.push_back(train_y[i]);
      Tape tape;
      const BoundMlp b = m.bind(tape);
      Var loss = softmax_cross_entropy(b.forward(tape.constant(xtr.select_rows(idx))), yb);
      if (!std::isfinite(loss.item())) {
        rep.diverged = true;
        break;
      }
      m.adam_step(b.gradients(tape.backward(loss)), cfg.train);
      loss_sum += loss.item();
      ++batches;
    }
    if (rep.diverged) break;
    rep.train_loss.push_back(loss_sum / static_cast<double>(batches));
    rep.test_accuracy.push_back(accuracy(m, xte, test_y));
  }
  if (!rep.test_accuracy.empty()) {
    rep.best_test_accuracy = *std::max_element(rep.test_accuracy.begin(), rep.test_accuracy.end());
    rep.final_test_accuracy = rep.test_accuracy.back();
  }
  return rep;
}

double tradeoff_gap(const ProbeReport& sensitive, const ProbeReport& target) {
  return std::abs(sensitive.best_test_accuracy - target.best_test_accuracy);
}

std::vector<double> latent_mi(const Tensor& z, std::span<const int> s, const SmoothingSpec& spec) {
  require(z.rows() == s.size(), "latent_mi: one label per row");
  std::vector<double> out;
  for (std::size_t d = 1; d < z.cols(); ++d) {
    const Tensor col = z.column_at(d);
    const LatentBatch b{std::vector<double>(col.values().begin(), col.values().end()),
                        std::vector<int>(s.begin(), s.end())};
    out.push_back(mi_estimate(b, spec).value);
  }
  return out;
}

namespace {

struct Variant {
  std::string name;
  Tensor x;  // all rows of the dataset, transformed
  bool latent = false;
};

TradeoffReport probe_variant(const Variant& v, const Dataset& d, std::size_t index, const EvalConfig& cfg) {
  std::vector<std::size_t> tr, te;
  for (std::size_t i = 0; i < d.size(); ++i) (d.split[i] == Split::train ? tr : te).push_back(i);
  const Tensor xtr = v.x.select_rows(tr), xte = v.x.select_rows(te);
  std::vector<int> s_tr, s_te, y_tr, y_te;
  for (std::size_t i : tr) {
    s_tr.push_back((d.s[i] + 1) / 2);
    y_tr.push_back(d.target[i]);
  }
  for (std::size_t i : te) {
    s_te.push_back((d.s[i] + 1) / 2);
    y_te.push_back(d.target[i]);
  }
  const auto sub = static_cast<std::uint32_t>(index);
  TradeoffReport r;
  r.variant = v.name;
  auto rng_s = make_stream(cfg.seed, Stream::probes, 2 * sub);
  r.sensitive = train_probe(xtr, s_tr, xte, s_te, 2, cfg.probe, rng_s);
  auto rng_t = make_stream(cfg.seed, Stream::probes, 2 * sub + 1);
  r.target = train_probe(xtr, y_tr, xte, y_te, d.num_classes, cfg.probe, rng_t);
  r.gap = tradeoff_gap(r.sensitive, r.target);
  if (v.latent) {
    r.mi_per_dim = latent_mi(v.x, d.s, cfg.mi_spec);
    for (double m : r.mi_per_dim) r.mi_bound += m;
  }
  return r;
}

}  // namespace

std::vector<TradeoffReport> evaluate_pipeline(const PipelineCheckpoint& ckpt, const Dataset& d,
                                              const EvalConfig& cfg) {
  cfg.validate();
  d.validate();
  const Transformed t = transform(ckpt, d.x);
  const Tensor vae_only = decode(ckpt.vae, mask_z0(t.z_vae));
  std::vector<Variant> variants;
  variants.push_back({"raw", d.x, false});
  variants.push_back({"x_prime", t.x_prime, false});
  variants.push_back({"z_enc", t.z_enc, true});
  variants.push_back({"vae_only", vae_only, false});
  std::vector<TradeoffReport> out;
  for (std::size_t k = 0; k < variants.size(); ++k) out.push_back(probe_variant(variants[k], d, k, cfg));
  // The VAE-only path leaves dims 1..D-1 of z_vae untouched.
  out.back().mi_per_dim = latent_mi(t.z_vae, d.s, cfg.mi_spec);
  for (double m : out.back().mi_per_dim) out.back().mi_bound += m;
  return out;
}

std::vector<NoisyLabelResult> noisy_label_experiment(const PipelineCheckpoint& ckpt, const Dataset& d,
                                                     std::span<const double> ratios, const EvalConfig& cfg) {
  cfg.validate();
  d.validate();
  const Tensor x_prime = transform(ckpt, d.x).x_prime;
  std::vector<std::size_t> tr, te;
  for (std::size_t i = 0; i < d.size(); ++i) (d.split[i] == Split::train ? tr : te).push_back(i);
  std::vector<int> y_te;
  for (std::size_t i : te) y_te.push_back(d.target[i]);
  const Tensor raw_tr = d.x.select_rows(tr), raw_te = d.x.select_rows(te);
  const Tensor xp_tr = x_prime.select_rows(tr), xp_te = x_prime.select_rows(te);

  std::vector<NoisyLabelResult> out;
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    auto noise_rng = make_stream(cfg.seed, Stream::noise_labels, static_cast<std::uint32_t>(k));
    const Dataset noisy = inject_label_noise(d, ratios[k], noise_rng);
    std::vector<int> y_tr;
    for (std::size_t i : tr) y_tr.push_back(noisy.target[i]);
    NoisyLabelResult r;
    r.ratio = ratios[k];
    // Same probe initialization and batch order for both inputs.
    auto rng_raw = make_stream(cfg.seed, Stream::probes, 1000 + static_cast<std::uint32_t>(k));
    r.raw = train_probe(raw_tr, y_tr, raw_te, y_te, d.num_classes, cfg.probe, rng_raw);
    auto rng_tr = make_stream(cfg.seed, Stream::probes, 1000 + static_cast<std::uint32_t>(k));
    r.transformed = train_probe(xp_tr, y_tr, xp_te, y_te, d.num_classes, cfg.probe, rng_tr);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

void put_probe(std::ostream& out, const std::string& variant, const std::string& which, const ProbeReport& p) {
  for (std::size_t e = 0; e < p.test_accuracy.size(); ++e) {
    out << variant << ',' << which << "_acc," << e + 1 << ',' << p.test_accuracy[e] << '\n';
    out << variant << ',' << which << "_train_loss," << e + 1 << ',' << p.train_loss[e] << '\n';
  }
  out << variant << ',' << which << "_best,," << p.best_test_accuracy << '\n';
  out << variant << ',' << which << "_final,," << p.final_test_accuracy << '\n';
  out << variant << ',' << which << "_diverged,," << (p.diverged ? 1 : 0) << '\n';
}

}  // namespace

void write_metrics_csv(std::ostream& out, std::span<const TradeoffReport> reports) {
  out << "variant,metric,epoch,value\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const TradeoffReport& r : reports) {
    put_probe(out, r.variant, "sensitive", r.sensitive);
    put_probe(out, r.variant, "target", r.target);
    out << r.variant << ",gap,," << r.gap << '\n';
    for (std::size_t k = 0; k < r.mi_per_dim.size(); ++k) {
      out << r.variant << ",mi_dim_" << k + 1 << ",," << r.mi_per_dim[k] << '\n';
    }
    if (!r.mi_per_dim.empty()) out << r.variant << ",mi_bound,," << r.mi_bound << '\n';
  }
}

void write_summary_csv(std::ostream& out, std::span<const TradeoffReport> reports) {
  out << "variant,sensitive_best,sensitive_final,target_best,target_final,gap,mi_bound\n"
      << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const TradeoffReport& r : reports) {
    out << r.variant << ',' << r.sensitive.best_test_accuracy << ',' << r.sensitive.final_test_accuracy << ','
        << r.target.best_test_accuracy << ',' << r.target.final_test_accuracy << ',' << r.gap << ',';
    if (!r.mi_per_dim.empty()) out << r.mi_bound;
    out << '\n';
  }
}

void write_noisy_csv(std::ostream& out, std::span<const NoisyLabelResult> results) {
  out << "ratio,variant,metric,epoch,value\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const NoisyLabelResult& r : results) {
    for (const auto& [name, p] : {std::pair<const char*, const ProbeReport*>{"noisy_raw", &r.raw},
                                  std::pair<const char*, const ProbeReport*>{"noisy_transformed", &r.transformed}}) {
      for (std::size_t e = 0; e < p->test_accuracy.size(); ++e) {
        out << r.ratio << ',' << name << ",target_acc," << e + 1 << ',' << p->test_accuracy[e] << '\n';
      }
      out << r.ratio << ',' << name << ",target_best,," << p->best_test_accuracy << '\n';
      out << r.ratio << ',' << name << ",target_final,," << p->final_test_accuracy << '\n';
    }
  }
}

}  // namespace nnsb
