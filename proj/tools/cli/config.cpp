#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "nnsb/error.hpp"
#include "nnsb/hash.hpp"

namespace nnsb::cli {
namespace {

namespace pt = boost::property_tree;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& text, const char* expected) {
  throw ConfigError(key + ": expected " + expected + ", got '" + text + "'");
}

template <class T>
T parse_int(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  T v{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) bad_value(key, text, "an integer");
  return v;
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) bad_value(key, text, "a number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  bad_value(key, text, "true or false");
}

template <class T, class Parse>
std::vector<T> parse_list(const std::string& key, const std::string& text, Parse parse) {
  std::vector<T> out;
  const std::string t = trim(text);
  if (t.empty()) return out;
  std::stringstream ss(t);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse(key, item));
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string& name, const std::string& text)> set;
};

#define NNSB_SIZE_FIELD(sec, name, member)                                                 \
  Field {                                                                                  \
    sec, name, [](const Config& c) { return std::to_string(c.member); },                   \
        [](Config& c, const std::string& k, const std::string& t) {                        \
          c.member = parse_int<std::size_t>(k, t);                                         \
        }                                                                                  \
  }
#define NNSB_DOUBLE_FIELD(sec, name, member)                                               \
  Field {                                                                                  \
    sec, name, [](const Config& c) { return fmt(c.member); },                              \
        [](Config& c, const std::string& k, const std::string& t) { c.member = parse_double(k, t); } \
  }
#define NNSB_SIZE_LIST_FIELD(sec, name, member)                                            \
  Field {                                                                                  \
    sec, name, [](const Config& c) { return join(c.member); },                             \
        [](Config& c, const std::string& k, const std::string& t) {                        \
          c.member = parse_list<std::size_t>(k, t, parse_int<std::size_t>);                \
        }                                                                                  \
  }
#define NNSB_INT_LIST_FIELD(sec, name, member)                                             \
  Field {                                                                                  \
    sec, name, [](const Config& c) { return join(c.member); },                             \
        [](Config& c, const std::string& k, const std::string& t) {                        \
          c.member = parse_list<int>(k, t, parse_int<int>);                                \
        }                                                                                  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"run", "seed", [](const Config& c) { return std::to_string(c.seed); },
            [](Config& c, const std::string& k, const std::string& t) { c.seed = parse_int<std::uint64_t>(k, t); }},

      Field{"data", "kind",
            [](const Config& c) { return std::string(c.data_kind == DataKind::shapes ? "shapes" : "gaussian_pair"); },
            [](Config& c, const std::string& k, const std::string& t) {
              const std::string v = trim(t);
              if (v == "shapes") {
                c.data_kind = DataKind::shapes;
              } else if (v == "gaussian_pair") {
                c.data_kind = DataKind::gaussian_pair;
              } else {
                bad_value(k, t, "shapes or gaussian_pair");
              }
            }},
      NNSB_SIZE_FIELD("data", "n_samples", shapes.n_samples),
      NNSB_SIZE_FIELD("data", "image_side", shapes.image_side),
      NNSB_SIZE_FIELD("data", "glyph_classes", shapes.glyph_classes),
      NNSB_DOUBLE_FIELD("data", "noise_std", shapes.noise_std),
      Field{"data", "jitter", [](const Config& c) { return std::to_string(c.shapes.jitter); },
            [](Config& c, const std::string& k, const std::string& t) { c.shapes.jitter = parse_int<int>(k, t); }},
      NNSB_DOUBLE_FIELD("data", "delta", gaussian.delta),
      NNSB_DOUBLE_FIELD("data", "sigma", gaussian.sigma),
      NNSB_SIZE_FIELD("data", "n_per_class", gaussian.n_per_class),

      NNSB_SIZE_FIELD("vae", "latent_dim", vae.latent_dim),
      NNSB_SIZE_LIST_FIELD("vae", "encoder_hidden", vae.encoder_hidden),
      NNSB_SIZE_LIST_FIELD("vae", "decoder_hidden", vae.decoder_hidden),
      NNSB_DOUBLE_FIELD("vae", "beta_kl", vae.beta_kl),
      NNSB_SIZE_FIELD("vae", "epochs", vae.train.epochs),
      NNSB_DOUBLE_FIELD("vae", "learning_rate", vae.train.learning_rate),
      NNSB_SIZE_FIELD("vae", "batch_size", vae.train.batch_size),

      NNSB_DOUBLE_FIELD("stage2", "proximity_weight", stage2.proximity_weight),
      NNSB_INT_LIST_FIELD("stage2", "m_values", stage2_smoothing.m_values),
      Field{"stage2", "smoothing", [](const Config& c) { return c.stage2_smoothing.kind; },
            [](Config& c, const std::string&, const std::string& t) { c.stage2_smoothing.kind = trim(t); }},
      NNSB_DOUBLE_FIELD("stage2", "smoothing_sigma", stage2_smoothing.sigma),
      NNSB_DOUBLE_FIELD("stage2", "switch_threshold_sqdiff", stage2.schedule.switch_threshold_sqdiff),
      NNSB_DOUBLE_FIELD("stage2", "switch_threshold_sqratio", stage2.schedule.switch_threshold_sqratio),
      NNSB_SIZE_FIELD("stage2", "window", stage2.schedule.window),
      NNSB_SIZE_LIST_FIELD("stage2", "hidden", stage2.hidden),
      NNSB_SIZE_FIELD("stage2", "epochs", stage2.train.epochs),
      NNSB_DOUBLE_FIELD("stage2", "learning_rate", stage2.train.learning_rate),
      NNSB_SIZE_FIELD("stage2", "batch_size", stage2.train.batch_size),
      Field{"stage2", "sample_latents", [](const Config& c) { return std::string(c.stage2.sample_latents ? "true" : "false"); },
            [](Config& c, const std::string& k, const std::string& t) { c.stage2.sample_latents = parse_bool(k, t); }},

      NNSB_SIZE_LIST_FIELD("eval", "probe_hidden", eval.probe.hidden),
      NNSB_SIZE_FIELD("eval", "epochs", eval.probe.train.epochs),
      NNSB_DOUBLE_FIELD("eval", "learning_rate", eval.probe.train.learning_rate),
      NNSB_SIZE_FIELD("eval", "batch_size", eval.probe.train.batch_size),
      NNSB_INT_LIST_FIELD("eval", "mi_m_values", eval_smoothing.m_values),
      Field{"eval", "mi_smoothing", [](const Config& c) { return c.eval_smoothing.kind; },
            [](Config& c, const std::string&, const std::string& t) { c.eval_smoothing.kind = trim(t); }},
      NNSB_DOUBLE_FIELD("eval", "mi_smoothing_sigma", eval_smoothing.sigma),
      Field{"eval", "noise_ratios", [](const Config& c) { return join(c.noise_ratios); },
            [](Config& c, const std::string& k, const std::string& t) {
              c.noise_ratios = parse_list<double>(k, t, parse_double);
            }},

      Field{"paths", "out", [](const Config& c) { return c.out.string(); },
            [](Config& c, const std::string&, const std::string& t) { c.out = trim(t); }},
  };
  return table;
}

#undef NNSB_SIZE_FIELD
#undef NNSB_DOUBLE_FIELD
#undef NNSB_SIZE_LIST_FIELD
#undef NNSB_INT_LIST_FIELD

const Field* find_field(const std::string& section, const std::string& key) {
  for (const Field& f : fields())
    if (f.section == section && f.key == key) return &f;
  return nullptr;
}

void assign(Config& cfg, const std::string& section, const std::string& key, const std::string& value) {
  const Field* f = find_field(section, key);
  if (f == nullptr) throw ConfigError("unknown key " + section + "." + key);
  f->set(cfg, section + "." + key, value);
}

template <class Fn>
void checked(const char* section, Fn&& fn) {
  try {
    fn();
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("[") + section + "] " + e.what());
  }
}

}  // namespace

SmoothingSpec Smoothing::build() const {
  if (kind == "gaussian") {
    if (!(sigma > 0.0)) throw ContractViolation("smoothing sigma must be > 0");
    return SmoothingSpec::gaussian(sigma, m_values);
  }
  if (kind == "uniform") return SmoothingSpec::uniform(m_values);
  if (kind == "none") return SmoothingSpec::unsmoothed(m_values);
  throw ContractViolation("smoothing must be gaussian, uniform or none, got '" + kind + "'");
}

void Config::finalize() {
  shapes.seed = seed;
  gaussian.seed = seed;
  vae.train.seed = seed;
  stage2.train.seed = seed;
  eval.seed = seed;
  checked("data", [&] { data_kind == DataKind::shapes ? shapes.validate() : gaussian.validate(); });
  checked("vae", [&] {
    vae.validate();
    vae.train.validate();
  });
  checked("stage2", [&] {
    stage2.spec = stage2_smoothing.build();
    stage2.validate();
  });
  checked("eval", [&] {
    eval.mi_spec = eval_smoothing.build();
    eval.validate();
    for (double r : noise_ratios) require(r >= 0.0 && r <= 1.0, "eval.noise_ratios must lie in [0, 1]");
  });
  if (out.empty()) throw ConfigError("paths.out: must not be empty");
}

Config parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  Config cfg;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside any [section]");
    for (const auto& [key, value] : body) assign(cfg, section, key, value.data());
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override '" + o + "': expected section.key=value");
    }
    assign(cfg, trim(o.substr(0, dot)), trim(o.substr(dot + 1, eq - dot - 1)), o.substr(eq + 1));
  }
  cfg.finalize();
  return cfg;
}

Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), overrides);
}

namespace {

std::string sections_text(const Config& cfg, std::initializer_list<const char*> sections) {
  std::string out;
  for (const char* section : sections) {
    out += "[" + std::string(section) + "]\n";
    for (const Field& f : fields())
      if (f.section == section) out += f.key + " = " + f.get(cfg) + "\n";
    out += "\n";
  }
  return out;
}

}  // namespace

std::string canonical_text(const Config& cfg) {
  return sections_text(cfg, {"run", "data", "vae", "stage2", "eval", "paths"});
}

std::string stage_fingerprint(const Config& cfg, const std::string& stage) {
  if (stage == "data") return sha256_hex(sections_text(cfg, {"run", "data"}));
  if (stage == "vae") return sha256_hex(sections_text(cfg, {"run", "data", "vae"}));
  if (stage == "encoder") return sha256_hex(sections_text(cfg, {"run", "data", "vae", "stage2"}));
  throw ContractViolation("stage_fingerprint: unknown stage " + stage);
}

}  // namespace nnsb::cli
