#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ulab/critic.hpp"
#include "ulab/errors.hpp"
#include "ulab/network.hpp"
#include "ulab/optim.hpp"

namespace ulab {

enum class Mode { Train, Moments, Emdist, Bounds, OracleCheck };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::Train: return "train";
    case Mode::Moments: return "moments";
    case Mode::Emdist: return "emdist";
    case Mode::Bounds: return "bounds";
    case Mode::OracleCheck: return "oracle-check";
  }
  return "bounds";
}

inline Mode mode_from(const std::string& s) {
  if (s == "train") return Mode::Train;
  if (s == "moments") return Mode::Moments;
  if (s == "emdist") return Mode::Emdist;
  if (s == "bounds") return Mode::Bounds;
  if (s == "oracle-check") return Mode::OracleCheck;
  throw format_error("unknown mode: " + s);
}

/// Everything one experiment run needs. Parsed from a "key = value" file;
/// every field has a default so an empty file is a valid bounds-mode config.
struct ExperimentConfig {
  Mode mode = Mode::Bounds;
  std::uint64_t seed = 1;
  std::string out_dir = "runs/out";

  // network: hidden layer sizes with per-layer norm
  std::vector<LayerSpec> layers{{64, NormKind::BatchNorm},
                                {64, NormKind::BatchNorm},
                                {64, NormKind::BatchNorm},
                                {64, NormKind::BatchNorm},
                                {8, NormKind::BatchNorm}};
  NormKind default_norm = NormKind::BatchNorm;

  // optimizer
  double lr = 0.05;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 0.0005;
  std::vector<int> milestones{61, 121, 161};
  double decay_factor = 0.2;

  int epochs = 10;
  std::size_t batch_size = 128;

  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  // dataset paths (IDX pairs)
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;

  // moments mode
  int moment_layer = -1;  // -1: last hidden layer

  // emdist mode
  std::string ckpt_dir;            // empty: use out_dir/checkpoints
  std::vector<int> emdist_layers;  // empty: every hidden layer
  int critic_iters = 1500;
  std::size_t critic_batch = 128;
  double critic_clip = 0.01;
  double critic_lr = 5e-5;
  std::vector<std::size_t> critic_hidden{128, 128, 128};
  bool critic_sigmoid_head = false;

  // bounds mode
  int probe_p = 2;
  int bounds_trials = 100;

  // reproducibility: zero out wall-clock columns in CSVs
  bool zero_timings = false;

  bool operator==(const ExperimentConfig&) const = default;

  SgdConfig sgd() const {
    SgdConfig cfg;
    cfg.lr = lr;
    cfg.momentum = momentum;
    cfg.nesterov = nesterov;
    cfg.weight_decay = weight_decay;
    cfg.milestones = milestones;
    cfg.decay_factor = decay_factor;
    return cfg;
  }

  CriticConfig critic() const {
    CriticConfig cfg;
    cfg.iterations = critic_iters;
    cfg.batch_size = critic_batch;
    cfg.clip = critic_clip;
    cfg.lr = critic_lr;
    cfg.hidden = critic_hidden;
    cfg.sigmoid_head = critic_sigmoid_head;
    cfg.seed = seed;
    return cfg;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

struct ConfigParser {
  std::string source;
  std::size_t lineno = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw format_error(source + ":" + std::to_string(lineno) + ": " + what);
  }

  long long to_int(const std::string& v) const {
    std::size_t used = 0;
    long long out = 0;
    try {
      out = std::stoll(v, &used);
    } catch (const std::exception&) {
      fail("expected an integer, got '" + v + "'");
    }
    if (used != v.size()) fail("expected an integer, got '" + v + "'");
    return out;
  }

  double to_real(const std::string& v) const {
    std::size_t used = 0;
    double out = 0.0;
    try {
      out = std::stod(v, &used);
    } catch (const std::exception&) {
      fail("expected a number, got '" + v + "'");
    }
    if (used != v.size()) fail("expected a number, got '" + v + "'");
    return out;
  }

  bool to_bool(const std::string& v) const {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail("expected a boolean, got '" + v + "'");
  }

  std::vector<std::string> split_list(const std::string& v) const {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }
};

}  // namespace detail

/// Parses a "key = value" config ('#' starts a comment; unknown keys are
/// rejected with their line number). The `layers` value is a comma list of
/// `units` or `units:norm` entries; entries without a norm take `norm`'s
/// value (which must precede `layers` to take effect on it).
inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::string& source) {
  ExperimentConfig cfg;
  detail::ConfigParser p{source, 0};
  std::stringstream stream(text);
  std::string raw;
  bool layers_explicit = false;
  while (std::getline(stream, raw)) {
    ++p.lineno;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) p.fail("expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) p.fail("empty key");

    if (key == "mode") {
      try {
        cfg.mode = mode_from(value);
      } catch (const format_error& e) {
        p.fail(e.what());
      }
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(p.to_int(value));
    } else if (key == "out_dir") {
      cfg.out_dir = value;
    } else if (key == "norm") {
      try {
        cfg.default_norm = norm_kind_from(value);
      } catch (const format_error& e) {
        p.fail(e.what());
      }
      if (!layers_explicit)
        for (auto& l : cfg.layers) l.norm = cfg.default_norm;
    } else if (key == "layers") {
      cfg.layers.clear();
      for (const std::string& item : p.split_list(value)) {
        LayerSpec spec;
        const auto colon = item.find(':');
        const std::string units = colon == std::string::npos
                                      ? item
                                      : detail::trim(item.substr(0, colon));
        const long long u = p.to_int(units);
        if (u <= 0) p.fail("layer size must be positive");
        spec.units = static_cast<std::size_t>(u);
        if (colon == std::string::npos) {
          spec.norm = cfg.default_norm;
        } else {
          try {
            spec.norm = norm_kind_from(detail::trim(item.substr(colon + 1)));
          } catch (const format_error& e) {
            p.fail(e.what());
          }
        }
        cfg.layers.push_back(spec);
      }
      if (cfg.layers.empty()) p.fail("layers list is empty");
      layers_explicit = true;
    } else if (key == "lr") {
      cfg.lr = p.to_real(value);
    } else if (key == "momentum") {
      cfg.momentum = p.to_real(value);
    } else if (key == "nesterov") {
      cfg.nesterov = p.to_bool(value);
    } else if (key == "weight_decay") {
      cfg.weight_decay = p.to_real(value);
    } else if (key == "milestones") {
      cfg.milestones.clear();
      for (const auto& item : p.split_list(value))
        cfg.milestones.push_back(static_cast<int>(p.to_int(item)));
    } else if (key == "decay_factor") {
      cfg.decay_factor = p.to_real(value);
    } else if (key == "epochs") {
      const long long e = p.to_int(value);
      if (e < 0) p.fail("epochs must be non-negative");
      cfg.epochs = static_cast<int>(e);
    } else if (key == "batch_size") {
      const long long b = p.to_int(value);
      if (b <= 0) p.fail("batch_size must be positive");
      cfg.batch_size = static_cast<std::size_t>(b);
    } else if (key == "bn_eps") {
      cfg.bn_eps = p.to_real(value);
    } else if (key == "bn_momentum") {
      cfg.bn_momentum = p.to_real(value);
    } else if (key == "train_images") {
      cfg.train_images = value;
    } else if (key == "train_labels") {
      cfg.train_labels = value;
    } else if (key == "test_images") {
      cfg.test_images = value;
    } else if (key == "test_labels") {
      cfg.test_labels = value;
    } else if (key == "moment_layer") {
      cfg.moment_layer = static_cast<int>(p.to_int(value));
    } else if (key == "ckpt_dir") {
      cfg.ckpt_dir = value;
    } else if (key == "emdist_layers") {
      cfg.emdist_layers.clear();
      for (const auto& item : p.split_list(value))
        cfg.emdist_layers.push_back(static_cast<int>(p.to_int(item)));
    } else if (key == "critic_iters") {
      cfg.critic_iters = static_cast<int>(p.to_int(value));
    } else if (key == "critic_batch") {
      cfg.critic_batch = static_cast<std::size_t>(p.to_int(value));
    } else if (key == "critic_clip") {
      cfg.critic_clip = p.to_real(value);
    } else if (key == "critic_lr") {
      cfg.critic_lr = p.to_real(value);
    } else if (key == "critic_hidden") {
      cfg.critic_hidden.clear();
      for (const auto& item : p.split_list(value))
        cfg.critic_hidden.push_back(static_cast<std::size_t>(p.to_int(item)));
    } else if (key == "critic_sigmoid_head") {
      cfg.critic_sigmoid_head = p.to_bool(value);
    } else if (key == "probe_p") {
      cfg.probe_p = static_cast<int>(p.to_int(value));
    } else if (key == "bounds_trials") {
      const long long t = p.to_int(value);
      if (t <= 0) p.fail("bounds_trials must be positive");
      cfg.bounds_trials = static_cast<int>(t);
    } else if (key == "zero_timings") {
      cfg.zero_timings = p.to_bool(value);
    } else {
      p.fail("unknown key '" + key + "'");
    }
  }
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw format_error("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse_config_text(text, path);
}

namespace detail {

inline std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T, typename Fn>
std::string join(const std::vector<T>& items, Fn&& fn) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += fn(items[i]);
  }
  return out;
}

}  // namespace detail

/// Canonical form: every key, fixed order. parse(serialize(c)) == c.
inline std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "mode = " << to_string(c.mode) << "\n";
  out << "seed = " << c.seed << "\n";
  out << "out_dir = " << c.out_dir << "\n";
  out << "norm = " << to_string(c.default_norm) << "\n";
  out << "layers = "
      << detail::join(c.layers,
                      [](const LayerSpec& l) {
                        return std::to_string(l.units) + ":" + to_string(l.norm);
                      })
      << "\n";
  out << "lr = " << detail::num(c.lr) << "\n";
  out << "momentum = " << detail::num(c.momentum) << "\n";
  out << "nesterov = " << (c.nesterov ? "true" : "false") << "\n";
  out << "weight_decay = " << detail::num(c.weight_decay) << "\n";
  out << "milestones = "
      << detail::join(c.milestones, [](int m) { return std::to_string(m); })
      << "\n";
  out << "decay_factor = " << detail::num(c.decay_factor) << "\n";
  out << "epochs = " << c.epochs << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "bn_eps = " << detail::num(c.bn_eps) << "\n";
  out << "bn_momentum = " << detail::num(c.bn_momentum) << "\n";
  out << "train_images = " << c.train_images << "\n";
  out << "train_labels = " << c.train_labels << "\n";
  out << "test_images = " << c.test_images << "\n";
  out << "test_labels = " << c.test_labels << "\n";
  out << "moment_layer = " << c.moment_layer << "\n";
  out << "ckpt_dir = " << c.ckpt_dir << "\n";
  out << "emdist_layers = "
      << detail::join(c.emdist_layers, [](int l) { return std::to_string(l); })
      << "\n";
  out << "critic_iters = " << c.critic_iters << "\n";
  out << "critic_batch = " << c.critic_batch << "\n";
  out << "critic_clip = " << detail::num(c.critic_clip) << "\n";
  out << "critic_lr = " << detail::num(c.critic_lr) << "\n";
  out << "critic_hidden = "
      << detail::join(c.critic_hidden,
                      [](std::size_t h) { return std::to_string(h); })
      << "\n";
  out << "critic_sigmoid_head = " << (c.critic_sigmoid_head ? "true" : "false")
      << "\n";
  out << "probe_p = " << c.probe_p << "\n";
  out << "bounds_trials = " << c.bounds_trials << "\n";
  out << "zero_timings = " << (c.zero_timings ? "true" : "false") << "\n";
  return out.str();
}

/// FNV-1a of the canonical serialization, for the run manifest.
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string text = serialize_config(c);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Mode-specific validation: required paths present and resolvable.
inline void validate_config(const ExperimentConfig& c) {
  c.sgd().validate();
  if (c.bn_eps <= 0.0) throw contract_error("config: bn_eps must be positive");
  if (c.bn_momentum <= 0.0 || c.bn_momentum >= 1.0)
    throw contract_error("config: bn_momentum must lie in (0, 1)");
  if (c.probe_p < 2) throw contract_error("config: probe_p must be >= 2");
  if (c.layers.empty()) throw contract_error("config: at least one hidden layer");

  const bool needs_data =
      c.mode == Mode::Train || c.mode == Mode::Moments || c.mode == Mode::Emdist;
  if (needs_data) {
    auto require = [](const std::string& path, const char* key) {
      if (path.empty())
        throw missing_data_error(std::string("config: ") + key +
                                 " is required in this mode");
      if (!std::ifstream(path))
        throw missing_data_error(std::string("config: cannot open ") + key +
                                 " at '" + path + "'");
    };
    require(c.train_images, "train_images");
    require(c.train_labels, "train_labels");
    require(c.test_images, "test_images");
    require(c.test_labels, "test_labels");
  }
  if (c.mode == Mode::Moments) {
    if (c.moment_layer >= 0 &&
        static_cast<std::size_t>(c.moment_layer) >= c.layers.size())
      throw contract_error("config: moment_layer out of range");
  }
  for (int l : c.emdist_layers)
    if (l < 0 || static_cast<std::size_t>(l) >= c.layers.size())
      throw contract_error("config: emdist layer out of range");
}

}  // namespace ulab
