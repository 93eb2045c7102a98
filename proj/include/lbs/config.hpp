#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lbs/errors.hpp"
#include "lbs/trace.hpp"

namespace lbs {

/// Number or "auto" (resolved from the instance at run time).
struct AutoValue {
  std::optional<double> value;

  bool is_auto() const noexcept { return !value.has_value(); }
  double or_else(double fallback) const { return value ? *value : fallback; }
  bool operator==(const AutoValue&) const = default;
};

struct ExperimentConfig {
  std::string task = "complete";  // complete | deblur
  std::string solver = "lbs";     // lbs | fbs | fista | admm | drs | prs
  std::string input;              // image path; empty = synthetic scene
  std::string mask;               // PGM, 0 = missing; empty = random mask
  std::string kernel = "box:9";   // path, box:N, gaussian:N:SIGMA or delta
  std::string ground_truth;
  std::string output_dir = "lbs_out";
  std::uint64_t seed = 1;

  std::size_t synthetic_size = 64;
  std::string synthetic_kind = "piecewise_constant";
  double missing = 0.4;
  double noise_sigma = 0.01;

  AutoValue c;
  AutoValue lambda;
  AutoValue rho;
  double kappa = 0.85;  // rho mu / lambda when lambda is auto
  double gamma = 1.0;
  double tol = 1e-4;
  std::size_t max_iters = 500;
  bool descent_check = true;

  AutoValue rho_fidelity;  // completion 0.05, deblur 0.002
  double p = 0.8;
  double eta = 0.05;
  std::vector<double> geometry;  // empty = task default
  std::vector<std::string> order{"u", "v_h", "v_v"};
  int levels = 3;

  std::string denoiser = "wavelet";  // identity | median | wavelet | net | noise
  double denoiser_tau = 0.05;
  double denoiser_strength = 0.5;
  std::string denoiser_weights;

  std::vector<std::string> compare_solvers{"fbs", "fista", "admm", "lbs"};

  std::string train_corpus = "synthetic";
  std::size_t train_corpus_count = 16;
  double train_sigma = 0.05;
  std::size_t train_epochs = 16;
  double train_lr = 0.5;
  double train_momentum = 0.9;
  std::size_t train_batch = 8;
  std::size_t train_patches = 512;
  std::size_t train_patch_size = 35;
  std::size_t train_layers = 3;
  std::size_t train_channels = 8;
  std::string train_out = "weights.bin";

  bool timing = false;

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double d = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(d))
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  return d;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t n = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return n;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

struct ConfigField {
  std::string key;
  std::string help;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class T>
ConfigField string_field(std::string key, std::string help, T ExperimentConfig::*m,
                         std::vector<std::string> choices = {}) {
  return {key, std::move(help), [m](const ExperimentConfig& c) { return c.*m; },
          [m, key, choices](ExperimentConfig& c, const std::string& v) {
            if (!choices.empty() && std::find(choices.begin(), choices.end(), v) == choices.end())
              throw ConfigError(key + ": '" + v + "' is not one of " +
                                join(choices, '|', [](const std::string& s) { return s; }));
            c.*m = v;
          }};
}

inline ConfigField double_field(std::string key, std::string help, double ExperimentConfig::*m,
                                std::function<bool(double)> ok = {}, std::string rule = {}) {
  return {key, std::move(help), [m](const ExperimentConfig& c) { return fmt_double(c.*m); },
          [m, key, ok, rule](ExperimentConfig& c, const std::string& v) {
            const double d = parse_double(key, v);
            if (ok && !ok(d)) throw ConfigError(key + ": " + rule + ", got " + v);
            c.*m = d;
          }};
}

template <class T>
ConfigField count_field(std::string key, std::string help, T ExperimentConfig::*m, std::uint64_t min = 1) {
  return {key, std::move(help), [m](const ExperimentConfig& c) { return std::to_string(c.*m); },
          [m, key, min](ExperimentConfig& c, const std::string& v) {
            const std::uint64_t n = parse_u64(key, v);
            if (n < min) throw ConfigError(key + ": must be >= " + std::to_string(min));
            c.*m = static_cast<T>(n);
          }};
}

inline ConfigField auto_field(std::string key, std::string help, AutoValue ExperimentConfig::*m,
                              bool allow_zero = false) {
  return {key, std::move(help),
          [m](const ExperimentConfig& c) {
            return (c.*m).is_auto() ? std::string("auto") : fmt_double(*(c.*m).value);
          },
          [m, key, allow_zero](ExperimentConfig& c, const std::string& v) {
            if (v == "auto") {
              (c.*m).value.reset();
              return;
            }
            const double d = parse_double(key, v);
            if (allow_zero ? d < 0.0 : d <= 0.0)
              throw ConfigError(key + ": must be " + (allow_zero ? ">= 0" : "> 0") + " or auto");
            (c.*m).value = d;
          }};
}

inline ConfigField bool_field(std::string key, std::string help, bool ExperimentConfig::*m) {
  return {key, std::move(help), [m](const ExperimentConfig& c) { return std::string(c.*m ? "true" : "false"); },
          [m, key](ExperimentConfig& c, const std::string& v) { c.*m = parse_bool(key, v); }};
}

inline ConfigField list_field(std::string key, std::string help, std::vector<std::string> ExperimentConfig::*m) {
  return {key, std::move(help),
          [m](const ExperimentConfig& c) { return join(c.*m, ',', [](const std::string& s) { return s; }); },
          [m](ExperimentConfig& c, const std::string& v) { c.*m = split(v, ','); }};
}

inline const std::vector<ConfigField>& config_fields() {
  using C = ExperimentConfig;
  auto positive = [](double d) { return d > 0.0; };
  static const std::vector<ConfigField> fields = {
      string_field("task", "complete | deblur", &C::task, {"complete", "deblur"}),
      string_field("solver", "lbs | fbs | fista | admm | drs | prs", &C::solver,
                   {"lbs", "fbs", "fista", "admm", "drs", "prs"}),
      string_field("input", "input image (PGM/PPM); empty = synthetic scene", &C::input),
      string_field("mask", "mask PGM (0 = missing); empty = random mask", &C::mask),
      string_field("kernel", "kernel file, box:N, gaussian:N:SIGMA or delta", &C::kernel),
      string_field("ground_truth", "clean reference image for metrics", &C::ground_truth),
      string_field("output_dir", "directory for traces, images and the manifest", &C::output_dir),
      {"seed", "root seed for every random stream", [](const C& c) { return std::to_string(c.seed); },
       [](C& c, const std::string& v) { c.seed = parse_u64("seed", v); }},
      count_field("synthetic.size", "side of the synthetic scene", &C::synthetic_size),
      string_field("synthetic.kind", "piecewise_constant | piecewise_smooth", &C::synthetic_kind,
                   {"piecewise_constant", "piecewise_smooth"}),
      double_field("data.missing", "fraction of missing pixels for random masks", &C::missing,
                   [](double d) { return d >= 0.0 && d <= 1.0; }, "must lie in [0, 1]"),
      double_field("degrade.noise_sigma", "Gaussian noise added to synthetic blurred inputs",
                   &C::noise_sigma, [](double d) { return d >= 0.0; }, "must be >= 0"),
      auto_field("solver.c", "ROC constant; auto = 0.99 mu/(2 lambda)", &C::c, true),
      auto_field("solver.lambda", "Bregman penalty weight; auto = rho mu / solver.kappa", &C::lambda),
      auto_field("solver.rho", "step size; auto = 0.99 / L", &C::rho),
      double_field("solver.kappa", "rho mu / lambda used by lambda=auto", &C::kappa, positive, "must be > 0"),
      double_field("solver.gamma", "relaxation in (0, 1]", &C::gamma,
                   [](double d) { return d > 0.0 && d <= 1.0; }, "must lie in (0, 1]"),
      double_field("solver.tol", "relative-change stopping tolerance", &C::tol, positive, "must be > 0"),
      count_field("solver.max_iters", "iteration cap", &C::max_iters),
      bool_field("solver.descent_check", "fail on any increase of the objective", &C::descent_check),
      auto_field("fidelity.rho", "data-term weight 1/(2 rho); auto = 0.05 (complete) or 0.002 (deblur)",
                 &C::rho_fidelity),
      double_field("model.p", "lp exponent in (0, 1]", &C::p, [](double d) { return d > 0.0 && d <= 1.0; },
                   "must lie in (0, 1]"),
      double_field("model.eta", "half-quadratic coupling weight", &C::eta, positive, "must be > 0"),
      {"geometry.weights", "Bregman weights per block; empty = task default",
       [](const C& c) { return join(c.geometry, ',', [](double d) { return fmt_double(d); }); },
       [](C& c, const std::string& v) {
         std::vector<double> w;
         for (const auto& s : split(v, ',')) {
           const double d = parse_double("geometry.weights", s);
           if (!(d > 0.0)) throw ConfigError("geometry.weights: weights must be > 0");
           w.push_back(d);
         }
         c.geometry = std::move(w);
       }},
      list_field("deblur.order", "block sweep order, a permutation of u,v_h,v_v", &C::order),
      {"wavelet.levels", "Haar decomposition depth", [](const C& c) { return std::to_string(c.levels); },
       [](C& c, const std::string& v) {
         const auto n = parse_u64("wavelet.levels", v);
         if (n < 1 || n > 16) throw ConfigError("wavelet.levels: must lie in [1, 16]");
         c.levels = static_cast<int>(n);
       }},
      string_field("denoiser.kind", "identity | median | wavelet | net | noise", &C::denoiser,
                   {"identity", "median", "wavelet", "net", "noise"}),
      double_field("denoiser.tau", "wavelet shrinkage threshold (noise amplitude for kind=noise)",
                   &C::denoiser_tau, [](double d) { return d >= 0.0; }, "must be >= 0"),
      double_field("denoiser.strength", "blend x + s (T(x) - x), s in (0, 1]", &C::denoiser_strength,
                   [](double d) { return d > 0.0 && d <= 1.0; }, "must lie in (0, 1]"),
      string_field("denoiser.weights", "weight file for kind=net; empty = train in-process",
                   &C::denoiser_weights),
      list_field("compare.solvers", "solvers run by compare", &C::compare_solvers),
      string_field("train.corpus", "directory of PGM/PPM images, or synthetic", &C::train_corpus),
      count_field("train.corpus_count", "number of synthetic corpus images", &C::train_corpus_count),
      double_field("train.sigma", "training noise level", &C::train_sigma, positive, "must be > 0"),
      count_field("train.epochs", "training epochs", &C::train_epochs),
      double_field("train.lr", "SGD learning rate", &C::train_lr, positive, "must be > 0"),
      double_field("train.momentum", "heavy-ball coefficient in [0, 1)", &C::train_momentum,
                   [](double d) { return d >= 0.0 && d < 1.0; }, "must lie in [0, 1)"),
      count_field("train.batch", "minibatch size", &C::train_batch),
      count_field("train.patches", "patches per epoch", &C::train_patches),
      count_field("train.patch_size", "patch side", &C::train_patch_size),
      count_field("train.layers", "convolution layers (2-4 recommended)", &C::train_layers),
      count_field("train.channels", "hidden channels", &C::train_channels),
      string_field("train.out", "output weight file", &C::train_out),
      bool_field("output.timing", "write wall-clock time into traces", &C::timing),
  };
  return fields;
}

}  // namespace detail

/// Sets one key; unknown keys and malformed values raise ConfigError.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields())
    if (f.key == key) {
      f.set(cfg, detail::trim(value));
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) {
  for (const auto& f : detail::config_fields())
    if (f.key == key) return f.get(cfg);
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : detail::config_fields()) keys.push_back(f.key);
  return keys;
}

inline std::string config_help(const std::string& key) {
  for (const auto& f : detail::config_fields())
    if (f.key == key) return f.help;
  throw ConfigError("unknown config key '" + key + "'");
}

/// key=value lines; '#' starts a comment; later lines override earlier ones.
inline ExperimentConfig parse_config(std::istream& in, const std::string& origin = "<config>",
                                     ExperimentConfig cfg = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    try {
      set_config_value(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  return parse_config(in, path, std::move(base));
}

/// Every key in schema order; parse_config_string(serialize_config(c)) == c.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : detail::config_fields()) out += f.key + "=" + f.get(cfg) + "\n";
  return out;
}

}  // namespace lbs
