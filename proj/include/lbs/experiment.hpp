#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lbs/config.hpp"
#include "lbs/denoiser.hpp"
#include "lbs/image_io.hpp"
#include "lbs/imaging.hpp"
#include "lbs/lbs.hpp"
#include "lbs/splitting.hpp"
#include "lbs/synthetic.hpp"

namespace lbs {

inline constexpr const char* kLibraryVersion = "0.1.0";

/// Record of one CLI run. Every file the run writes appears in `files`.
struct RunManifest {
  std::string command;
  std::string config;  // serialized ExperimentConfig
  std::string version = kLibraryVersion;
  double wall_time_ms = 0.0;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  std::vector<std::string> files;
  std::string path;  // where the manifest itself was written
};

inline nlohmann::ordered_json manifest_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["version"] = m.version;
  j["config"] = m.config;
  j["wall_time_ms"] = m.wall_time_ms;
  j["metrics"] = m.metrics;
  j["files"] = m.files;
  return j;
}

/// Writes to a sibling temporary and renames, so readers never see a partial file.
inline void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    out << text;
    if (!out) throw IoError("failed writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

namespace detail {

/// Output directory that remembers every file written through it.
class OutputDir {
 public:
  explicit OutputDir(std::string dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_)) throw IoError("cannot create output directory " + dir_);
  }

  std::string path(const std::string& name) const { return (std::filesystem::path(dir_) / name).string(); }

  std::string record(const std::string& name) {
    files_.push_back(name);
    return path(name);
  }

  void record_external(const std::string& p) { files_.push_back(p); }

  const std::vector<std::string>& files() const noexcept { return files_; }

 private:
  std::string dir_;
  std::vector<std::string> files_;
};

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

inline std::string channel_suffix(std::size_t k, std::size_t channels) {
  return channels > 1 ? "_c" + std::to_string(k) : std::string();
}

inline std::string image_ext(std::size_t channels) { return channels == 3 ? ".ppm" : ".pgm"; }

}  // namespace detail

/// box:N, gaussian:N:SIGMA, delta, or a kernel file.
inline ConvKernel kernel_from_spec(const std::string& spec) {
  const auto parts = detail::split(spec, ':');
  auto size_arg = [&](std::size_t i) {
    const auto n = detail::parse_u64("kernel", parts.at(i));
    if (n < 1 || n > 75) throw ConfigError("kernel: size must lie in [1, 75]");
    return static_cast<std::size_t>(n);
  };
  if (spec == "delta") return ConvKernel::delta();
  if (!parts.empty() && parts[0] == "box") {
    if (parts.size() != 2) throw ConfigError("kernel: expected box:N");
    return ConvKernel::box(size_arg(1));
  }
  if (!parts.empty() && parts[0] == "gaussian") {
    if (parts.size() != 3) throw ConfigError("kernel: expected gaussian:N:SIGMA");
    const double s = detail::parse_double("kernel", parts[2]);
    if (!(s > 0.0)) throw ConfigError("kernel: sigma must be > 0");
    return ConvKernel::gaussian(size_arg(1), s);
  }
  return load_kernel(spec);
}

inline SceneKind scene_kind(const std::string& name) {
  return name == "piecewise_smooth" ? SceneKind::piecewise_smooth : SceneKind::piecewise_constant;
}

/// Observed data per channel plus the optional clean reference.
struct PreparedInput {
  std::vector<DenseVector> observed;
  std::vector<DenseVector> truth;  // empty when unknown
  std::optional<Mask> mask;        // completion
  std::optional<ConvKernel> kernel;  // deblurring
};

/// Loads or synthesizes the data for cfg.task. Random pieces come from
/// labeled substreams of cfg.seed ("scene", "mask", "noise").
inline PreparedInput prepare_input(const ExperimentConfig& cfg) {
  const SeededRng root(cfg.seed);
  PreparedInput in;
  std::vector<DenseVector> clean;
  bool clean_is_truth = false;
  if (cfg.input.empty()) {
    SeededRng scene = root.substream("scene");
    clean.push_back(synthetic_image(scene, cfg.synthetic_size, cfg.synthetic_size, scene_kind(cfg.synthetic_kind)));
    clean_is_truth = true;
  } else {
    clean = read_pnm(cfg.input).channels;
  }
  if (!cfg.ground_truth.empty()) {
    in.truth = read_pnm(cfg.ground_truth).channels;
    if (in.truth.size() != clean.size() || in.truth[0].shape() != clean[0].shape())
      throw DimensionError("ground truth " + cfg.ground_truth + " does not match the input");
  }
  const std::size_t h = clean[0].height(), w = clean[0].width();

  if (cfg.task == "complete") {
    if (!cfg.mask.empty()) {
      Image m = read_pnm(cfg.mask);
      if (m.height() != h || m.width() != w)
        throw DimensionError("mask " + cfg.mask + " is " + std::to_string(m.height()) + "x" +
                             std::to_string(m.width()) + ", image is " + std::to_string(h) + "x" +
                             std::to_string(w));
      in.mask = Mask(m.channels[0]);
    } else {
      SeededRng mr = root.substream("mask");
      in.mask = random_mask(mr, h, w, cfg.missing);
      clean_is_truth = true;  // the input is the clean image being masked
    }
    for (const auto& c : clean) in.observed.push_back(in.mask->apply(c));
  } else {
    in.kernel = kernel_from_spec(cfg.kernel);
    if (cfg.input.empty()) {
      SeededRng nr = root.substream("noise");
      for (const auto& c : clean)
        in.observed.push_back(convolve(*in.kernel, c) + gaussian_noise(nr, c.shape(), cfg.noise_sigma));
    } else {
      in.observed = clean;  // the input is the degraded image
      clean_is_truth = false;
    }
  }
  if (in.truth.empty() && clean_is_truth) in.truth = clean;
  return in;
}

/// One solvable channel.
struct TaskInstance {
  SplitProblem problem;
  BlockVector x0;
  DenseVector observed;
  std::size_t image_block = 0;
  bool haar_domain = false;
};

inline TaskInstance make_instance(const ExperimentConfig& cfg, const PreparedInput& in, std::size_t channel) {
  const DenseVector& y = in.observed.at(channel);
  if (cfg.task == "complete") {
    CompletionParams p;
    p.rho_fidelity = cfg.rho_fidelity.or_else(p.rho_fidelity);
    p.p = cfg.p;
    p.levels = cfg.levels;
    if (cfg.geometry.size() > 1) throw ConfigError("geometry.weights: completion has a single block");
    if (cfg.geometry.size() == 1) p.mu = cfg.geometry[0];
    CompletionInstance ci = build_completion(y, *in.mask, p);
    return {std::move(ci.problem), std::move(ci.x0), y, 0, true};
  }
  DeblurParams p;
  p.rho_fidelity = cfg.rho_fidelity.or_else(p.rho_fidelity);
  p.eta = cfg.eta;
  p.p = cfg.p;
  p.order = cfg.order;
  if (!cfg.geometry.empty()) {
    if (cfg.geometry.size() != 2) throw ConfigError("geometry.weights: deblurring takes mu_u,mu_v");
    p.mu_u = cfg.geometry[0];
    p.mu_v = cfg.geometry[1];
  }
  DeblurInstance di = build_deblur(y, *in.kernel, p);
  return {std::move(di.problem), std::move(di.x0), y, di.u_index, false};
}

struct ResolvedParams {
  double rho = 0.0;
  double lambda = 0.0;
  double c = 0.0;
};

/// rho = 0.99/L, lambda = rho mu / kappa, c = 0.99 mu / (2 lambda) unless set.
inline ResolvedParams resolve_params(const ExperimentConfig& cfg, const SplitProblem& problem) {
  const double mu = problem.geometry.mu();
  ResolvedParams r;
  r.rho = cfg.rho.or_else(0.99 / problem.lipschitz);
  r.lambda = cfg.lambda.or_else(r.rho * mu / cfg.kappa);
  r.c = cfg.c.or_else(0.99 * mu / (2.0 * r.lambda));
  return r;
}

inline TrainConfig train_config(const ExperimentConfig& cfg) {
  TrainConfig t;
  t.patch_size = cfg.train_patch_size;
  t.noise_sigma = cfg.train_sigma;
  t.learning_rate = cfg.train_lr;
  t.momentum = cfg.train_momentum;
  t.epochs = cfg.train_epochs;
  t.batch_size = cfg.train_batch;
  t.patches_per_epoch = cfg.train_patches;
  t.seed = cfg.seed;
  t.threads = threads_from_env();
  return t;
}

inline std::vector<DenseVector> training_corpus(const ExperimentConfig& cfg) {
  if (cfg.train_corpus == "synthetic")
    return synthetic_corpus(SeededRng(cfg.seed).substream("corpus").next_u64(), cfg.train_corpus_count,
                            std::max<std::size_t>(cfg.train_patch_size, 64), scene_kind(cfg.synthetic_kind));
  return load_corpus_directory(cfg.train_corpus);
}

struct TrainedNet {
  ResidualConvNet net;
  TrainResult result;
};

inline TrainedNet train_from_config(const ExperimentConfig& cfg) {
  TrainedNet t{ResidualConvNet::make(cfg.train_layers, cfg.train_channels, cfg.seed), {}};
  t.result = train(t.net, training_corpus(cfg), train_config(cfg));
  return t;
}

/// T_d for one instance; image filters act on the image the variable encodes.
inline DenoiserOp make_denoiser(const ExperimentConfig& cfg, const TaskInstance& inst,
                                const ResidualConvNet* net = nullptr) {
  ImageFilter filter;
  if (cfg.denoiser == "identity") return identity_operator();
  if (cfg.denoiser == "noise")
    return noise_operator(SeededRng(cfg.seed).substream("adversary").next_u64(), cfg.denoiser_tau);
  if (cfg.denoiser == "median") {
    filter = median3x3;
  } else if (cfg.denoiser == "wavelet") {
    filter = [tau = cfg.denoiser_tau, levels = cfg.levels](const DenseVector& u) {
      return wavelet_shrink(u, tau, levels);
    };
  } else if (cfg.denoiser == "net") {
    if (!net) throw ConfigError("denoiser.kind=net needs a network");
    filter = [n = *net](const DenseVector& u) { return n.apply(u); };
  } else {
    throw ConfigError("unknown denoiser '" + cfg.denoiser + "'");
  }
  DenoiserOp op = inst.haar_domain ? in_haar_domain(cfg.denoiser, filter, cfg.levels)
                                   : on_block(cfg.denoiser, filter, inst.image_block);
  return blend(std::move(op), cfg.denoiser_strength);
}

/// Network for denoiser.kind=net: loaded from denoiser.weights or trained in-process.
inline std::optional<ResidualConvNet> network_for(const ExperimentConfig& cfg) {
  if (cfg.denoiser != "net") return std::nullopt;
  if (!cfg.denoiser_weights.empty()) return load_weights(cfg.denoiser_weights);
  return train_from_config(cfg).net;
}

inline SolveResult run_solver(const std::string& solver, const TaskInstance& inst, const DenoiserOp& td,
                              const ExperimentConfig& cfg, const DenseVector* truth) {
  const ResolvedParams rp = resolve_params(cfg, inst.problem);
  if (solver == "lbs") {
    LbsConfig lc;
    lc.c = rp.c;
    lc.lambda = rp.lambda;
    lc.rho = rp.rho;
    lc.gamma = cfg.gamma;
    lc.tol = cfg.tol;
    lc.max_iters = cfg.max_iters;
    lc.descent_check = cfg.descent_check;
    return lbs_solve(inst.problem, inst.x0, td, lc, truth);
  }
  SolverConfig sc;
  sc.rho = rp.rho;
  sc.gamma = cfg.gamma;
  sc.tol = cfg.tol;
  sc.max_iters = cfg.max_iters;
  if (solver == "fbs") return fbs_solve(inst.problem, inst.x0, sc, truth);
  if (solver == "fista") return fista_solve(inst.problem, inst.x0, sc, truth);
  if (solver == "admm") return admm_solve(inst.problem, inst.x0, sc, truth);
  if (solver == "drs") return drs_solve(inst.problem, inst.x0, sc, truth);
  if (solver == "prs") return prs_solve(inst.problem, inst.x0, sc, truth);
  throw ConfigError("unknown solver '" + solver + "'");
}

/// Result of one solver over all channels.
struct SolverRun {
  std::string solver;
  std::vector<DenseVector> restored;
  std::vector<SolverTrace> traces;
  double wall_ms = 0.0;
  std::size_t iterations = 0;  // maximum over channels
  bool converged = true;
  double final_psi = 0.0;      // sum over channels
  std::size_t fallback = 0;
};

inline SolverRun solve_channels(const std::string& solver, const ExperimentConfig& cfg, const PreparedInput& in,
                                const ResidualConvNet* net) {
  SolverRun run{solver};
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t k = 0; k < in.observed.size(); ++k) {
    const TaskInstance inst = make_instance(cfg, in, k);
    const DenoiserOp td = make_denoiser(cfg, inst, net);
    const DenseVector* truth = in.truth.empty() ? nullptr : &in.truth[k];
    SolveResult r = run_solver(solver, inst, td, cfg, truth);
    run.restored.push_back(inst.problem.image_of(r.solution));
    run.iterations = std::max(run.iterations, r.trace.iterations());
    run.converged = run.converged && r.trace.converged;
    run.final_psi += r.trace.rows.empty() ? r.trace.psi0 : r.trace.rows.back().psi;
    if (solver == "lbs") run.fallback += trace_diagnostics(r.trace).fallback_count;
    run.traces.push_back(std::move(r.trace));
  }
  run.wall_ms = detail::elapsed_ms(start);
  return run;
}

namespace detail {

inline void put_quality(nlohmann::ordered_json& j, const std::string& prefix, const std::vector<DenseVector>& x,
                        const std::vector<DenseVector>& truth) {
  if (truth.empty()) return;
  double p = 0.0, s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    p += psnr(x[k], truth[k]);
    s += ssim(x[k], truth[k]);
  }
  j[prefix + "psnr"] = p / static_cast<double>(x.size());
  j[prefix + "ssim"] = s / static_cast<double>(x.size());
}

inline void save_channels(const std::vector<DenseVector>& ch, const std::string& path) {
  write_pnm(Image{ch}, path);
}

inline void finish_manifest(RunManifest& m, OutputDir& out, std::chrono::steady_clock::time_point start) {
  m.path = out.record("manifest.json");
  m.files = out.files();
  m.wall_time_ms = elapsed_ms(start);
  write_text_atomic(m.path, manifest_json(m).dump(2) + "\n");
}

inline void check_task(const ExperimentConfig& cfg, const std::string& task) {
  if (cfg.task != task) throw ConfigError("task is '" + cfg.task + "' but the command runs '" + task + "'");
}

}  // namespace detail

/// Single-solver restoration run: observed/restored images, trace CSV(s), manifest.
inline RunManifest cmd_restore(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  RunManifest m;
  m.command = cfg.task;
  m.config = serialize_config(cfg);
  const PreparedInput in = prepare_input(cfg);
  const auto net = network_for(cfg);
  detail::OutputDir out(cfg.output_dir);
  const std::size_t nch = in.observed.size();

  detail::save_channels(in.observed, out.record("observed" + detail::image_ext(nch)));
  const SolverRun run = solve_channels(cfg.solver, cfg, in, net ? &*net : nullptr);
  detail::save_channels(run.restored, out.record("restored" + detail::image_ext(nch)));
  for (std::size_t k = 0; k < nch; ++k)
    save_trace_csv(run.traces[k], out.record("trace" + detail::channel_suffix(k, nch) + ".csv"), cfg.timing);

  m.metrics["solver"] = cfg.solver;
  m.metrics["iterations"] = run.iterations;
  m.metrics["converged"] = run.converged;
  m.metrics["final_psi"] = run.final_psi;
  if (cfg.solver == "lbs") m.metrics["fallback_blocks"] = run.fallback;
  detail::put_quality(m.metrics, "", run.restored, in.truth);
  detail::put_quality(m.metrics, "observed_", in.observed, in.truth);
  detail::finish_manifest(m, out, start);
  return m;
}

inline RunManifest cmd_complete(ExperimentConfig cfg) {
  detail::check_task(cfg, "complete");
  return cmd_restore(cfg);
}

inline RunManifest cmd_deblur(ExperimentConfig cfg) {
  detail::check_task(cfg, "deblur");
  return cmd_restore(cfg);
}

struct CompareRow {
  std::string solver;
  std::size_t iterations = 0;
  bool converged = false;
  double final_psi = 0.0;
  double psnr = std::numeric_limits<double>::quiet_NaN();
  double ssim = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
};

struct CompareReport {
  std::vector<CompareRow> rows;
  RunManifest manifest;

  std::string table() const {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-8s %10s %9s %14s %8s %7s %10s\n", "solver", "iterations", "converged",
                  "final_psi", "psnr", "ssim", "time_ms");
    os << buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%-8s %10zu %9s %14.6g %8.2f %7.4f %10.1f\n", r.solver.c_str(), r.iterations,
                    r.converged ? "yes" : "no", r.final_psi, r.psnr, r.ssim, r.wall_ms);
      os << buf;
    }
    return os.str();
  }
};

/// Every solver in compare.solvers on one shared instance and stopping rule.
inline CompareReport cmd_compare(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  if (cfg.compare_solvers.empty()) throw ConfigError("compare.solvers is empty");
  for (const auto& s : cfg.compare_solvers)
    if (s != "lbs" && s != "fbs" && s != "fista" && s != "admm" && s != "drs" && s != "prs")
      throw ConfigError("compare.solvers: unknown solver '" + s + "'");
  CompareReport rep;
  RunManifest& m = rep.manifest;
  m.command = "compare";
  m.config = serialize_config(cfg);
  const PreparedInput in = prepare_input(cfg);
  const auto net = network_for(cfg);
  detail::OutputDir out(cfg.output_dir);
  const std::size_t nch = in.observed.size();
  detail::save_channels(in.observed, out.record("observed" + detail::image_ext(nch)));

  std::string csv = "solver,iterations,converged,final_psi,psnr,ssim,time_ms\n";
  for (const auto& s : cfg.compare_solvers) {
    const SolverRun run = solve_channels(s, cfg, in, net ? &*net : nullptr);
    CompareRow row{s, run.iterations, run.converged, run.final_psi};
    nlohmann::ordered_json q;
    detail::put_quality(q, "", run.restored, in.truth);
    if (q.contains("psnr")) {
      row.psnr = q["psnr"];
      row.ssim = q["ssim"];
    }
    row.wall_ms = run.wall_ms;
    for (std::size_t k = 0; k < nch; ++k)
      save_trace_csv(run.traces[k], out.record("trace_" + s + detail::channel_suffix(k, nch) + ".csv"), cfg.timing);
    detail::save_channels(run.restored, out.record("restored_" + s + detail::image_ext(nch)));
    csv += s + "," + std::to_string(row.iterations) + "," + (row.converged ? "1" : "0") + "," +
           detail::fmt_double(row.final_psi) + "," + detail::fmt_double(row.psnr) + "," +
           detail::fmt_double(row.ssim) + "," + detail::fmt_double(row.wall_ms) + "\n";
    nlohmann::ordered_json jr;
    jr["iterations"] = row.iterations;
    jr["converged"] = row.converged;
    jr["final_psi"] = row.final_psi;
    if (q.contains("psnr")) {
      jr["psnr"] = row.psnr;
      jr["ssim"] = row.ssim;
    }
    jr["wall_ms"] = run.wall_ms;
    if (s == "lbs") jr["fallback_blocks"] = run.fallback;
    m.metrics[s] = jr;
    rep.rows.push_back(row);
  }
  write_text_atomic(out.record("compare.csv"), csv);
  detail::finish_manifest(m, out, start);
  return rep;
}

/// Trains the residual network; weights go to train.out, the loss curve to the output directory.
inline RunManifest cmd_train(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  RunManifest m;
  m.command = "train-denoiser";
  m.config = serialize_config(cfg);
  detail::OutputDir out(cfg.output_dir);
  const TrainedNet t = train_from_config(cfg);
  save_weights(t.net, cfg.train_out);
  out.record_external(cfg.train_out);
  std::string csv = "batch,loss\n";
  for (std::size_t i = 0; i < t.result.loss_curve.size(); ++i)
    csv += std::to_string(i + 1) + "," + detail::fmt_double(t.result.loss_curve[i]) + "\n";
  write_text_atomic(out.record("loss.csv"), csv);
  m.metrics["parameters"] = t.net.parameter_count();
  m.metrics["initial_loss"] = t.result.loss_curve.front();
  m.metrics["final_epoch_loss"] = t.result.epoch_loss.back();
  m.metrics["noise_variance"] = cfg.train_sigma * cfg.train_sigma;
  detail::finish_manifest(m, out, start);
  return m;
}

}  // namespace lbs
