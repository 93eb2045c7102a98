#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lbs/experiment.hpp"
#include "lbs/selftest.hpp"

using namespace lbs;
namespace fs = std::filesystem;

namespace {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("lbs_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args, const TempDir& tmp) {
  const std::string log = tmp / "cli_stdout.txt";
  const std::string cmd = std::string(LBS_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(log);
  return r;
}

ExperimentConfig small_completion(const std::string& out) {
  ExperimentConfig cfg;
  cfg.synthetic_size = 32;
  cfg.max_iters = 40;
  cfg.output_dir = out;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// config files

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig def;
  const std::string text = serialize_config(def);
  EXPECT_EQ(serialize_config(parse_config_string(text)), text);
  for (const auto& key : config_keys()) EXPECT_NE(text.find(key + "="), std::string::npos) << key;
}

TEST(Config, ModifiedValuesRoundTrip) {
  ExperimentConfig cfg;
  set_config_value(cfg, "task", "deblur");
  set_config_value(cfg, "solver.rho", "0.0125");
  set_config_value(cfg, "solver.c", "0");
  set_config_value(cfg, "geometry.weights", "0.02, 0.003");
  set_config_value(cfg, "deblur.order", "v_h,u,v_v");
  set_config_value(cfg, "denoiser.strength", "0.3");
  set_config_value(cfg, "seed", "18446744073709551615");
  set_config_value(cfg, "output.timing", "true");
  const std::string text = serialize_config(cfg);
  const ExperimentConfig back = parse_config_string(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.rho.value, 0.0125);
  EXPECT_EQ(back.c.value, 0.0);
  EXPECT_EQ(back.geometry, (std::vector<double>{0.02, 0.003}));
  EXPECT_EQ(back.order, (std::vector<std::string>{"v_h", "u", "v_v"}));
  EXPECT_EQ(back.seed, 18446744073709551615ull);
  EXPECT_TRUE(back.timing);
  EXPECT_EQ(get_config_value(back, "solver.lambda"), "auto");
}

TEST(Config, DoublesPrintShortAndRoundTrip) {
  EXPECT_EQ(detail::fmt_double(0.4), "0.4");
  EXPECT_EQ(detail::fmt_double(1e-4), "1e-04");
  SeededRng rng(12);
  for (int t = 0; t < 2000; ++t) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-30, 30));
    EXPECT_EQ(std::strtod(detail::fmt_double(v).c_str(), nullptr), v);
  }
}

TEST(Config, CommentsBlankLinesAndOverrides) {
  const ExperimentConfig cfg = parse_config_string(
      "# leading comment\n\n  solver = fista  # trailing\nsolver.max_iters=10\nsolver.max_iters = 25\n");
  EXPECT_EQ(cfg.solver, "fista");
  EXPECT_EQ(cfg.max_iters, 25u);
}

TEST(Config, ErrorsCarryOriginAndLine) {
  auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_config(in, "exp.cfg");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("solver=lbs\n\nbogus.key=1\n").find("exp.cfg:3"), std::string::npos);
  EXPECT_NE(message("bogus.key=1\n").find("bogus.key"), std::string::npos);
  EXPECT_NE(message("solver lbs\n").find("exp.cfg:1"), std::string::npos);
  EXPECT_NE(message("solver.gamma=1.5\n").find("solver.gamma"), std::string::npos);
  EXPECT_NE(message("solver=newton\n").find("exp.cfg:1"), std::string::npos);
  EXPECT_NE(message("solver.tol=abc\n").find("solver.tol"), std::string::npos);
  EXPECT_NE(message("solver.max_iters=-3\n").find("exp.cfg:1"), std::string::npos);
  EXPECT_NE(message("model.p=0\n").find("model.p"), std::string::npos);
  EXPECT_NE(message("geometry.weights=1,-2\n").find("geometry.weights"), std::string::npos);
  EXPECT_NE(message("wavelet.levels=0\n").find("wavelet.levels"), std::string::npos);
  EXPECT_NE(message("output.timing=maybe\n").find("output.timing"), std::string::npos);
}

TEST(Config, UnknownKeyAccessors) {
  ExperimentConfig cfg;
  EXPECT_THROW(set_config_value(cfg, "nope", "1"), ConfigError);
  EXPECT_THROW(get_config_value(cfg, "nope"), ConfigError);
  EXPECT_THROW(config_help("nope"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/exp.cfg"), IoError);
}

TEST(Config, KernelSpecs) {
  EXPECT_EQ(kernel_from_spec("box:3").taps.size(), 9u);
  EXPECT_EQ(kernel_from_spec("delta").taps.size(), 1u);
  EXPECT_NEAR(kernel_from_spec("gaussian:5:1.0").sum(), 1.0, 1e-12);
  EXPECT_THROW(kernel_from_spec("/nonexistent/kernel.txt"), IoError);
}

// ---------------------------------------------------------------------------
// experiment commands through the library

TEST(Experiment, CompletionWritesEveryListedFile) {
  TempDir tmp;
  const RunManifest m = cmd_complete(small_completion(tmp / "run"));
  EXPECT_GE(m.files.size(), 4u);
  for (const auto& f : m.files) EXPECT_TRUE(fs::exists(fs::path(tmp / "run") / f)) << f;
  const auto j = nlohmann::json::parse(slurp(m.path));
  EXPECT_EQ(j["command"], "complete");
  EXPECT_TRUE(j["metrics"].contains("psnr"));
  EXPECT_GT(j["metrics"]["psnr"].get<double>(), j["metrics"]["observed_psnr"].get<double>());
  EXPECT_EQ(j["files"].size(), m.files.size());
  EXPECT_EQ(j["config"], serialize_config(small_completion(tmp / "run")));
}

TEST(Experiment, RepeatedRunsAreByteIdentical) {
  TempDir tmp;
  ExperimentConfig a = small_completion(tmp / "a"), b = small_completion(tmp / "b");
  cmd_complete(a);
  cmd_complete(b);
  for (const char* f : {"trace.csv", "restored.pgm", "observed.pgm"})
    EXPECT_EQ(slurp(tmp / (std::string("a/") + f)), slurp(tmp / (std::string("b/") + f))) << f;
}

TEST(Experiment, TraceHasNoTimingUnlessRequested) {
  TempDir tmp;
  cmd_complete(small_completion(tmp / "run"));
  std::istringstream trace(slurp(tmp / "run/trace.csv"));
  std::string header, row;
  std::getline(trace, header);
  std::getline(trace, row);
  EXPECT_EQ(header.rfind("iter,psi,step_norm2,roc_blocks,branch,ucus_choice,iter_error,rec_error,time_ms", 0), 0u);
  // time_ms is the ninth column
  std::vector<std::string> cols;
  std::stringstream ss(row);
  for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
  ASSERT_GE(cols.size(), 9u);
  EXPECT_EQ(cols[8], "0");
}

TEST(Experiment, DeblurRunsOnSyntheticScene) {
  TempDir tmp;
  ExperimentConfig cfg;
  cfg.task = "deblur";
  cfg.synthetic_size = 32;
  cfg.kernel = "box:5";
  cfg.max_iters = 30;
  cfg.output_dir = tmp / "run";
  const RunManifest m = cmd_deblur(cfg);
  EXPECT_TRUE(m.metrics.contains("psnr"));
  EXPECT_THROW(cmd_complete(cfg), ConfigError);
}

TEST(Experiment, NothingMissingKeepsTheInput) {
  TempDir tmp;
  ExperimentConfig cfg = small_completion(tmp / "run");
  cfg.missing = 0.0;
  cfg.tol = 1e-2;
  const RunManifest m = cmd_complete(cfg);
  EXPECT_EQ(m.metrics["observed_psnr"].get<double>(), kPsnrCap);
  EXPECT_GT(m.metrics["psnr"].get<double>(), 30.0);
}

TEST(Experiment, DeltaKernelWithoutNoiseKeepsTheInput) {
  TempDir tmp;
  ExperimentConfig cfg;
  cfg.task = "deblur";
  cfg.synthetic_size = 32;
  cfg.kernel = "delta";
  cfg.noise_sigma = 0.0;
  cfg.max_iters = 50;
  cfg.output_dir = tmp / "run";
  const RunManifest m = cmd_deblur(cfg);
  EXPECT_EQ(m.metrics["observed_psnr"].get<double>(), kPsnrCap);
  EXPECT_GT(m.metrics["psnr"].get<double>(), 30.0);
  // one step-norm column per block
  std::string header;
  std::ifstream(tmp / "run/trace.csv") >> header;
  EXPECT_NE(header.find("step_norm2_u,step_norm2_v_h,step_norm2_v_v"), std::string::npos);
}

TEST(Experiment, CompareProducesOneRowPerSolver) {
  TempDir tmp;
  ExperimentConfig cfg = small_completion(tmp / "cmp");
  cfg.compare_solvers = {"fbs", "fista", "lbs"};
  const CompareReport rep = cmd_compare(cfg);
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_EQ(rep.rows[2].solver, "lbs");
  const std::string csv = slurp(tmp / "cmp/compare.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  for (const char* f : {"trace_fbs.csv", "trace_fista.csv", "trace_lbs.csv", "restored_lbs.pgm", "manifest.json"})
    EXPECT_TRUE(fs::exists(tmp / (std::string("cmp/") + f))) << f;
  cfg.compare_solvers = {"fbs", "newton"};
  EXPECT_THROW(cmd_compare(cfg), ConfigError);
}

TEST(Experiment, UserSuppliedImagesAndMask) {
  TempDir tmp;
  SeededRng rng(3);
  const DenseVector clean = synthetic_image(rng, 16, 16);
  write_pgm(clean, tmp / "clean.pgm");
  DenseVector keep(Shape{16, 16}, 1.0);
  for (std::size_t i = 0; i < keep.size(); i += 3) keep[i] = 0.0;
  write_pgm(keep, tmp / "mask.pgm");
  ExperimentConfig cfg = small_completion(tmp / "run");
  cfg.input = tmp / "clean.pgm";
  cfg.mask = tmp / "mask.pgm";
  cfg.ground_truth = tmp / "clean.pgm";
  const RunManifest m = cmd_complete(cfg);
  EXPECT_TRUE(m.metrics.contains("ssim"));
  write_pgm(DenseVector(Shape{8, 8}, 1.0), tmp / "small_mask.pgm");
  cfg.mask = tmp / "small_mask.pgm";
  EXPECT_THROW(cmd_complete(cfg), DimensionError);
}

TEST(Experiment, TrainingWritesWeightsAndLoss) {
  TempDir tmp;
  ExperimentConfig cfg;
  cfg.output_dir = tmp / "train";
  cfg.train_out = tmp / "w.bin";
  cfg.train_epochs = 1;
  cfg.train_patches = 16;
  cfg.train_corpus_count = 2;
  cfg.train_patch_size = 16;
  const RunManifest m = cmd_train(cfg);
  const ResidualConvNet net = load_weights(tmp / "w.bin");
  EXPECT_EQ(net.parameter_count(), m.metrics["parameters"].get<std::size_t>());
  const std::string loss = slurp(tmp / "train/loss.csv");
  EXPECT_EQ(loss.rfind("batch,loss\n", 0), 0u);
  EXPECT_EQ(std::count(loss.begin(), loss.end(), '\n'), 3);  // header plus 16 / 8 batches
}

TEST(Selftest, AllChecksPass) {
  const SelftestReport rep = run_selftest();
  EXPECT_TRUE(rep.all_passed()) << rep.text();
  EXPECT_FALSE(rep.items.empty());
}

// ---------------------------------------------------------------------------
// the executable

TEST(Cli, CompleteSucceeds) {
  TempDir tmp;
  const CliResult r = run_cli("complete --synthetic.size 32 --solver.max_iters 20 --output_dir " + (tmp / "o"), tmp);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("manifest:"), std::string::npos);
  EXPECT_TRUE(fs::exists(tmp / "o/manifest.json"));
}

TEST(Cli, ConfigFileThenFlags) {
  TempDir tmp;
  std::ofstream(tmp / "exp.cfg") << "solver=fista\nsolver.max_iters=7\n";
  const CliResult r = run_cli("complete --config " + (tmp / "exp.cfg") + " --solver.max_iters 9 --dump-config", tmp);
  ASSERT_EQ(r.code, 0) << r.out;
  const ExperimentConfig cfg = parse_config_string(r.out);
  EXPECT_EQ(cfg.solver, "fista");
  EXPECT_EQ(cfg.max_iters, 9u);
  EXPECT_EQ(cfg.task, "complete");
}

TEST(Cli, DumpedConfigIsLoadable) {
  TempDir tmp;
  const CliResult r = run_cli("deblur --dump-config", tmp);
  ASSERT_EQ(r.code, 0);
  std::ofstream(tmp / "dumped.cfg") << r.out;
  EXPECT_EQ(serialize_config(load_config(tmp / "dumped.cfg")), r.out);
}

TEST(Cli, ConfigErrorsExitTwo) {
  TempDir tmp;
  EXPECT_EQ(run_cli("complete --solver.gamma 2 --output_dir " + (tmp / "o"), tmp).code, 2);
  EXPECT_EQ(run_cli("complete --no-such-flag 1", tmp).code, 2);
  EXPECT_EQ(run_cli("", tmp).code, 2);
  std::ofstream(tmp / "bad.cfg") << "solver=lbs\nwhat\n";
  const CliResult r = run_cli("complete --config " + (tmp / "bad.cfg"), tmp);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("bad.cfg:2"), std::string::npos) << r.out;
  // rho beyond 1/L violates the step condition
  EXPECT_EQ(run_cli("complete --synthetic.size 16 --solver.rho 1 --output_dir " + (tmp / "o"), tmp).code, 2);
}

TEST(Cli, IoErrorsExitThree) {
  TempDir tmp;
  EXPECT_EQ(run_cli("complete --input /nonexistent/in.pgm --output_dir " + (tmp / "o"), tmp).code, 3);
  EXPECT_EQ(run_cli("deblur --kernel /nonexistent/k.txt --output_dir " + (tmp / "o"), tmp).code, 3);
  EXPECT_EQ(run_cli("complete --config /nonexistent/x.cfg", tmp).code, 3);
  EXPECT_EQ(run_cli("complete --denoiser.kind net --denoiser.weights /nonexistent/w.bin --output_dir " + (tmp / "o"),
                    tmp)
                .code,
            3);
}

TEST(Cli, NumericalFaultExitsFour) {
  TempDir tmp;
  const CliResult r = run_cli("train-denoiser --train.lr 1e6 --train.epochs 2 --train.patches 32 "
                              "--train.corpus_count 2 --train.patch_size 16 --out " + (tmp / "w.bin") +
                                  " --output_dir " + (tmp / "o"),
                              tmp);
  EXPECT_EQ(r.code, 4) << r.out;
}

TEST(Cli, TrainAliases) {
  TempDir tmp;
  const CliResult r = run_cli("train-denoiser --sigma 0.07 --epochs 3 --out " + (tmp / "w.bin") + " --dump-config", tmp);
  ASSERT_EQ(r.code, 0);
  const ExperimentConfig cfg = parse_config_string(r.out);
  EXPECT_EQ(cfg.train_sigma, 0.07);
  EXPECT_EQ(cfg.train_epochs, 3u);
  EXPECT_EQ(cfg.train_out, tmp / "w.bin");
}

TEST(Cli, SelftestExitsZero) {
  TempDir tmp;
  const CliResult r = run_cli("selftest", tmp);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("checks passed"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}
