// Command-line front end for the lbs library.
//
//   lbs complete       --input img.pgm --data.missing 0.4 --output_dir out
//   lbs deblur         --kernel box:9 --solver lbs
//   lbs compare        --task complete --compare.solvers fbs,fista,lbs
//   lbs train-denoiser --sigma 0.05 --epochs 16 --out weights.bin
//   lbs selftest
//
// Every config key is also a flag (--solver.rho 0.01). A --config file is
// applied first, flags override it. Exit codes: 0 ok, 2 config, 3 I/O,
// 4 numerical fault (1 for a failing selftest).

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "lbs/experiment.hpp"
#include "lbs/selftest.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;

struct SubcommandOptions {
  std::string config_file;
  bool dump_config = false;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

void add_config_flags(CLI::App* app, SubcommandOptions& o) {
  app->add_option("--config", o.config_file, "key=value config file applied before flags");
  app->add_flag("--dump-config", o.dump_config, "print the resolved config and exit");
  for (const auto& key : lbs::config_keys())
    o.options[key] = app->add_option("--" + key, o.values[key], lbs::config_help(key));
}

lbs::ExperimentConfig resolve(const SubcommandOptions& o, lbs::ExperimentConfig base) {
  lbs::ExperimentConfig cfg = o.config_file.empty() ? base : lbs::load_config(o.config_file, base);
  for (const auto& [key, opt] : o.options)
    if (opt->count() > 0) lbs::set_config_value(cfg, key, o.values.at(key));
  return cfg;
}

void print_manifest(const lbs::RunManifest& m) {
  std::cout << m.metrics.dump(2) << "\nmanifest: " << m.path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learnable Bregman splitting: restoration solvers, baselines and a trainable denoiser"};
  app.require_subcommand(1);

  SubcommandOptions complete_o, deblur_o, compare_o, train_o;
  auto* complete = app.add_subcommand("complete", "image completion from a masked image");
  add_config_flags(complete, complete_o);
  auto* deblur = app.add_subcommand("deblur", "non-blind deblurring with an lp gradient prior");
  add_config_flags(deblur, deblur_o);
  auto* compare = app.add_subcommand("compare", "run several solvers on one instance");
  add_config_flags(compare, compare_o);

  auto* train = app.add_subcommand("train-denoiser", "train the residual denoiser on noisy patches");
  add_config_flags(train, train_o);
  std::string sigma, epochs, out;
  auto* sigma_opt = train->add_option("--sigma", sigma, "alias of --train.sigma");
  auto* epochs_opt = train->add_option("--epochs", epochs, "alias of --train.epochs");
  auto* out_opt = train->add_option("--out", out, "alias of --train.out");

  auto* selftest = app.add_subcommand("selftest", "run the built-in invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  auto dump = [](const lbs::ExperimentConfig& cfg) {
    std::cout << lbs::serialize_config(cfg);
    return 0;
  };

  try {
    if (selftest->parsed()) {
      const lbs::SelftestReport rep = lbs::run_selftest();
      std::cout << rep.text();
      return rep.all_passed() ? 0 : 1;
    }
    if (complete->parsed() || deblur->parsed()) {
      const bool is_complete = complete->parsed();
      lbs::ExperimentConfig base;
      base.task = is_complete ? "complete" : "deblur";
      const auto cfg = resolve(is_complete ? complete_o : deblur_o, base);
      if ((is_complete ? complete_o : deblur_o).dump_config) return dump(cfg);
      print_manifest(is_complete ? lbs::cmd_complete(cfg) : lbs::cmd_deblur(cfg));
      return 0;
    }
    if (compare->parsed()) {
      const auto cfg = resolve(compare_o, {});
      if (compare_o.dump_config) return dump(cfg);
      const lbs::CompareReport rep = lbs::cmd_compare(cfg);
      std::cout << rep.table() << "manifest: " << rep.manifest.path << "\n";
      return 0;
    }
    if (train->parsed()) {
      auto cfg = resolve(train_o, {});
      if (sigma_opt->count()) lbs::set_config_value(cfg, "train.sigma", sigma);
      if (epochs_opt->count()) lbs::set_config_value(cfg, "train.epochs", epochs);
      if (out_opt->count()) lbs::set_config_value(cfg, "train.out", out);
      if (train_o.dump_config) return dump(cfg);
      print_manifest(lbs::cmd_train(cfg));
      return 0;
    }
  } catch (const lbs::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const lbs::NumericalFault& e) {
    std::cerr << "numerical fault: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const lbs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const lbs::DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const lbs::DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
