// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// mrcae: synthesize data, train, separate, evaluate and gradient-check the
// multi-resolution convolutional auto-encoder.
//
// Exit codes: 0 success, 2 configuration, 3 data/format, 4 numeric
// failure (including a failed gradcheck). Usage errors exit with the
// parser's own codes (>= 100).

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mrcae/config.h"
#include "mrcae/errors.h"
#include "mrcae/pipeline.h"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_epochs;
  std::optional<std::string> precision;
  std::optional<std::string> checkpoint;
  std::optional<std::string> out;
  std::string mixture;
  std::string estimates;
  std::string references;
  std::optional<std::string> corrupt;
};

mrcae::RunConfig resolve(const Options& o) {
  mrcae::RunConfig cfg = o.config.empty() ? mrcae::RunConfig{} : mrcae::load_run_config(o.config);
  if (o.seed) cfg.set_seed(*o.seed);
  if (o.max_epochs) cfg.hyper.max_epochs = *o.max_epochs;
  if (o.precision) {
    cfg.precision = *o.precision == "double" ? mrcae::Precision::kDouble
                                             : mrcae::Precision::kSingle;
  }
  cfg.validate();
  return cfg;
}

int run_synth(const Options& o) {
  const auto cfg = resolve(o);
  const fs::path out = o.out ? fs::path(*o.out) : cfg.data.manifest.parent_path();
  const auto manifest = mrcae::cmd_synth(cfg, out);
  std::cout << "wrote " << manifest.songs.size() << " songs to " << out.string() << "\n";
  return 0;
}

int run_train(const Options& o) {
  auto cfg = resolve(o);
  if (o.out) cfg.paths.checkpoint_dir = *o.out;
  std::optional<fs::path> resume;
  if (o.checkpoint) resume = *o.checkpoint;
  const auto summary = mrcae::cmd_train(cfg, resume);
  for (const auto& e : summary.history.epochs) {
    std::printf("epoch %zu  train %.6f  val %.6f  lr %.2e  %.1fs\n", e.epoch, e.train_loss,
                e.val_loss, e.lr, e.wall_time);
  }
  std::cout << "best " << summary.best_checkpoint.string() << "\n"
            << "last " << summary.last_checkpoint.string() << "\n";
  return 0;
}

int run_separate(const Options& o) {
  const auto cfg = resolve(o);
  if (!o.checkpoint) throw mrcae::ConfigError("separate needs --checkpoint");
  const fs::path out = o.out ? fs::path(*o.out) : fs::path("separated");
  for (const auto& p : mrcae::cmd_separate(cfg, *o.checkpoint, o.mixture, out)) {
    std::cout << p.string() << "\n";
  }
  return 0;
}

int run_evaluate(const Options& o) {
  const auto cfg = resolve(o);
  const fs::path dir = o.out ? fs::path(*o.out) : cfg.paths.report_dir;
  const auto report = mrcae::cmd_evaluate(cfg, o.estimates, o.references);
  const fs::path path = dir / "bss_eval.json";
  mrcae::write_report(report, path);
  if (report.median) {
    for (std::size_t j = 0; j < report.sources.size(); ++j) {
      const auto& m = report.median->sources[j];
      std::printf("%-12s SDR %7.2f  ISR %7.2f  SIR %7.2f  SAR %7.2f  (median, %zu songs)\n",
                  report.sources[j].c_str(), m.sdr, m.isr, m.sir, m.sar,
                  report.median->song_count);
    }
  }
  std::cout << "report " << path.string() << "\n";
  for (const auto& f : report.failures) std::cerr << "failed: " << f << "\n";
  return report.complete ? 0 : 3;
}

int run_gradcheck(const Options& o) {
  std::optional<mrcae::OpKind> corrupt;
  if (o.corrupt) {
    static const std::map<std::string, mrcae::OpKind> kinds = {
        {"conv1d", mrcae::OpKind::kConv1d},   {"conv_transpose1d", mrcae::OpKind::kConvTranspose1d},
        {"batchnorm", mrcae::OpKind::kBatchNorm}, {"elu", mrcae::OpKind::kElu},
        {"concat", mrcae::OpKind::kConcat},   {"l1_loss", mrcae::OpKind::kL1Loss}};
    const auto it = kinds.find(*o.corrupt);
    if (it == kinds.end()) throw mrcae::ConfigError("unknown op kind '" + *o.corrupt + "'");
    corrupt = it->second;
  }
  std::uint64_t seed = o.seed.value_or(0);
  if (!o.seed && !o.config.empty()) seed = mrcae::load_run_config(o.config).model.seed;
  const auto report = mrcae::cmd_gradcheck(seed, corrupt);
  for (const auto& g : report.groups) {
    std::printf("%-28s %4zu  max rel err %.3e  %s\n", g.name.c_str(), g.size, g.max_rel_error,
                g.max_rel_error < report.threshold ? "ok" : "FAIL");
  }
  const bool ok = report.passed();
  std::printf("gradcheck %s (threshold %.0e)\n", ok ? "PASSED" : "FAILED", report.threshold);
  return ok ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mrcae: multi-resolution convolutional auto-encoder for source separation"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "override every seed");
  };

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset and manifest");
  common(synth);
  synth->add_option("--out", o.out, "dataset directory");

  auto* train = app.add_subcommand("train", "train on the manifest's train/validation songs");
  common(train);
  train->add_option("--max-epochs", o.max_epochs, "override hyper.max_epochs");
  train->add_option("--precision", o.precision)->check(CLI::IsMember({"single", "double"}));
  train->add_option("--checkpoint", o.checkpoint, "resume from this checkpoint");
  train->add_option("--out", o.out, "checkpoint directory");

  auto* separate = app.add_subcommand("separate", "separate one mixture WAV");
  common(separate);
  separate->add_option("--precision", o.precision)->check(CLI::IsMember({"single", "double"}));
  separate->add_option("--checkpoint", o.checkpoint, "trained checkpoint")->required();
  separate->add_option("--out", o.out, "output directory");
  separate->add_option("mixture", o.mixture, "mixture WAV")->required();

  auto* evaluate = app.add_subcommand("evaluate", "BSS-Eval estimates against references");
  common(evaluate);
  evaluate->add_option("--out", o.out, "report directory");
  evaluate->add_option("estimates", o.estimates, "estimates directory")->required();
  evaluate->add_option("references", o.references, "references directory")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  common(gradcheck);
  gradcheck->add_option("--corrupt-backward", o.corrupt,
                        "scale one op's backward (conv1d, conv_transpose1d, batchnorm, elu, "
                        "concat, l1_loss)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return run_synth(o);
    if (train->parsed()) return run_train(o);
    if (separate->parsed()) return run_separate(o);
    if (evaluate->parsed()) return run_evaluate(o);
    if (gradcheck->parsed()) return run_gradcheck(o);
  } catch (const mrcae::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mrcae::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const mrcae::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
