// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mrcae/bss_eval.h"
#include "mrcae/checkpoint.h"
#include "mrcae/config.h"
#include "mrcae/dataset.h"
#include "mrcae/errors.h"
#include "mrcae/pipeline.h"
#include "test_util.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mrcae {
namespace {

using testing::temp_dir;
using testing::tiny_config;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct CliRun {
  int code;
  std::string err;
};

// Runs the CLI with `args`, returning its exit status and stderr.
CliRun cli(const std::string& args, const fs::path& scratch) {
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string(MRCAE_CLI_PATH) + " " + args + " > " +
                          (scratch / "stdout.txt").string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, DefaultsAreTheExperimentalSetup) {
  const RunConfig c;
  EXPECT_EQ(c.data.seg_len, 1025u);
  EXPECT_EQ(c.data.hop_test, 16u);
  EXPECT_EQ(c.hyper.lr, 1e-4);
  EXPECT_EQ(c.hyper.batch_size, 100u);
  EXPECT_EQ(c.hyper.max_epochs, 20u);
  EXPECT_EQ(c.hyper.plateau_patience, 3u);
  EXPECT_EQ(c.hyper.lr_reduce_factor, 10.0);
  EXPECT_EQ(c.model, ModelConfig::full_scale());
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, EmptyJsonGivesDefaults) {
  const auto c = run_config_from_json(json::object());
  EXPECT_EQ(to_json(c), to_json(RunConfig{}));
}

TEST(Config, JsonRoundTrip) {
  RunConfig c;
  c.model = tiny_config();
  c.hyper.lr = 3e-3;
  c.data.seg_len = 32;
  c.data.targets = {"tones"};
  c.precision = Precision::kDouble;
  const auto back = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.model, c.model);
}

TEST(Config, UnknownKeysAreRejectedByName) {
  for (const auto& [text, key] : std::vector<std::pair<std::string, std::string>>{
           {R"({"modle": {}})", "modle"},
           {R"({"hyper": {"learning_rate": 1}})", "learning_rate"},
           {R"({"model": {"encoder": [{"sets": [{"filters": 1, "len": 3}]}]}})", "len"},
           {R"({"data": {"hop": 3}})", "hop"}}) {
    try {
      run_config_from_json(json::parse(text));
      ADD_FAILURE() << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
    }
  }
}

TEST(Config, CrossFieldChecks) {
  RunConfig c;
  c.data.seg_len = 512;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.data.hop_test = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, SeedOverrideReachesEveryConsumer) {
  RunConfig c;
  c.set_seed(99);
  EXPECT_EQ(c.model.seed, 99u);
  EXPECT_EQ(c.hyper.seed, 99u);
  EXPECT_EQ(c.synth.spec.seed, 99u);
}

// ---------------------------------------------------------------------------
// End-to-end through the binary on a tiny setup.

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = temp_dir("cli");
    json j = to_json(small_config());
    j["data"]["manifest"] = (dir_ / "data" / "manifest.json").string();
    j["paths"]["checkpoint_dir"] = (dir_ / "ckpt").string();
    j["paths"]["report_dir"] = (dir_ / "reports").string();
    config_ = dir_ / "config.json";
    std::ofstream(config_) << j.dump(2);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static RunConfig small_config() {
    RunConfig c;
    c.model = tiny_config();
    c.data.seg_len = 32;
    c.data.hop_train = 32;
    c.data.hop_test = 8;
    c.data.targets = {"tones"};
    c.hyper.lr = 1e-2;
    c.hyper.batch_size = 16;
    c.hyper.max_epochs = 2;
    c.eval.filter_taps = 4;
    c.synth.songs = 3;
    c.synth.spec.duration = 0.1;
    c.synth.spec.sample_rate = 16000;
    c.precision = Precision::kDouble;
    return c;
  }

  CliRun run(const std::string& args) const { return cli(args, dir_); }
  std::string with_config(const std::string& cmd) const {
    return cmd + " --config " + config_.string();
  }

  fs::path dir_;
  fs::path config_;
};

TEST_F(CliTest, SynthIsByteDeterministicAndSplits) {
  ASSERT_EQ(run(with_config("synth") + " --out " + (dir_ / "a").string()).code, 0);
  ASSERT_EQ(run(with_config("synth") + " --out " + (dir_ / "b").string()).code, 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir_ / "a")) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(slurp(e.path()), slurp(dir_ / "b" / fs::relative(e.path(), dir_ / "a")))
        << e.path();
    ++files;
  }
  EXPECT_EQ(files, 1u + 3u * 3u);
  const auto m = read_manifest(dir_ / "a" / "manifest.json");
  EXPECT_EQ(m.songs_in(Split::kTrain).size(), 1u);
  EXPECT_EQ(m.songs_in(Split::kValidation).size(), 1u);
  EXPECT_EQ(m.songs_in(Split::kTest).size(), 1u);
}

TEST_F(CliTest, SixSongsSplitFourOneOne) {
  auto c = small_config();
  c.synth.songs = 6;
  const auto m = cmd_synth(c, dir_ / "six");
  EXPECT_EQ(m.songs_in(Split::kTrain).size(), 4u);
  EXPECT_EQ(m.songs_in(Split::kValidation).size(), 1u);
  EXPECT_EQ(m.songs_in(Split::kTest).size(), 1u);
  EXPECT_EQ(m.songs.back().split, Split::kTest);
}

TEST_F(CliTest, TrainSeparateEvaluate) {
  ASSERT_EQ(run(with_config("synth")).code, 0);
  ASSERT_EQ(run(with_config("train")).code, 0);
  const fs::path ckpt = dir_ / "ckpt";
  EXPECT_TRUE(fs::exists(ckpt / "best.ckpt"));
  EXPECT_TRUE(fs::exists(ckpt / "last.ckpt"));
  std::ifstream log(ckpt / "train_log.jsonl");
  std::size_t lines = 0;
  for (std::string l; std::getline(log, l);) ++lines;
  EXPECT_EQ(lines, 2u);

  // Resuming with zero epochs takes no optimizer step.
  const fs::path resumed = dir_ / "resumed";
  ASSERT_EQ(run(with_config("train") + " --max-epochs 0 --checkpoint " +
                (ckpt / "last.ckpt").string() + " --out " + resumed.string())
                .code,
            0);
  EXPECT_TRUE(load_checkpoint<double>(resumed / "last.ckpt") ==
              load_checkpoint<double>(ckpt / "last.ckpt"));

  // Separation of a length that is not a multiple of the hop.
  AudioClip odd(16000, 2, 1001);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0, 0.1);
  for (auto& ch : odd.samples) {
    for (auto& v : ch) v = nd(rng);
  }
  write_wav(odd, dir_ / "odd.wav");
  const std::string sep = with_config("separate") + " --checkpoint " +
                          (ckpt / "best.ckpt").string() + " " + (dir_ / "odd.wav").string();
  ASSERT_EQ(run(sep + " --out " + (dir_ / "s1").string()).code, 0);
  ASSERT_EQ(run(sep + " --out " + (dir_ / "s2").string()).code, 0);
  const auto est = read_wav(dir_ / "s1" / "tones.wav");
  EXPECT_EQ(est.length(), 1001u);
  EXPECT_EQ(est.channels(), 2u);
  EXPECT_NO_THROW(est.validate());
  EXPECT_EQ(slurp(dir_ / "s1" / "tones.wav"), slurp(dir_ / "s2" / "tones.wav"));

  // Mono input against a stereo checkpoint.
  AudioClip mono(16000, 1, 500);
  write_wav(mono, dir_ / "mono.wav");
  EXPECT_EQ(run(with_config("separate") + " --checkpoint " + (ckpt / "best.ckpt").string() +
                " " + (dir_ / "mono.wav").string() + " --out " + (dir_ / "s3").string())
                .code,
            2);

  // Separate the test song, then score it.
  const auto manifest = read_manifest(dir_ / "data" / "manifest.json");
  const auto song = manifest.songs_in(Split::kTest).at(0).name;
  ASSERT_EQ(run(with_config("separate") + " --checkpoint " + (ckpt / "best.ckpt").string() +
                " " + (dir_ / "data" / song / "mixture.wav").string() + " --out " +
                (dir_ / "est" / song).string())
                .code,
            0);
  ASSERT_EQ(run(with_config("evaluate") + " " + (dir_ / "est").string() + " " +
                (dir_ / "data").string())
                .code,
            0);
  const auto report = json::parse(slurp(dir_ / "reports" / "bss_eval.json"));
  EXPECT_TRUE(report["complete"].get<bool>());
  EXPECT_EQ(report["song_count"], 1);
  EXPECT_EQ(report["filter_taps"], 4);
  EXPECT_TRUE(std::isfinite(report["median"][0]["sdr"].get<double>()));
}

// Copies every reference song as its own estimate.
void mirror_references(const fs::path& data, const fs::path& est, std::size_t songs) {
  const auto m = read_manifest(data / "manifest.json");
  for (std::size_t i = 0; i < songs; ++i) {
    const auto& s = m.songs[i].name;
    fs::create_directories(est / s);
    for (const auto& src : m.sources) fs::copy_file(data / s / (src + ".wav"), est / s / (src + ".wav"));
  }
}

TEST_F(CliTest, EvaluatePerfectEstimatesAndMedians) {
  ASSERT_EQ(run(with_config("synth")).code, 0);
  mirror_references(dir_ / "data", dir_ / "est", 3);
  ASSERT_EQ(run(with_config("evaluate") + " " + (dir_ / "est").string() + " " +
                (dir_ / "data").string() + " --out " + (dir_ / "r").string())
                .code,
            0);
  const auto report = json::parse(slurp(dir_ / "r" / "bss_eval.json"));
  EXPECT_TRUE(report["complete"].get<bool>());
  EXPECT_EQ(report["songs"].size(), 3u * 2u);
  for (const auto& row : report["songs"]) {
    for (const char* k : {"sdr", "isr", "sir", "sar"}) EXPECT_EQ(row[k], kMetricCapDb) << k;
  }

  // Medians agree with aggregate_median over the library's per-song values.
  const auto lib = cmd_evaluate(run_config_from_json(json::parse(slurp(config_))),
                                dir_ / "est", dir_ / "data");
  std::vector<EvalResult> per_song;
  for (const auto& s : lib.songs) per_song.push_back(s.result);
  const auto med = aggregate_median(per_song);
  ASSERT_EQ(report["median"].size(), med.sources.size());
  for (std::size_t j = 0; j < med.sources.size(); ++j) {
    EXPECT_EQ(report["median"][j]["sdr"].get<double>(), med.sources[j].sdr);
    EXPECT_EQ(report["median"][j]["sar"].get<double>(), med.sources[j].sar);
  }
}

TEST_F(CliTest, EvaluateCorruptWavGivesPartialReport) {
  ASSERT_EQ(run(with_config("synth")).code, 0);
  mirror_references(dir_ / "data", dir_ / "est", 3);
  const auto m = read_manifest(dir_ / "data" / "manifest.json");
  std::ofstream(dir_ / "est" / m.songs[1].name / "tones.wav", std::ios::trunc) << "RIFFjunk";
  const auto r = run(with_config("evaluate") + " " + (dir_ / "est").string() + " " +
                     (dir_ / "data").string());
  EXPECT_EQ(r.code, 3);
  const auto report = json::parse(slurp(dir_ / "reports" / "bss_eval.json"));
  EXPECT_FALSE(report["complete"].get<bool>());
  EXPECT_EQ(report["song_count"], 2);
  ASSERT_EQ(report["failures"].size(), 1u);
  EXPECT_NE(report["failures"][0].get<std::string>().find(m.songs[1].name), std::string::npos);
}

TEST_F(CliTest, EvaluateMissingPairNamesTheSong) {
  ASSERT_EQ(run(with_config("synth")).code, 0);
  mirror_references(dir_ / "data", dir_ / "est", 1);
  fs::create_directories(dir_ / "est" / "song_absent");
  fs::copy_file(dir_ / "est" / "song000" / "tones.wav", dir_ / "est" / "song_absent" / "tones.wav");
  const auto r = run(with_config("evaluate") + " " + (dir_ / "est").string() + " " +
                     (dir_ / "data").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("song_absent"), std::string::npos) << r.err;
}

TEST_F(CliTest, ExitCodes) {
  std::ofstream(dir_ / "bad.json") << R"({"hyper": {"lr": 1e-3, "momentum": 0.9}})";
  const auto bad = run("train --config " + (dir_ / "bad.json").string());
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("momentum"), std::string::npos);

  std::ofstream(dir_ / "broken.ckpt") << "not a checkpoint";
  AudioClip clip(16000, 2, 100);
  write_wav(clip, dir_ / "x.wav");
  EXPECT_EQ(run(with_config("separate") + " --checkpoint " + (dir_ / "broken.ckpt").string() +
                " " + (dir_ / "x.wav").string())
                .code,
            3);
  // No manifest on disk yet.
  EXPECT_EQ(run(with_config("train")).code, 3);
  EXPECT_EQ(run("gradcheck").code, 0);
  EXPECT_EQ(run("gradcheck --corrupt-backward elu").code, 4);
  EXPECT_EQ(run("gradcheck --corrupt-backward softmax").code, 2);
  EXPECT_GE(run("").code, 100);
  EXPECT_GE(run("train --config " + (dir_ / "absent.json").string()).code, 100);
}

TEST_F(CliTest, GradcheckListsEveryGroup) {
  ASSERT_EQ(run("gradcheck --seed 4").code, 0);
  std::ifstream out(dir_ / "stdout.txt");
  std::size_t ok = 0;
  std::string last;
  for (std::string line; std::getline(out, line); last = line) {
    if (line.find(" ok") != std::string::npos) ++ok;
  }
  EXPECT_EQ(ok, 18u);
  EXPECT_NE(last.find("PASSED"), std::string::npos);
}

// A model whose infer pass is exactly the identity: length-1 filters route
// channel c to map c, batch norm shifts every map by +50 so the ELUs stay
// linear, and the output bias removes the shift.
Model<double> identity_model() {
  ModelConfig c = tiny_config();
  c.encoder = {{LayerKind::kEncoderConv, {{2, 1}}}};
  c.decoder = {{LayerKind::kDecoderTranspose, {{2, 1}}}};
  c.output_filter_len = 1;
  Model<double> m(c);
  auto set_identity = [](FilterSetParams<double>& f) {
    for (std::size_t k = 0; k < 2; ++k) f.weights[k * 2 + k] = 1.0;
  };
  for (auto& layer : m.layers()) {
    auto& block = layer.sets[0];
    set_identity(block.filters);
    for (auto& g : block.norm.gamma) g = std::sqrt(1.0 + block.norm.epsilon);
  }
  for (auto& b : m.layers()[0].sets[0].norm.beta) b = 50.0;
  set_identity(m.output());
  for (auto& b : m.output().bias) b = -50.0;
  return m;
}

TEST_F(CliTest, CopyModelReproducesTheMixture) {
  ASSERT_EQ(run(with_config("synth")).code, 0);
  const Model<double> model = identity_model();
  std::mt19937_64 rng(3);
  const auto x = testing::random_tensor<double>(3, 2, 32, rng);
  EXPECT_LT(testing::max_abs_diff(model.infer(x), x), 1e-12);

  save_checkpoint(model, dir_ / "copy.ckpt");
  const fs::path mix = dir_ / "data" / "song002" / "mixture.wav";
  ASSERT_EQ(run(with_config("separate") + " --checkpoint " + (dir_ / "copy.ckpt").string() +
                " " + mix.string() + " --out " + (dir_ / "copy").string())
                .code,
            0);
  const std::vector<AudioClip> est{read_wav(dir_ / "copy" / "tones.wav")};
  const std::vector<AudioClip> ref{read_wav(mix)};
  EXPECT_GT(evaluate_song(est, ref, 1).sources[0].sdr, 40.0);
}

// ---------------------------------------------------------------------------
// Separation properties through the library.

TEST(Separate, InferBatchDoesNotChangeTheResult) {
  Model<double> model(tiny_config());
  model.init_params(8);
  AudioClip mix(16000, 2, 777);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  for (auto& ch : mix.samples) {
    for (auto& v : ch) v = nd(rng);
  }
  const auto a = separate_clip(model, mix, 8, OverlapMode::kAverage, 1);
  const auto b = separate_clip(model, mix, 8, OverlapMode::kAverage, 7);
  const auto c = separate_clip(model, mix, 8, OverlapMode::kAverage, 256);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Separate, TargetNames) {
  RunConfig c;
  c.model.num_sources = 2;
  EXPECT_EQ(target_names(c, {"a", "b", "c"}), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(target_names(c, {}), (std::vector<std::string>{"source0", "source1"}));
  c.data.targets = {"b", "c"};
  EXPECT_EQ(target_names(c, {"a", "b", "c"}), (std::vector<std::string>{"b", "c"}));
  c.data.targets = {"b"};
  EXPECT_THROW(target_names(c, {"a", "b"}), ConfigError);
}

}  // namespace
}  // namespace mrcae
