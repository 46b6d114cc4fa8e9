// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "json.hpp"
#include "sbss/sbss.hpp"

namespace sbss {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliResult {
  int code = -1;
  std::string out, err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sbss_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  CliResult run(const std::string& args) const {
    const std::string out = path("stdout.txt"), err = path("stderr.txt");
    const std::string cmd = std::string(SBSS_CLI_PATH) + " " + args + " >" + out + " 2>" + err;
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  std::string noise_wav(const std::string& name, std::size_t n, std::uint64_t seed,
                        float scale = 0.1f) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g(0.0f, scale);
    std::vector<float> v(n);
    for (auto& x : v) x = g(rng);
    write_wav(path(name), AudioBuffer(std::move(v), 16000));
    return path(name);
  }

  fs::path dir_;
};

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("info").code, 1);
  EXPECT_EQ(run("info --preset d1 --model x.sbss").code, 1);
  EXPECT_EQ(run("extract --preset d1 --input a.wav --enroll b.wav --output c.wav --mode live").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, InfoJson) {
  for (const char* name : {"b1", "d1", "d3"}) {
    SCOPED_TRACE(name);
    const auto r = run(std::string("info --json --preset ") + name);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    const auto c = preset(name);
    EXPECT_EQ(j["name"], name);
    EXPECT_EQ(j["param_count"].get<std::int64_t>(), param_count(c));
    EXPECT_EQ(j["L"].get<int>(), c.window);
    EXPECT_EQ(j["S4D"].get<bool>(), c.has_s4d());
    EXPECT_DOUBLE_EQ(j["latency"]["ms"].get<double>(), latency_of(c).algorithmic_latency_ms);
    EXPECT_EQ(ModelConfig::from_json(j["config"]), c);
  }
}

TEST_F(Cli, InfoUnknownPresetListsValidNames) {
  const auto r = run("info --preset zz");
  EXPECT_EQ(r.code, 1);
  for (const char* name : {"b1", "b2", "c1", "c2", "d1", "d2", "d3"}) {
    EXPECT_NE(r.err.find(name), std::string::npos) << r.err;
  }
}

TEST_F(Cli, Manifest) {
  const auto r = run("info --preset d1 --dump-manifest");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out, tensor_manifest(preset("d1")));
}

TEST_F(Cli, InitWritesLoadableContainer) {
  const auto out = path("d1.sbss");
  const auto r = run("init --preset d1 --seed 4 --json -o " + out);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["param_count"].get<std::int64_t>(), param_count(preset("d1")));
  const auto m = load_model(out);
  EXPECT_EQ(m.config, preset("d1"));
  EXPECT_EQ(m.weights, random_weights(preset("d1"), 4));
  const auto info = run("info --json --model " + out);
  ASSERT_EQ(info.code, 0);
  EXPECT_EQ(json::parse(info.out)["name"], "d1");
}

TEST_F(Cli, ExtractOfflineMatchesStreaming) {
  const auto mix = noise_wav("mix.wav", 16000, 1);
  const auto enroll = noise_wav("enroll.wav", 8000, 2);
  const std::string base = "extract --preset d1 --weights-seed 3 --input " + mix +
                           " --enroll " + enroll;
  const auto a = run(base + " --json --output " + path("off.wav"));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(json::parse(a.out)["samples"].get<std::size_t>(), 16000u);
  ASSERT_EQ(run(base + " --mode streaming --chunk-samples 97 --output " + path("str.wav")).code, 0);
  const auto off = read_wav(path("off.wav"));
  const auto str = read_wav(path("str.wav"));
  ASSERT_EQ(off.size(), str.size());
  EXPECT_LT(relative_l2<float>(str.samples, off.samples), 1e-4);

  ASSERT_EQ(run(base + " --format pcm16 --output " + path("pcm.wav")).code, 0);
  const auto pcm = read_wav(path("pcm.wav"));
  for (std::size_t i = 0; i < pcm.size(); ++i) {
    ASSERT_NEAR(pcm.samples[i], std::clamp(off.samples[i], -1.0f, 1.0f), 1.0 / 32768) << i;
  }
}

TEST_F(Cli, ExtractDataErrors) {
  const auto mix = noise_wav("mix.wav", 4000, 1);
  const auto enroll = noise_wav("enroll.wav", 4000, 2);
  const auto missing = run("extract --preset d1 --input " + mix + " --enroll " +
                           path("nope.wav") + " --output " + path("o.wav"));
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("nope.wav"), std::string::npos) << missing.err;

  std::ofstream(path("bad.sbss"), std::ios::binary) << "SBSS garbage";
  const auto bad = run("extract --model " + path("bad.sbss") + " --input " + mix +
                       " --enroll " + enroll + " --output " + path("o.wav"));
  EXPECT_EQ(bad.code, 2);

  std::vector<float> v(100, 0.1f);
  write_wav(path("48k.wav"), AudioBuffer(v, 48000));
  EXPECT_EQ(run("extract --preset d1 --input " + path("48k.wav") + " --enroll " + enroll +
                " --output " + path("o.wav")).code,
            2);
}

TEST_F(Cli, VerifyPassesAndNegativeControlFails) {
  const auto ok = run("verify --json --seed 5");
  EXPECT_EQ(ok.code, 0) << ok.out;
  const auto j = json::parse(ok.out);
  EXPECT_TRUE(j["passed"].get<bool>());
  EXPECT_FALSE(j["properties"].empty());

  const auto bad = run("verify --inject-unstable");
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

TEST_F(Cli, MetricsCapAndValue) {
  const auto ref = noise_wav("ref.wav", 4000, 1);
  const auto same = run("metrics --json --ref " + ref + " --est " + ref);
  ASSERT_EQ(same.code, 0) << same.err;
  EXPECT_DOUBLE_EQ(json::parse(same.out)["si_sdr_db"].get<double>(), 100.0);

  const auto est = noise_wav("est.wav", 4000, 2);
  const auto r = run("metrics --json --ref " + ref + " --est " + est);
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out);
  EXPECT_DOUBLE_EQ(j["sdr_db"].get<double>(), sdr(read_wav(ref), read_wav(est)));
  EXPECT_DOUBLE_EQ(j["si_sdr_db"].get<double>(), si_sdr(read_wav(ref), read_wav(est)));

  noise_wav("short.wav", 3999, 3);
  EXPECT_EQ(run("metrics --ref " + ref + " --est " + path("short.wav")).code, 2);
}

TEST_F(Cli, SimulateMixIsDeterministic) {
  const auto target = noise_wav("t.wav", 16000, 1);
  const auto interf = noise_wav("i.wav", 20000, 2);
  const auto noise = noise_wav("n.wav", 30000, 3);
  const std::string base = "simulate-mix --json --target " + target + " --interf " + interf +
                           " --noise " + noise + " --sir 2.5 --snr -3 --seed 11";
  const auto a = run(base + " --out-mix " + path("a.wav") + " --out-ref " + path("ra.wav"));
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = run(base + " --out-mix " + path("b.wav"));
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(slurp(path("a.wav")), slurp(path("b.wav")));
  EXPECT_EQ(a.out, b.out);
  const auto j = json::parse(a.out);
  EXPECT_NEAR(j["measured_snr_db"].get<double>(), -3.0, 0.01);
  EXPECT_NEAR(j["measured_sir_db"].get<double>(), 2.5, 0.01);
  EXPECT_EQ(read_wav(path("ra.wav")).size(), 16000u);

  const auto one = run("simulate-mix --json --target " + target + " --noise " + noise +
                       " --snr 0 --seed 1 --out-mix " + path("c.wav"));
  ASSERT_EQ(one.code, 0);
  EXPECT_TRUE(json::parse(one.out)["measured_sir_db"].is_null());
}

TEST_F(Cli, BenchJsonAndErrors) {
  const auto r = run("bench --json --preset d1 --synthetic-clips 2 --clip-seconds 0.5 "
                     "--warmup-seconds 0.1");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["preset"], "d1");
  EXPECT_EQ(j["clips"].get<int>(), 2);
  EXPECT_GT(j["mean_rtf"].get<double>(), 0.0);
  EXPECT_EQ(j["threads"].get<int>(), 1);

  fs::create_directories(path("empty"));
  EXPECT_EQ(run("bench --preset d1 --clips-dir " + path("empty")).code, 2);
  EXPECT_EQ(run("bench --preset d1 --clips-dir " + path("absent")).code, 2);
  EXPECT_EQ(run("bench --preset d1").code, 1);
}

}  // namespace
}  // namespace sbss
