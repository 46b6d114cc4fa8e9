// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// sbss: command-line front end for extraction, benchmarking and checks.
// Exit codes: 0 success, 1 usage, 2 data error, 3 verification failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sbss/sbss.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerify = 3;

/// Thrown for invalid flag combinations detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

struct ModelSource {
  std::string model_path;
  std::string preset_name;
  std::uint64_t seed = 1;
};

void add_model_flags(CLI::App* cmd, ModelSource& src, bool with_seed = true) {
  auto* m = cmd->add_option("--model", src.model_path, ".sbss weight container");
  auto* p = cmd->add_option("--preset", src.preset_name, "named preset (b1 b2 c1 c2 d1 d2 d3)");
  m->excludes(p);
  if (with_seed) {
    cmd->add_option("--weights-seed", src.seed, "seed for random weights with --preset");
  }
}

/// Returns the config, and the weights when `need_weights`.
sbss::StoredModel resolve(const ModelSource& src, bool need_weights) {
  if (!src.model_path.empty()) return sbss::load_model(src.model_path);
  if (src.preset_name.empty()) throw UsageError("one of --model or --preset is required");
  sbss::StoredModel m;
  m.config = sbss::preset(src.preset_name);
  if (need_weights) m.weights = sbss::random_weights(m.config, src.seed);
  return m;
}

json latency_json(const sbss::LatencyReport& r) {
  json blocks = json::array();
  for (const auto& b : r.per_block) {
    blocks.push_back({{"block", b.block}, {"frames", b.frames}, {"ms", b.ms}});
  }
  return {{"samples", r.algorithmic_latency_samples},
          {"ms", r.algorithmic_latency_ms},
          {"lookahead_ms", r.lookahead_ms},
          {"per_block", blocks}};
}

// ---------------------------------------------------------------------------

struct InfoArgs {
  ModelSource src;
  bool json = false;
  bool manifest = false;
};

int run_info(const InfoArgs& a) {
  const auto m = resolve(a.src, false);
  const auto& c = m.config;
  if (a.manifest) {
    std::cout << sbss::tensor_manifest(c);
    return kExitOk;
  }
  const auto latency = sbss::latency_of(c);
  const auto params = sbss::param_count(c);
  if (a.json) {
    emit({{"name", c.name},
          {"L", c.window},
          {"N", c.n_filters},
          {"X", c.convs_per_repeat},
          {"S4D", c.has_s4d()},
          {"param_count", params},
          {"latency", latency_json(latency)},
          {"config", c.to_json()}});
    return kExitOk;
  }
  std::printf("model      %s\n", c.name.c_str());
  std::printf("L=%d N=%d X=%d S4D=%s B=%d H=%d P=%d R1=%d R2=%d state_pairs=%d\n",
              c.window, c.n_filters, c.convs_per_repeat, c.has_s4d() ? "true" : "false",
              c.bottleneck, c.conv_channels, c.conv_kernel, c.repeats, c.s4d_per_repeat,
              c.state_pairs);
  std::printf("params     %lld (%.2f M)\n", static_cast<long long>(params), params / 1e6);
  std::printf("latency    %.2f ms (%d samples, lookahead %.2f ms)\n",
              latency.algorithmic_latency_ms, latency.algorithmic_latency_samples,
              latency.lookahead_ms);
  for (const auto& b : latency.per_block) {
    std::printf("  %s: %d frames (%.2f ms)\n", b.block.c_str(), b.frames, b.ms);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct InitArgs {
  std::string preset_name;
  std::uint64_t seed = 1;
  std::string output;
  bool json = false;
};

int run_init(const InitArgs& a) {
  const auto c = sbss::preset(a.preset_name);
  const auto w = sbss::random_weights(c, a.seed);
  sbss::save_model(a.output, c, w);
  if (a.json) {
    emit({{"output", a.output}, {"preset", c.name}, {"seed", a.seed},
          {"param_count", sbss::param_count(c)}});
  } else {
    std::printf("wrote %s (%s, %lld params)\n", a.output.c_str(), c.name.c_str(),
                static_cast<long long>(sbss::param_count(c)));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
  ModelSource src;
  std::string input, enroll, output;
  std::string mode = "offline";
  std::size_t chunk = 160;
  std::string format = "float32";
  bool json = false;
};

int run_extract(const ExtractArgs& a) {
  const auto y = sbss::read_wav(a.input);
  const auto c = sbss::read_wav(a.enroll);
  const auto stored = resolve(a.src, true);
  const auto model = sbss::build_model<float>(stored.config, stored.weights);
  sbss::AudioBuffer out;
  if (a.mode == "offline") {
    out = model.forward_offline(y, c);
  } else {
    const auto e = model.embed_speaker(c);
    auto s = sbss::stream_signal<float>(model, e, y.samples, a.chunk);
    out = sbss::AudioBuffer(std::move(s), y.sample_rate);
  }
  sbss::write_wav(a.output, out,
                  a.format == "pcm16" ? sbss::WavFormat::kPcm16 : sbss::WavFormat::kFloat32);
  if (a.json) {
    emit({{"output", a.output}, {"mode", a.mode}, {"samples", out.size()},
          {"seconds", out.duration_seconds()}});
  } else {
    std::printf("wrote %s (%zu samples, %s)\n", a.output.c_str(), out.size(), a.mode.c_str());
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  ModelSource src;
  std::string clips_dir;
  std::size_t synthetic = 0;
  double clip_seconds = 10.0;
  std::uint64_t clip_seed = 7;
  std::string enroll;
  double warmup = 1.0;
  std::size_t chunk = 0;
  bool json = false;
};

int run_bench(const BenchArgs& a) {
  if (const int t = sbss::requested_threads(); t != 1) {
    std::cerr << "warning: SBSS_THREADS=" << t
              << " ignored; the benchmark runs on exactly one thread\n";
  }
  std::vector<sbss::AudioBuffer> clips;
  if (!a.clips_dir.empty()) {
    if (!fs::is_directory(a.clips_dir)) {
      throw sbss::DataError("clips dir '" + a.clips_dir + "' is not a directory");
    }
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(a.clips_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".wav") {
        paths.push_back(entry.path());
      }
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) clips.push_back(sbss::read_wav(p.string()));
    if (clips.empty()) throw sbss::DataError("no .wav clips in '" + a.clips_dir + "'");
  } else if (a.synthetic > 0) {
    clips = sbss::synthetic_clips(a.synthetic, a.clip_seconds, a.clip_seed);
  } else {
    throw UsageError("one of --clips-dir or --synthetic-clips is required");
  }
  const auto enrollment = a.enroll.empty()
                              ? sbss::synthetic_clips(1, 5.0, a.clip_seed + 1).front()
                              : sbss::read_wav(a.enroll);
  const auto stored = resolve(a.src, true);
  const auto model = sbss::build_model<float>(stored.config, stored.weights);
  sbss::RtfOptions opts;
  opts.warmup_seconds = a.warmup;
  opts.chunk_samples = a.chunk;
  const auto r = sbss::measure_rtf(model, clips, enrollment, opts);
  const auto report = sbss::rtf_report(stored.config.name, r,
                                       sbss::latency_of(stored.config), model.param_count());
  if (a.json) {
    emit(report);
  } else {
    std::printf("preset %s: mean RTF %.4f over %zu clips (%.1f s audio, %.1f s wall)\n",
                stored.config.name.c_str(), r.mean_rtf, r.per_clip.size(), r.audio_seconds,
                r.wall_seconds);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  sbss::VerifyOptions opts;
  bool json = false;
};

int run_verify(const VerifyArgs& a) {
  const auto results = sbss::run_verify(a.opts);
  bool all = true;
  json list = json::array();
  for (const auto& r : results) {
    all = all && r.passed;
    list.push_back({{"property", r.name}, {"passed", r.passed}, {"detail", r.detail}});
    if (!a.json) {
      std::printf("%s %s: %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    }
  }
  if (a.json) {
    emit({{"seed", a.opts.seed},
          {"double_precision", a.opts.double_precision},
          {"passed", all},
          {"properties", list}});
  }
  return all ? kExitOk : kExitVerify;
}

// ---------------------------------------------------------------------------

struct MixArgs {
  std::string target, interf, noise, out_mix, out_ref;
  double sir = 0, snr = 0;
  std::uint64_t seed = 0;
  bool json = false;
};

int run_mix(const MixArgs& a) {
  const auto s = sbss::read_wav(a.target);
  const auto n = sbss::read_wav(a.noise);
  const auto i = a.interf.empty() ? sbss::AudioBuffer{} : sbss::read_wav(a.interf);
  const auto r = sbss::simulate_mix(s, i, n, {a.snr, a.sir, a.seed});
  sbss::write_wav(a.out_mix, r.mixture);
  if (!a.out_ref.empty()) sbss::write_wav(a.out_ref, r.target);
  const double snr = sbss::power_ratio_db(r.target.samples, r.noise.samples);
  std::optional<double> sir;
  if (!r.interference.samples.empty()) {
    sir = sbss::power_ratio_db(r.target.samples, r.interference.samples);
  }
  if (a.json) {
    emit({{"samples", r.mixture.size()},
          {"measured_snr_db", snr},
          {"measured_sir_db", sir ? json(*sir) : json(nullptr)},
          {"normalization", r.normalization}});
  } else {
    std::printf("mixture %zu samples, SNR %.4f dB", r.mixture.size(), snr);
    if (sir) std::printf(", SIR %.4f dB", *sir);
    std::printf(", gain %.6f\n", r.normalization);
  }
  return kExitOk;
}

struct MetricsArgs {
  std::string ref, est;
  bool json = false;
};

int run_metrics(const MetricsArgs& a) {
  const auto ref = sbss::read_wav(a.ref);
  const auto est = sbss::read_wav(a.est);
  const double sdr = sbss::sdr(ref, est);
  const double si = sbss::si_sdr(ref, est);
  if (a.json) {
    emit({{"sdr_db", sdr}, {"si_sdr_db", si}, {"samples", ref.size()}});
  } else {
    std::printf("SDR %.4f dB\nSI-SDR %.4f dB\n", sdr, si);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming target-speaker extraction engine (S4D Conv-TasNet)", "sbss"};
  app.require_subcommand(1);

  InfoArgs info;
  auto* info_cmd = app.add_subcommand("info", "Show config, parameter count and latency");
  add_model_flags(info_cmd, info.src, false);
  info_cmd->add_flag("--json", info.json, "JSON output");
  info_cmd->add_flag("--dump-manifest", info.manifest, "list tensor names and shapes");

  InitArgs init;
  auto* init_cmd = app.add_subcommand("init", "Write a randomly initialized model container");
  init_cmd->add_option("--preset", init.preset_name, "preset name")->required();
  init_cmd->add_option("--seed", init.seed, "weight seed");
  init_cmd->add_option("--output,-o", init.output, "output .sbss path")->required();
  init_cmd->add_flag("--json", init.json, "JSON output");

  ExtractArgs ex;
  auto* ex_cmd = app.add_subcommand("extract", "Extract the enrolled speaker from a mixture");
  add_model_flags(ex_cmd, ex.src);
  ex_cmd->add_option("--input", ex.input, "mixture WAV")->required();
  ex_cmd->add_option("--enroll", ex.enroll, "enrollment WAV")->required();
  ex_cmd->add_option("--output", ex.output, "output WAV")->required();
  ex_cmd->add_option("--mode", ex.mode, "offline or streaming")
      ->check(CLI::IsMember({"offline", "streaming"}));
  ex_cmd->add_option("--chunk-samples", ex.chunk, "streaming push size")
      ->check(CLI::PositiveNumber);
  ex_cmd->add_option("--format", ex.format, "output sample format")
      ->check(CLI::IsMember({"float32", "pcm16"}));
  ex_cmd->add_flag("--json", ex.json, "JSON output");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Measure streaming real-time factor");
  add_model_flags(bench_cmd, bench.src);
  auto* dir_opt = bench_cmd->add_option("--clips-dir", bench.clips_dir, "directory of WAV clips");
  auto* syn_opt = bench_cmd->add_option("--synthetic-clips", bench.synthetic,
                                        "number of seeded noise clips");
  dir_opt->excludes(syn_opt);
  bench_cmd->add_option("--clip-seconds", bench.clip_seconds, "synthetic clip duration")
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--clip-seed", bench.clip_seed, "synthetic clip seed");
  bench_cmd->add_option("--enroll", bench.enroll, "enrollment WAV (default: synthetic)");
  bench_cmd->add_option("--warmup-seconds", bench.warmup, "untimed warm-up per clip")
      ->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--chunk-samples", bench.chunk, "push size (default: one hop)");
  bench_cmd->add_flag("--json", bench.json, "JSON output");

  VerifyArgs ver;
  auto* ver_cmd = app.add_subcommand("verify", "Run the property suite on random models");
  ver_cmd->add_option("--seed", ver.opts.seed, "RNG seed");
  ver_cmd->add_flag("--double-precision", ver.opts.double_precision, "run in double");
  ver_cmd->add_flag("--inject-unstable", ver.opts.inject_unstable,
                    "negative control: corrupt one discrete pole");
  ver_cmd->add_flag("--json", ver.json, "JSON output");

  MixArgs mix;
  auto* mix_cmd = app.add_subcommand("simulate-mix", "Mix target, interference and noise");
  mix_cmd->add_option("--target", mix.target, "target WAV")->required();
  mix_cmd->add_option("--interf", mix.interf, "interfering speaker WAV");
  mix_cmd->add_option("--noise", mix.noise, "noise WAV")->required();
  mix_cmd->add_option("--sir", mix.sir, "target-to-interference ratio (dB)");
  mix_cmd->add_option("--snr", mix.snr, "target-to-noise ratio (dB)");
  mix_cmd->add_option("--seed", mix.seed, "crop seed");
  mix_cmd->add_option("--out-mix", mix.out_mix, "mixture WAV")->required();
  mix_cmd->add_option("--out-ref", mix.out_ref, "scaled target WAV");
  mix_cmd->add_flag("--json", mix.json, "JSON output");

  MetricsArgs met;
  auto* met_cmd = app.add_subcommand("metrics", "SDR and SI-SDR of an estimate");
  met_cmd->add_option("--ref", met.ref, "reference WAV")->required();
  met_cmd->add_option("--est", met.est, "estimate WAV")->required();
  met_cmd->add_flag("--json", met.json, "JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*info_cmd) return run_info(info);
    if (*init_cmd) return run_init(init);
    if (*ex_cmd) return run_extract(ex);
    if (*bench_cmd) return run_bench(bench);
    if (*ver_cmd) return run_verify(ver);
    if (*mix_cmd) return run_mix(mix);
    if (*met_cmd) return run_metrics(met);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const sbss::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const sbss::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
