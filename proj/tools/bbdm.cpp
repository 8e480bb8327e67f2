// bbdm: synth | train | sample | eval | schedule
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "bbdm/checkpoint.hpp"
#include "bbdm/config.hpp"
#include "bbdm/data_synth.hpp"
#include "bbdm/pipeline.hpp"
#include "bbdm/schedule.hpp"
#include "bbdm/tensor_io.hpp"
#include "bbdm/training.hpp"

namespace fs = std::filesystem;
using namespace bbdm;

namespace {

enum ExitCode {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kMissingInput = 4,
  kIncompatible = 5,
  kNumeric = 6,
};

class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  fs::path out = "out";
  int stage = 1;
  std::optional<fs::path> checkpoint;
  std::optional<int> steps;
  std::optional<std::string> sampler;
  std::vector<std::string> overrides;
  fs::path input;
  fs::path reference;
  std::string split = "test";
  int schedule_T = 4;
  double schedule_s = 1.0;
};

RunConfig resolve(const Options& o) {
  std::vector<std::string> overrides;
  // Dedicated flags are overrides too and win over --set.
  overrides.insert(overrides.end(), o.overrides.begin(), o.overrides.end());
  if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
  if (o.steps) overrides.push_back("sample_steps=" + std::to_string(*o.steps));
  if (o.sampler) overrides.push_back("sampler=\"" + *o.sampler + "\"");
  return resolve_config(o.config, overrides);
}

void snapshot(const fs::path& out, const RunConfig& config, const std::string& command) {
  fs::create_directories(out);
  nlohmann::json doc = config;
  doc["command"] = command;
  std::ofstream(out / "resolved_config.json") << doc.dump(2) << '\n';
}

void require_exists(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw MissingInput(what + " not found: " + p.string());
}

// Directory of PPM files -> (ids, stacked images), sorted by file name.
std::pair<std::vector<std::string>, Tensor> load_image_dir(const fs::path& dir) {
  require_exists(dir, "image directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".ppm") files.push_back(e.path());
  }
  if (files.empty()) throw MissingInput("no .ppm images in " + dir.string());
  std::sort(files.begin(), files.end());
  std::vector<std::string> ids;
  std::vector<Tensor> images;
  for (const auto& f : files) {
    ids.push_back(f.stem().string());
    images.push_back(read_ppm(f));
  }
  Shape shape = images.front().shape();
  shape.insert(shape.begin(), static_cast<std::int64_t>(images.size()));
  Tensor stack(shape);
  const std::int64_t per = images.front().numel();
  for (std::size_t i = 0; i < images.size(); ++i) {
    require_same_shape(images[i].shape(), images.front().shape(), "input image");
    std::copy(images[i].data(), images[i].data() + per, stack.data() + static_cast<std::int64_t>(i) * per);
  }
  return {ids, stack};
}

int cmd_synth(const Options& o) {
  const RunConfig config = resolve(o);
  snapshot(o.out, config, "synth");
  const Corpus corpus = generate_corpus(config.corpus, config.train.seed);
  RngStream split_rng(config.train.seed, stream_id("synth.split"));
  const Split split = make_split(config.corpus.n, config.test_count, config.train.paired_fraction, split_rng);
  if (config.corpus.size % config.train.model.downsample_factor()) {
    spdlog::warn("image size {} is not divisible by the network downsampling factor {}", config.corpus.size,
                 config.train.model.downsample_factor());
  }
  write_corpus(o.out, corpus, split);
  std::printf("wrote %d items (%zu paired, %zu unpaired, %zu test) to %s\n", config.corpus.n, split.paired.size(),
              split.unpaired.size(), split.test.size(), o.out.string().c_str());
  return kOk;
}

int cmd_train(const Options& o) {
  if (o.stage != 1 && o.stage != 2) throw CLI::ValidationError("--stage", "must be 1 or 2");
  const RunConfig config = resolve(o);
  require_exists(o.input / "manifest.json", "dataset manifest");
  std::shared_ptr<const PredictorNet> frozen;
  if (o.stage == 2) {
    if (!o.checkpoint) throw MissingInput("stage 2 needs --checkpoint pointing at a stage-1 checkpoint");
    require_exists(*o.checkpoint / "manifest.json", "stage-1 checkpoint");
    ModelConfig dual = config.train.model;
    dual.dual = true;
    require_compatible(read_checkpoint_info(*o.checkpoint), dual, config.train.steps, 1);
  }
  snapshot(o.out, config, "train");
  const DatasetManifest data = read_manifest(o.input);
  const auto encoder = make_encoder(config.encoder);
  const fs::path dump = o.out / "nonfinite";
  LossLog log(o.out / "loss.csv");
  RunHooks hooks{&log, dump, {}};
  hooks.checkpoint = [&](const StageState& s) {
    save_checkpoint(o.out / ("checkpoint_" + std::to_string(s.iteration)), *s.model, s.stage, config.train.scale);
  };
  StageState state;
  if (o.stage == 1) {
    const Tensor x = encoder->encode(load_split_images(data, "paired", "clean"));
    const Tensor y = encoder->encode(load_split_images(data, "paired", "hazy"));
    state = train_stage1(config.train, x, y, hooks);
  } else {
    Checkpoint ckpt = load_checkpoint(*o.checkpoint);
    frozen = std::shared_ptr<const PredictorNet>(std::move(ckpt.net));
    const Tensor x = encoder->encode(load_split_images(data, "unpaired", "clean"));
    state = train_stage2(config.train, frozen, x, hooks);
  }
  save_checkpoint(o.out / "checkpoint", *state.model, state.stage, config.train.scale);
  nlohmann::json plan = em_schedule(config.train);
  std::ofstream(o.out / "plan.json") << plan.dump(2) << '\n';
  std::printf("stage %d finished: %ld iterations, final loss %.6f\n", state.stage, state.iteration,
              state.losses.empty() ? 0.0 : state.losses.back());
  return kOk;
}

int cmd_sample(const Options& o) {
  const RunConfig config = resolve(o);
  if (!o.checkpoint) throw MissingInput("sample needs --checkpoint");
  require_exists(*o.checkpoint / "manifest.json", "checkpoint");
  ModelConfig single = config.train.model;
  single.dual = false;
  const CheckpointInfo info = read_checkpoint_info(*o.checkpoint);
  require_compatible(info, single, config.train.steps, 2);
  snapshot(o.out, config, "sample");

  std::vector<std::string> ids;
  Tensor hazy;
  if (fs::exists(o.input / "manifest.json")) {
    const DatasetManifest data = read_manifest(o.input);
    ids = data.ids(o.split);
    hazy = load_split_images(data, o.split, "hazy");
  } else {
    std::tie(ids, hazy) = load_image_dir(o.input);
  }
  const Checkpoint ckpt = load_checkpoint(*o.checkpoint);
  const BridgeSchedule schedule = BridgeSchedule::build(config.train.steps, config.train.scale);
  RngStream rng(config.train.seed, stream_id("sample"));
  const auto encoder = make_encoder(config.encoder);
  const Tensor restored = dehaze(*ckpt.net, hazy, schedule, config.train.sampler, rng, *encoder);
  for (std::size_t i = 0; i < ids.size(); ++i) write_ppm(o.out / (ids[i] + ".ppm"), item_at(restored, static_cast<std::int64_t>(i)));
  std::printf("restored %zu images with the %s sampler at %d steps into %s\n", ids.size(),
              std::string(to_string(config.train.sampler.variant)).c_str(), config.train.sampler.steps,
              o.out.string().c_str());
  return kOk;
}

int cmd_eval(const Options& o) {
  const RunConfig config = resolve(o);
  auto [ids, outputs] = load_image_dir(o.input);
  fs::path ref_dir = o.reference;
  if (fs::exists(ref_dir / "manifest.json")) ref_dir /= "clean";
  std::vector<Tensor> refs;
  for (const auto& id : ids) {
    const fs::path p = ref_dir / (id + ".ppm");
    require_exists(p, "reference image");
    refs.push_back(read_ppm(p));
  }
  Tensor references(outputs.shape());
  const std::int64_t per = refs.front().numel();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    require_same_shape(refs[i].shape(), item_at(outputs, 0).shape(), "reference image");
    std::copy(refs[i].data(), refs[i].data() + per, references.data() + static_cast<std::int64_t>(i) * per);
  }
  snapshot(o.out, config, "eval");
  const MetricReport report = evaluate_images(outputs, references, ids);
  report.write_csv(o.out / "metrics.csv");
  const auto p = report.psnr_summary(), s = report.ssim_summary();
  std::printf("items %zu  psnr %.4f +- %.4f dB  ssim %.4f +- %.4f\n", ids.size(), p.mean, p.stddev, s.mean, s.stddev);
  return kOk;
}

// rounding residue like -1e-17 would print as -0.00000000
double tidy(double v) { return std::abs(v) < 1e-14 ? 0.0 : v; }

int cmd_schedule(const Options& o) {
  const BridgeSchedule sched = BridgeSchedule::build(o.schedule_T, o.schedule_s);
  std::printf("T=%d s=%g\n", sched.steps(), sched.scale());
  std::printf("%5s %12s %12s %12s %12s %12s %12s %12s\n", "t", "m_t", "delta_t", "delta_t|t-1", "a_t", "b_t", "c_t",
              "delta~_t");
  for (int t = 0; t <= sched.steps(); ++t) {
    std::printf("%5d %12.8f %12.8f", t, sched.m(t), sched.delta(t));
    if (t >= 1) {
      std::printf(" %12.8f", sched.delta_cond(t));
    } else {
      std::printf(" %12s", "-");
    }
    if (t >= 1 && t <= sched.steps() - 1) {
      const auto k = sched.posterior(t);
      std::printf(" %12.8f %12.8f %12.8f %12.8f", tidy(k.a), tidy(k.b), tidy(k.c), tidy(k.variance));
    } else {
      std::printf(" %12s %12s %12s %12s", "-", "-", "-", "-");
    }
    std::printf("\n");
  }
  return kOk;
}

void configure_logging() {
  const char* level = std::getenv("BBDM_LOG_LEVEL");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Bidirectional Brownian bridge dehazing toolkit"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Root random seed");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--set", o.overrides, "key=value config override (repeatable)");
  };
  auto* synth = app.add_subcommand("synth", "Generate a synthetic hazy corpus");
  common(synth);
  auto* train = app.add_subcommand("train", "Train stage 1 (paired) or stage 2 (unpaired)");
  common(train);
  train->add_option("--stage", o.stage, "1 or 2")->check(CLI::IsMember({1, 2}));
  train->add_option("--input", o.input, "Dataset directory")->required();
  train->add_option("--checkpoint", o.checkpoint, "Stage-1 checkpoint (stage 2)");
  auto* sample = app.add_subcommand("sample", "Dehaze images with a stage-2 checkpoint");
  common(sample);
  sample->add_option("--checkpoint", o.checkpoint, "Stage-2 checkpoint")->required();
  sample->add_option("--input", o.input, "Dataset directory or directory of .ppm images")->required();
  sample->add_option("--split", o.split, "Dataset split to restore");
  sample->add_option("--steps", o.steps, "Sampling steps");
  sample->add_option("--sampler", o.sampler, "posterior | remarginalize | literal")
      ->check(CLI::IsMember({"posterior", "remarginalize", "literal"}));
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of restored images against references");
  common(eval);
  eval->add_option("--input", o.input, "Directory of restored .ppm images")->required();
  eval->add_option("--reference", o.reference, "Reference images or dataset directory")->required();
  auto* schedule = app.add_subcommand("schedule", "Print bridge schedule quantities");
  schedule->add_option("--T", o.schedule_T, "Number of steps");
  schedule->add_option("--s", o.schedule_s, "Variance scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  try {
    if (*synth) return cmd_synth(o);
    if (*train) return cmd_train(o);
    if (*sample) return cmd_sample(o);
    if (*eval) return cmd_eval(o);
    if (*schedule) return cmd_schedule(o);
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kConfig;
  } catch (const CLI::ValidationError& e) {
    spdlog::error("usage: {}", e.what());
    return kUsage;
  } catch (const MissingInput& e) {
    spdlog::error("missing input: {}", e.what());
    return kMissingInput;
  } catch (const CheckpointError& e) {
    spdlog::error("checkpoint: {}", e.what());
    return kIncompatible;
  } catch (const NonFiniteLossError& e) {
    spdlog::error("numeric failure: {}", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kInternal;
  }
  return kUsage;
}
