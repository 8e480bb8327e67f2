#include "bbdm/training.hpp"

#include <cmath>
#include <cstring>

#include <spdlog/spdlog.h>

#include "bbdm/ops.hpp"
#include "bbdm/tensor_io.hpp"

namespace bbdm {

using nlohmann::json;

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
  if (steps < 1) fail("T must be at least 1");
  if (!(scale > 0)) fail("s must be positive");
  if (!(lr > 0)) fail("lr must be positive");
  if (batch_size < 1) fail("batch_size must be positive");
  if (stage1_iters < 1) fail("stage1_iters must be at least 1");
  if (stage2_iters < 0) fail("stage2_iters must be non-negative");
  if (!(paired_fraction > 0 && paired_fraction < 1)) fail("paired_fraction must lie in (0, 1)");
  if (patch < 1 || patch % model.downsample_factor()) {
    fail("patch must be a positive multiple of " + std::to_string(model.downsample_factor()));
  }
  if (sampler.steps < 1 || sampler.steps > steps) fail("sampler steps must lie in [1, T]");
  model.validate();
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"T", c.steps},
           {"s", c.scale},
           {"lr", c.lr},
           {"batch_size", c.batch_size},
           {"stage1_iters", c.stage1_iters},
           {"stage2_iters", c.stage2_iters},
           {"seed", c.seed},
           {"paired_fraction", c.paired_fraction},
           {"cache_pseudo_labels", c.cache_pseudo_labels},
           {"patch", c.patch},
           {"log_every", c.log_every},
           {"checkpoint_every", c.checkpoint_every},
           {"model", c.model},
           {"sampler", std::string(to_string(c.sampler.variant))},
           {"sample_steps", c.sampler.steps}};
}

void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.steps = j.value("T", d.steps);
  c.scale = j.value("s", d.scale);
  c.lr = j.value("lr", d.lr);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.stage1_iters = j.value("stage1_iters", d.stage1_iters);
  c.stage2_iters = j.value("stage2_iters", d.stage2_iters);
  c.seed = j.value("seed", d.seed);
  c.paired_fraction = j.value("paired_fraction", d.paired_fraction);
  c.cache_pseudo_labels = j.value("cache_pseudo_labels", d.cache_pseudo_labels);
  c.patch = j.value("patch", d.patch);
  c.log_every = j.value("log_every", d.log_every);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
  c.sampler.variant = sampler_variant_from_string(j.value("sampler", std::string(to_string(d.sampler.variant))));
  c.sampler.steps = j.value("sample_steps", d.sampler.steps);
}

std::vector<PlanPhase> em_schedule(const TrainConfig& config) {
  std::vector<PlanPhase> plan{{"stage1", config.stage1_iters, "q(y|x) and p(x|y), joint dual bridge on pairs"}};
  if (config.stage2_iters > 0) {
    plan.push_back({"freeze", 0, "q(y|x) fixed as pseudo-label generator"});
    plan.push_back({"stage2", config.stage2_iters, "p(x|y), single bridge on unpaired x with pseudo y"});
  }
  return plan;
}

void to_json(json& j, const PlanPhase& p) {
  j = json{{"kind", p.kind}, {"iterations", p.iterations}, {"estimates", p.estimates}};
}

void from_json(const json& j, PlanPhase& p) {
  p.kind = j.at("kind").get<std::string>();
  p.iterations = j.at("iterations").get<int>();
  p.estimates = j.value("estimates", std::string());
}

StageState make_stage1_state(const TrainConfig& config, RngStream& init_rng) {
  ModelConfig model = config.model;
  model.dual = true;
  StageState state;
  state.stage = 1;
  state.model = std::make_unique<PredictorNet>(model, config.steps, init_rng);
  state.optimizer = std::make_unique<Adam>(state.model->parameters(), AdamOptions{.lr = config.lr});
  return state;
}

StageState make_stage2_state(const TrainConfig& config, std::shared_ptr<const PredictorNet> frozen,
                             RngStream& init_rng) {
  ModelConfig model = config.model;
  model.dual = false;
  StageState state;
  state.stage = 2;
  state.model = std::make_unique<PredictorNet>(model, config.steps, init_rng);
  state.optimizer = std::make_unique<Adam>(state.model->parameters(), AdamOptions{.lr = config.lr});
  state.frozen = std::move(frozen);
  return state;
}

namespace {

std::vector<int> draw_timesteps(std::int64_t n, int steps, RngStream& rng) {
  std::vector<int> t(static_cast<std::size_t>(n));
  for (auto& v : t) v = static_cast<int>(rng.uniform_int(1, steps));
  return t;
}

double finish_step(StageState& state, const Var& loss, std::vector<std::pair<std::string, Tensor>> batch) {
  const double value = loss.value().item();
  if (!std::isfinite(value)) {
    throw NonFiniteLossError("non-finite loss at stage " + std::to_string(state.stage) + " iteration " +
                                 std::to_string(state.iteration),
                             std::move(batch));
  }
  state.optimizer->zero_grad();
  backward(loss);
  state.optimizer->step();
  ++state.iteration;
  state.losses.push_back(value);
  return value;
}

}  // namespace

Var stage1_loss(const PredictorNet& model, const Tensor& x, const Tensor& y, std::span<const int> t_x,
                std::span<const int> t_y, const BridgeSchedule& schedule, RngStream& rng) {
  require_same_shape(x.shape(), y.shape(), "stage1 batch");
  const Tensor z_tx = forward_marginal(x, y, t_x, schedule, rng);
  const Tensor z_ty = forward_marginal(y, x, t_y, schedule, rng);
  auto [x_hat, y_hat] = model.predict_pair(Var::constant(z_tx), Var::constant(z_ty), t_x, t_y);
  // mean over both output groups
  return scale(add(l1_loss(x_hat, Var::constant(x)), l1_loss(y_hat, Var::constant(y))), 0.5f);
}

double stage1_step(StageState& state, const Tensor& x, const Tensor& y, const BridgeSchedule& schedule,
                   RngStream& rng) {
  if (state.stage != 1) throw std::logic_error("stage1_step on a stage-" + std::to_string(state.stage) + " state");
  const auto t_x = draw_timesteps(x.dim(0), schedule.steps(), rng);
  const auto t_y = draw_timesteps(x.dim(0), schedule.steps(), rng);
  const Var loss = stage1_loss(*state.model, x, y, t_x, t_y, schedule, rng);
  return finish_step(state, loss, {{"x", x}, {"y", y}});
}

Var bridge_loss(const PredictorNet& model, const Tensor& x0, const Tensor& xT, std::span<const int> t,
                const BridgeSchedule& schedule, RngStream& rng) {
  const Tensor z_t = forward_marginal(x0, xT, t, schedule, rng);
  const Var x0_hat = model.predict_z0(Var::constant(z_t), Var::constant(xT), t);
  return l1_loss(x0_hat, Var::constant(x0));
}

double bridge_step(StageState& state, const Tensor& x0, const Tensor& xT, const BridgeSchedule& schedule,
                   RngStream& rng) {
  require_same_shape(x0.shape(), xT.shape(), "bridge batch");
  const auto t = draw_timesteps(x0.dim(0), schedule.steps(), rng);
  const Var loss = bridge_loss(*state.model, x0, xT, t, schedule, rng);
  return finish_step(state, loss, {{"x", x0}, {"y", xT}});
}

Tensor make_pseudo_pair(const Tensor& x, const PredictorNet& frozen) {
  NoGradGuard no_grad;
  const std::vector<int> t_x(static_cast<std::size_t>(x.dim(0)), 0);
  const std::vector<int> t_y(static_cast<std::size_t>(x.dim(0)), frozen.steps());
  const Var input = Var::constant(x);
  return frozen.predict_pair(input, input, t_x, t_y).second.value();
}

double stage2_step(StageState& state, const Tensor& x, const BridgeSchedule& schedule, RngStream& rng,
                   const PseudoLabeler& labeler) {
  if (state.stage != 2) throw std::logic_error("stage2_step on a stage-" + std::to_string(state.stage) + " state");
  Tensor y_hat;
  if (labeler) {
    y_hat = labeler(x);
  } else {
    if (!state.frozen) throw std::logic_error("stage-2 state has no frozen stage-1 model");
    y_hat = make_pseudo_pair(x, *state.frozen);
  }
  return bridge_step(state, x, y_hat, schedule, rng);
}

Tensor gather(const Tensor& items, std::span<const std::int64_t> indices) {
  if (indices.empty()) throw std::invalid_argument("gather: no indices");
  Shape shape = items.shape();
  const std::int64_t per_item = items.numel() / shape[0];
  shape[0] = static_cast<std::int64_t>(indices.size());
  Tensor out(shape);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::int64_t i = indices[k];
    if (i < 0 || i >= items.dim(0)) throw std::out_of_range("gather: index " + std::to_string(i));
    std::memcpy(out.data() + static_cast<std::int64_t>(k) * per_item, items.data() + i * per_item,
                sizeof(float) * static_cast<std::size_t>(per_item));
  }
  return out;
}

LossLog::LossLog(const std::filesystem::path& path) : out_(path) {
  if (!out_) throw std::runtime_error("cannot open loss log " + path.string());
  out_ << "iteration,stage,loss,lr,wall_time\n";
}

void LossLog::record(long iteration, int stage, double loss, double lr) {
  if (!out_.is_open()) return;
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  out_ << iteration << ',' << stage << ',' << loss << ',' << lr << ',' << wall << '\n';
}

namespace {

std::vector<std::int64_t> draw_batch(std::int64_t n, int batch, RngStream& rng) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(batch));
  for (auto& i : idx) i = rng.uniform_int(0, n - 1);
  return idx;
}

// Same random aligned patch for every tensor in `views`; identity when the
// patch covers the image.
std::vector<Tensor> crop_batch(const std::vector<Tensor>& views, int patch, RngStream& rng) {
  const std::int64_t h = views[0].dim(2), w = views[0].dim(3);
  if (patch > h || patch > w) throw std::invalid_argument("patch larger than training images");
  if (patch == h && patch == w) return views;
  std::vector<Tensor> out;
  const std::int64_t n = views[0].dim(0), c = views[0].dim(1);
  std::vector<std::pair<std::int64_t, std::int64_t>> origin(static_cast<std::size_t>(n));
  for (auto& o : origin) o = {rng.uniform_int(0, h - patch), rng.uniform_int(0, w - patch)};
  for (const auto& v : views) {
    Tensor crop({n, c, patch, patch});
    for (std::int64_t i = 0; i < n; ++i) {
      const auto [r0, c0] = origin[static_cast<std::size_t>(i)];
      for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t r = 0; r < patch; ++r) {
          const float* src = v.data() + ((i * c + ch) * h + r0 + r) * w + c0;
          std::memcpy(crop.data() + ((i * c + ch) * patch + r) * patch, src, sizeof(float) * patch);
        }
      }
    }
    out.push_back(std::move(crop));
  }
  return out;
}

void dump_batch(const NonFiniteLossError& e, const RunHooks& hooks) {
  if (!hooks.dump_dir) return;
  std::filesystem::create_directories(*hooks.dump_dir);
  for (const auto& [name, tensor] : e.batch()) write_tensor(*hooks.dump_dir / ("nonfinite_" + name + ".bin"), tensor);
  spdlog::error("offending batch written to {}", hooks.dump_dir->string());
}

template <typename Step>
void run_loop(const TrainConfig& config, StageState& state, int iterations, const RunHooks& hooks, Step&& step) {
  for (int it = 0; it < iterations; ++it) {
    double loss = 0;
    try {
      loss = step();
    } catch (const NonFiniteLossError& e) {
      dump_batch(e, hooks);
      throw;
    }
    if (hooks.log) hooks.log->record(state.iteration, state.stage, loss, config.lr);
    if (config.log_every > 0 && state.iteration % config.log_every == 0) {
      spdlog::info("stage {} iter {}/{} loss {:.5f}", state.stage, state.iteration, iterations, loss);
    }
    if (hooks.checkpoint && config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0) {
      hooks.checkpoint(state);
    }
  }
}

}  // namespace

StageState train_stage1(const TrainConfig& config, const Tensor& x, const Tensor& y, const RunHooks& hooks) {
  config.validate();
  require_same_shape(x.shape(), y.shape(), "stage-1 data");
  const BridgeSchedule schedule = BridgeSchedule::build(config.steps, config.scale);
  RngStream init(config.seed, stream_id("stage1.init"));
  RngStream batches(config.seed, stream_id("stage1.batch"));
  RngStream noise(config.seed, stream_id("stage1.noise"));
  StageState state = make_stage1_state(config, init);
  spdlog::info("stage 1: {} pairs, {} parameters", x.dim(0), state.model->parameter_count());
  run_loop(config, state, config.stage1_iters, hooks, [&] {
    const auto idx = draw_batch(x.dim(0), config.batch_size, batches);
    const auto views = crop_batch({gather(x, idx), gather(y, idx)}, config.patch, batches);
    return stage1_step(state, views[0], views[1], schedule, noise);
  });
  return state;
}

StageState train_stage2(const TrainConfig& config, std::shared_ptr<const PredictorNet> frozen, const Tensor& x,
                        const RunHooks& hooks) {
  config.validate();
  if (!frozen || !frozen->config().dual) throw std::invalid_argument("stage 2 needs a frozen dual-bridge model");
  if (frozen->config().latent_channels != config.model.latent_channels || frozen->steps() != config.steps) {
    throw std::invalid_argument("frozen stage-1 model does not match the stage-2 config");
  }
  const BridgeSchedule schedule = BridgeSchedule::build(config.steps, config.scale);
  RngStream init(config.seed, stream_id("stage2.init"));
  RngStream batches(config.seed, stream_id("stage2.batch"));
  RngStream noise(config.seed, stream_id("stage2.noise"));
  StageState state = make_stage2_state(config, std::move(frozen), init);
  spdlog::info("stage 2: {} unpaired items, {} parameters", x.dim(0), state.model->parameter_count());

  // Pseudo labels are a deterministic function of x, so caching only saves time.
  std::optional<Tensor> cached;
  if (config.cache_pseudo_labels) cached = make_pseudo_pair(x, *state.frozen);

  run_loop(config, state, config.stage2_iters, hooks, [&] {
    const auto idx = draw_batch(x.dim(0), config.batch_size, batches);
    if (cached) {
      const auto views = crop_batch({gather(x, idx), gather(*cached, idx)}, config.patch, batches);
      return stage2_step(state, views[0], schedule, noise, [&](const Tensor&) { return views[1]; });
    }
    const auto views = crop_batch({gather(x, idx)}, config.patch, batches);
    return stage2_step(state, views[0], schedule, noise);
  });
  return state;
}

Tensor NetPredictor::predict_z0(const Tensor& z_t, const Tensor& z_T, int t) {
  NoGradGuard no_grad;
  const std::vector<int> ts(static_cast<std::size_t>(z_t.dim(0)), t);
  return net_.predict_z0(Var::constant(z_t), Var::constant(z_T), ts).value();
}

}  // namespace bbdm
