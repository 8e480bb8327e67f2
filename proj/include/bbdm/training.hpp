#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bbdm/adam.hpp"
#include "bbdm/bridge.hpp"
#include "bbdm/predictor_net.hpp"
#include "bbdm/schedule.hpp"
#include "json.hpp"

namespace bbdm {

struct TrainConfig {
  int steps = 50;  // T
  double scale = 1.0;
  double lr = 5e-5;
  int batch_size = 8;
  int stage1_iters = 5000;
  int stage2_iters = 5000;
  std::uint64_t seed = 0;
  double paired_fraction = 0.5;  // share of the training items used as pairs
  bool cache_pseudo_labels = false;
  int patch = 32;
  int log_every = 100;
  int checkpoint_every = 0;  // 0: only the final checkpoint
  ModelConfig model;
  SamplerMode sampler;  // used by sample/eval

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// One phase of the two-stage plan.
struct PlanPhase {
  std::string kind;       // "stage1", "freeze" or "stage2"
  int iterations = 0;
  std::string estimates;  // conditional(s) whose surrogate loss the phase minimizes

  friend bool operator==(const PlanPhase&, const PlanPhase&) = default;
};

/// Stage 1 fits both conditionals q(y|x) and p(x|y) at once through the dual
/// bridge; freezing it then supplies q(y|x) as a pseudo-label generator for
/// the single-bridge p(x|y) fit of stage 2. Without stage-2 iterations the
/// plan is plain supervised dual-bridge training.
std::vector<PlanPhase> em_schedule(const TrainConfig& config);
void to_json(nlohmann::json& j, const PlanPhase& p);
void from_json(const nlohmann::json& j, PlanPhase& p);

class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, std::vector<std::pair<std::string, Tensor>> batch)
      : std::runtime_error(what), batch_(std::move(batch)) {}
  const std::vector<std::pair<std::string, Tensor>>& batch() const noexcept { return batch_; }

 private:
  std::vector<std::pair<std::string, Tensor>> batch_;
};

struct StageState {
  int stage = 1;
  std::unique_ptr<PredictorNet> model;
  std::unique_ptr<Adam> optimizer;
  long iteration = 0;
  std::shared_ptr<const PredictorNet> frozen;  // stage 2 only
  std::vector<double> losses;
};

/// Fresh dual-bridge model and optimizer.
StageState make_stage1_state(const TrainConfig& config, RngStream& init_rng);
/// Fresh single-bridge model (never initialized from `frozen`).
StageState make_stage2_state(const TrainConfig& config, std::shared_ptr<const PredictorNet> frozen,
                             RngStream& init_rng);

/// Dual-bridge L1 for explicit timesteps: x -> y diffused to t_x, y -> x to t_y.
Var stage1_loss(const PredictorNet& model, const Tensor& x, const Tensor& y, std::span<const int> t_x,
                std::span<const int> t_y, const BridgeSchedule& schedule, RngStream& rng);

/// Draws t_x, t_y ~ U{1..T} per item, then one optimizer step. Returns the loss.
double stage1_step(StageState& state, const Tensor& x, const Tensor& y, const BridgeSchedule& schedule,
                   RngStream& rng);

/// Single-bridge L1 of the z_0 prediction on the x0 -> xT bridge at t.
Var bridge_loss(const PredictorNet& model, const Tensor& x0, const Tensor& xT, std::span<const int> t,
                const BridgeSchedule& schedule, RngStream& rng);

/// Supervised single-bridge step on known pairs (x0 clean, xT degraded).
double bridge_step(StageState& state, const Tensor& x0, const Tensor& xT, const BridgeSchedule& schedule,
                   RngStream& rng);

/// One-shot pseudo endpoint from the frozen dual model: its y-output at
/// (t_x = 0, t_y = T) with both inputs equal to x. No graph is recorded.
Tensor make_pseudo_pair(const Tensor& x, const PredictorNet& frozen);

using PseudoLabeler = std::function<Tensor(const Tensor& x)>;

/// Pseudo-labels x (via `labeler`, or the frozen model when empty) and takes
/// a supervised bridge step on (x, y_hat). The labeler must not draw from rng.
double stage2_step(StageState& state, const Tensor& x, const BridgeSchedule& schedule, RngStream& rng,
                   const PseudoLabeler& labeler = {});

/// Rows of `items` (leading axis) at `indices`, stacked.
Tensor gather(const Tensor& items, std::span<const std::int64_t> indices);

/// CSV: iteration,stage,loss,lr,wall_time
class LossLog {
 public:
  LossLog() = default;
  explicit LossLog(const std::filesystem::path& path);
  void record(long iteration, int stage, double loss, double lr);

 private:
  std::ofstream out_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct RunHooks {
  LossLog* log = nullptr;
  std::optional<std::filesystem::path> dump_dir;  // receives the batch when a loss goes non-finite
  std::function<void(const StageState&)> checkpoint;  // every config.checkpoint_every iterations
};

/// Stage-1 loop over paired latents [N, C, H, W].
StageState train_stage1(const TrainConfig& config, const Tensor& x, const Tensor& y, const RunHooks& hooks = {});

/// Stage-2 loop over unpaired clean latents with a frozen stage-1 model.
StageState train_stage2(const TrainConfig& config, std::shared_ptr<const PredictorNet> frozen, const Tensor& x,
                        const RunHooks& hooks = {});

/// Single-bridge network as a sampler predictor; runs without a graph.
class NetPredictor final : public EndpointPredictor {
 public:
  explicit NetPredictor(const PredictorNet& net) : net_(net) {}
  Tensor predict_z0(const Tensor& z_t, const Tensor& z_T, int t) override;

 private:
  const PredictorNet& net_;
};

}  // namespace bbdm
