#pragma once

#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "bbdm/rng.hpp"
#include "bbdm/schedule.hpp"
#include "bbdm/tensor.hpp"

namespace bbdm {

enum class SamplerVariant {
  kPosterior,      // Gaussian reverse conditional with the predicted z_0 plugged in
  kRemarginalize,  // re-diffuse the predicted z_0 to the next grid point
  kLiteral,        // z <- (1 - m_t) z0_hat + m_t z_T + sqrt(delta_t) eps, eps = 0 at t = 1
};

std::string_view to_string(SamplerVariant variant);
/// Accepts "posterior", "remarginalize", "literal".
SamplerVariant sampler_variant_from_string(std::string_view name);

struct SamplerMode {
  SamplerVariant variant = SamplerVariant::kPosterior;
  int steps = 10;
  friend bool operator==(const SamplerMode&, const SamplerMode&) = default;
};

struct DiffusedState {
  Tensor z;
  int t = 0;
  Tensor z_T;
};

/// One draw of z_t ~ N((1 - m_t) z_0 + m_t z_T, delta_t I). Returns the
/// endpoints bitwise at t = 0 and t = T.
Tensor forward_marginal(const Tensor& z0, const Tensor& zT, int t, const BridgeSchedule& schedule, RngStream& rng);

/// Batched variant: item i along the leading axis is diffused to t[i].
Tensor forward_marginal(const Tensor& z0, const Tensor& zT, std::span<const int> t, const BridgeSchedule& schedule,
                        RngStream& rng);

/// One draw of the Markov kernel z_{t-1} -> z_t given the endpoint; t >= 1.
Tensor forward_transition(const Tensor& z_prev, const Tensor& zT, int t, const BridgeSchedule& schedule,
                          RngStream& rng);

/// Moves `state` from state.t to `target` (< state.t) using the predicted z_0.
DiffusedState reverse_step(const DiffusedState& state, const Tensor& z0_hat, const BridgeSchedule& schedule,
                           SamplerVariant variant, int target, RngStream& rng);

inline DiffusedState reverse_step(const DiffusedState& state, const Tensor& z0_hat, const BridgeSchedule& schedule,
                                  SamplerVariant variant, RngStream& rng) {
  return reverse_step(state, z0_hat, schedule, variant, state.t - 1, rng);
}

/// Strictly decreasing, approximately evenly spaced grid of n timesteps from
/// T down to 1 (a single step gives just [T]).
std::vector<int> ddim_grid(int steps, int n);

/// Anything that maps (z_t, z_T, t) to an estimate of z_0.
class EndpointPredictor {
 public:
  virtual ~EndpointPredictor() = default;
  virtual Tensor predict_z0(const Tensor& z_t, const Tensor& z_T, int t) = 0;
};

using StepObserver = std::function<void(const DiffusedState&)>;

/// Runs the reverse chain from z_T over ddim_grid(T, mode.steps) down to t = 0.
Tensor sample(EndpointPredictor& predictor, const Tensor& zT, const BridgeSchedule& schedule,
              const SamplerMode& mode, RngStream& rng, const StepObserver& observer = {});

}  // namespace bbdm
