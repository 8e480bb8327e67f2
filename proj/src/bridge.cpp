#include "bbdm/bridge.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bbdm {

namespace {

// out = a*x + b*y + sigma*eps, evaluated in double per element.
Tensor affine_with_noise(const Tensor& x, double a, const Tensor& y, double b, double sigma, RngStream& rng) {
  Tensor out(x.shape());
  const bool noisy = sigma > 0.0;
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    double v = a * x[i] + b * y[i];
    if (noisy) v += sigma * rng.normal();
    out[i] = static_cast<float>(v);
  }
  return out;
}

void check_timestep(int t, const BridgeSchedule& schedule, const char* what) {
  if (t < 0 || t > schedule.steps()) {
    throw std::out_of_range(std::string(what) + ": timestep " + std::to_string(t) + " outside [0, " +
                            std::to_string(schedule.steps()) + "]");
  }
}

}  // namespace

std::string_view to_string(SamplerVariant variant) {
  switch (variant) {
    case SamplerVariant::kPosterior: return "posterior";
    case SamplerVariant::kRemarginalize: return "remarginalize";
    case SamplerVariant::kLiteral: return "literal";
  }
  return "unknown";
}

SamplerVariant sampler_variant_from_string(std::string_view name) {
  for (auto v : {SamplerVariant::kPosterior, SamplerVariant::kRemarginalize, SamplerVariant::kLiteral}) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown sampler '" + std::string(name) +
                              "' (expected posterior, remarginalize or literal)");
}

Tensor forward_marginal(const Tensor& z0, const Tensor& zT, int t, const BridgeSchedule& schedule, RngStream& rng) {
  require_same_shape(z0.shape(), zT.shape(), "forward_marginal");
  check_timestep(t, schedule, "forward_marginal");
  if (t == 0) return z0;
  if (t == schedule.steps()) return zT;
  const double m = schedule.m(t);
  return affine_with_noise(z0, 1.0 - m, zT, m, std::sqrt(schedule.delta(t)), rng);
}

Tensor forward_marginal(const Tensor& z0, const Tensor& zT, std::span<const int> t, const BridgeSchedule& schedule,
                        RngStream& rng) {
  require_same_shape(z0.shape(), zT.shape(), "forward_marginal");
  if (static_cast<std::int64_t>(t.size()) != z0.dim(0)) {
    throw ShapeError("forward_marginal: " + std::to_string(t.size()) + " timesteps for " +
                     std::to_string(z0.dim(0)) + " items");
  }
  const std::int64_t per_item = z0.numel() / z0.dim(0);
  Tensor out(z0.shape());
  for (std::size_t item = 0; item < t.size(); ++item) {
    check_timestep(t[item], schedule, "forward_marginal");
    const double m = schedule.m(t[item]);
    const double sigma = std::sqrt(schedule.delta(t[item]));
    const std::int64_t base = static_cast<std::int64_t>(item) * per_item;
    for (std::int64_t j = base; j < base + per_item; ++j) {
      // noise is drawn for every element so consumption does not depend on t
      const double eps = rng.normal();
      double v = (1.0 - m) * z0[j] + m * zT[j] + sigma * eps;
      if (t[item] == 0) v = z0[j];
      if (t[item] == schedule.steps()) v = zT[j];
      out[j] = static_cast<float>(v);
    }
  }
  return out;
}

Tensor forward_transition(const Tensor& z_prev, const Tensor& zT, int t, const BridgeSchedule& schedule,
                          RngStream& rng) {
  require_same_shape(z_prev.shape(), zT.shape(), "forward_transition");
  if (t < 1) throw std::out_of_range("forward_transition needs t >= 1");
  check_timestep(t, schedule, "forward_transition");
  if (t == schedule.steps()) return zT;
  const double ratio = (1.0 - schedule.m(t)) / (1.0 - schedule.m(t - 1));
  const double offset = schedule.m(t) - ratio * schedule.m(t - 1);
  return affine_with_noise(z_prev, ratio, zT, offset, std::sqrt(schedule.delta_cond(t)), rng);
}

DiffusedState reverse_step(const DiffusedState& state, const Tensor& z0_hat, const BridgeSchedule& schedule,
                           SamplerVariant variant, int target, RngStream& rng) {
  if (state.t < 1) throw std::out_of_range("reverse_step: state is already at t = 0");
  check_timestep(state.t, schedule, "reverse_step");
  if (target < 0 || target >= state.t) throw std::out_of_range("reverse_step: target must lie in [0, t)");
  require_same_shape(state.z.shape(), z0_hat.shape(), "reverse_step");
  require_same_shape(state.z.shape(), state.z_T.shape(), "reverse_step");

  DiffusedState next{Tensor(), target, state.z_T};
  switch (variant) {
    case SamplerVariant::kPosterior: {
      const PosteriorCoefficients k = schedule.posterior_between(state.t, target);
      Tensor out(state.z.shape());
      const double sigma = std::sqrt(k.variance);
      for (std::int64_t i = 0; i < out.numel(); ++i) {
        double v = k.a * state.z[i] + k.b * state.z_T[i] + k.c * z0_hat[i];
        if (sigma > 0.0) v += sigma * rng.normal();
        out[i] = static_cast<float>(v);
      }
      next.z = std::move(out);
      break;
    }
    case SamplerVariant::kRemarginalize:
      next.z = forward_marginal(z0_hat, state.z_T, target, schedule, rng);
      break;
    case SamplerVariant::kLiteral: {
      const double m = schedule.m(state.t);
      const double sigma = state.t > 1 ? std::sqrt(schedule.delta(state.t)) : 0.0;
      next.z = affine_with_noise(z0_hat, 1.0 - m, state.z_T, m, sigma, rng);
      break;
    }
  }
  return next;
}

std::vector<int> ddim_grid(int steps, int n) {
  if (steps < 1) throw std::invalid_argument("ddim_grid: step count must be positive");
  if (n < 1 || n > steps) {
    throw std::invalid_argument("ddim_grid: substep count " + std::to_string(n) + " outside [1, " +
                                std::to_string(steps) + "]");
  }
  if (n == 1) return {steps};
  std::vector<int> grid(static_cast<std::size_t>(n));
  const long long span = steps - 1;
  const long long gaps = n - 1;
  for (long long i = 0; i < n; ++i) {
    // round(i * span / gaps) in integer arithmetic
    grid[static_cast<std::size_t>(i)] = steps - static_cast<int>((2 * i * span + gaps) / (2 * gaps));
  }
  return grid;
}

Tensor sample(EndpointPredictor& predictor, const Tensor& zT, const BridgeSchedule& schedule, const SamplerMode& mode,
              RngStream& rng, const StepObserver& observer) {
  const std::vector<int> grid = ddim_grid(schedule.steps(), mode.steps);
  DiffusedState state{zT, schedule.steps(), zT};
  if (observer) observer(state);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const int target = i + 1 < grid.size() ? grid[i + 1] : 0;
    Tensor z0_hat = predictor.predict_z0(state.z, zT, state.t);
    state = reverse_step(state, z0_hat, schedule, mode.variant, target, rng);
    if (observer) observer(state);
  }
  return state.z;
}

}  // namespace bbdm
