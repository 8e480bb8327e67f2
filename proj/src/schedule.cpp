#include "bbdm/schedule.hpp"

#include <string>

namespace bbdm {

namespace {

void check_steps(int steps) {
  if (steps < 1) throw std::invalid_argument("bridge schedule needs at least one step, got " + std::to_string(steps));
}

}  // namespace

BridgeSchedule BridgeSchedule::build(int steps, double scale) {
  check_steps(steps);
  if (!(scale > 0)) throw std::invalid_argument("bridge variance scale must be positive, got " + std::to_string(scale));
  return BridgeSchedule(steps, scale);
}

BridgeSchedule BridgeSchedule::build_allow_zero_scale(int steps, double scale) {
  check_steps(steps);
  if (!(scale >= 0)) throw std::invalid_argument("bridge variance scale must be non-negative");
  return BridgeSchedule(steps, scale);
}

BridgeSchedule::BridgeSchedule(int steps, double scale)
    : steps_(steps),
      scale_(scale),
      m_(static_cast<std::size_t>(steps) + 1),
      delta_(m_.size()),
      delta_cond_(m_.size()),
      posterior_(m_.size()) {
  const double big_t = steps;
  for (int t = 0; t <= steps; ++t) {
    m_[t] = t / big_t;
    // 2s(m - m^2) written over the integer t(T - t) so that delta_t == delta_{T-t} bitwise.
    delta_[t] = 2.0 * scale * (static_cast<double>(t) * (steps - t)) / (big_t * big_t);
  }
  for (int t = 1; t <= steps; ++t) {
    // delta_t - delta_{t-1} ((1 - m_t)/(1 - m_{t-1}))^2 simplified to 2s(T - t) / (T (T - t + 1)).
    delta_cond_[t] = 2.0 * scale * (steps - t) / (big_t * (steps - t + 1));
  }
  for (int t = 1; t < steps; ++t) posterior_[t] = posterior_between(t, t - 1);
}

std::size_t BridgeSchedule::index(int t) const {
  if (t < 0 || t > steps_) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps_) + "]");
  }
  return static_cast<std::size_t>(t);
}

double BridgeSchedule::delta_cond(int t) const {
  if (t < 1) throw std::out_of_range("delta_cond needs t >= 1");
  return delta_cond_[index(t)];
}

double BridgeSchedule::delta_tilde(int t) const { return posterior(t).variance; }

PosteriorCoefficients BridgeSchedule::posterior(int t) const {
  if (t < 1 || t > steps_ - 1) {
    throw std::out_of_range("posterior coefficients defined for t in [1, " + std::to_string(steps_ - 1) +
                            "], got " + std::to_string(t));
  }
  return posterior_[static_cast<std::size_t>(t)];
}

PosteriorCoefficients BridgeSchedule::posterior_between(int t, int target) const {
  index(t);
  index(target);
  if (target >= t) throw std::out_of_range("posterior target must precede the current timestep");
  const double ms = m(target);
  const double ds = delta(target);
  const double dt = delta(t);
  if (t == steps_ || dt == 0.0) {
    return {0.0, ms, 1.0 - ms, ds};
  }
  const double mt = m(t);
  const double ratio = (1.0 - mt) / (1.0 - ms);
  const double offset = mt - ratio * ms;
  // Variance of z_t given z_target: 2s(1 - m_t)(m_t - m_target)/(1 - m_target).
  const double d_ts = 2.0 * scale_ * static_cast<double>(steps_ - t) * (t - target) /
                      (static_cast<double>(steps_) * (steps_ - target));
  PosteriorCoefficients out;
  out.a = ratio * ds / dt;
  out.c = (1.0 - ms) * d_ts / dt;
  out.b = ms * d_ts / dt - ratio * offset * ds / dt;
  out.variance = ds * d_ts / dt;
  return out;
}

PrintedCoefficients BridgeSchedule::printed_coefficients(int t) const {
  if (t < 1 || t > steps_ - 1) throw std::out_of_range("printed coefficients defined for t in [1, T-1]");
  const double mt = m(t), mp = m(t - 1);
  const double dt = delta(t), dp = delta(t - 1), dc = delta_cond(t);
  const double ratio = (1.0 - mt) / (1.0 - mp);
  PrintedCoefficients out;
  out.c_t = dp / dt * ratio + (1.0 - mp) * dc / dt;
  out.c_T = mp - mt * ratio * dp / dt;
  out.c_eps = (1.0 - mp) * dc / dt;
  out.variance = dc * dp / dt;
  return out;
}

}  // namespace bbdm
