#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace bbdm {

/// Coefficients of the Gaussian reverse conditional
///   z_s | z_t, z_0, z_T  ~  N(a z_t + b z_T + c z_0, variance).
struct PosteriorCoefficients {
  double a = 0;  // on the current state z_t
  double b = 0;  // on the pinned endpoint z_T
  double c = 0;  // on the (predicted) start z_0
  double variance = 0;
};

/// The reverse-step triple in its commonly printed form (c_t, c_T, c_eps) with
/// the posterior variance. Kept for traceability only: with a network that
/// predicts z_0, these do not sum to one and are not used for sampling.
struct PrintedCoefficients {
  double c_t = 0;
  double c_T = 0;
  double c_eps = 0;
  double variance = 0;
};

/// Closed-form Brownian bridge quantities for m_t = t/T and
/// delta_t = 2 s (m_t - m_t^2). Immutable once built.
class BridgeSchedule {
 public:
  /// Requires steps >= 1 and scale > 0.
  static BridgeSchedule build(int steps, double scale);

  int steps() const noexcept { return steps_; }
  double scale() const noexcept { return scale_; }

  double m(int t) const { return m_.at(index(t)); }
  double delta(int t) const { return delta_.at(index(t)); }
  /// One-step transition variance delta_{t|t-1}; t >= 1.
  double delta_cond(int t) const;
  /// Posterior variance of z_{t-1} given z_t, z_0, z_T; t in [1, T-1].
  double delta_tilde(int t) const;

  std::span<const double> m_values() const noexcept { return m_; }
  std::span<const double> delta_values() const noexcept { return delta_; }
  /// Index 0 is unused (set to 0).
  std::span<const double> delta_cond_values() const noexcept { return delta_cond_; }

  /// Reverse conditional of z_{t-1}; t in [1, T-1].
  PosteriorCoefficients posterior(int t) const;

  /// Reverse conditional of z_target given z_t for any 0 <= target < t <= T.
  /// At t = T the state equals the endpoint and carries no information, so
  /// the result is the forward marginal at `target`.
  PosteriorCoefficients posterior_between(int t, int target) const;

  PrintedCoefficients printed_coefficients(int t) const;

  /// Zero noise scale is only meaningful in tests of the deterministic limit.
  static BridgeSchedule build_allow_zero_scale(int steps, double scale);

 private:
  BridgeSchedule(int steps, double scale);
  std::size_t index(int t) const;

  int steps_;
  double scale_;
  std::vector<double> m_;
  std::vector<double> delta_;
  std::vector<double> delta_cond_;
  std::vector<PosteriorCoefficients> posterior_;  // index t in [1, T-1]
};

inline BridgeSchedule build_schedule(int steps, double scale) { return BridgeSchedule::build(steps, scale); }

inline PosteriorCoefficients posterior_coefficients(const BridgeSchedule& schedule, int t) {
  return schedule.posterior(t);
}

}  // namespace bbdm
