#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "bbdm/autograd.hpp"

namespace bbdm {

struct AdamOptions {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  long step = 0;
};

class NonFiniteGradientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One bias-corrected adaptive-moment update. All gradients are checked
/// before anything is written, so a non-finite gradient leaves params and
/// state untouched.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
               const AdamOptions& options);

/// Adam over graph parameters; parameters without a gradient are treated as
/// having a zero gradient.
class Adam {
 public:
  Adam(std::vector<Var> params, AdamOptions options);

  void zero_grad();
  void step();

  const AdamState& state() const noexcept { return state_; }
  const AdamOptions& options() const noexcept { return options_; }
  void set_learning_rate(double lr) { options_.lr = lr; }

 private:
  std::vector<Var> params_;
  AdamOptions options_;
  AdamState state_;
};

}  // namespace bbdm
