#include "bbdm/adam.hpp"

#include <cmath>
#include <string>

namespace bbdm {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
               const AdamOptions& options) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: params/grads count differs");
  if (state.first_moment.empty()) {
    for (Tensor* p : params) {
      state.first_moment.emplace_back(p->shape());
      state.second_moment.emplace_back(p->shape());
    }
  }
  if (state.first_moment.size() != params.size()) throw std::invalid_argument("adam_step: state size differs");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i]->shape(), grads[i]->shape(), "adam_step");
    require_same_shape(params[i]->shape(), state.first_moment[i].shape(), "adam_step");
    if (!grads[i]->all_finite()) {
      throw NonFiniteGradientError("adam_step: non-finite gradient in parameter " + std::to_string(i));
    }
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    const auto g = grads[i]->values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = options.beta1 * m[j] + (1.0 - options.beta1) * gj;
      const double vj = options.beta2 * v[j] + (1.0 - options.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = options.lr * (mj / bc1) / (std::sqrt(vj / bc2) + options.eps);
      p[j] = static_cast<float>(p[j] - update);
    }
  }
}

Adam::Adam(std::vector<Var> params, AdamOptions options) : params_(std::move(params)), options_(options) {}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  std::vector<Tensor*> values;
  std::vector<Tensor> zero_grads;
  zero_grads.reserve(params_.size());
  std::vector<const Tensor*> grads;
  for (auto& p : params_) {
    values.push_back(&p.mutable_value());
    if (p.grad().empty()) {
      zero_grads.emplace_back(p.shape());
      grads.push_back(&zero_grads.back());
    } else {
      grads.push_back(&p.grad());
    }
  }
  adam_step(values, grads, state_, options_);
}

}  // namespace bbdm
