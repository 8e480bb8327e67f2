#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bbdm/autograd.hpp"
#include "bbdm/difference_kernels.hpp"
#include "bbdm/ops.hpp"
#include "bbdm/predictor_net.hpp"
#include "bbdm/rng.hpp"

namespace bbdm::testing {

using VarFn = std::function<Var64(const std::vector<Var64>&)>;

inline double dot(const Tensor64& a, const Tensor64& b) {
  double s = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

/// Worst relative error, over all inputs, between the reverse-mode gradient
/// of <f(inputs), R> (R a fixed Gaussian projection) and central differences
/// with step h. Relative error is ||g - g_fd|| / max(||g||, ||g_fd||).
inline double gradcheck(const VarFn& f, const std::vector<Tensor64>& inputs, RngStream& rng, double h = 1e-4) {
  std::vector<Var64> vars;
  for (const auto& t : inputs) vars.push_back(Var64::parameter(t));
  const Var64 out = f(vars);
  const Tensor64 proj = gaussian<double>(out.shape(), rng);
  backward(sum(mul(out, Var64::constant(proj))));

  auto project = [&](const std::vector<Tensor64>& values) {
    NoGradGuard guard;
    std::vector<Var64> vs;
    for (const auto& t : values) vs.push_back(Var64::constant(t));
    return dot(f(vs).value(), proj);
  };

  double worst = 0;
  std::vector<Tensor64> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor64 analytic = vars[i].grad().empty() ? Tensor64(inputs[i].shape()) : vars[i].grad();
    double diff = 0, na = 0, nf = 0;
    for (std::int64_t j = 0; j < inputs[i].numel(); ++j) {
      const double keep = probe[i][j];
      probe[i][j] = keep + h;
      const double up = project(probe);
      probe[i][j] = keep - h;
      const double down = project(probe);
      probe[i][j] = keep;
      const double fd = (up - down) / (2 * h);
      diff += (analytic[j] - fd) * (analytic[j] - fd);
      na += analytic[j] * analytic[j];
      nf += fd * fd;
    }
    const double scale = std::sqrt(std::max(na, nf));
    if (scale > 1e-12) worst = std::max(worst, std::sqrt(diff) / scale);
  }
  return worst;
}

/// Worst gradcheck error per op over `trials` random draws, including the
/// difference convolutions and their kernel transforms.
inline std::vector<std::pair<std::string, double>> op_gradcheck(RngStream& rng, int trials) {
  auto rnd = [&](Shape s) { return gaussian<double>(s, rng); };
  struct Case {
    const char* name;
    std::function<std::vector<Tensor64>()> inputs;
    VarFn f;
  };
  const std::vector<Case> cases = {
      {"add", [&] { return std::vector{rnd({4, 4}), rnd({4, 4})}; }, [](auto& v) { return add(v[0], v[1]); }},
      {"sub", [&] { return std::vector{rnd({4, 4}), rnd({4, 4})}; }, [](auto& v) { return sub(v[0], v[1]); }},
      {"mul", [&] { return std::vector{rnd({4, 4}), rnd({4, 4})}; }, [](auto& v) { return mul(v[0], v[1]); }},
      {"scale", [&] { return std::vector{rnd({4, 4})}; }, [](auto& v) { return scale(v[0], -1.7); }},
      {"sum", [&] { return std::vector{rnd({4, 4})}; }, [](auto& v) { return sum(v[0]); }},
      {"mean", [&] { return std::vector{rnd({4, 4})}; }, [](auto& v) { return mean(v[0]); }},
      {"l1_loss", [&] { return std::vector{rnd({4, 4}), rnd({4, 4})}; }, [](auto& v) { return l1_loss(v[0], v[1]); }},
      {"matmul", [&] { return std::vector{rnd({4, 3}), rnd({3, 4})}; }, [](auto& v) { return matmul(v[0], v[1]); }},
      {"linear", [&] { return std::vector{rnd({4, 5}), rnd({3, 5}), rnd({3})}; },
       [](auto& v) { return linear(v[0], v[1], v[2]); }},
      {"conv2d pad1", [&] { return std::vector{rnd({2, 3, 4, 4}), rnd({2, 3, 3, 3}), rnd({2})}; },
       [](auto& v) { return conv2d(v[0], v[1], v[2], 1); }},
      {"conv2d pad0", [&] { return std::vector{rnd({1, 2, 4, 4}), rnd({3, 2, 3, 3})}; },
       [](auto& v) { return conv2d(v[0], v[1], Var64(), 0); }},
      {"conv2d 1x1", [&] { return std::vector{rnd({1, 3, 4, 4}), rnd({2, 3, 1, 1}), rnd({2})}; },
       [](auto& v) { return conv2d(v[0], v[1], v[2], 0); }},
      {"group_norm", [&] { return std::vector{rnd({2, 4, 4, 4}), rnd({4}), rnd({4})}; },
       [](auto& v) { return group_norm(v[0], 2, v[1], v[2]); }},
      {"silu", [&] { return std::vector{rnd({4, 4})}; }, [](auto& v) { return silu(v[0]); }},
      {"upsample", [&] { return std::vector{rnd({1, 2, 4, 4})}; }, [](auto& v) { return upsample_nearest2x(v[0]); }},
      {"downsample", [&] { return std::vector{rnd({1, 2, 4, 4})}; },
       [](auto& v) { return downsample_nearest2x(v[0]); }},
      {"concat", [&] { return std::vector{rnd({2, 1, 4, 4}), rnd({2, 3, 4, 4})}; },
       [](auto& v) { return concat_channels(v[0], v[1]); }},
      {"slice", [&] { return std::vector{rnd({2, 4, 4, 4})}; }, [](auto& v) { return slice_channels(v[0], 1, 3); }},
      {"channel bias", [&] { return std::vector{rnd({2, 3, 4, 4}), rnd({2, 3})}; },
       [](auto& v) { return add_channel_bias(v[0], v[1]); }},
  };
  std::vector<std::pair<std::string, double>> out;
  for (const auto& c : cases) {
    double worst = 0;
    for (int trial = 0; trial < trials; ++trial) worst = std::max(worst, gradcheck(c.f, c.inputs(), rng));
    out.emplace_back(c.name, worst);
  }
  for (auto kind : kAllDifferenceKinds) {
    double worst_conv = 0, worst_transform = 0;
    for (int trial = 0; trial < trials; ++trial) {
      worst_conv = std::max(worst_conv, gradcheck([kind](auto& v) { return difference_conv2d(v[0], v[1], v[2], kind, 1); },
                                                  {rnd({2, 2, 4, 4}), rnd({3, 2, 3, 3}), rnd({3})}, rng));
      worst_transform = std::max(worst_transform, gradcheck([kind](auto& v) { return kernel_transform(v[0], kind); },
                                                            {rnd({2, 2, 3, 3})}, rng));
    }
    out.emplace_back("difference_conv2d " + std::string(to_string(kind)), worst_conv);
    out.emplace_back("kernel_transform " + std::string(to_string(kind)), worst_transform);
  }
  return out;
}

/// Relative error between the backprop directional derivative of a random
/// projection of the network output (over all parameters) and a central
/// difference along the same direction. Double precision, 8x8 inputs.
inline double network_gradcheck(const BasicPredictorNet<double>& net, RdcMode mode, RngStream& rng) {
  const int steps = net.steps();
  const bool dual = net.config().dual;
  const auto params = net.parameters();
  const auto zt = Var64::constant(gaussian<double>({1, 3, 8, 8}, rng));
  const auto zT = Var64::constant(gaussian<double>({1, 3, 8, 8}, rng));
  const std::vector<int> t{static_cast<int>(rng.uniform_int(0, steps))};
  const Tensor64 proj = gaussian<double>({1, 3, 8, 8}, rng);
  auto objective = [&](RdcMode m) {
    Var64 out = dual ? net.predict_pair(zt, zT, t, t, m).first : net.predict_z0(zt, zT, t, m);
    return sum(mul(out, Var64::constant(proj)));
  };
  for (const auto& p : params) p.zero_grad();
  backward(objective(mode));
  // unit-norm direction, so h is the actual step length in parameter space
  std::vector<Tensor64> dir;
  double norm2 = 0;
  for (const auto& p : params) {
    dir.push_back(gaussian<double>(p.shape(), rng));
    norm2 += dot(dir.back(), dir.back());
  }
  double analytic = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (auto& v : dir[i].values()) v /= std::sqrt(norm2);
    if (!params[i].grad().empty()) analytic += dot(params[i].grad(), dir[i]);
  }
  auto shifted = [&](double h) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto v = params[i];
      for (std::int64_t j = 0; j < v.value().numel(); ++j) v.mutable_value()[j] += h * dir[i][j];
    }
  };
  const double h = 1e-5;
  NoGradGuard guard;
  shifted(h);
  const double up = objective(RdcMode::kMerged).value().item();
  shifted(-2 * h);
  const double down = objective(RdcMode::kMerged).value().item();
  shifted(h);
  const double fd = (up - down) / (2 * h);
  for (const auto& p : params) p.zero_grad();
  return std::abs(analytic - fd) / std::max(std::abs(fd), 1e-8);
}

/// Sample mean and variance with their standard errors (normal-theory
/// variance SE uses the sample fourth central moment).
struct Moments {
  double mean = 0, var = 0, mean_se = 0, var_se = 0;
  std::size_t n = 0;
};

inline Moments moments(const std::vector<double>& xs) {
  Moments m;
  m.n = xs.size();
  const double n = static_cast<double>(xs.size());
  for (double x : xs) m.mean += x;
  m.mean /= n;
  double m2 = 0, m4 = 0;
  for (double x : xs) {
    const double d = x - m.mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m4 /= n;
  m.var = m2 * n / (n - 1);
  m.mean_se = std::sqrt(m.var / n);
  m.var_se = std::sqrt(std::max(m4 - m2 * m2, 0.0) / n);
  return m;
}

inline bool within(double value, double target, double se, double k = 3.0) {
  return std::abs(value - target) <= k * se;
}

}  // namespace bbdm::testing
