#include "bbdm/predictor_net.hpp"

#include <cmath>
#include <stdexcept>

#include "bbdm/ops.hpp"

namespace bbdm {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (latent_channels < 1) fail("latent_channels must be positive");
  if (base_channels < 2 || base_channels % 2) fail("base_channels must be a positive even number");
  if (levels < 1 || levels > 5) fail("levels must lie in [1, 5]");
  if (blocks_per_level < 1) fail("blocks_per_level must be positive");
  if (norm_groups < 1 || base_channels % norm_groups) fail("norm_groups must divide base_channels");
  if (rdc_branches.empty()) fail("at least one rdc branch required");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  std::vector<std::string> branches;
  for (auto k : c.rdc_branches) branches.emplace_back(to_string(k));
  j = nlohmann::json{{"latent_channels", c.latent_channels},
                     {"base_channels", c.base_channels},
                     {"levels", c.levels},
                     {"blocks_per_level", c.blocks_per_level},
                     {"norm_groups", c.norm_groups},
                     {"dual", c.dual},
                     {"rdc_branches", branches}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.latent_channels = j.value("latent_channels", d.latent_channels);
  c.base_channels = j.value("base_channels", d.base_channels);
  c.levels = j.value("levels", d.levels);
  c.blocks_per_level = j.value("blocks_per_level", d.blocks_per_level);
  c.norm_groups = j.value("norm_groups", d.norm_groups);
  c.dual = j.value("dual", d.dual);
  c.rdc_branches = d.rdc_branches;
  if (j.contains("rdc_branches")) {
    c.rdc_branches.clear();
    for (const auto& name : j.at("rdc_branches")) c.rdc_branches.push_back(difference_kind_from_string(name.get<std::string>()));
  }
}

template <typename T>
BasicTensor<T> timestep_embedding(std::span<const int> t, int steps, int dim) {
  if (dim < 2 || dim % 2) throw std::invalid_argument("timestep_embedding: dim must be even");
  const int half = dim / 2;
  BasicTensor<T> out(Shape{static_cast<std::int64_t>(t.size()), dim});
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double pos = 1000.0 * t[i] / steps;
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * k / half);
      out[static_cast<std::int64_t>(i) * dim + k] = static_cast<T>(std::sin(pos * freq));
      out[static_cast<std::int64_t>(i) * dim + half + k] = static_cast<T>(std::cos(pos * freq));
    }
  }
  return out;
}

template <typename T>
BasicPredictorNet<T>::BasicPredictorNet(ModelConfig config, int steps, RngStream& rng)
    : config_(std::move(config)), steps_(steps) {
  config_.validate();
  if (steps_ < 1) throw std::invalid_argument("predictor needs a positive step count");
  const std::int64_t lc = config_.latent_channels;
  const std::int64_t base = config_.base_channels;
  const int levels = config_.levels;
  auto channels = [&](int level) { return base << level; };

  time_a_ = make_time_mlp("time", rng);
  if (config_.dual) time_b_ = make_time_mlp("time_y", rng);
  conv_in_ = make_conv("conv_in", 2 * lc, base, 3, rng);
  encoder_.resize(static_cast<std::size_t>(levels));
  decoder_.resize(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    for (int b = 0; b < config_.blocks_per_level; ++b) {
      encoder_[l].push_back(make_block("enc." + std::to_string(l) + "." + std::to_string(b), channels(l), rng));
    }
    if (l + 1 < levels) down_.push_back(make_conv("down." + std::to_string(l), channels(l), channels(l + 1), 3, rng));
  }
  for (int l = levels - 1; l >= 0; --l) {
    for (int b = 0; b < config_.blocks_per_level; ++b) {
      decoder_[l].push_back(make_block("dec." + std::to_string(l) + "." + std::to_string(b), channels(l), rng));
    }
    if (l > 0) {
      up_.push_back(make_conv("up." + std::to_string(l), channels(l) + channels(l - 1), channels(l - 1), 1, rng));
    }
  }
  norm_out_ = make_norm("norm_out", base);
  conv_out_ = make_conv("conv_out", base, (config_.dual ? 2 : 1) * lc, 3, rng);
}

template <typename T>
BasicVar<T> BasicPredictorNet<T>::add_param(const std::string& name, BasicTensor<T> value) {
  auto var = BasicVar<T>::parameter(std::move(value));
  params_.push_back({name, var});
  return var;
}

template <typename T>
typename BasicPredictorNet<T>::Conv BasicPredictorNet<T>::make_conv(const std::string& name, std::int64_t in,
                                                                     std::int64_t out, int k, RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * k * k));
  Conv conv;
  conv.weight = add_param(name + ".weight", uniform_tensor<T>({out, in, k, k}, -bound, bound, rng));
  conv.bias = add_param(name + ".bias", uniform_tensor<T>({out}, -bound, bound, rng));
  return conv;
}

template <typename T>
typename BasicPredictorNet<T>::Norm BasicPredictorNet<T>::make_norm(const std::string& name, std::int64_t channels) {
  Norm norm;
  norm.gamma = add_param(name + ".gamma", BasicTensor<T>({channels}, T(1)));
  norm.beta = add_param(name + ".beta", BasicTensor<T>({channels}, T(0)));
  return norm;
}

template <typename T>
typename BasicPredictorNet<T>::Linear BasicPredictorNet<T>::make_linear(const std::string& name, std::int64_t in,
                                                                         std::int64_t out, RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear lin;
  lin.weight = add_param(name + ".weight", uniform_tensor<T>({out, in}, -bound, bound, rng));
  lin.bias = add_param(name + ".bias", uniform_tensor<T>({out}, -bound, bound, rng));
  return lin;
}

template <typename T>
typename BasicPredictorNet<T>::ResBlock BasicPredictorNet<T>::make_block(const std::string& name,
                                                                          std::int64_t channels, RngStream& rng) {
  ResBlock block;
  block.norm = make_norm(name + ".norm", channels);
  block.time_proj = make_linear(name + ".time_proj", config_.time_embed_dim(), channels, rng);
  block.rdc = make_rdc_block<T>(channels, config_.rdc_branches, rng);
  for (std::size_t i = 0; i < block.rdc.kinds.size(); ++i) {
    const std::string prefix = name + ".rdc." + std::string(to_string(block.rdc.kinds[i]));
    params_.push_back({prefix + ".weight", block.rdc.weights[i]});
    params_.push_back({prefix + ".bias", block.rdc.biases[i]});
  }
  return block;
}

template <typename T>
typename BasicPredictorNet<T>::TimeMlp BasicPredictorNet<T>::make_time_mlp(const std::string& name, RngStream& rng) {
  TimeMlp mlp;
  mlp.first = make_linear(name + ".fc1", config_.base_channels, config_.time_embed_dim(), rng);
  mlp.second = make_linear(name + ".fc2", config_.time_embed_dim(), config_.time_embed_dim(), rng);
  return mlp;
}

template <typename T>
std::vector<BasicVar<T>> BasicPredictorNet<T>::parameters() const {
  std::vector<BasicVar<T>> out;
  for (const auto& p : params_) out.push_back(p.var);
  return out;
}

template <typename T>
std::int64_t BasicPredictorNet<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.var.value().numel();
  return n;
}

template <typename T>
void BasicPredictorNet<T>::check_inputs(const BasicVar<T>& a, const BasicVar<T>& b, std::span<const int> t) const {
  require_same_shape(a.shape(), b.shape(), "predictor input");
  const Shape& s = a.shape();
  if (s.size() != 4 || s[1] != config_.latent_channels) {
    throw ShapeError("predictor expects [N, " + std::to_string(config_.latent_channels) + ", H, W], got " +
                     to_string(s));
  }
  const int f = config_.downsample_factor();
  if (s[2] % f || s[3] % f) {
    throw ShapeError("predictor input extent must be divisible by " + std::to_string(f) + ", got " + to_string(s));
  }
  if (static_cast<std::int64_t>(t.size()) != s[0]) throw ShapeError("predictor: one timestep per item required");
  for (int ti : t) {
    if (ti < 0 || ti > steps_) {
      throw std::out_of_range("predictor timestep " + std::to_string(ti) + " outside [0, " + std::to_string(steps_) + "]");
    }
  }
}

template <typename T>
BasicVar<T> BasicPredictorNet<T>::embed_time(const TimeMlp& mlp, std::span<const int> t) const {
  auto emb = BasicVar<T>::constant(timestep_embedding<T>(t, steps_, config_.base_channels));
  auto h = silu(linear(emb, mlp.first.weight, mlp.first.bias));
  return linear(h, mlp.second.weight, mlp.second.bias);
}

template <typename T>
BasicVar<T> BasicPredictorNet<T>::run_block(const ResBlock& block, const BasicVar<T>& h, const BasicVar<T>& temb_act,
                                            RdcMode mode) const {
  auto u = silu(group_norm(h, config_.norm_groups, block.norm.gamma, block.norm.beta));
  u = add_channel_bias(u, linear(temb_act, block.time_proj.weight, block.time_proj.bias));
  return add(h, rdc_branch_sum(u, block.rdc, mode));
}

template <typename T>
BasicVar<T> BasicPredictorNet<T>::forward(const BasicVar<T>& input, const BasicVar<T>& temb, RdcMode mode) const {
  const auto temb_act = silu(temb);
  auto h = conv2d(input, conv_in_.weight, conv_in_.bias, 1);
  std::vector<BasicVar<T>> skips;
  for (int l = 0; l < config_.levels; ++l) {
    for (const auto& block : encoder_[l]) h = run_block(block, h, temb_act, mode);
    if (l + 1 < config_.levels) {
      skips.push_back(h);
      h = conv2d(downsample_nearest2x(h), down_[l].weight, down_[l].bias, 1);
    }
  }
  std::size_t up_index = 0;
  for (int l = config_.levels - 1; l >= 0; --l) {
    for (const auto& block : decoder_[l]) h = run_block(block, h, temb_act, mode);
    if (l > 0) {
      h = concat_channels(upsample_nearest2x(h), skips[static_cast<std::size_t>(l - 1)]);
      h = conv2d(h, up_[up_index].weight, up_[up_index].bias, 0);
      ++up_index;
    }
  }
  h = silu(group_norm(h, config_.norm_groups, norm_out_.gamma, norm_out_.beta));
  return conv2d(h, conv_out_.weight, conv_out_.bias, 1);
}

template <typename T>
BasicVar<T> BasicPredictorNet<T>::predict_z0(const BasicVar<T>& z_t, const BasicVar<T>& z_T, std::span<const int> t,
                                             RdcMode mode) const {
  if (config_.dual) throw std::logic_error("predict_z0 called on a dual-bridge network");
  check_inputs(z_t, z_T, t);
  return forward(concat_channels(z_t, z_T), embed_time(time_a_, t), mode);
}

template <typename T>
std::pair<BasicVar<T>, BasicVar<T>> BasicPredictorNet<T>::predict_pair(const BasicVar<T>& z_tx,
                                                                       const BasicVar<T>& z_ty,
                                                                       std::span<const int> t_x,
                                                                       std::span<const int> t_y, RdcMode mode) const {
  if (!config_.dual) throw std::logic_error("predict_pair called on a single-bridge network");
  check_inputs(z_tx, z_ty, t_x);
  check_inputs(z_tx, z_ty, t_y);
  auto temb = add(embed_time(time_a_, t_x), embed_time(time_b_, t_y));
  auto out = forward(concat_channels(z_tx, z_ty), temb, mode);
  const std::int64_t lc = config_.latent_channels;
  return {slice_channels(out, 0, lc), slice_channels(out, lc, 2 * lc)};
}

template BasicTensor<float> timestep_embedding<float>(std::span<const int>, int, int);
template BasicTensor<double> timestep_embedding<double>(std::span<const int>, int, int);
template class BasicPredictorNet<float>;
template class BasicPredictorNet<double>;

}  // namespace bbdm
