#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bbdm/autograd.hpp"
#include "bbdm/rdc.hpp"
#include "bbdm/rng.hpp"
#include "json.hpp"

namespace bbdm {

/// U-Net shape. Encoder and decoder each hold `blocks_per_level` residual
/// difference-convolution blocks per level; level l has base * 2^l channels.
struct ModelConfig {
  int latent_channels = 3;
  int base_channels = 32;
  int levels = 2;
  int blocks_per_level = 2;
  int norm_groups = 8;
  bool dual = false;  // two-bridge signature (z_tx, z_ty, t_x, t_y) -> (x_hat, y_hat)
  std::vector<DifferenceKind> rdc_branches{kAllDifferenceKinds.begin(), kAllDifferenceKinds.end()};

  int time_embed_dim() const { return 4 * base_channels; }
  int downsample_factor() const { return 1 << (levels - 1); }
  int total_rdc_blocks() const { return 2 * levels * blocks_per_level; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& config);
void from_json(const nlohmann::json& j, ModelConfig& config);

template <typename T>
struct NamedParameter {
  std::string name;
  BasicVar<T> var;
};

/// Sinusoidal embedding of t / T (scaled to [0, 1000]); [N, dim].
template <typename T>
BasicTensor<T> timestep_embedding(std::span<const int> t, int steps, int dim);

/// Endpoint predictor: a small time-conditioned U-Net built from residual
/// difference-convolution blocks. It never holds optimizer state.
template <typename T>
class BasicPredictorNet {
 public:
  BasicPredictorNet(ModelConfig config, int steps, RngStream& init_rng);

  const ModelConfig& config() const noexcept { return config_; }
  int steps() const noexcept { return steps_; }

  /// Single-bridge mode: predicts z_0 from the state z_t and the endpoint z_T.
  BasicVar<T> predict_z0(const BasicVar<T>& z_t, const BasicVar<T>& z_T, std::span<const int> t,
                         RdcMode mode = RdcMode::kMerged) const;

  /// Dual-bridge mode: z_tx lies on the x -> y bridge at t_x, z_ty on the
  /// y -> x bridge at t_y. Returns (x_hat, y_hat).
  std::pair<BasicVar<T>, BasicVar<T>> predict_pair(const BasicVar<T>& z_tx, const BasicVar<T>& z_ty,
                                                   std::span<const int> t_x, std::span<const int> t_y,
                                                   RdcMode mode = RdcMode::kMerged) const;

  const std::vector<NamedParameter<T>>& named_parameters() const noexcept { return params_; }
  std::vector<BasicVar<T>> parameters() const;
  std::int64_t parameter_count() const;

  /// Deep copy of the weights into a network of another precision.
  template <typename U>
  BasicPredictorNet<U> cast() const;

  /// Deep copy (weights are not shared with the source).
  BasicPredictorNet clone() const { return cast<T>(); }

 private:
  struct Conv {
    BasicVar<T> weight, bias;
  };
  struct Norm {
    BasicVar<T> gamma, beta;
  };
  struct Linear {
    BasicVar<T> weight, bias;
  };
  struct ResBlock {
    Norm norm;
    Linear time_proj;
    BasicRdcBlock<T> rdc;
  };
  struct TimeMlp {
    Linear first, second;
  };

  BasicVar<T> add_param(const std::string& name, BasicTensor<T> value);
  Conv make_conv(const std::string& name, std::int64_t in, std::int64_t out, int k, RngStream& rng);
  Norm make_norm(const std::string& name, std::int64_t channels);
  Linear make_linear(const std::string& name, std::int64_t in, std::int64_t out, RngStream& rng);
  ResBlock make_block(const std::string& name, std::int64_t channels, RngStream& rng);
  TimeMlp make_time_mlp(const std::string& name, RngStream& rng);

  void check_inputs(const BasicVar<T>& a, const BasicVar<T>& b, std::span<const int> t) const;
  BasicVar<T> embed_time(const TimeMlp& mlp, std::span<const int> t) const;
  BasicVar<T> run_block(const ResBlock& block, const BasicVar<T>& h, const BasicVar<T>& temb_act,
                        RdcMode mode) const;
  BasicVar<T> forward(const BasicVar<T>& input, const BasicVar<T>& temb, RdcMode mode) const;

  ModelConfig config_;
  int steps_;
  std::vector<NamedParameter<T>> params_;

  Conv conv_in_;
  std::vector<std::vector<ResBlock>> encoder_;
  std::vector<Conv> down_;
  std::vector<std::vector<ResBlock>> decoder_;
  std::vector<Conv> up_;
  Norm norm_out_;
  Conv conv_out_;
  TimeMlp time_a_;
  TimeMlp time_b_;  // second timestep, dual mode only
};

using PredictorNet = BasicPredictorNet<float>;

extern template class BasicPredictorNet<float>;
extern template class BasicPredictorNet<double>;

template <typename T>
template <typename U>
BasicPredictorNet<U> BasicPredictorNet<T>::cast() const {
  RngStream unused(0, 0);
  BasicPredictorNet<U> out(config_, steps_, unused);
  const auto& dst = out.named_parameters();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto var = dst[i].var;
    var.mutable_value() = params_[i].var.value().template cast<U>();
  }
  return out;
}

}  // namespace bbdm
