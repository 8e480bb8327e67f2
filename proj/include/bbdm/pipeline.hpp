#pragma once

#include <string>
#include <vector>

#include "bbdm/bridge.hpp"
#include "bbdm/encoder.hpp"
#include "bbdm/metrics.hpp"
#include "bbdm/predictor_net.hpp"

namespace bbdm {

/// Hazy images [N, 3, H, W] in [0, 1] -> restored images, by running the
/// reverse bridge from the encoded hazy endpoint with a single-bridge net.
Tensor dehaze(const PredictorNet& net, const Tensor& hazy, const BridgeSchedule& schedule, const SamplerMode& mode,
              RngStream& rng, const LatentEncoder& encoder);

/// Per-item PSNR/SSIM of outputs against references, both [N, 3, H, W].
MetricReport evaluate_images(const Tensor& outputs, const Tensor& references, const std::vector<std::string>& ids);

/// Item i of a stacked tensor, leading axis dropped.
Tensor item_at(const Tensor& stack, std::int64_t i);

}  // namespace bbdm
