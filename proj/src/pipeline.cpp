#include "bbdm/pipeline.hpp"

#include "bbdm/training.hpp"

namespace bbdm {

Tensor item_at(const Tensor& stack, std::int64_t i) {
  if (i < 0 || i >= stack.dim(0)) throw std::out_of_range("item index " + std::to_string(i));
  Shape shape(stack.shape().begin() + 1, stack.shape().end());
  const std::int64_t per = numel_of(shape);
  return Tensor(shape, std::vector<float>(stack.data() + i * per, stack.data() + (i + 1) * per));
}

Tensor dehaze(const PredictorNet& net, const Tensor& hazy, const BridgeSchedule& schedule, const SamplerMode& mode,
              RngStream& rng, const LatentEncoder& encoder) {
  if (net.config().dual) throw std::invalid_argument("dehazing needs a single-bridge (stage 2) network");
  if (net.steps() != schedule.steps()) throw std::invalid_argument("network and schedule disagree on T");
  NetPredictor predictor(net);
  return encoder.decode(sample(predictor, encoder.encode(hazy), schedule, mode, rng));
}

MetricReport evaluate_images(const Tensor& outputs, const Tensor& references, const std::vector<std::string>& ids) {
  require_same_shape(outputs.shape(), references.shape(), "evaluate_images");
  if (static_cast<std::int64_t>(ids.size()) != outputs.dim(0)) throw std::invalid_argument("one id per item required");
  MetricReport report;
  for (std::int64_t i = 0; i < outputs.dim(0); ++i) {
    const Tensor out = item_at(outputs, i), ref = item_at(references, i);
    report.rows.push_back({ids[static_cast<std::size_t>(i)], psnr(out, ref), ssim(out, ref)});
  }
  return report;
}

}  // namespace bbdm
