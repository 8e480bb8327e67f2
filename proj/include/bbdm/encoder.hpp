#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <string_view>

#include "bbdm/tensor.hpp"

namespace bbdm {

/// Maps images in [0, 1] to the latent space the bridge runs in and back.
/// A learned autoencoder can be dropped in behind this interface.
class LatentEncoder {
 public:
  virtual ~LatentEncoder() = default;
  virtual std::string name() const = 0;
  virtual Tensor encode(const Tensor& image) const = 0;
  virtual Tensor decode(const Tensor& latent) const = 0;
};

/// Pixel space rescaled to [-1, 1]; decode clamps back into [0, 1].
class PixelEncoder final : public LatentEncoder {
 public:
  std::string name() const override { return "pixel"; }
  Tensor encode(const Tensor& image) const override {
    Tensor out = image;
    for (auto& v : out.values()) v = 2.0f * v - 1.0f;
    return out;
  }
  Tensor decode(const Tensor& latent) const override {
    Tensor out = latent;
    for (auto& v : out.values()) v = std::clamp(0.5f * (v + 1.0f), 0.0f, 1.0f);
    return out;
  }
};

class IdentityEncoder final : public LatentEncoder {
 public:
  std::string name() const override { return "identity"; }
  Tensor encode(const Tensor& image) const override { return image; }
  Tensor decode(const Tensor& latent) const override { return latent; }
};

inline std::unique_ptr<LatentEncoder> make_encoder(std::string_view name) {
  if (name == "pixel") return std::make_unique<PixelEncoder>();
  if (name == "identity") return std::make_unique<IdentityEncoder>();
  throw std::invalid_argument("unknown encoder '" + std::string(name) + "' (expected pixel or identity)");
}

}  // namespace bbdm
