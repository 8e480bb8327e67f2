#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "bbdm/tensor.hpp"

namespace bbdm {

/// Seeded random stream. Identical (seed, stream_id) pairs replay identical
/// sequences; instances are not meant to be shared across threads.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  double normal();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // inclusive

  // Child stream keyed on this stream's identity and `child`.
  RngStream derive(std::uint64_t child) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// FNV-1a; maps a readable stream name onto a stream id.
constexpr std::uint64_t stream_id(std::string_view name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
BasicTensor<T> gaussian(const Shape& shape, RngStream& rng) {
  BasicTensor<T> out(shape);
  for (auto& v : out.values()) v = static_cast<T>(rng.normal());
  return out;
}

template <typename T>
BasicTensor<T> uniform_tensor(const Shape& shape, double lo, double hi, RngStream& rng) {
  BasicTensor<T> out(shape);
  for (auto& v : out.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return out;
}

}  // namespace bbdm
