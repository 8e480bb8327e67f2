#include "bbdm/difference_kernels.hpp"

#include <stdexcept>
#include <string>

namespace bbdm {

namespace {

constexpr int kCenter = 4;

TapPairing make_vanilla() {
  TapPairing p{};
  for (int i = 0; i < 9; ++i) {
    p.plus[i] = i;
    p.minus[i] = -1;
  }
  return p;
}

TapPairing make_central() {
  TapPairing p{};
  for (int i = 0; i < 9; ++i) {
    p.plus[i] = i;
    p.minus[i] = kCenter;
  }
  return p;
}

TapPairing make_angular() {
  // Ring in clockwise order starting top-left.
  constexpr std::array<int, 8> ring{0, 1, 2, 5, 8, 7, 6, 3};
  TapPairing p{};
  for (std::size_t k = 0; k < ring.size(); ++k) {
    p.plus[ring[k]] = ring[k];
    p.minus[ring[k]] = ring[(k + 1) % ring.size()];
  }
  p.plus[kCenter] = kCenter;
  p.minus[kCenter] = kCenter;
  return p;
}

TapPairing make_horizontal() {
  TapPairing p{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      p.plus[r * 3 + c] = r * 3 + c;
      p.minus[r * 3 + c] = r * 3 + (c + 1) % 3;
    }
  }
  return p;
}

TapPairing make_vertical() {
  TapPairing p{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      p.plus[r * 3 + c] = r * 3 + c;
      p.minus[r * 3 + c] = ((r + 1) % 3) * 3 + c;
    }
  }
  return p;
}

}  // namespace

std::string_view to_string(DifferenceKind kind) {
  switch (kind) {
    case DifferenceKind::kVanilla: return "vanilla";
    case DifferenceKind::kCentral: return "central";
    case DifferenceKind::kAngular: return "angular";
    case DifferenceKind::kHorizontal: return "horizontal";
    case DifferenceKind::kVertical: return "vertical";
  }
  return "unknown";
}

DifferenceKind difference_kind_from_string(std::string_view name) {
  for (auto kind : kAllDifferenceKinds) {
    if (to_string(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown difference kind '" + std::string(name) + "'");
}

const TapPairing& tap_pairing(DifferenceKind kind) {
  static const TapPairing vanilla = make_vanilla();
  static const TapPairing central = make_central();
  static const TapPairing angular = make_angular();
  static const TapPairing horizontal = make_horizontal();
  static const TapPairing vertical = make_vertical();
  switch (kind) {
    case DifferenceKind::kVanilla: return vanilla;
    case DifferenceKind::kCentral: return central;
    case DifferenceKind::kAngular: return angular;
    case DifferenceKind::kHorizontal: return horizontal;
    case DifferenceKind::kVertical: return vertical;
  }
  throw std::invalid_argument("bad difference kind");
}

void require_3x3_kernel(const Shape& shape, const char* what) {
  if (shape.size() != 4 || shape[2] != 3 || shape[3] != 3) {
    throw ShapeError(std::string(what) + ": expected [O, C, 3, 3] kernel, got " + to_string(shape));
  }
}

template <typename T>
BasicTensor<T> equivalent_kernel(const BasicTensor<T>& weight, DifferenceKind kind) {
  require_3x3_kernel(weight.shape(), "equivalent_kernel");
  const TapPairing& pairing = tap_pairing(kind);
  BasicTensor<T> out(weight.shape());
  const std::int64_t planes = weight.numel() / 9;
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* w = weight.data() + p * 9;
    T* o = out.data() + p * 9;
    for (int i = 0; i < 9; ++i) {
      if (pairing.plus[i] == pairing.minus[i]) continue;
      o[pairing.plus[i]] += w[i];
      if (pairing.minus[i] >= 0) o[pairing.minus[i]] -= w[i];
    }
  }
  return out;
}

template BasicTensor<float> equivalent_kernel(const BasicTensor<float>&, DifferenceKind);
template BasicTensor<double> equivalent_kernel(const BasicTensor<double>&, DifferenceKind);

}  // namespace bbdm
