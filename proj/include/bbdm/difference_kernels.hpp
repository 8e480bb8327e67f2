#pragma once

#include <array>
#include <string_view>

#include "bbdm/tensor.hpp"

namespace bbdm {

/// Branch types of a residual difference convolution block.
enum class DifferenceKind { kVanilla, kCentral, kAngular, kHorizontal, kVertical };

inline constexpr std::array<DifferenceKind, 5> kAllDifferenceKinds{
    DifferenceKind::kVanilla, DifferenceKind::kCentral, DifferenceKind::kAngular,
    DifferenceKind::kHorizontal, DifferenceKind::kVertical};

std::string_view to_string(DifferenceKind kind);
DifferenceKind difference_kind_from_string(std::string_view name);

/// Pixel-difference stencil on a 3x3 window, taps indexed row-major (r*3+c).
/// Weight tap i multiplies (x[plus[i]] - x[minus[i]]); minus[i] < 0 means the
/// tap reads x[plus[i]] alone (vanilla). plus[i] == minus[i] disables the tap.
///
///   central    : every tap minus the center tap
///   angular    : each ring tap minus its clockwise neighbour on the ring
///                (45 degree rotation about the center); center unused
///   horizontal : each tap minus its right neighbour in the same row (wraps)
///   vertical   : each tap minus its lower neighbour in the same column (wraps)
struct TapPairing {
  std::array<int, 9> plus;
  std::array<int, 9> minus;
};

const TapPairing& tap_pairing(DifferenceKind kind);

/// Maps learnable 3x3 kernels [O, C, 3, 3] to plain kernels whose ordinary
/// convolution equals the difference convolution with the original weights.
template <typename T>
BasicTensor<T> equivalent_kernel(const BasicTensor<T>& weight, DifferenceKind kind);

void require_3x3_kernel(const Shape& shape, const char* what);

}  // namespace bbdm
