#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "bbdm/tensor.hpp"

namespace bbdm {

/// Raw tensor container, all fields little-endian:
///
///   offset  size        field
///   0       8           magic "BBDMTNSR"
///   8       4  u32      format version (1)
///   12      4  u32      dtype code (1 = float32, 2 = float64)
///   16      4  u32      rank
///   20      8*rank u64  extents
///   ...     numel*size  row-major payload
inline constexpr char kTensorMagic[8] = {'B', 'B', 'D', 'M', 'T', 'N', 'S', 'R'};
inline constexpr std::uint32_t kTensorFormatVersion = 1;

enum class DType : std::uint32_t { kFloat32 = 1, kFloat64 = 2 };

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
void write_tensor(std::ostream& out, const BasicTensor<T>& tensor);
template <typename T>
void write_tensor(const std::filesystem::path& path, const BasicTensor<T>& tensor);

/// Reads either dtype, converting to T.
template <typename T>
BasicTensor<T> read_tensor(std::istream& in);
template <typename T>
BasicTensor<T> read_tensor(const std::filesystem::path& path);

}  // namespace bbdm
