#include "bbdm/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace bbdm {

namespace {

template <typename U>
void put_le(std::ostream& out, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw FormatError("tensor file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  U value;
  std::memcpy(&value, bytes, sizeof(U));
  return value;
}

template <typename T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::kFloat32 : DType::kFloat64;
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& out, const BasicTensor<T>& tensor) {
  out.write(kTensorMagic, sizeof(kTensorMagic));
  put_le<std::uint32_t>(out, kTensorFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dtype_of<T>()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
  for (auto e : tensor.shape()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(e));
  for (T v : tensor.values()) put_le<T>(out, v);
  if (!out) throw FormatError("failed writing tensor");
}

template <typename T>
void write_tensor(const std::filesystem::path& path, const BasicTensor<T>& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(out, tensor);
}

template <typename T>
BasicTensor<T> read_tensor(std::istream& in) {
  char magic[sizeof(kTensorMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kTensorMagic, sizeof(magic)) != 0) {
    throw FormatError("not a tensor container (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kTensorFormatVersion) throw FormatError("unsupported tensor format version " + std::to_string(version));
  const auto dtype = static_cast<DType>(get_le<std::uint32_t>(in));
  if (dtype != DType::kFloat32 && dtype != DType::kFloat64) throw FormatError("unknown dtype code");
  const auto rank = get_le<std::uint32_t>(in);
  if (rank == 0 || rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank));
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto e = get_le<std::uint64_t>(in);
    if (e == 0 || e > (1ULL << 40)) throw FormatError("implausible extent");
    shape.push_back(static_cast<std::int64_t>(e));
  }
  BasicTensor<T> out(shape);
  for (auto& v : out.values()) {
    v = dtype == DType::kFloat32 ? static_cast<T>(get_le<float>(in)) : static_cast<T>(get_le<double>(in));
  }
  return out;
}

template <typename T>
BasicTensor<T> read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_tensor<T>(in);
}

template void write_tensor(std::ostream&, const BasicTensor<float>&);
template void write_tensor(std::ostream&, const BasicTensor<double>&);
template void write_tensor(const std::filesystem::path&, const BasicTensor<float>&);
template void write_tensor(const std::filesystem::path&, const BasicTensor<double>&);
template BasicTensor<float> read_tensor<float>(std::istream&);
template BasicTensor<double> read_tensor<double>(std::istream&);
template BasicTensor<float> read_tensor<float>(const std::filesystem::path&);
template BasicTensor<double> read_tensor<double>(const std::filesystem::path&);

}  // namespace bbdm
