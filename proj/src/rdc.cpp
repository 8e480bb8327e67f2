#include "bbdm/rdc.hpp"

#include <cmath>

#include "bbdm/ops.hpp"

namespace bbdm {

template <typename T>
BasicRdcBlock<T> make_rdc_block(std::int64_t channels, std::span<const DifferenceKind> kinds, RngStream& rng) {
  if (channels <= 0) throw std::invalid_argument("make_rdc_block: channels must be positive");
  if (kinds.empty()) throw std::invalid_argument("make_rdc_block: at least one branch required");
  BasicRdcBlock<T> block;
  // Branch outputs add up, so each branch gets 1/sqrt(branches) of the usual bound.
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels * 9 * static_cast<std::int64_t>(kinds.size())));
  for (auto kind : kinds) {
    block.kinds.push_back(kind);
    block.weights.push_back(BasicVar<T>::parameter(uniform_tensor<T>({channels, channels, 3, 3}, -bound, bound, rng)));
    block.biases.push_back(BasicVar<T>::parameter(uniform_tensor<T>({channels}, -bound, bound, rng)));
  }
  return block;
}

template <typename T>
BasicVar<T> rdc_branch_sum(const BasicVar<T>& x, const BasicRdcBlock<T>& block, RdcMode mode) {
  if (block.weights.empty()) throw std::invalid_argument("rdc block has no branches");
  if (mode == RdcMode::kMerged) {
    BasicVar<T> kernel = kernel_transform(block.weights[0], block.kinds[0]);
    BasicVar<T> bias = block.biases[0];
    for (std::size_t i = 1; i < block.weights.size(); ++i) {
      kernel = add(kernel, kernel_transform(block.weights[i], block.kinds[i]));
      bias = add(bias, block.biases[i]);
    }
    return conv2d(x, kernel, bias, 1);
  }
  BasicVar<T> total;
  for (std::size_t i = 0; i < block.weights.size(); ++i) {
    BasicVar<T> branch = block.kinds[i] == DifferenceKind::kVanilla
                             ? conv2d(x, block.weights[i], block.biases[i], 1)
                             : difference_conv2d(x, block.weights[i], block.biases[i], block.kinds[i], 1);
    total = total.defined() ? add(total, branch) : branch;
  }
  return total;
}

template <typename T>
BasicVar<T> rdc_forward(const BasicVar<T>& x, const BasicRdcBlock<T>& block, RdcMode mode) {
  return add(x, rdc_branch_sum(x, block, mode));
}

template <typename T>
MergedKernel<T> rdc_merge(const BasicRdcBlock<T>& block) {
  if (block.weights.empty()) throw std::invalid_argument("rdc block has no branches");
  MergedKernel<T> merged{BasicTensor<T>(block.weights[0].shape()), BasicTensor<T>(block.biases[0].shape())};
  for (std::size_t i = 0; i < block.weights.size(); ++i) {
    const BasicTensor<T> k = equivalent_kernel(block.weights[i].value(), block.kinds[i]);
    for (std::int64_t j = 0; j < k.numel(); ++j) merged.weight[j] += k[j];
    for (std::int64_t j = 0; j < merged.bias.numel(); ++j) merged.bias[j] += block.biases[i].value()[j];
  }
  return merged;
}

std::vector<std::vector<DifferenceKind>> rdc_ablation_ladder() {
  std::vector<std::vector<DifferenceKind>> ladder;
  std::vector<DifferenceKind> current;
  for (auto kind : kAllDifferenceKinds) {
    current.push_back(kind);
    ladder.push_back(current);
  }
  return ladder;
}

#define BBDM_INSTANTIATE_RDC(T)                                                                          \
  template BasicRdcBlock<T> make_rdc_block<T>(std::int64_t, std::span<const DifferenceKind>, RngStream&); \
  template BasicVar<T> rdc_branch_sum(const BasicVar<T>&, const BasicRdcBlock<T>&, RdcMode);            \
  template BasicVar<T> rdc_forward(const BasicVar<T>&, const BasicRdcBlock<T>&, RdcMode);               \
  template MergedKernel<T> rdc_merge(const BasicRdcBlock<T>&);

BBDM_INSTANTIATE_RDC(float)
BBDM_INSTANTIATE_RDC(double)

#undef BBDM_INSTANTIATE_RDC

}  // namespace bbdm
