#pragma once

#include <span>
#include <vector>

#include "bbdm/autograd.hpp"
#include "bbdm/difference_kernels.hpp"
#include "bbdm/rng.hpp"

namespace bbdm {

/// How a residual difference convolution block is evaluated.
///  kBranches : one pixel-difference convolution per branch, outputs summed
///  kMerged   : branch kernels mapped to plain kernels, summed, one convolution
/// Both are differentiable and agree up to float rounding.
enum class RdcMode { kBranches, kMerged };

/// Parallel 3x3 branches (vanilla plus difference convolutions) with a
/// residual connection; channel count is preserved.
template <typename T>
struct BasicRdcBlock {
  std::vector<DifferenceKind> kinds;
  std::vector<BasicVar<T>> weights;  // [C, C, 3, 3] per branch
  std::vector<BasicVar<T>> biases;   // [C] per branch

  std::int64_t channels() const { return weights.empty() ? 0 : weights.front().shape()[0]; }
};

using RdcBlock = BasicRdcBlock<float>;

template <typename T>
BasicRdcBlock<T> make_rdc_block(std::int64_t channels, std::span<const DifferenceKind> kinds, RngStream& rng);

/// Sum of the branch responses (biases included), zero padding 1.
template <typename T>
BasicVar<T> rdc_branch_sum(const BasicVar<T>& x, const BasicRdcBlock<T>& block, RdcMode mode);

/// residual + sum of branch responses.
template <typename T>
BasicVar<T> rdc_forward(const BasicVar<T>& x, const BasicRdcBlock<T>& block, RdcMode mode = RdcMode::kBranches);

template <typename T>
struct MergedKernel {
  BasicTensor<T> weight;  // [C, C, 3, 3]
  BasicTensor<T> bias;    // [C]
};

/// Collapses all branches into a single plain 3x3 convolution.
template <typename T>
MergedKernel<T> rdc_merge(const BasicRdcBlock<T>& block);

/// Branch sets for the incremental ablation vanilla, +central, +angular,
/// +horizontal, +vertical.
std::vector<std::vector<DifferenceKind>> rdc_ablation_ladder();

}  // namespace bbdm
