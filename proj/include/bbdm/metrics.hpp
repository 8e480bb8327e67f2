#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "bbdm/tensor.hpp"

namespace bbdm {

inline constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE); identical inputs give kPsnrInfinite.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

/// Single-scale SSIM on luma (0.299, 0.587, 0.114 for 3 channels), 11x11
/// Gaussian window with sigma 1.5, averaged over the valid region.
/// Images are [C, H, W] with C in {1, 3}, or [H, W].
double ssim(const Tensor& a, const Tensor& b, double peak = 1.0);

/// 2 E|x - y| - E|x - x'| - E|y - y'| over all pairs (including i = j),
/// for point sets [n, d] and [m, d].
double energy_distance(const Tensor64& x, const Tensor64& y);

struct MetricRow {
  std::string id;
  double psnr = 0;
  double ssim = 0;
};

struct MetricSummary {
  double mean = 0;
  double stddev = 0;  // population
};

struct MetricReport {
  std::vector<MetricRow> rows;
  MetricSummary psnr_summary() const;
  MetricSummary ssim_summary() const;
  /// id,psnr,ssim rows followed by mean and std rows.
  void write_csv(const std::filesystem::path& path) const;
};

}  // namespace bbdm
