#include "bbdm/metrics.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace bbdm {

double psnr(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  if (!(peak > 0)) throw std::invalid_argument("psnr: peak must be positive");
  double sse = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(a.numel());
  if (mse == 0) return kPsnrInfinite;
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

struct Plane {
  std::int64_t h = 0, w = 0;
  std::vector<double> v;
};

Plane luma(const Tensor& img) {
  Plane p;
  std::int64_t c = 1;
  if (img.rank() == 2) {
    p.h = img.dim(0);
    p.w = img.dim(1);
  } else if (img.rank() == 3 && (img.dim(0) == 1 || img.dim(0) == 3)) {
    c = img.dim(0);
    p.h = img.dim(1);
    p.w = img.dim(2);
  } else {
    throw ShapeError("ssim expects [H, W] or [C, H, W] with C in {1, 3}, got " + to_string(img.shape()));
  }
  const std::int64_t n = p.h * p.w;
  p.v.assign(static_cast<std::size_t>(n), 0.0);
  if (c == 1) {
    for (std::int64_t i = 0; i < n; ++i) p.v[static_cast<std::size_t>(i)] = img[i];
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      p.v[static_cast<std::size_t>(i)] = 0.299 * img[i] + 0.587 * img[n + i] + 0.114 * img[2 * n + i];
    }
  }
  return p;
}

std::vector<double> gaussian_taps() {
  std::vector<double> g(kWindow);
  double total = 0;
  for (int i = 0; i < kWindow; ++i) {
    const double x = i - kWindow / 2;
    g[static_cast<std::size_t>(i)] = std::exp(-x * x / (2 * kSigma * kSigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Valid-region separable Gaussian filter: output (h-10) x (w-10).
std::vector<double> filter_valid(const std::vector<double>& src, std::int64_t h, std::int64_t w,
                                 const std::vector<double>& g) {
  const std::int64_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h * ow), 0.0);
  for (std::int64_t r = 0; r < h; ++r) {
    for (std::int64_t c = 0; c < ow; ++c) {
      double s = 0;
      for (int k = 0; k < kWindow; ++k) s += g[static_cast<std::size_t>(k)] * src[static_cast<std::size_t>(r * w + c + k)];
      rows[static_cast<std::size_t>(r * ow + c)] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh * ow), 0.0);
  for (std::int64_t r = 0; r < oh; ++r) {
    for (std::int64_t c = 0; c < ow; ++c) {
      double s = 0;
      for (int k = 0; k < kWindow; ++k) s += g[static_cast<std::size_t>(k)] * rows[static_cast<std::size_t>((r + k) * ow + c)];
      out[static_cast<std::size_t>(r * ow + c)] = s;
    }
  }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  if (!(peak > 0)) throw std::invalid_argument("ssim: peak must be positive");
  const Plane x = luma(a), y = luma(b);
  if (x.h < kWindow || x.w < kWindow) throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  const auto g = gaussian_taps();
  const std::size_t n = x.v.size();
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x.v[i] * x.v[i];
    yy[i] = y.v[i] * y.v[i];
    xy[i] = x.v[i] * y.v[i];
  }
  const auto mx = filter_valid(x.v, x.h, x.w, g), my = filter_valid(y.v, x.h, x.w, g);
  const auto sxx = filter_valid(xx, x.h, x.w, g), syy = filter_valid(yy, x.h, x.w, g), sxy = filter_valid(xy, x.h, x.w, g);
  const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

namespace {

double mean_pairwise(const Tensor64& p, const Tensor64& q) {
  const std::int64_t n = p.dim(0), m = q.dim(0), d = p.dim(1);
  double total = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double* a = p.data() + i * d;
    for (std::int64_t j = 0; j < m; ++j) {
      const double* b = q.data() + j * d;
      double s = 0;
      for (std::int64_t k = 0; k < d; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
      total += std::sqrt(s);
    }
  }
  return total / (static_cast<double>(n) * static_cast<double>(m));
}

}  // namespace

double energy_distance(const Tensor64& x, const Tensor64& y) {
  if (x.empty() || y.empty()) throw std::invalid_argument("energy_distance: empty point set");
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1)) {
    throw ShapeError("energy_distance expects [n, d] and [m, d], got " + to_string(x.shape()) + " and " +
                     to_string(y.shape()));
  }
  return 2.0 * mean_pairwise(x, y) - mean_pairwise(x, x) - mean_pairwise(y, y);
}

namespace {

template <typename F>
MetricSummary summarize(const std::vector<MetricRow>& rows, F get) {
  MetricSummary s;
  if (rows.empty()) return s;
  for (const auto& r : rows) s.mean += get(r);
  s.mean /= static_cast<double>(rows.size());
  for (const auto& r : rows) s.stddev += (get(r) - s.mean) * (get(r) - s.mean);
  s.stddev = std::sqrt(s.stddev / static_cast<double>(rows.size()));
  return s;
}

}  // namespace

MetricSummary MetricReport::psnr_summary() const {
  return summarize(rows, [](const MetricRow& r) { return r.psnr; });
}

MetricSummary MetricReport::ssim_summary() const {
  return summarize(rows, [](const MetricRow& r) { return r.ssim; });
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << "id,psnr,ssim\n";
  for (const auto& r : rows) out << r.id << ',' << r.psnr << ',' << r.ssim << '\n';
  const auto p = psnr_summary(), s = ssim_summary();
  out << "mean," << p.mean << ',' << s.mean << '\n';
  out << "std," << p.stddev << ',' << s.stddev << '\n';
}

}  // namespace bbdm
