#include <cmath>
#include <numbers>

#include "bbdm/metrics.hpp"
#include "bbdm/rng.hpp"
#include "doctest.h"

using namespace bbdm;
using doctest::Approx;

namespace {

Tensor pattern(int h, int w, bool second) {
  Tensor img({3, h, w});
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        img[(ch * h + r) * w + c] = static_cast<float>(second ? 0.5 + 0.35 * std::cos(0.2 * r - 0.5 * c + 2 * ch)
                                                               : 0.5 + 0.4 * std::sin(0.3 * r + 0.7 * c + ch));
  return img;
}

// Direct 11x11 window sums with an unseparated 2-D Gaussian.
double ssim_direct(const Tensor& a, const Tensor& b) {
  const std::int64_t h = a.dim(1), w = a.dim(2), n = h * w;
  auto gray = [&](const Tensor& t, std::int64_t i) { return 0.299 * t[i] + 0.587 * t[n + i] + 0.114 * t[2 * n + i]; };
  double g[11][11], total = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) total += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
  const double c1 = 1e-4, c2 = 9e-4;
  double sum = 0;
  int count = 0;
  for (std::int64_t r = 0; r + 11 <= h; ++r) {
    for (std::int64_t c = 0; c + 11 <= w; ++c) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          const double k = g[i][j] / total, x = gray(a, (r + i) * w + c + j), y = gray(b, (r + i) * w + c + j);
          mx += k * x;
          my += k * y;
          xx += k * x * x;
          yy += k * y * y;
          xy += k * x * y;
        }
      }
      const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
      sum += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return sum / count;
}

double psnr_direct(const Tensor& a, const Tensor& b) {
  long double s = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) s += (long double)(a[i] - (double)b[i]) * (a[i] - (double)b[i]);
  return static_cast<double>(-10.0L * std::log10(s / a.numel()));
}

double ed_brute(const Tensor64& x, const Tensor64& y) {
  const std::int64_t n = x.dim(0), m = y.dim(0), d = x.dim(1);
  auto dist = [&](const Tensor64& p, std::int64_t i, const Tensor64& q, std::int64_t j) {
    double s = 0;
    for (std::int64_t k = 0; k < d; ++k) s += (p[i * d + k] - q[j * d + k]) * (p[i * d + k] - q[j * d + k]);
    return std::sqrt(s);
  };
  long double cross = 0, xx = 0, yy = 0;
  for (std::int64_t j = 0; j < m; ++j)
    for (std::int64_t i = 0; i < n; ++i) cross += dist(x, i, y, j);
  for (std::int64_t j = 0; j < n; ++j)
    for (std::int64_t i = 0; i < n; ++i) xx += dist(x, i, x, j);
  for (std::int64_t j = 0; j < m; ++j)
    for (std::int64_t i = 0; i < m; ++i) yy += dist(y, i, y, j);
  return static_cast<double>(2 * cross / (n * m) - xx / (n * n) - yy / ((long double)m * m));
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("psnr basics") {
  RngStream rng(1, 1);
  const Tensor a = uniform_tensor<float>({3, 16, 16}, 0, 1, rng);
  CHECK(psnr(a, a) == kPsnrInfinite);
  Tensor lo({3, 8, 8}, 0.25f), hi({3, 8, 8}, 0.75f);
  CHECK(psnr(lo, hi) == Approx(6.020599913279624).epsilon(1e-12));
  const Tensor b = uniform_tensor<float>({3, 16, 16}, 0, 1, rng);
  CHECK(psnr(a, b) == psnr(b, a));
  CHECK(std::abs(psnr(a, b) - psnr_direct(a, b)) < 1e-9);
  CHECK_THROWS_AS(psnr(a, Tensor({3, 16, 15})), ShapeError);
}

TEST_CASE("psnr falls as noise grows") {
  RngStream rng(2, 2);
  const Tensor clean = uniform_tensor<float>({3, 32, 32}, 0.2, 0.8, rng);
  const Tensor noise = gaussian<float>({3, 32, 32}, rng);
  double previous = kPsnrInfinite;
  for (double amp : {0.01, 0.05, 0.1, 0.2}) {
    Tensor noisy = clean;
    for (std::int64_t i = 0; i < noisy.numel(); ++i) noisy[i] += static_cast<float>(amp * noise[i]);
    const double p = psnr(noisy, clean);
    CHECK(p < previous);
    previous = p;
  }
}

TEST_CASE("ssim basics") {
  RngStream rng(3, 3);
  const Tensor a = uniform_tensor<float>({3, 20, 20}, 0, 1, rng);
  CHECK(ssim(a, a) == Approx(1.0).epsilon(1e-12));
  const Tensor b = uniform_tensor<float>({3, 20, 20}, 0, 1, rng);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-9);
  CHECK_THROWS(ssim(Tensor({3, 10, 20}), Tensor({3, 10, 20})));
  CHECK_THROWS(ssim(Tensor({2, 20, 20}), Tensor({2, 20, 20})));
}

TEST_CASE("ssim on constant images follows the closed form") {
  // No variance anywhere: only the luminance term survives.
  const Tensor a({3, 16, 16}, 0.8f), b({3, 16, 16}, 0.2f);
  const double mx = 0.8f, my = 0.2f;
  const double expected = (2 * mx * my + 1e-4) / (mx * mx + my * my + 1e-4);
  CHECK(ssim(a, b) == Approx(expected).epsilon(1e-9));
  // a textured image against its negative anticorrelates
  RngStream rng(4, 4);
  const Tensor t = uniform_tensor<float>({3, 24, 24}, 0, 1, rng);
  Tensor neg = t;
  for (auto& v : neg.values()) v = 1.0f - v;
  CHECK(ssim(t, neg) < 0.1);
}

TEST_CASE("ssim matches a direct window evaluation") {
  RngStream rng(5, 5);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = uniform_tensor<float>({3, 23, 19}, 0, 1, rng);
    Tensor b = a;
    const Tensor noise = gaussian<float>({3, 23, 19}, rng);
    for (std::int64_t i = 0; i < b.numel(); ++i) b[i] += 0.1f * noise[i];
    CHECK(std::abs(ssim(a, b) - ssim_direct(a, b)) < 1e-6);
  }
}

TEST_CASE("frozen scikit-image values on a fixed pattern") {
  const Tensor a = pattern(24, 20, false), b = pattern(24, 20, true);
  CHECK(std::abs(ssim(a, b) - 0.03615240206255514) < 1e-6);
  CHECK(std::abs(psnr(a, b) - 8.566235221517879) < 1e-9);
}

TEST_CASE("energy distance") {
  RngStream rng(6, 6);
  const Tensor64 x = gaussian<double>({200, 2}, rng), y = gaussian<double>({200, 2}, rng);
  CHECK(std::abs(energy_distance(x, y) - ed_brute(x, y)) < 1e-9);
  CHECK(std::abs(energy_distance(x, x)) < 1e-12);
  Tensor64 perm(x.shape());
  for (std::int64_t i = 0; i < 200; ++i) {
    perm[2 * i] = x[2 * (199 - i)];
    perm[2 * i + 1] = x[2 * (199 - i) + 1];
  }
  CHECK(std::abs(energy_distance(x, perm)) < 1e-12);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor64 p = gaussian<double>({30, 3}, rng), q = gaussian<double>({25, 3}, rng);
    CHECK(energy_distance(p, q) >= -1e-12);
  }
  CHECK_THROWS(energy_distance(x, gaussian<double>({5, 3}, rng)));
}

TEST_CASE("energy distance between far-apart gaussians") {
  RngStream rng(7, 7);
  Tensor64 x = gaussian<double>({10000, 1}, rng), y = gaussian<double>({10000, 1}, rng);
  for (auto& v : y.values()) v += 10.0;
  // 2 E|x - y| - 2 E|x - x'| with E|x - x'| = 2 / sqrt(pi) for unit normals
  const double expected = 2 * 10.0 - 2 * 2 / std::sqrt(std::numbers::pi);
  CHECK(energy_distance(x, y) == Approx(expected).epsilon(0.01));
}

TEST_CASE("report summaries and csv") {
  MetricReport r;
  r.rows = {{"a", 10, 0.5}, {"b", 20, 0.7}};
  CHECK(r.psnr_summary().mean == 15);
  CHECK(r.psnr_summary().stddev == 5);
  CHECK(r.ssim_summary().mean == Approx(0.6));
}

}  // TEST_SUITE
