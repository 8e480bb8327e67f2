#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bbdm/rng.hpp"
#include "bbdm/tensor.hpp"
#include "json.hpp"

namespace bbdm {

/// Degradation I = J t + A (1 - t) with transmission t = exp(-beta d).
struct HazeField {
  double beta = 1.0;
  double A = 1.0;
  Tensor64 depth;  // [H, W], non-negative
};

/// J [C, H, W] in [0, 1] -> hazy I of the same shape.
Tensor haze_apply(const Tensor& J, const HazeField& field);

/// Smooth low-frequency depth [size, size] in [0, 3]: three random planes
/// plus one radial bowl, min-max normalized.
Tensor64 random_depth(int size, RngStream& rng);

/// Procedural clean scene [3, size, size] in [0, 1]: a linear colour gradient
/// with random rectangles and disks painted over it.
Tensor random_scene(int size, RngStream& rng);

struct CorpusParams {
  int n = 80;
  int size = 32;
  double beta_lo = 0.6, beta_hi = 1.8;
  double a_lo = 0.7, a_hi = 1.0;
};

struct Corpus {
  CorpusParams params;
  std::uint64_t seed = 0;
  Tensor clean;  // [n, 3, size, size]
  Tensor hazy;   // [n, 3, size, size]
  std::vector<HazeField> fields;
};

/// Pure function of (params, seed); item i uses its own derived stream.
Corpus generate_corpus(const CorpusParams& params, std::uint64_t seed);

/// Disjoint index lists. `paired` and `unpaired` split the non-test items by
/// `paired_fraction` (1:1 at 0.5).
struct Split {
  std::vector<std::int64_t> paired, unpaired, test;
};

Split make_split(std::int64_t n, std::int64_t test_count, double paired_fraction, RngStream& rng);

/// manifest.json layout:
///   {"version": 1, "seed": s, "n": n, "size": px,
///    "beta_range": [lo, hi], "A_range": [lo, hi],
///    "items": [{"id", "clean", "hazy", "depth", "beta", "A"}],
///    "splits": {"paired": [id...], "unpaired": [id...], "test": [id...]}}
/// Images are binary PPM, depth maps raw tensor files; paths are relative.
struct DatasetManifest {
  nlohmann::json doc;
  std::filesystem::path root;

  std::vector<std::string> ids(const std::string& split) const;
  /// Checks split disjointness and that every listed file exists.
  void validate() const;
};

DatasetManifest write_corpus(const std::filesystem::path& dir, const Corpus& corpus, const Split& split);
DatasetManifest read_manifest(const std::filesystem::path& dir);

/// Stacks the clean or hazy images ("clean" / "hazy") of a split: [k, 3, H, W].
Tensor load_split_images(const DatasetManifest& manifest, const std::string& split, const std::string& which);

/// Uniformly random aligned crop of img [C, H, W]; (H-p+1)(W-p+1) positions.
Tensor crop_patch(const Tensor& img, int patch, RngStream& rng);
std::int64_t crop_positions(std::int64_t height, std::int64_t width, std::int64_t patch);

/// Two-moons cloud X [n, 2] and its sheared, shifted copy Y = X M^T + b.
struct ToyDomains {
  Tensor64 x;
  Tensor64 y;
};

inline constexpr double kToyShear[2][2] = {{1.0, 0.8}, {0.0, 1.0}};
inline constexpr double kToyShift[2] = {2.0, -1.0};

ToyDomains toy2d_domains(int n, RngStream& rng);
/// Undoes the affine pairing map.
Tensor64 toy2d_inverse(const Tensor64& y);

/// Binary PPM (P6, maxval 255) of [3, H, W] values in [0, 1].
void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

}  // namespace bbdm
