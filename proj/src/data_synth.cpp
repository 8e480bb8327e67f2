#include "bbdm/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "bbdm/tensor_io.hpp"

namespace bbdm {

namespace fs = std::filesystem;
using nlohmann::json;

Tensor haze_apply(const Tensor& J, const HazeField& field) {
  if (J.rank() != 3) throw ShapeError("haze_apply expects [C, H, W], got " + to_string(J.shape()));
  if (!(field.beta > 0)) throw std::invalid_argument("haze_apply: beta must be positive");
  if (field.A < 0 || field.A > 1) throw std::invalid_argument("haze_apply: A must lie in [0, 1]");
  const std::int64_t c = J.dim(0), h = J.dim(1), w = J.dim(2);
  require_same_shape(field.depth.shape(), Shape{h, w}, "haze_apply depth");
  Tensor out(J.shape());
  for (std::int64_t p = 0; p < h * w; ++p) {
    const double d = field.depth[p];
    if (d < 0) throw std::invalid_argument("haze_apply: negative depth");
    const double t = std::exp(-field.beta * d);
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const std::int64_t i = ch * h * w + p;
      out[i] = static_cast<float>(J[i] * t + field.A * (1.0 - t));
    }
  }
  return out;
}

Tensor64 random_depth(int size, RngStream& rng) {
  if (size < 1) throw std::invalid_argument("random_depth: size must be positive");
  Tensor64 depth({size, size});
  struct Plane {
    double gx, gy, weight;
  };
  Plane planes[3];
  for (auto& p : planes) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    p = {std::cos(angle), std::sin(angle), rng.uniform(0.3, 1.0)};
  }
  const double cx = rng.uniform(0.0, 1.0), cy = rng.uniform(0.0, 1.0);
  const double radial = rng.uniform(-1.0, 1.0);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double u = (c + 0.5) / size, v = (r + 0.5) / size;
      double d = radial * std::hypot(u - cx, v - cy);
      for (const auto& p : planes) d += p.weight * (p.gx * u + p.gy * v);
      depth[r * size + c] = d;
    }
  }
  const auto [lo, hi] = std::minmax_element(depth.values().begin(), depth.values().end());
  const double min = *lo, range = *hi - *lo;
  for (auto& d : depth.values()) d = range > 1e-12 ? 3.0 * (d - min) / range : 0.0;
  return depth;
}

Tensor random_scene(int size, RngStream& rng) {
  if (size < 1) throw std::invalid_argument("random_scene: size must be positive");
  Tensor img({3, size, size});
  const std::int64_t plane = static_cast<std::int64_t>(size) * size;
  double from[3], to[3];
  for (int ch = 0; ch < 3; ++ch) {
    from[ch] = rng.uniform(0.0, 1.0);
    to[ch] = rng.uniform(0.0, 1.0);
  }
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double gx = std::cos(angle), gy = std::sin(angle);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double u = (c + 0.5) / size - 0.5, v = (r + 0.5) / size - 0.5;
      const double f = std::clamp(0.5 + (gx * u + gy * v), 0.0, 1.0);
      for (int ch = 0; ch < 3; ++ch) img[ch * plane + r * size + c] = static_cast<float>(from[ch] + f * (to[ch] - from[ch]));
    }
  }
  const int shapes = static_cast<int>(rng.uniform_int(2, 5));
  for (int s = 0; s < shapes; ++s) {
    const bool disk = rng.uniform() < 0.5;
    float colour[3];
    for (auto& v : colour) v = static_cast<float>(rng.uniform(0.0, 1.0));
    const double cx = rng.uniform(0.0, size), cy = rng.uniform(0.0, size);
    const double rx = rng.uniform(0.1, 0.35) * size, ry = rng.uniform(0.1, 0.35) * size;
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const double dx = c + 0.5 - cx, dy = r + 0.5 - cy;
        const bool inside = disk ? dx * dx + dy * dy <= rx * rx : std::abs(dx) <= rx && std::abs(dy) <= ry;
        if (!inside) continue;
        for (int ch = 0; ch < 3; ++ch) img[ch * plane + r * size + c] = colour[ch];
      }
    }
  }
  return img;
}

Corpus generate_corpus(const CorpusParams& params, std::uint64_t seed) {
  if (params.n < 4) throw std::invalid_argument("corpus needs at least 4 items");
  if (params.size < 1) throw std::invalid_argument("corpus image size must be positive");
  Corpus corpus;
  corpus.params = params;
  corpus.seed = seed;
  const std::int64_t n = params.n, s = params.size, per_item = 3 * s * s;
  corpus.clean = Tensor({n, 3, s, s});
  corpus.hazy = Tensor({n, 3, s, s});
  const RngStream root(seed, stream_id("synth.items"));
  for (std::int64_t i = 0; i < n; ++i) {
    RngStream rng = root.derive(static_cast<std::uint64_t>(i));
    const Tensor scene = random_scene(params.size, rng);
    HazeField field{rng.uniform(params.beta_lo, params.beta_hi), rng.uniform(params.a_lo, params.a_hi),
                    random_depth(params.size, rng)};
    const Tensor hazy = haze_apply(scene, field);
    std::copy(scene.data(), scene.data() + per_item, corpus.clean.data() + i * per_item);
    std::copy(hazy.data(), hazy.data() + per_item, corpus.hazy.data() + i * per_item);
    corpus.fields.push_back(std::move(field));
  }
  return corpus;
}

Split make_split(std::int64_t n, std::int64_t test_count, double paired_fraction, RngStream& rng) {
  if (test_count < 0 || test_count >= n) throw std::invalid_argument("split: test count must lie in [0, n)");
  if (!(paired_fraction > 0 && paired_fraction < 1)) throw std::invalid_argument("split: paired fraction in (0, 1)");
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
  const std::int64_t train = n - test_count;
  const auto paired = static_cast<std::int64_t>(std::llround(paired_fraction * static_cast<double>(train)));
  Split split;
  split.paired.assign(order.begin(), order.begin() + paired);
  split.unpaired.assign(order.begin() + paired, order.begin() + train);
  split.test.assign(order.begin() + train, order.end());
  for (auto* part : {&split.paired, &split.unpaired, &split.test}) std::sort(part->begin(), part->end());
  return split;
}

namespace {

std::string item_id(std::int64_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "item%04lld", static_cast<long long>(i));
  return buf;
}

Tensor item_of(const Tensor& stack, std::int64_t i) {
  Shape shape(stack.shape().begin() + 1, stack.shape().end());
  const std::int64_t per = numel_of(shape);
  return Tensor(shape, std::vector<float>(stack.data() + i * per, stack.data() + (i + 1) * per));
}

}  // namespace

DatasetManifest write_corpus(const fs::path& dir, const Corpus& corpus, const Split& split) {
  fs::create_directories(dir / "clean");
  fs::create_directories(dir / "hazy");
  fs::create_directories(dir / "depth");
  json items = json::array();
  for (std::int64_t i = 0; i < corpus.params.n; ++i) {
    const std::string id = item_id(i);
    const std::string clean = "clean/" + id + ".ppm", hazy = "hazy/" + id + ".ppm", depth = "depth/" + id + ".bin";
    write_ppm(dir / clean, item_of(corpus.clean, i));
    write_ppm(dir / hazy, item_of(corpus.hazy, i));
    write_tensor(dir / depth, corpus.fields[static_cast<std::size_t>(i)].depth);
    items.push_back({{"id", id},
                     {"clean", clean},
                     {"hazy", hazy},
                     {"depth", depth},
                     {"beta", corpus.fields[static_cast<std::size_t>(i)].beta},
                     {"A", corpus.fields[static_cast<std::size_t>(i)].A}});
  }
  auto ids = [](const std::vector<std::int64_t>& idx) {
    json out = json::array();
    for (auto i : idx) out.push_back(item_id(i));
    return out;
  };
  DatasetManifest manifest;
  manifest.root = dir;
  manifest.doc = json{{"version", 1},
                      {"seed", corpus.seed},
                      {"n", corpus.params.n},
                      {"size", corpus.params.size},
                      {"beta_range", {corpus.params.beta_lo, corpus.params.beta_hi}},
                      {"A_range", {corpus.params.a_lo, corpus.params.a_hi}},
                      {"items", items},
                      {"splits", {{"paired", ids(split.paired)}, {"unpaired", ids(split.unpaired)}, {"test", ids(split.test)}}}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed to write " + (dir / "manifest.json").string());
  manifest.validate();
  return manifest;
}

DatasetManifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("dataset manifest not found in " + dir.string());
  DatasetManifest manifest;
  manifest.root = dir;
  try {
    manifest.doc = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed dataset manifest: " + std::string(e.what()));
  }
  manifest.validate();
  return manifest;
}

std::vector<std::string> DatasetManifest::ids(const std::string& split) const {
  return doc.at("splits").at(split).get<std::vector<std::string>>();
}

void DatasetManifest::validate() const {
  std::set<std::string> known;
  for (const auto& item : doc.at("items")) {
    known.insert(item.at("id").get<std::string>());
    for (const char* key : {"clean", "hazy"}) {
      const fs::path p = root / item.at(key).get<std::string>();
      if (!fs::exists(p)) throw std::runtime_error("manifest references missing file " + p.string());
    }
  }
  std::set<std::string> seen;
  for (const char* split : {"paired", "unpaired", "test"}) {
    for (const auto& id : ids(split)) {
      if (!known.count(id)) throw std::runtime_error("split " + std::string(split) + " lists unknown item " + id);
      if (!seen.insert(id).second) throw std::runtime_error("item " + id + " appears in more than one split");
    }
  }
}

Tensor load_split_images(const DatasetManifest& manifest, const std::string& split, const std::string& which) {
  const auto wanted = manifest.ids(split);
  if (wanted.empty()) throw std::runtime_error("split '" + split + "' is empty");
  std::vector<Tensor> images;
  for (const auto& id : wanted) {
    for (const auto& item : manifest.doc.at("items")) {
      if (item.at("id") == id) images.push_back(read_ppm(manifest.root / item.at(which).get<std::string>()));
    }
  }
  Shape shape = images.front().shape();
  shape.insert(shape.begin(), static_cast<std::int64_t>(images.size()));
  Tensor out(shape);
  const std::int64_t per = images.front().numel();
  for (std::size_t i = 0; i < images.size(); ++i) {
    require_same_shape(images[i].shape(), images.front().shape(), "dataset image");
    std::copy(images[i].data(), images[i].data() + per, out.data() + static_cast<std::int64_t>(i) * per);
  }
  return out;
}

std::int64_t crop_positions(std::int64_t height, std::int64_t width, std::int64_t patch) {
  if (patch < 1 || patch > height || patch > width) throw std::invalid_argument("patch larger than image");
  return (height - patch + 1) * (width - patch + 1);
}

Tensor crop_patch(const Tensor& img, int patch, RngStream& rng) {
  if (img.rank() != 3) throw ShapeError("crop_patch expects [C, H, W], got " + to_string(img.shape()));
  const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  crop_positions(h, w, patch);
  const std::int64_t r0 = rng.uniform_int(0, h - patch), c0 = rng.uniform_int(0, w - patch);
  Tensor out({c, patch, patch});
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t r = 0; r < patch; ++r) {
      for (std::int64_t k = 0; k < patch; ++k) out[(ch * patch + r) * patch + k] = img[(ch * h + r0 + r) * w + c0 + k];
    }
  }
  return out;
}

ToyDomains toy2d_domains(int n, RngStream& rng) {
  if (n < 100) throw std::invalid_argument("toy2d_domains needs n >= 100");
  ToyDomains out{Tensor64({n, 2}), Tensor64({n, 2})};
  for (int i = 0; i < n; ++i) {
    const double theta = rng.uniform(0.0, std::numbers::pi);
    double px, py;
    if (i % 2 == 0) {
      px = std::cos(theta);
      py = std::sin(theta);
    } else {
      px = 1.0 - std::cos(theta);
      py = 0.5 - std::sin(theta);
    }
    px += 0.05 * rng.normal();
    py += 0.05 * rng.normal();
    out.x[2 * i] = px;
    out.x[2 * i + 1] = py;
    out.y[2 * i] = kToyShear[0][0] * px + kToyShear[0][1] * py + kToyShift[0];
    out.y[2 * i + 1] = kToyShear[1][0] * px + kToyShear[1][1] * py + kToyShift[1];
  }
  return out;
}

Tensor64 toy2d_inverse(const Tensor64& y) {
  if (y.rank() != 2 || y.dim(1) != 2) throw ShapeError("toy2d_inverse expects [n, 2]");
  const double det = kToyShear[0][0] * kToyShear[1][1] - kToyShear[0][1] * kToyShear[1][0];
  Tensor64 x(y.shape());
  for (std::int64_t i = 0; i < y.dim(0); ++i) {
    const double u = y[2 * i] - kToyShift[0], v = y[2 * i + 1] - kToyShift[1];
    x[2 * i] = (kToyShear[1][1] * u - kToyShear[0][1] * v) / det;
    x[2 * i + 1] = (-kToyShear[1][0] * u + kToyShear[0][0] * v) / det;
  }
  return x;
}

void write_ppm(const fs::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("write_ppm expects [3, H, W], got " + to_string(image.shape()));
  const std::int64_t h = image.dim(1), w = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(3 * w));
  for (std::int64_t r = 0; r < h; ++r) {
    for (std::int64_t c = 0; c < w; ++c) {
      for (std::int64_t ch = 0; ch < 3; ++ch) {
        const double v = std::clamp(static_cast<double>(image[(ch * h + r) * w + c]), 0.0, 1.0);
        row[static_cast<std::size_t>(3 * c + ch)] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Tensor read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    while (in >> t) {
      if (t[0] != '#') return t;
      std::string rest;
      std::getline(in, rest);
    }
    throw std::runtime_error("truncated PPM header in " + path.string());
  };
  if (token() != "P6") throw std::runtime_error(path.string() + " is not a binary PPM (P6)");
  const long w = std::stol(token()), h = std::stol(token()), maxval = std::stol(token());
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw std::runtime_error("unsupported PPM header in " + path.string());
  in.get();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(3 * w * h));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw std::runtime_error("truncated PPM payload in " + path.string());
  Tensor img({3, h, w});
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      for (long ch = 0; ch < 3; ++ch) img[(ch * h + r) * w + c] = bytes[static_cast<std::size_t>(3 * (r * w + c) + ch)] / static_cast<float>(maxval);
    }
  }
  return img;
}

}  // namespace bbdm
