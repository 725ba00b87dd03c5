// Dataset ingestion and generation: CIFAR-10 binary records, the procedural
// synthetic fallback set, and split utilities. All images are (B,3,32,32)
// CHW tensors with values in [0,1].
#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "mixboost/rng.hpp"
#include "mixboost/tensor.hpp"

namespace mixboost {

struct LabelBatch {
  std::vector<int> labels;
  int num_classes = 10;

  std::size_t size() const { return labels.size(); }
};

struct ImageBatch {
  Tensor data;  // (B,3,H,W), values in [0,1]
  std::vector<std::string> ids;

  std::size_t size() const { return data.shape.empty() ? 0 : data.shape[0]; }
  std::size_t pixels_per_image() const { return data.numel() / std::max<std::size_t>(size(), 1); }

  // View of image b as a (3,H,W) tensor copy.
  Tensor image(std::size_t b) const {
    const std::size_t n = pixels_per_image();
    Tensor t({data.shape[1], data.shape[2], data.shape[3]});
    std::copy(data.data.begin() + static_cast<std::ptrdiff_t>(b * n),
              data.data.begin() + static_cast<std::ptrdiff_t>((b + 1) * n), t.data.begin());
    return t;
  }
};

inline ImageBatch slice(const ImageBatch& batch, const std::vector<std::size_t>& idx) {
  const std::size_t n = batch.pixels_per_image();
  ImageBatch out;
  out.data = Tensor({idx.size(), batch.data.shape[1], batch.data.shape[2], batch.data.shape[3]});
  out.ids.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(batch.data.data.begin() + static_cast<std::ptrdiff_t>(idx[i] * n),
              batch.data.data.begin() + static_cast<std::ptrdiff_t>((idx[i] + 1) * n),
              out.data.data.begin() + static_cast<std::ptrdiff_t>(i * n));
    out.ids.push_back(batch.ids[idx[i]]);
  }
  return out;
}

inline LabelBatch slice(const LabelBatch& labels, const std::vector<std::size_t>& idx) {
  LabelBatch out;
  out.num_classes = labels.num_classes;
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) out.labels.push_back(labels.labels[i]);
  return out;
}

// One-hot rows; used wherever hard labels meet the soft-label loss.
inline std::vector<double> one_hot(const LabelBatch& labels) {
  const auto K = static_cast<std::size_t>(labels.num_classes);
  std::vector<double> q(labels.size() * K, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels.labels[i];
    if (y < 0 || y >= labels.num_classes) {
      throw DataError("label " + std::to_string(y) + " out of range for " +
                      std::to_string(labels.num_classes) + " classes");
    }
    q[i * K + static_cast<std::size_t>(y)] = 1.0;
  }
  return q;
}

inline std::array<double, 3> channel_means(const ImageBatch& batch) {
  std::array<double, 3> m{0, 0, 0};
  const std::size_t B = batch.size();
  if (B == 0) return {0.5, 0.5, 0.5};
  const std::size_t plane = batch.data.shape[2] * batch.data.shape[3];
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double* p = batch.data.data.data() + (b * 3 + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) m[c] += p[i];
    }
  }
  for (double& v : m) v /= static_cast<double>(B * plane);
  return m;
}

// --- CIFAR-10 binary format ---------------------------------------------
// A file is a concatenation of 3073-byte records: 1 label byte (0..9)
// followed by 3072 pixel bytes (1024 R, 1024 G, 1024 B, row-major planes).

inline constexpr std::size_t kCifarRecordBytes = 3073;

inline std::pair<ImageBatch, LabelBatch> parse_cifar10_bytes(
    const std::vector<unsigned char>& bytes, const std::string& id_prefix = "cifar") {
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw DataError("CIFAR-10 file length " + std::to_string(bytes.size()) +
                    " is not a multiple of " + std::to_string(kCifarRecordBytes));
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  ImageBatch images;
  images.data = Tensor({n, 3, 32, 32});
  LabelBatch labels;
  labels.num_classes = 10;
  labels.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw DataError("CIFAR-10 record " + std::to_string(i) + " has label byte " +
                      std::to_string(static_cast<int>(rec[0])));
    }
    labels.labels.push_back(static_cast<int>(rec[0]));
    double* dst = images.data.data.data() + i * 3072;
    for (std::size_t p = 0; p < 3072; ++p) dst[p] = static_cast<double>(rec[1 + p]) / 255.0;
    images.ids.push_back(id_prefix + "-" + std::to_string(i));
  }
  return {std::move(images), std::move(labels)};
}

inline std::pair<ImageBatch, LabelBatch> parse_cifar10(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open CIFAR-10 file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  return parse_cifar10_bytes(bytes, path);
}

// Writes the same record format (quantizing pixels to bytes); used to persist
// generated sets and by the round-trip tests.
inline std::vector<unsigned char> to_cifar10_bytes(const ImageBatch& images,
                                                   const LabelBatch& labels) {
  if (images.size() != labels.size()) throw DataError("image/label count mismatch");
  std::vector<unsigned char> out;
  out.reserve(images.size() * kCifarRecordBytes);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const int y = labels.labels[i];
    if (y < 0 || y > 9) throw DataError("CIFAR-10 labels must be 0..9, got " + std::to_string(y));
    out.push_back(static_cast<unsigned char>(y));
    const double* src = images.data.data.data() + i * 3072;
    for (std::size_t p = 0; p < 3072; ++p) {
      const double v = std::min(1.0, std::max(0.0, src[p]));
      out.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
  }
  return out;
}

inline void write_cifar10(const std::string& path, const ImageBatch& images,
                          const LabelBatch& labels) {
  const auto bytes = to_cifar10_bytes(images, labels);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path);
}

// --- Synthetic dataset ----------------------------------------------------
// Procedurally rendered class shapes on textured backgrounds. Each class has
// a fixed shape and base hue; position, scale, hue jitter, and background
// vary per sample. Deterministic per (num_classes, per_class, seed).

namespace detail {

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c; g = x;
  } else if (hp < 2) {
    r = x; g = c;
  } else if (hp < 3) {
    g = c; b = x;
  } else if (hp < 4) {
    g = x; b = c;
  } else if (hp < 5) {
    r = x; b = c;
  } else {
    r = c; g = x;
  }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

// Shape membership test for class k at pixel (px,py), centered at (cx,cy)
// with half-size r.
inline bool in_shape(int k, double px, double py, double cx, double cy, double r) {
  const double dx = px - cx, dy = py - cy;
  const double ax = std::fabs(dx), ay = std::fabs(dy);
  switch (k) {
    case 0:  // disk
      return dx * dx + dy * dy <= r * r;
    case 1:  // square
      return ax <= r && ay <= r;
    case 2:  // triangle (upward)
      return dy <= r * 0.8 && dy >= -r && ax <= (dy + r) * 0.55;
    case 3:  // ring
      return dx * dx + dy * dy <= r * r && dx * dx + dy * dy >= (0.55 * r) * (0.55 * r);
    case 4:  // horizontal bar
      return ay <= r * 0.35 && ax <= r * 1.1;
    case 5:  // vertical bar
      return ax <= r * 0.35 && ay <= r * 1.1;
    case 6:  // diagonal stripe
      return std::fabs(dx - dy) <= r * 0.5 && ax <= r * 1.1 && ay <= r * 1.1;
    case 7:  // diamond
      return ax + ay <= r;
    case 8:  // cross
      return (ax <= r * 0.3 || ay <= r * 0.3) && ax <= r && ay <= r;
    case 9:  // checker (2x2 blocks)
      return ax <= r && ay <= r &&
             ((static_cast<int>(std::floor((dx + r) / (r + 1e-9))) +
               static_cast<int>(std::floor((dy + r) / (r + 1e-9)))) %
                  2 ==
              0);
    default:
      return false;
  }
}

}  // namespace detail

inline constexpr int kMaxSynthClasses = 10;

inline std::pair<ImageBatch, LabelBatch> synth_dataset(int num_classes, int per_class,
                                                       std::uint64_t seed,
                                                       const std::string& id_prefix = "synth") {
  if (num_classes < 2) throw DataError("synth_dataset: need at least 2 classes");
  if (num_classes > kMaxSynthClasses) {
    throw DataError("synth_dataset: at most " + std::to_string(kMaxSynthClasses) +
                    " shape classes are defined");
  }
  if (per_class < 1) throw DataError("synth_dataset: per_class must be positive");
  const std::size_t n = static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(per_class);
  ImageBatch images;
  images.data = Tensor({n, 3, 32, 32});
  LabelBatch labels;
  labels.num_classes = num_classes;
  labels.labels.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(i) % num_classes;
    labels.labels.push_back(k);
    images.ids.push_back(id_prefix + "-" + std::to_string(i));
    Rng rng(derive_seed(seed, i));

    // background: two-corner gradient plus uniform texture noise
    const double base = rng.uniform(0.15, 0.45);
    const double gx = rng.uniform(-0.15, 0.15);
    const double gy = rng.uniform(-0.15, 0.15);
    std::array<double, 3> tint = detail::hsv_to_rgb(rng.uniform(), 0.25, 1.0);

    // color carries no class information: telling the classes apart requires
    // reading the shape geometry, not averaging pixels
    const double cx = 15.5 + rng.uniform(-3.5, 3.5);
    const double cy = 15.5 + rng.uniform(-3.5, 3.5);
    const double r = rng.uniform(6.0, 9.0);
    std::array<double, 3> color =
        detail::hsv_to_rgb(rng.uniform(), rng.uniform(0.55, 0.95), rng.uniform(0.65, 0.95));

    double* img = images.data.data.data() + i * 3072;
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        const double g = base + gx * (x / 31.0 - 0.5) + gy * (y / 31.0 - 0.5);
        const bool inside = detail::in_shape(k, x, y, cx, cy, r);
        const double noise = rng.uniform(-0.05, 0.05);
        for (int c = 0; c < 3; ++c) {
          double v = inside ? color[static_cast<std::size_t>(c)]
                            : g * tint[static_cast<std::size_t>(c)];
          v += noise;
          img[c * 1024 + y * 32 + x] = std::min(1.0, std::max(0.0, v));
        }
      }
    }
  }
  return {std::move(images), std::move(labels)};
}

}  // namespace mixboost
