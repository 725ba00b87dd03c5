// Per-batch augmentation operators: Cutout, Mixup, CutMix, and a
// PixMix-style procedural mixing pass. Each emits images in [0,1] together
// with a row-stochastic soft label matrix; with its neutral parameter every
// operator is the identity.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mixboost/dataset.hpp"
#include "mixboost/rng.hpp"
#include "mixboost/tensor.hpp"

namespace mixboost {

struct AugmentedBatch {
  ImageBatch images;
  std::vector<double> soft_labels;  // (B,K) rows summing to 1
  int num_classes = 0;
  std::string provenance;
};

namespace detail {

inline AugmentedBatch pass_through(const ImageBatch& batch, const LabelBatch& labels,
                                   std::string provenance) {
  AugmentedBatch out;
  out.images = batch;
  out.soft_labels = one_hot(labels);
  out.num_classes = labels.num_classes;
  out.provenance = std::move(provenance);
  return out;
}

}  // namespace detail

// --- Cutout -----------------------------------------------------------------
// One axis-aligned hole_size^2 square per image, filled with the dataset mean
// color. Placement is uniform over fully interior positions. Labels stay
// one-hot.

inline AugmentedBatch cutout(const ImageBatch& batch, const LabelBatch& labels, int hole_size,
                             const std::array<double, 3>& fill, std::uint64_t seed) {
  const auto side = static_cast<int>(batch.data.shape[2]);
  if (hole_size < 0 || hole_size > side) {
    throw DataError("cutout: hole size " + std::to_string(hole_size) + " out of range 0.." +
                    std::to_string(side));
  }
  AugmentedBatch out =
      detail::pass_through(batch, labels, "cutout(hole=" + std::to_string(hole_size) + ")");
  if (hole_size == 0) return out;
  Rng rng(derive_seed(seed, "cutout"));
  const std::size_t H = batch.data.shape[2], W = batch.data.shape[3];
  const std::size_t plane = H * W;
  const auto h = static_cast<std::size_t>(hole_size);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t y0 = rng.uniform_int(H - h + 1);
    const std::size_t x0 = rng.uniform_int(W - h + 1);
    for (std::size_t c = 0; c < 3; ++c) {
      double* img = out.images.data.data.data() + (b * 3 + c) * plane;
      for (std::size_t y = y0; y < y0 + h; ++y) {
        for (std::size_t x = x0; x < x0 + h; ++x) img[y * W + x] = fill[c];
      }
    }
  }
  return out;
}

// --- Mixup ------------------------------------------------------------------
// Pairs each image with a seeded-permutation partner:
//   x' = lam*x_i + (1-lam)*x_j, label' = lam*y_i + (1-lam)*y_j,
//   lam ~ Beta(alpha, alpha).

inline AugmentedBatch mixup_with(const ImageBatch& batch, const LabelBatch& labels,
                                 const std::vector<std::size_t>& partner,
                                 const std::vector<double>& lam, std::string provenance) {
  AugmentedBatch out = detail::pass_through(batch, labels, std::move(provenance));
  const std::size_t n = batch.pixels_per_image();
  const auto K = static_cast<std::size_t>(labels.num_classes);
  const std::vector<double> base_labels = out.soft_labels;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t j = partner[b];
    const double l = lam[b];
    double* img = out.images.data.data.data() + b * n;
    const double* a = batch.data.data.data() + b * n;
    const double* c = batch.data.data.data() + j * n;
    for (std::size_t p = 0; p < n; ++p) img[p] = l * a[p] + (1.0 - l) * c[p];
    for (std::size_t k = 0; k < K; ++k) {
      out.soft_labels[b * K + k] = l * base_labels[b * K + k] + (1.0 - l) * base_labels[j * K + k];
    }
  }
  return out;
}

inline AugmentedBatch mixup(const ImageBatch& batch, const LabelBatch& labels, double alpha,
                            std::uint64_t seed) {
  if (!(alpha > 0)) throw DataError("mixup: alpha must be positive");
  if (batch.size() < 2) throw DataError("mixup: batch size must be at least 2");
  Rng rng(derive_seed(seed, "mixup"));
  std::vector<std::size_t> partner = rng.permutation(batch.size());
  std::vector<double> lam(batch.size());
  for (double& l : lam) l = rng.beta(alpha, alpha);
  return mixup_with(batch, labels, partner, lam,
                    "mixup(alpha=" + format_double(alpha) + ")");
}

// --- CutMix -----------------------------------------------------------------
// Pastes a rectangle from the partner image; label weight is the realized
// pasted-area fraction rho = patch_area / (H*W).

inline AugmentedBatch cutmix_with(const ImageBatch& batch, const LabelBatch& labels,
                                  const std::vector<std::size_t>& partner,
                                  const std::vector<std::array<std::size_t, 4>>& patches,
                                  std::string provenance) {
  AugmentedBatch out = detail::pass_through(batch, labels, std::move(provenance));
  const std::size_t H = batch.data.shape[2], W = batch.data.shape[3];
  const std::size_t plane = H * W;
  const auto K = static_cast<std::size_t>(labels.num_classes);
  const std::vector<double> base_labels = out.soft_labels;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto [y0, x0, ph, pw] = patches[b];
    const std::size_t j = partner[b];
    for (std::size_t c = 0; c < 3; ++c) {
      double* img = out.images.data.data.data() + (b * 3 + c) * plane;
      const double* src = batch.data.data.data() + (j * 3 + c) * plane;
      for (std::size_t y = y0; y < y0 + ph; ++y) {
        for (std::size_t x = x0; x < x0 + pw; ++x) img[y * W + x] = src[y * W + x];
      }
    }
    const double rho = static_cast<double>(ph * pw) / static_cast<double>(plane);
    for (std::size_t k = 0; k < K; ++k) {
      out.soft_labels[b * K + k] =
          (1.0 - rho) * base_labels[b * K + k] + rho * base_labels[j * K + k];
    }
  }
  return out;
}

inline AugmentedBatch cutmix(const ImageBatch& batch, const LabelBatch& labels, double alpha,
                             std::uint64_t seed) {
  if (!(alpha > 0)) throw DataError("cutmix: alpha must be positive");
  if (batch.size() < 2) throw DataError("cutmix: batch size must be at least 2");
  Rng rng(derive_seed(seed, "cutmix"));
  std::vector<std::size_t> partner = rng.permutation(batch.size());
  const std::size_t H = batch.data.shape[2], W = batch.data.shape[3];
  std::vector<std::array<std::size_t, 4>> patches(batch.size());
  for (auto& patch : patches) {
    const double lam = rng.beta(alpha, alpha);
    // side ratio sqrt(1-lam); the rectangle is clipped at the border, so the
    // label weight below uses the realized area
    const double ratio = std::sqrt(1.0 - lam);
    const auto ph = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(H)));
    const auto pw = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(W)));
    const std::size_t cy = rng.uniform_int(H);
    const std::size_t cx = rng.uniform_int(W);
    const std::size_t y0 = cy >= ph / 2 ? cy - ph / 2 : 0;
    const std::size_t x0 = cx >= pw / 2 ? cx - pw / 2 : 0;
    const std::size_t y1 = std::min(H, y0 + ph);
    const std::size_t x1 = std::min(W, x0 + pw);
    patch = {y0, x0, y1 - y0, x1 - x0};
  }
  return cutmix_with(batch, labels, partner, patches,
                     "cutmix(alpha=" + format_double(alpha) + ")");
}

// --- Plasma fractal ----------------------------------------------------------
// Diamond-square heightfield, normalized to [0,1]. Roughness in (0,1] is the
// per-subdivision amplitude retention: higher keeps more high-frequency
// energy, so the field gets rougher.

inline Tensor plasma_fractal(std::size_t size, double roughness, std::uint64_t seed) {
  if (size == 0) throw DataError("plasma_fractal: size must be positive");
  if (!(roughness > 0.0) || roughness > 1.0) {
    throw DataError("plasma_fractal: roughness must be in (0,1]");
  }
  // internal grid: power of two + 1 covering the request
  std::size_t grid = 2;
  while (grid < size) grid *= 2;
  const std::size_t gp = grid + 1;
  std::vector<double> h(gp * gp, 0.0);
  Rng rng(derive_seed(seed, "plasma"));
  auto at = [&](std::size_t y, std::size_t x) -> double& { return h[y * gp + x]; };
  at(0, 0) = rng.uniform();
  at(0, grid) = rng.uniform();
  at(grid, 0) = rng.uniform();
  at(grid, grid) = rng.uniform();
  double amp = 1.0;
  for (std::size_t step = grid; step >= 2; step /= 2) {
    const std::size_t half = step / 2;
    // diamond
    for (std::size_t y = half; y < gp; y += step) {
      for (std::size_t x = half; x < gp; x += step) {
        const double avg = 0.25 * (at(y - half, x - half) + at(y - half, x + half) +
                                   at(y + half, x - half) + at(y + half, x + half));
        at(y, x) = avg + amp * rng.uniform(-0.5, 0.5);
      }
    }
    // square
    for (std::size_t y = 0; y < gp; y += half) {
      for (std::size_t x = (y / half) % 2 == 0 ? half : 0; x < gp; x += step) {
        double s = 0;
        int cnt = 0;
        if (y >= half) { s += at(y - half, x); ++cnt; }
        if (y + half < gp) { s += at(y + half, x); ++cnt; }
        if (x >= half) { s += at(y, x - half); ++cnt; }
        if (x + half < gp) { s += at(y, x + half); ++cnt; }
        at(y, x) = s / cnt + amp * rng.uniform(-0.5, 0.5);
      }
    }
    amp *= roughness;
  }
  Tensor out({size, size});
  double lo = h[0], hi = h[0];
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double v = at(y, x);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double range = hi > lo ? hi - lo : 1.0;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) out.data[y * size + x] = (at(y, x) - lo) / range;
  }
  return out;
}

// Mixer pool for the PixMix-style pass: plasma fields at varied roughness.
inline std::vector<Tensor> make_mixer_pool(std::size_t count, std::size_t size,
                                           std::uint64_t seed) {
  std::vector<Tensor> pool;
  pool.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double roughness = 0.35 + 0.6 * static_cast<double>(i % 7) / 6.0;
    pool.push_back(plasma_fractal(size, roughness, derive_seed(seed, i)));
  }
  return pool;
}

// --- PixMix-style mixing ------------------------------------------------------
// k ~ Uniform{0..k_max} rounds. Each round blends with a mixer image m using
// weight w ~ Beta(beta, beta):
//   additive:        x <- (1-w)*x + w*m
//   multiplicative:  x <- clamp(x * ((1-w) + 2*w*m))
// Labels are unchanged.

inline AugmentedBatch pixmix_style(const ImageBatch& batch, const LabelBatch& labels,
                                   const std::vector<Tensor>& mixer_pool, int k_max, double beta,
                                   std::uint64_t seed) {
  if (k_max < 0) throw DataError("pixmix_style: k_max must be nonnegative");
  if (!(beta > 0)) throw DataError("pixmix_style: beta must be positive");
  if (mixer_pool.empty() && k_max > 0) {
    throw DataError("pixmix_style: mixer pool is empty but k_max > 0");
  }
  AugmentedBatch out = detail::pass_through(
      batch, labels, "pixmix_style(k_max=" + std::to_string(k_max) + ")");
  if (k_max == 0) return out;
  Rng rng(derive_seed(seed, "pixmix"));
  const std::size_t H = batch.data.shape[2], W = batch.data.shape[3];
  const std::size_t plane = H * W;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto rounds = rng.uniform_int(static_cast<std::uint64_t>(k_max) + 1);
    double* img = out.images.data.data.data() + b * 3 * plane;
    for (std::uint64_t r = 0; r < rounds; ++r) {
      const Tensor& mixer = mixer_pool[rng.uniform_int(mixer_pool.size())];
      require_shape(mixer, {H, W}, "pixmix mixer");
      const bool additive = rng.uniform() < 0.5;
      const double w = rng.beta(beta, beta);
      for (std::size_t c = 0; c < 3; ++c) {
        double* pc = img + c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          const double m = mixer.data[p];
          const double v = additive ? (1.0 - w) * pc[p] + w * m
                                    : pc[p] * ((1.0 - w) + 2.0 * w * m);
          pc[p] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        }
      }
    }
  }
  return out;
}

// --- Operator registry ---------------------------------------------------------

enum class AugmentOp { none, cutout, mixup, cutmix, pixmix_style };

inline const char* augment_name(AugmentOp op) {
  switch (op) {
    case AugmentOp::none: return "none";
    case AugmentOp::cutout: return "cutout";
    case AugmentOp::mixup: return "mixup";
    case AugmentOp::cutmix: return "cutmix";
    case AugmentOp::pixmix_style: return "pixmix_style";
  }
  return "?";
}

inline AugmentOp parse_augment(const std::string& name) {
  for (AugmentOp op : {AugmentOp::none, AugmentOp::cutout, AugmentOp::mixup, AugmentOp::cutmix,
                       AugmentOp::pixmix_style}) {
    if (name == augment_name(op)) return op;
  }
  throw ConfigError("unknown augmentation op: '" + name + "'");
}

struct AugmentSpec {
  AugmentOp op = AugmentOp::none;
  int cutout_hole = 8;
  double mixup_alpha = 1.0;
  double cutmix_alpha = 1.0;
  int pixmix_k_max = 4;
  double pixmix_beta = 3.0;
};

// Applies the configured operator. `fill` is the per-channel dataset mean
// (shared masking convention); mixer pool is only touched by pixmix_style.
inline AugmentedBatch apply_augmentation(const AugmentSpec& spec, const ImageBatch& batch,
                                         const LabelBatch& labels,
                                         const std::array<double, 3>& fill,
                                         const std::vector<Tensor>& mixer_pool,
                                         std::uint64_t seed) {
  switch (spec.op) {
    case AugmentOp::none: return detail::pass_through(batch, labels, "none");
    case AugmentOp::cutout: return cutout(batch, labels, spec.cutout_hole, fill, seed);
    case AugmentOp::mixup: return mixup(batch, labels, spec.mixup_alpha, seed);
    case AugmentOp::cutmix: return cutmix(batch, labels, spec.cutmix_alpha, seed);
    case AugmentOp::pixmix_style:
      return pixmix_style(batch, labels, mixer_pool, spec.pixmix_k_max, spec.pixmix_beta, seed);
  }
  throw ConfigError("unhandled augmentation op");
}

}  // namespace mixboost
