// Patch-grid masking: the random-mask stage of the boosted training pipeline
// and the baseline masking convention shared with the interaction estimator.
#pragma once

#include <array>
#include <cfenv>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mixboost/dataset.hpp"
#include "mixboost/rng.hpp"
#include "mixboost/tensor.hpp"

namespace mixboost {

struct MaskSpec {
  int rows = 8;
  int cols = 8;
  double r1 = 0.0;                       // mask rate
  std::array<double, 3> fill = {0.5, 0.5, 0.5};  // per-channel dataset mean

  int patches() const { return rows * cols; }
};

struct MaskRealization {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> masked;  // row-major patch grid

  int count() const {
    int n = 0;
    for (std::uint8_t m : masked) n += m;
    return n;
  }
};

// Number of masked patches: round(r1 * P), ties to even (nearbyint under the
// default rounding mode).
inline int masked_patch_count(double r1, int patches) {
  if (r1 < 0.0 || r1 > 1.0) throw DataError("mask rate must be in [0,1], got " + format_double(r1));
  return static_cast<int>(std::nearbyint(r1 * patches));
}

inline MaskRealization sample_mask(const MaskSpec& spec, Rng& rng) {
  if (spec.rows < 1 || spec.cols < 1) throw DataError("mask grid must be at least 1x1");
  MaskRealization m;
  m.rows = spec.rows;
  m.cols = spec.cols;
  m.masked.assign(static_cast<std::size_t>(spec.patches()), 0);
  const int k = masked_patch_count(spec.r1, spec.patches());
  for (std::size_t p : rng.choose(static_cast<std::size_t>(spec.patches()),
                                  static_cast<std::size_t>(k))) {
    m.masked[p] = 1;
  }
  return m;
}

inline MaskRealization sample_mask(const MaskSpec& spec, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "mask"));
  return sample_mask(spec, rng);
}

// Masked patches replaced by the fill color; unmasked pixels are bit-identical
// to the input. The grid must tile the image exactly.
inline void apply_mask_image(double* img, std::size_t H, std::size_t W,
                             const MaskRealization& mask, const std::array<double, 3>& fill) {
  const auto rows = static_cast<std::size_t>(mask.rows);
  const auto cols = static_cast<std::size_t>(mask.cols);
  if (rows == 0 || cols == 0 || H % rows != 0 || W % cols != 0) {
    throw ShapeError("mask grid " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                     " does not tile a " + std::to_string(H) + "x" + std::to_string(W) + " image");
  }
  const std::size_t ph = H / rows, pw = W / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (!mask.masked[r * cols + c]) continue;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double* pc = img + ch * H * W;
        for (std::size_t y = r * ph; y < (r + 1) * ph; ++y) {
          for (std::size_t x = c * pw; x < (c + 1) * pw; ++x) pc[y * W + x] = fill[ch];
        }
      }
    }
  }
}

inline ImageBatch apply_mask(const ImageBatch& batch, const std::vector<MaskRealization>& masks,
                             const std::array<double, 3>& fill) {
  if (masks.size() != batch.size()) {
    throw ShapeError("apply_mask: need one mask per image");
  }
  ImageBatch out;
  out.data = batch.data;
  out.ids = batch.ids;
  const std::size_t H = batch.data.shape[2], W = batch.data.shape[3];
  const std::size_t n = batch.pixels_per_image();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    apply_mask_image(out.data.data.data() + b * n, H, W, masks[b], fill);
  }
  return out;
}

inline Tensor apply_mask(const Tensor& image, const MaskRealization& mask,
                         const std::array<double, 3>& fill) {
  require(image.shape.size() == 3, "apply_mask expects a (3,H,W) image");
  Tensor out = image;
  apply_mask_image(out.data.data(), image.shape[1], image.shape[2], mask, fill);
  return out;
}

}  // namespace mixboost
