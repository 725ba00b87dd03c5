// Generated mini-corruption/perturbation/OOD sets.
//
// Severity tables (1..3), fixed constants of the repo:
//   gaussian_noise   sigma          0.04 / 0.12 / 0.22
//   shot_noise       photon rate    60 / 25 / 10         (x' = Poisson(x*rate)/rate)
//   impulse_noise    flip prob      0.04 / 0.12 / 0.22   (salt or pepper, 50/50)
//   box_blur         radius         1 / 2 / 3            (edge-clamped box kernel)
//   brightness       delta          0.10 / 0.20 / 0.30
//   contrast         factor         0.55 / 0.40 / 0.25   (x' = 0.5 + f*(x-0.5))
//   pixelate         block size     2 / 4 / 8            (block average, nearest upsample)
// Every generator is a pure function of its arguments; outputs stay in [0,1].
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mixboost/dataset.hpp"
#include "mixboost/rng.hpp"
#include "mixboost/tensor.hpp"

namespace mixboost {

enum class CorruptionKind {
  gaussian_noise,
  shot_noise,
  impulse_noise,
  box_blur,
  brightness,
  contrast,
  pixelate,
};

inline constexpr std::array<CorruptionKind, 7> kAllCorruptions = {
    CorruptionKind::gaussian_noise, CorruptionKind::shot_noise, CorruptionKind::impulse_noise,
    CorruptionKind::box_blur,       CorruptionKind::brightness, CorruptionKind::contrast,
    CorruptionKind::pixelate,
};

inline const char* corruption_name(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::gaussian_noise: return "gaussian_noise";
    case CorruptionKind::shot_noise: return "shot_noise";
    case CorruptionKind::impulse_noise: return "impulse_noise";
    case CorruptionKind::box_blur: return "box_blur";
    case CorruptionKind::brightness: return "brightness";
    case CorruptionKind::contrast: return "contrast";
    case CorruptionKind::pixelate: return "pixelate";
  }
  return "?";
}

inline CorruptionKind parse_corruption(const std::string& name) {
  for (CorruptionKind k : kAllCorruptions) {
    if (name == corruption_name(k)) return k;
  }
  throw DataError("unknown corruption kind: '" + name + "'");
}

inline double gaussian_noise_sigma(int severity) {
  constexpr std::array<double, 3> s = {0.04, 0.12, 0.22};
  return s[static_cast<std::size_t>(severity - 1)];
}

namespace detail {

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

inline void check_severity(int severity) {
  if (severity < 1 || severity > 3) {
    throw DataError("severity must be in 1..3, got " + std::to_string(severity));
  }
}

using Plane = std::array<std::size_t, 2>;  // H, W

inline void box_blur_plane(const double* src, double* dst, std::size_t H, std::size_t W,
                           int radius) {
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      double s = 0;
      int cnt = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          long yy = static_cast<long>(y) + dy;
          long xx = static_cast<long>(x) + dx;
          yy = yy < 0 ? 0 : (yy >= static_cast<long>(H) ? static_cast<long>(H) - 1 : yy);
          xx = xx < 0 ? 0 : (xx >= static_cast<long>(W) ? static_cast<long>(W) - 1 : xx);
          s += src[static_cast<std::size_t>(yy) * W + static_cast<std::size_t>(xx)];
          ++cnt;
        }
      }
      dst[y * W + x] = s / cnt;
    }
  }
}

}  // namespace detail

inline ImageBatch corrupt(const ImageBatch& clean, CorruptionKind kind, int severity,
                          std::uint64_t seed) {
  detail::check_severity(severity);
  const std::size_t B = clean.size();
  const std::size_t C = clean.data.shape[1], H = clean.data.shape[2], W = clean.data.shape[3];
  const std::size_t plane = H * W;
  ImageBatch out;
  out.data = Tensor(clean.data.shape);
  out.ids = clean.ids;
  Rng rng(derive_seed(derive_seed(seed, corruption_name(kind)),
                      static_cast<std::uint64_t>(severity)));
  const std::size_t si = static_cast<std::size_t>(severity - 1);

  switch (kind) {
    case CorruptionKind::gaussian_noise: {
      const double sigma = gaussian_noise_sigma(severity);
      for (std::size_t i = 0; i < clean.data.numel(); ++i) {
        out.data.data[i] = detail::clamp01(clean.data.data[i] + sigma * rng.normal());
      }
      break;
    }
    case CorruptionKind::shot_noise: {
      constexpr std::array<double, 3> rate = {60.0, 25.0, 10.0};
      const double r = rate[si];
      for (std::size_t i = 0; i < clean.data.numel(); ++i) {
        out.data.data[i] =
            detail::clamp01(static_cast<double>(rng.poisson(clean.data.data[i] * r)) / r);
      }
      break;
    }
    case CorruptionKind::impulse_noise: {
      constexpr std::array<double, 3> prob = {0.04, 0.12, 0.22};
      const double p = prob[si];
      for (std::size_t i = 0; i < clean.data.numel(); ++i) {
        const double u = rng.uniform();
        out.data.data[i] = u < p ? (rng.uniform() < 0.5 ? 0.0 : 1.0) : clean.data.data[i];
      }
      break;
    }
    case CorruptionKind::box_blur: {
      constexpr std::array<int, 3> radius = {1, 2, 3};
      for (std::size_t bc = 0; bc < B * C; ++bc) {
        detail::box_blur_plane(clean.data.data.data() + bc * plane,
                               out.data.data.data() + bc * plane, H, W, radius[si]);
      }
      break;
    }
    case CorruptionKind::brightness: {
      constexpr std::array<double, 3> delta = {0.10, 0.20, 0.30};
      for (std::size_t i = 0; i < clean.data.numel(); ++i) {
        out.data.data[i] = detail::clamp01(clean.data.data[i] + delta[si]);
      }
      break;
    }
    case CorruptionKind::contrast: {
      constexpr std::array<double, 3> factor = {0.55, 0.40, 0.25};
      for (std::size_t i = 0; i < clean.data.numel(); ++i) {
        out.data.data[i] = detail::clamp01(0.5 + factor[si] * (clean.data.data[i] - 0.5));
      }
      break;
    }
    case CorruptionKind::pixelate: {
      constexpr std::array<std::size_t, 3> block = {2, 4, 8};
      const std::size_t bs = block[si];
      for (std::size_t bc = 0; bc < B * C; ++bc) {
        const double* src = clean.data.data.data() + bc * plane;
        double* dst = out.data.data.data() + bc * plane;
        for (std::size_t by = 0; by < H; by += bs) {
          for (std::size_t bx = 0; bx < W; bx += bs) {
            double s = 0;
            for (std::size_t y = by; y < by + bs; ++y) {
              for (std::size_t x = bx; x < bx + bs; ++x) s += src[y * W + x];
            }
            s /= static_cast<double>(bs * bs);
            for (std::size_t y = by; y < by + bs; ++y) {
              for (std::size_t x = bx; x < bx + bs; ++x) dst[y * W + x] = s;
            }
          }
        }
      }
      break;
    }
  }
  return out;
}

struct CorruptionSet {
  CorruptionKind kind;
  int severity;
  ImageBatch images;
};

// The full mini-corruption suite: every kind x severity 1..severities.
inline std::vector<CorruptionSet> make_corruption_suite(const ImageBatch& clean, int severities,
                                                        std::uint64_t seed) {
  if (severities < 1 || severities > 3) throw DataError("severities must be in 1..3");
  std::vector<CorruptionSet> out;
  for (CorruptionKind kind : kAllCorruptions) {
    for (int s = 1; s <= severities; ++s) {
      out.push_back({kind, s, corrupt(clean, kind, s, seed)});
    }
  }
  return out;
}

// --- Perturbation sequences ------------------------------------------------
// Frames under a nondecreasing perturbation schedule; frame 0 is the clean
// image. noise: per-frame sigma on the grid {0, max/(T-1), ..., max};
// translate: frame t shifts right by floor(t*max_shift/T) pixels with edge
// padding.

enum class PerturbationKind { noise, translate };

inline const char* perturbation_name(PerturbationKind k) {
  return k == PerturbationKind::noise ? "noise" : "translate";
}

struct PerturbationSequence {
  std::string base_id;
  PerturbationKind kind;
  std::vector<Tensor> frames;  // each (3,H,W)
};

inline constexpr double kPerturbNoiseSigmaMax = 0.10;
inline constexpr int kPerturbMaxShift = 4;

inline PerturbationSequence perturb_sequence(const Tensor& image, const std::string& id,
                                             PerturbationKind kind, int T, std::uint64_t seed) {
  if (T < 2) throw DataError("perturbation sequence needs T >= 2 frames");
  require(image.shape.size() == 3, "perturb_sequence expects a (3,H,W) image");
  const std::size_t H = image.shape[1], W = image.shape[2];
  PerturbationSequence seq;
  seq.base_id = id;
  seq.kind = kind;
  seq.frames.reserve(static_cast<std::size_t>(T));
  seq.frames.push_back(image);
  Rng rng(derive_seed(seed, id + "/" + perturbation_name(kind)));
  for (int t = 1; t < T; ++t) {
    Tensor frame(image.shape);
    if (kind == PerturbationKind::noise) {
      const double sigma = kPerturbNoiseSigmaMax * static_cast<double>(t) / (T - 1);
      for (std::size_t i = 0; i < image.numel(); ++i) {
        frame.data[i] = detail::clamp01(image.data[i] + sigma * rng.normal());
      }
    } else {
      const std::size_t shift =
          static_cast<std::size_t>((static_cast<long>(t) * kPerturbMaxShift) / T);
      for (std::size_t c = 0; c < 3; ++c) {
        const double* src = image.data.data() + c * H * W;
        double* dst = frame.data.data() + c * H * W;
        for (std::size_t y = 0; y < H; ++y) {
          for (std::size_t x = 0; x < W; ++x) {
            const std::size_t sx = x >= shift ? x - shift : 0;
            dst[y * W + x] = src[y * W + sx];
          }
        }
      }
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

// Alternates noise/translate across base images.
inline std::vector<PerturbationSequence> make_perturbation_suite(const ImageBatch& clean,
                                                                 std::size_t count, int T,
                                                                 std::uint64_t seed) {
  count = std::min(count, clean.size());
  std::vector<PerturbationSequence> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const PerturbationKind kind =
        (i % 2 == 0) ? PerturbationKind::noise : PerturbationKind::translate;
    out.push_back(perturb_sequence(clean.image(i), clean.ids[i], kind, T, seed));
  }
  return out;
}

// --- Synthetic OOD ----------------------------------------------------------
// Generators disjoint from the synthetic class set: uniform noise fields,
// oriented sinusoidal gratings, and coarse random checkerboards.

inline ImageBatch synth_ood(int count, std::uint64_t seed) {
  if (count < 1) throw DataError("synth_ood: count must be positive");
  const auto n = static_cast<std::size_t>(count);
  ImageBatch out;
  out.data = Tensor({n, 3, 32, 32});
  out.ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.ids.push_back("ood-" + std::to_string(i));
    Rng rng(derive_seed(derive_seed(seed, "ood"), i));
    double* img = out.data.data.data() + i * 3072;
    const int family = static_cast<int>(i % 3);
    if (family == 0) {  // uniform noise field
      for (std::size_t p = 0; p < 3072; ++p) img[p] = rng.uniform();
    } else if (family == 1) {  // sinusoidal grating
      const double theta = rng.uniform(0.0, std::numbers::pi);
      const double freq = rng.uniform(0.25, 1.2);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const std::array<double, 3> lo = {rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.3),
                                        rng.uniform(0.0, 0.3)};
      const std::array<double, 3> hi = {rng.uniform(0.7, 1.0), rng.uniform(0.7, 1.0),
                                        rng.uniform(0.7, 1.0)};
      for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
          const double s =
              0.5 + 0.5 * std::sin(freq * (x * std::cos(theta) + y * std::sin(theta)) + phase);
          for (std::size_t c = 0; c < 3; ++c) {
            img[c * 1024 + static_cast<std::size_t>(y) * 32 + static_cast<std::size_t>(x)] =
                lo[c] + (hi[c] - lo[c]) * s;
          }
        }
      }
    } else {  // coarse random checkerboard
      const int cell = 4 << rng.uniform_int(3);  // 4, 8, or 16
      std::array<double, 3> a = {rng.uniform(), rng.uniform(), rng.uniform()};
      std::array<double, 3> b = {rng.uniform(), rng.uniform(), rng.uniform()};
      for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
          const bool odd = ((x / cell) + (y / cell)) % 2 != 0;
          for (std::size_t c = 0; c < 3; ++c) {
            img[c * 1024 + static_cast<std::size_t>(y) * 32 + static_cast<std::size_t>(x)] =
                odd ? a[c] : b[c];
          }
        }
      }
    }
  }
  return out;
}

}  // namespace mixboost
