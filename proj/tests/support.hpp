// Shared test helpers: independent reference implementations (naive forward
// pass, finite differences, game fixtures) used as oracles against the
// library. These deliberately avoid the library's own compute paths.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "mixboost/interaction.hpp"
#include "mixboost/rng.hpp"
#include "mixboost/tensor.hpp"

namespace testsupport {

using mixboost::GameFunction;
using mixboost::PlayerSet;
using mixboost::Rng;
using mixboost::Tensor;

inline Tensor random_tensor(const mixboost::Shape& shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// --- Naive reference layers (straight-line loops, no GEMM) -----------------

inline Tensor ref_conv3x3(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::size_t F = w.shape[0];
  Tensor y({B, F, H, W});
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
          double acc = b.data[f];
          for (std::size_t c = 0; c < C; ++c) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const long sy = static_cast<long>(i) + ky - 1;
                const long sx = static_cast<long>(j) + kx - 1;
                if (sy < 0 || sy >= static_cast<long>(H) || sx < 0 || sx >= static_cast<long>(W)) {
                  continue;
                }
                acc += w.data[((f * C + c) * 3 + static_cast<std::size_t>(ky)) * 3 +
                              static_cast<std::size_t>(kx)] *
                       x.data[((bi * C + c) * H + static_cast<std::size_t>(sy)) * W +
                              static_cast<std::size_t>(sx)];
              }
            }
          }
          y.data[((bi * F + f) * H + i) * W + j] = acc;
        }
      }
    }
  }
  return y;
}

inline Tensor ref_relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = v > 0 ? v : 0;
  return y;
}

inline Tensor ref_avg_pool2(const Tensor& x) {
  const std::size_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  Tensor y({B, C, H / 2, W / 2});
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    for (std::size_t i = 0; i < H / 2; ++i) {
      for (std::size_t j = 0; j < W / 2; ++j) {
        double s = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            s += x.data[bc * H * W + (2 * i + static_cast<std::size_t>(dy)) * W + 2 * j +
                        static_cast<std::size_t>(dx)];
          }
        }
        y.data[bc * (H / 2) * (W / 2) + i * (W / 2) + j] = s / 4.0;
      }
    }
  }
  return y;
}

inline Tensor ref_global_avg_pool(const Tensor& x) {
  const std::size_t B = x.shape[0], C = x.shape[1], plane = x.shape[2] * x.shape[3];
  Tensor y({B, C});
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    double s = 0;
    for (std::size_t p = 0; p < plane; ++p) s += x.data[bc * plane + p];
    y.data[bc] = s / static_cast<double>(plane);
  }
  return y;
}

inline Tensor ref_dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t B = x.shape[0], Cin = x.shape[1], K = w.shape[0];
  Tensor y({B, K});
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t k = 0; k < K; ++k) {
      double acc = b.data[k];
      for (std::size_t c = 0; c < Cin; ++c) acc += w.data[k * Cin + c] * x.data[bi * Cin + c];
      y.data[bi * K + k] = acc;
    }
  }
  return y;
}

// --- Finite differences ------------------------------------------------------

// Central finite difference of f with respect to xs[i].
template <typename Vec>
inline std::vector<double> finite_difference(const std::function<double()>& f, Vec& xs,
                                             double h = 1e-5) {
  std::vector<double> g(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double saved = xs[i];
    xs[i] = saved + h;
    const double fp = f();
    xs[i] = saved - h;
    const double fm = f();
    xs[i] = saved;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

template <typename VecA, typename VecB>
inline double max_rel_error(const VecA& a, const VecB& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({1e-6, std::fabs(a[i]), std::fabs(b[i])});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
  }
  return worst;
}

// --- Game fixtures -------------------------------------------------------------

// v(S) = sum of weights of the players in S. All interactions vanish.
inline GameFunction additive_game(const std::vector<double>& weights) {
  GameFunction g;
  g.n = static_cast<int>(weights.size());
  g.eval = [weights](PlayerSet s) {
    double v = 0;
    for (std::size_t p = 0; p < weights.size(); ++p) {
      if (s & (PlayerSet{1} << p)) v += weights[p];
    }
    return v;
  };
  return g;
}

// v(S) = c iff both special players are present. I^(m)(i,j) = c for every m.
inline GameFunction pairwise_game(int n, int i, int j, double c) {
  GameFunction g;
  g.n = n;
  const PlayerSet need = (PlayerSet{1} << i) | (PlayerSet{1} << j);
  g.eval = [need, c](PlayerSet s) { return (s & need) == need ? c : 0.0; };
  return g;
}

// Uniform random v table over all 2^n subsets.
inline GameFunction random_game(int n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  auto table = std::make_shared<std::vector<double>>(std::size_t{1} << n);
  for (double& v : *table) v = rng.uniform(lo, hi);
  GameFunction g;
  g.n = n;
  g.eval = [table](PlayerSet s) { return (*table)[s]; };
  return g;
}

}  // namespace testsupport
