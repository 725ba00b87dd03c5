// Black-box multi-order game interactions.
//
// For a game v over players N = {0..n-1}, the order-m interaction of a pair
// (i,j) is
//
//   I^(m)(i,j) = E_{S subset of N\{i,j}, |S|=m} [ dv(i,j,S) ]
//   dv(i,j,S)  = v(S+{i,j}) - v(S+{i}) - v(S+{j}) + v(S)
//
// The estimator samples pairs and size-m contexts; when the requested budget
// covers the whole space it enumerates instead and becomes exact. The
// brute-force enumerator and the decomposition residual
//
//   v(N) = v({}) + sum_i mu_i + sum_{i != j} sum_m w^(m) I^(m)(i,j),
//   mu_i = v({i}) - v({}),  w^(m) = (n-1-m) / (n(n-1))
//
// serve as oracles for it. Per-order relative strengths J^(m) (mean |I^(m)|
// normalized to mean 1 across evaluated orders) feed the adjusted mid-order
// strength proxy
//
//   M(a,b,c) = sqrt( 1/(max J - min J) *
//                    sum_{m=floor(bn)}^{floor(cn)} J / sum_{m=0}^{floor(an)} J ).
#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mixboost/dataset.hpp"
#include "mixboost/nn.hpp"
#include "mixboost/rng.hpp"
#include "mixboost/tensor.hpp"

namespace mixboost {

using PlayerSet = std::uint32_t;  // bitmask over at most 20 players

inline constexpr int kMaxPlayers = 20;
inline constexpr int kMaxBruteForcePlayers = 14;
inline constexpr int kMaxDecompositionPlayers = 10;

// Players are cells of an equal tiling of the image; the baseline fill is the
// per-channel dataset mean, as everywhere else in this repo.
struct PlayerGrid {
  int rows = 4;
  int cols = 4;
  std::array<double, 3> baseline = {0.5, 0.5, 0.5};

  int n() const { return rows * cols; }
};

struct GameFunction {
  int n = 0;
  std::function<double(PlayerSet)> eval;
  // batch hook for games backed by model inference; defaults to mapping eval
  std::function<std::vector<double>(const std::vector<PlayerSet>&)> eval_batch;

  std::vector<double> evaluate(const std::vector<PlayerSet>& subsets) const {
    if (eval_batch) return eval_batch(subsets);
    std::vector<double> out;
    out.reserve(subsets.size());
    for (PlayerSet s : subsets) out.push_back(eval(s));
    return out;
  }
};

inline void check_player(const GameFunction& game, int i) {
  if (i < 0 || i >= game.n) {
    throw DataError("player index " + std::to_string(i) + " out of range for n=" +
                    std::to_string(game.n));
  }
}

// v(S+{i,j}) - v(S+{i}) - v(S+{j}) + v(S); S must exclude both players.
inline double delta_v(const GameFunction& game, int i, int j, PlayerSet s) {
  check_player(game, i);
  check_player(game, j);
  if (i == j) throw DataError("delta_v: players must be distinct");
  const PlayerSet bi = PlayerSet{1} << i, bj = PlayerSet{1} << j;
  if (s & bi) throw DataError("delta_v: context already contains player i");
  if (s & bj) throw DataError("delta_v: context already contains player j");
  const auto vals = game.evaluate({static_cast<PlayerSet>(s | bi | bj),
                                   static_cast<PlayerSet>(s | bi),
                                   static_cast<PlayerSet>(s | bj), s});
  return vals[0] - vals[1] - vals[2] + vals[3];
}

namespace detail {

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

// Players outside {i,j}, in ascending order.
inline std::vector<int> other_players(int n, int i, int j) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n - 2));
  for (int p = 0; p < n; ++p) {
    if (p != i && p != j) out.push_back(p);
  }
  return out;
}

// Visits every size-m subset of `pool` as a bitmask, lexicographic order.
template <typename Fn>
inline void for_each_subset(const std::vector<int>& pool, int m, Fn&& fn) {
  const int p = static_cast<int>(pool.size());
  if (m > p) return;
  std::vector<int> idx(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (;;) {
    PlayerSet s = 0;
    for (int i : idx) s |= PlayerSet{1} << pool[static_cast<std::size_t>(i)];
    fn(s);
    int pos = m - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == p - m + pos) --pos;
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    for (int i = pos + 1; i < m; ++i) {
      idx[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i - 1)] + 1;
    }
  }
}

}  // namespace detail

// Exact I^(m)(i,j) by enumerating all C(n-2, m) contexts. Guarded: use
// interaction_mc for larger player counts.
inline double interaction_bruteforce(const GameFunction& game, int m, int i, int j) {
  if (game.n > kMaxBruteForcePlayers) {
    throw DataError("interaction_bruteforce: n=" + std::to_string(game.n) + " exceeds " +
                    std::to_string(kMaxBruteForcePlayers) +
                    "; use interaction_mc for sampled estimation");
  }
  check_player(game, i);
  check_player(game, j);
  if (i == j) throw DataError("interaction_bruteforce: players must be distinct");
  if (m < 0 || m > game.n - 2) {
    throw DataError("order m=" + std::to_string(m) + " out of range [0," +
                    std::to_string(game.n - 2) + "]");
  }
  const std::vector<int> pool = detail::other_players(game.n, i, j);
  double sum = 0;
  std::uint64_t count = 0;
  detail::for_each_subset(pool, m, [&](PlayerSet s) {
    sum += delta_v(game, i, j, s);
    ++count;
  });
  return sum / static_cast<double>(count);
}

struct InteractionEstimate {
  int order = 0;
  double value = 0;        // mean over pairs of |per-pair context mean of dv|
  double signed_mean = 0;  // mean over pairs of the per-pair context mean
  double mean_abs_delta = 0;  // mean of |dv| over all pairs and contexts
  double stderr_ = 0;      // standard error of `value` w.r.t. context sampling
  std::size_t samples = 0;  // contexts per pair
  std::size_t pairs = 0;
  bool exhaustive = false;
};

// Monte Carlo estimate of the order-m interaction strength. Pairs are drawn
// without replacement (all pairs when the budget covers them); contexts are
// iid uniform size-m subsets, or the full enumeration when num_contexts
// reaches C(n-2, m), in which case the estimate is exact and stderr is 0.
inline InteractionEstimate interaction_mc(const GameFunction& game, int m,
                                          std::size_t num_contexts, std::size_t num_pairs,
                                          std::uint64_t seed) {
  if (game.n < 2 || game.n > kMaxPlayers) {
    throw DataError("interaction_mc: n must be in [2," + std::to_string(kMaxPlayers) + "]");
  }
  if (m < 0 || m > game.n - 2) {
    throw DataError("order m=" + std::to_string(m) + " out of range [0," +
                    std::to_string(game.n - 2) + "]");
  }
  if (num_contexts < 1 || num_pairs < 1) {
    throw DataError("interaction_mc: need at least one context and one pair");
  }
  Rng rng(derive_seed(seed, "interaction-mc"));

  // pair selection
  const std::size_t all_pairs =
      static_cast<std::size_t>(game.n) * static_cast<std::size_t>(game.n - 1) / 2;
  std::vector<std::pair<int, int>> pairs;
  if (num_pairs >= all_pairs) {
    for (int i = 0; i < game.n; ++i) {
      for (int j = i + 1; j < game.n; ++j) pairs.emplace_back(i, j);
    }
  } else {
    for (std::size_t flat : rng.choose(all_pairs, num_pairs)) {
      // unrank the (i,j) pair from its flat index
      std::size_t i = 0, offset = 0;
      while (offset + static_cast<std::size_t>(game.n - 1 - static_cast<int>(i)) <= flat) {
        offset += static_cast<std::size_t>(game.n - 1 - static_cast<int>(i));
        ++i;
      }
      const std::size_t j = i + 1 + (flat - offset);
      pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  }

  const std::uint64_t total_contexts = detail::binomial(game.n - 2, m);
  const bool exhaustive = num_contexts >= total_contexts;
  const std::size_t contexts = exhaustive ? static_cast<std::size_t>(total_contexts) : num_contexts;

  InteractionEstimate est;
  est.order = m;
  est.samples = contexts;
  est.pairs = pairs.size();
  est.exhaustive = exhaustive;

  double sum_abs_interaction = 0, sum_signed = 0, sum_abs_delta = 0, var_term = 0;
  for (const auto& [i, j] : pairs) {
    std::vector<PlayerSet> contexts_for_pair;
    contexts_for_pair.reserve(contexts);
    if (exhaustive) {
      detail::for_each_subset(detail::other_players(game.n, i, j), m,
                              [&](PlayerSet s) { contexts_for_pair.push_back(s); });
    } else {
      const std::vector<int> pool = detail::other_players(game.n, i, j);
      for (std::size_t c = 0; c < contexts; ++c) {
        PlayerSet s = 0;
        for (std::size_t p : rng.choose(pool.size(), static_cast<std::size_t>(m))) {
          s |= PlayerSet{1} << pool[p];
        }
        contexts_for_pair.push_back(s);
      }
    }

    // batched four-term evaluation
    std::vector<PlayerSet> queries;
    queries.reserve(contexts_for_pair.size() * 4);
    const PlayerSet bi = PlayerSet{1} << i, bj = PlayerSet{1} << j;
    for (PlayerSet s : contexts_for_pair) {
      queries.push_back(static_cast<PlayerSet>(s | bi | bj));
      queries.push_back(static_cast<PlayerSet>(s | bi));
      queries.push_back(static_cast<PlayerSet>(s | bj));
      queries.push_back(s);
    }
    const std::vector<double> vals = game.evaluate(queries);

    double mean = 0, mean_sq = 0;
    for (std::size_t c = 0; c < contexts_for_pair.size(); ++c) {
      const double dv = vals[4 * c] - vals[4 * c + 1] - vals[4 * c + 2] + vals[4 * c + 3];
      mean += dv;
      mean_sq += dv * dv;
      sum_abs_delta += std::fabs(dv);
    }
    const auto cn = static_cast<double>(contexts_for_pair.size());
    mean /= cn;
    mean_sq /= cn;
    sum_abs_interaction += std::fabs(mean);
    sum_signed += mean;
    if (!exhaustive && contexts_for_pair.size() > 1) {
      // unbiased per-pair variance of the context mean
      const double var = std::max(0.0, (mean_sq - mean * mean) * cn / (cn - 1.0));
      var_term += var / cn;
    }
  }

  const auto pn = static_cast<double>(pairs.size());
  est.value = sum_abs_interaction / pn;
  est.signed_mean = sum_signed / pn;
  est.mean_abs_delta = sum_abs_delta / (pn * static_cast<double>(contexts));
  est.stderr_ = exhaustive ? 0.0 : std::sqrt(var_term) / pn;
  return est;
}

// |v(N) - RHS of the decomposition identity|, with exact interactions.
inline double decomposition_check(const GameFunction& game) {
  const int n = game.n;
  if (n > kMaxDecompositionPlayers) {
    throw DataError("decomposition_check: n=" + std::to_string(n) + " exceeds " +
                    std::to_string(kMaxDecompositionPlayers) + " (needs exact I^(m))");
  }
  if (n < 2) throw DataError("decomposition_check: need at least 2 players");
  // tabulate v over the full power set
  std::vector<PlayerSet> all(static_cast<std::size_t>(1) << n);
  for (std::size_t s = 0; s < all.size(); ++s) all[s] = static_cast<PlayerSet>(s);
  const std::vector<double> v = game.evaluate(all);

  const PlayerSet full = static_cast<PlayerSet>((std::uint32_t{1} << n) - 1);
  double rhs = v[0];
  for (int i = 0; i < n; ++i) rhs += v[std::uint32_t{1} << i] - v[0];

  const double denom = static_cast<double>(n) * static_cast<double>(n - 1);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const std::vector<int> pool = detail::other_players(n, i, j);
      const PlayerSet bi = PlayerSet{1} << i, bj = PlayerSet{1} << j;
      for (int m = 0; m <= n - 2; ++m) {
        double sum = 0;
        std::uint64_t count = 0;
        detail::for_each_subset(pool, m, [&](PlayerSet s) {
          sum += v[s | bi | bj] - v[s | bi] - v[s | bj] + v[s];
          ++count;
        });
        const double interaction = sum / static_cast<double>(count);
        const double w = static_cast<double>(n - 1 - m) / denom;
        rhs += 2.0 * w * interaction;  // both orderings of the pair
      }
    }
  }
  return std::fabs(v[full] - rhs);
}

// --- Model-backed game -------------------------------------------------------

// v(S) = log-odds of the true class with the regions outside S replaced by
// the baseline: z_y(x_S) - log sum_{k != y} exp(z_k(x_S)).
inline GameFunction model_game(const TinyCnn& model, const Tensor& image, int label,
                               const PlayerGrid& grid) {
  require(image.shape.size() == 3 && image.shape[0] == 3, "model_game expects a (3,H,W) image");
  if (grid.n() < 2 || grid.n() > kMaxPlayers) {
    throw DataError("player grid must have between 2 and " + std::to_string(kMaxPlayers) +
                    " regions");
  }
  const std::size_t H = image.shape[1], W = image.shape[2];
  if (H % static_cast<std::size_t>(grid.rows) != 0 || W % static_cast<std::size_t>(grid.cols) != 0) {
    throw ShapeError("player grid does not tile the image");
  }
  if (label < 0 || label >= model.num_classes()) throw DataError("model_game: bad label");

  const int n = grid.n();
  const std::size_t rh = H / static_cast<std::size_t>(grid.rows);
  const std::size_t rw = W / static_cast<std::size_t>(grid.cols);
  auto baseline = grid.baseline;
  // copies keep the game self-contained after the caller's tensors go away
  auto img = std::make_shared<Tensor>(image);
  auto mdl = &model;

  auto build_masked = [img, baseline, n, rh, rw, H, W](PlayerSet s) {
    Tensor x = *img;
    for (int p = 0; p < n; ++p) {
      if (s & (PlayerSet{1} << p)) continue;  // player present: keep pixels
      const std::size_t r0 = static_cast<std::size_t>(p) / (W / rw) * rh;
      const std::size_t c0 = static_cast<std::size_t>(p) % (W / rw) * rw;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double* pc = x.data.data() + ch * H * W;
        for (std::size_t y = r0; y < r0 + rh; ++y) {
          for (std::size_t xx = c0; xx < c0 + rw; ++xx) pc[y * W + xx] = baseline[ch];
        }
      }
    }
    return x;
  };

  GameFunction game;
  game.n = n;
  game.eval_batch = [mdl, build_masked, label, H, W](const std::vector<PlayerSet>& subsets) {
    std::vector<double> scores;
    scores.reserve(subsets.size());
    constexpr std::size_t kChunk = 256;
    const auto K = static_cast<std::size_t>(mdl->num_classes());
    for (std::size_t start = 0; start < subsets.size(); start += kChunk) {
      const std::size_t count = std::min(kChunk, subsets.size() - start);
      Tensor batch({count, 3, H, W});
      for (std::size_t b = 0; b < count; ++b) {
        const Tensor x = build_masked(subsets[start + b]);
        std::copy(x.data.begin(), x.data.end(),
                  batch.data.begin() + static_cast<std::ptrdiff_t>(b * 3 * H * W));
      }
      const Tensor logits = mdl->logits(batch);
      for (std::size_t b = 0; b < count; ++b) {
        const double* z = logits.data.data() + b * K;
        double m = -HUGE_VAL;
        for (std::size_t k = 0; k < K; ++k) {
          if (static_cast<int>(k) != label) m = std::max(m, z[k]);
        }
        double s = 0;
        for (std::size_t k = 0; k < K; ++k) {
          if (static_cast<int>(k) != label) s += std::exp(z[k] - m);
        }
        scores.push_back(z[static_cast<std::size_t>(label)] - (m + std::log(s)));
      }
    }
    return scores;
  };
  game.eval = [game_batch = game.eval_batch](PlayerSet s) { return game_batch({s})[0]; };
  return game;
}

// --- Profiles and the proxy ---------------------------------------------------

struct InteractionProfile {
  int n = 0;
  std::vector<int> orders;
  std::vector<double> j;        // relative strength, mean 1 across orders
  std::vector<double> stderr_;  // propagated through the normalization
  double normalization = 0;     // the raw mean strength that was divided out
};

// Default order grid: m/n in {0.05, 0.10, ..., 0.95}, rounded to integers and
// clamped to [0, n-2], duplicates removed.
inline std::vector<int> default_order_grid(int n) {
  std::vector<int> orders;
  for (int i = 1; i <= 19; ++i) {
    const double frac = 0.05 * i;
    int m = static_cast<int>(std::lround(frac * n));
    m = std::max(0, std::min(n - 2, m));
    if (orders.empty() || orders.back() != m) orders.push_back(m);
  }
  return orders;
}

struct ProfileBudget {
  std::size_t pairs_per_image = 6;
  std::size_t contexts_per_pair = 8;
};

// J^(m) over the evaluated orders: per-order mean of |I^(m)| across images
// and sampled pairs, normalized so the mean across orders is 1.
inline InteractionProfile profile(const TinyCnn& model, const ImageBatch& images,
                                  const LabelBatch& labels, const PlayerGrid& grid,
                                  const std::vector<int>& order_grid, const ProfileBudget& budget,
                                  std::uint64_t seed) {
  if (images.size() == 0) throw DataError("profile: need at least one image");
  if (budget.pairs_per_image < 1 || budget.contexts_per_pair < 1) {
    throw DataError("profile: budget must allow at least one pair and one context per order");
  }
  if (order_grid.empty()) throw DataError("profile: empty order grid");
  for (int m : order_grid) {
    if (m < 0 || m > grid.n() - 2) {
      throw DataError("profile: order " + std::to_string(m) + " outside [0," +
                      std::to_string(grid.n() - 2) + "]");
    }
  }

  InteractionProfile prof;
  prof.n = grid.n();
  prof.orders = order_grid;
  std::vector<double> strength(order_grid.size(), 0.0);
  std::vector<double> var(order_grid.size(), 0.0);

  for (std::size_t b = 0; b < images.size(); ++b) {
    const GameFunction game =
        model_game(model, images.image(b), labels.labels[b], grid);
    for (std::size_t oi = 0; oi < order_grid.size(); ++oi) {
      const InteractionEstimate est =
          interaction_mc(game, order_grid[oi], budget.contexts_per_pair, budget.pairs_per_image,
                         derive_seed(derive_seed(seed, b), static_cast<std::uint64_t>(order_grid[oi])));
      strength[oi] += est.value;
      var[oi] += est.stderr_ * est.stderr_;
    }
  }
  const auto nb = static_cast<double>(images.size());
  double mean = 0;
  for (std::size_t oi = 0; oi < strength.size(); ++oi) {
    strength[oi] /= nb;
    var[oi] /= nb * nb;
    mean += strength[oi];
  }
  mean /= static_cast<double>(strength.size());
  if (!(mean > 0)) {
    throw NumericError("profile: all interaction strengths are zero; nothing to normalize");
  }
  prof.normalization = mean;
  prof.j.resize(strength.size());
  prof.stderr_.resize(strength.size());
  for (std::size_t oi = 0; oi < strength.size(); ++oi) {
    prof.j[oi] = strength[oi] / mean;
    prof.stderr_[oi] = std::sqrt(var[oi]) / mean;
  }
  return prof;
}

struct ProxyParams {
  double a = 0.2;
  double b = 0.2;
  double c = 0.8;
};

// Adjusted mid-order relative interaction strength M(a,b,c). Sums run over
// integer orders; each order maps to the nearest evaluated grid point.
inline double proxy_m(const InteractionProfile& prof, const ProxyParams& params = {}) {
  if (!(0 <= params.a && params.a <= params.b && params.b <= params.c && params.c <= 1)) {
    throw DataError("proxy: parameters must satisfy 0 <= a <= b <= c <= 1");
  }
  if (prof.orders.empty() || prof.orders.size() != prof.j.size()) {
    throw DataError("proxy: malformed profile");
  }
  double jmin = prof.j[0], jmax = prof.j[0];
  for (double v : prof.j) {
    jmin = std::min(jmin, v);
    jmax = std::max(jmax, v);
  }
  if (!(jmax > jmin)) {
    throw NumericError("proxy: degenerate profile (max J == min J), range term undefined");
  }
  auto j_at = [&](int m) {
    std::size_t best = 0;
    int best_d = std::abs(prof.orders[0] - m);
    for (std::size_t i = 1; i < prof.orders.size(); ++i) {
      const int d = std::abs(prof.orders[i] - m);
      if (d < best_d) {
        best = i;
        best_d = d;
      }
    }
    return prof.j[best];
  };
  const int n = prof.n;
  const int lo_end = static_cast<int>(std::floor(params.a * n));
  const int mid_start = static_cast<int>(std::floor(params.b * n));
  const int mid_end = static_cast<int>(std::floor(params.c * n));
  double numer = 0, denom = 0;
  for (int m = mid_start; m <= mid_end; ++m) numer += j_at(m);
  for (int m = 0; m <= lo_end; ++m) denom += j_at(m);
  if (!(denom > 0)) throw NumericError("proxy: low-order sum is zero");
  return std::sqrt(numer / denom / (jmax - jmin));
}

// Mass of J over orders with m/n in [lo, hi]; the long-rope comparisons use
// the mid band [0.3, 0.7].
inline double band_mass(const InteractionProfile& prof, double lo, double hi) {
  double mass = 0;
  for (std::size_t i = 0; i < prof.orders.size(); ++i) {
    const double frac = static_cast<double>(prof.orders[i]) / static_cast<double>(prof.n);
    if (frac >= lo && frac <= hi) mass += prof.j[i];
  }
  return mass;
}

// --- JSON persistence ----------------------------------------------------------

inline nlohmann::ordered_json profile_to_json(const InteractionProfile& prof,
                                              const std::string& config_hash) {
  nlohmann::ordered_json out;
  out["schema"] = "interaction-profile/1";
  out["config_hash"] = config_hash;
  out["n"] = prof.n;
  out["orders"] = prof.orders;
  out["j"] = prof.j;
  out["stderr"] = prof.stderr_;
  out["normalization"] = prof.normalization;
  return out;
}

inline InteractionProfile profile_from_json(const nlohmann::ordered_json& in) {
  InteractionProfile prof;
  try {
    prof.n = in.at("n").get<int>();
    prof.orders = in.at("orders").get<std::vector<int>>();
    prof.j = in.at("j").get<std::vector<double>>();
    prof.stderr_ = in.at("stderr").get<std::vector<double>>();
    prof.normalization = in.at("normalization").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed profile JSON: ") + e.what());
  }
  if (prof.orders.size() != prof.j.size() || prof.orders.size() != prof.stderr_.size()) {
    throw DataError("malformed profile JSON: array lengths differ");
  }
  return prof;
}

}  // namespace mixboost
