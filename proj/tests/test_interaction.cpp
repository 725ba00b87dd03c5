#include <gtest/gtest.h>

#include <cmath>

#include "mixboost/interaction.hpp"
#include "mixboost/train.hpp"
#include "support.hpp"

using namespace mixboost;
using testsupport::additive_game;
using testsupport::pairwise_game;
using testsupport::random_game;

TEST(DeltaV, AdditiveGameCancelsExactly) {
  const GameFunction g = additive_game({0.5, -1.0, 2.0, 0.25, 1.5});
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      if (i == j) continue;
      EXPECT_EQ(delta_v(g, i, j, 0), 0.0);
    }
  }
  // a couple of nonempty contexts
  EXPECT_EQ(delta_v(g, 0, 1, PlayerSet{0b01100}), 0.0);
}

TEST(DeltaV, PairwiseGameFiresOnlyTheJointTerm) {
  const double c = 3.25;
  const GameFunction g = pairwise_game(6, 1, 4, c);
  for (PlayerSet s : {PlayerSet{0}, PlayerSet{0b100001}, PlayerSet{0b101}}) {
    EXPECT_EQ(delta_v(g, 1, 4, s), c);
  }
}

TEST(DeltaV, MatchesHandExpandedFourTermSum) {
  const GameFunction g = random_game(6, 99);
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int i = static_cast<int>(rng.uniform_int(6));
    int j = static_cast<int>(rng.uniform_int(6));
    if (j == i) j = (j + 1) % 6;
    PlayerSet s = 0;
    for (int p = 0; p < 6; ++p) {
      if (p != i && p != j && rng.uniform() < 0.5) s |= PlayerSet{1} << p;
    }
    const PlayerSet bi = PlayerSet{1} << i, bj = PlayerSet{1} << j;
    const double expanded =
        g.eval(s | bi | bj) - g.eval(s | bi) - g.eval(s | bj) + g.eval(s);
    EXPECT_EQ(delta_v(g, i, j, s), expanded);
  }
}

TEST(DeltaV, RejectsContextsContainingThePair) {
  const GameFunction g = random_game(4, 5);
  EXPECT_THROW(delta_v(g, 0, 1, PlayerSet{0b0001}), DataError);
  EXPECT_THROW(delta_v(g, 0, 1, PlayerSet{0b0010}), DataError);
  EXPECT_THROW(delta_v(g, 2, 2, PlayerSet{0}), DataError);
}

TEST(BruteForce, PairwiseAndSingleContextCases) {
  const double c = 1.75;
  const GameFunction pw = pairwise_game(7, 0, 3, c);
  for (int m = 0; m <= 5; ++m) EXPECT_EQ(interaction_bruteforce(pw, m, 0, 3), c);

  const GameFunction g = random_game(4, 17);
  // m = 0 has the single context S = {}
  EXPECT_EQ(interaction_bruteforce(g, 0, 1, 2), delta_v(g, 1, 2, 0));
  EXPECT_THROW(interaction_bruteforce(g, 3, 0, 1), DataError);  // m > n-2
}

TEST(BruteForce, MatchesAnIndependentEnumeratorOnRandomGames) {
  // second enumerator: loop over all subsets of N and filter
  auto reference = [](const GameFunction& g, int m, int i, int j) {
    const PlayerSet bi = PlayerSet{1} << i, bj = PlayerSet{1} << j;
    double sum = 0;
    std::uint64_t count = 0;
    for (PlayerSet s = 0; s < (PlayerSet{1} << g.n); ++s) {
      if ((s & bi) || (s & bj)) continue;
      int size = 0;
      for (int p = 0; p < g.n; ++p) {
        if (s & (PlayerSet{1} << p)) ++size;
      }
      if (size != m) continue;
      sum += g.eval(s | bi | bj) - g.eval(s | bi) - g.eval(s | bj) + g.eval(s);
      ++count;
    }
    return sum / static_cast<double>(count);
  };
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4 + trial % 4;
    const GameFunction g = random_game(n, derive_seed(500, trial));
    Rng rng(trial);
    const int i = static_cast<int>(rng.uniform_int(n));
    int j = static_cast<int>(rng.uniform_int(n));
    if (j == i) j = (j + 1) % n;
    for (int m = 0; m <= n - 2; ++m) {
      EXPECT_NEAR(interaction_bruteforce(g, m, i, j), reference(g, m, i, j), 1e-12)
          << "n=" << n << " m=" << m;
    }
  }
}

TEST(MonteCarlo, ExhaustiveBudgetEqualsBruteForce) {
  const GameFunction g = random_game(8, 1234);
  for (int m = 0; m <= 6; ++m) {
    double mean_abs = 0, mean_signed = 0;
    int pairs = 0;
    for (int i = 0; i < 8; ++i) {
      for (int j = i + 1; j < 8; ++j) {
        const double v = interaction_bruteforce(g, m, i, j);
        mean_abs += std::fabs(v);
        mean_signed += v;
        ++pairs;
      }
    }
    const InteractionEstimate est = interaction_mc(g, m, 1 << 20, 1 << 20, 9);
    EXPECT_TRUE(est.exhaustive);
    EXPECT_NEAR(est.value, mean_abs / pairs, 1e-9);
    EXPECT_NEAR(est.signed_mean, mean_signed / pairs, 1e-9);
    EXPECT_EQ(est.stderr_, 0.0);
  }
}

TEST(MonteCarlo, ConstantAndZeroGamesAreExactEvenWhenSampled) {
  const GameFunction pw = pairwise_game(10, 2, 7, 2.5);
  const InteractionEstimate pw_only_pair = interaction_mc(pw, 3, 5, 45, 3);
  // all pairs included: only (2,7) contributes |I| = 2.5
  EXPECT_NEAR(pw_only_pair.value, 2.5 / 45.0, 1e-12);
  EXPECT_EQ(pw_only_pair.stderr_, 0.0);  // dv is constant per pair

  const GameFunction add = additive_game({1, 2, 3, 4, 5, 6, 7, 8});
  const InteractionEstimate zero = interaction_mc(add, 3, 6, 10, 4);
  EXPECT_EQ(zero.value, 0.0);
  EXPECT_EQ(zero.stderr_, 0.0);
}

TEST(MonteCarlo, DeterministicPerSeedAndValidatesArgs) {
  const GameFunction g = random_game(9, 77);
  const InteractionEstimate a = interaction_mc(g, 4, 10, 8, 5);
  const InteractionEstimate b = interaction_mc(g, 4, 10, 8, 5);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.stderr_, b.stderr_);
  const InteractionEstimate c = interaction_mc(g, 4, 10, 8, 6);
  EXPECT_NE(a.value, c.value);
  EXPECT_THROW(interaction_mc(g, 8, 10, 8, 5), DataError);
  EXPECT_THROW(interaction_mc(g, 4, 0, 8, 5), DataError);
}

TEST(MonteCarlo, StderrShrinksAsRootContexts) {
  // log-log slope of stderr vs context count on a fixed random game;
  // C(12,6) = 924 keeps every budget point genuinely sampled
  const GameFunction g = random_game(14, 4242);
  std::vector<double> log_c, log_se;
  for (std::size_t contexts : {8u, 32u, 128u, 512u}) {
    // average stderr over replicates to smooth the estimate of the estimate
    double se = 0;
    const int reps = 6;
    for (int r = 0; r < reps; ++r) {
      se += interaction_mc(g, 6, contexts, 20, derive_seed(10, static_cast<std::uint64_t>(r)))
                .stderr_;
    }
    log_c.push_back(std::log(static_cast<double>(contexts)));
    log_se.push_back(std::log(se / reps));
  }
  // least-squares slope
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < log_c.size(); ++i) {
    mx += log_c[i];
    my += log_se[i];
  }
  mx /= static_cast<double>(log_c.size());
  my /= static_cast<double>(log_c.size());
  double num = 0, den = 0;
  for (std::size_t i = 0; i < log_c.size(); ++i) {
    num += (log_c[i] - mx) * (log_se[i] - my);
    den += (log_c[i] - mx) * (log_c[i] - mx);
  }
  const double slope = -num / den;
  EXPECT_GE(slope, 0.4);
  EXPECT_LE(slope, 0.6);
}

TEST(Decomposition, KnownGames) {
  EXPECT_LT(decomposition_check(additive_game({1.0, -2.0, 0.5, 3.0, 0.1})), 1e-12);
  EXPECT_LT(decomposition_check(pairwise_game(4, 1, 3, 4.0)), 1e-12);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4 + trial % 5;
    EXPECT_LT(decomposition_check(random_game(n, derive_seed(900, trial))), 1e-9) << n;
  }
  GameFunction big = random_game(11, 1);
  EXPECT_THROW(decomposition_check(big), DataError);
}

TEST(ModelGame, MaskingConventionAndDeterminism) {
  const auto [images, labels] = synth_dataset(10, 2, 8);
  const TinyCnn model = TinyCnn::init(21, 10);
  PlayerGrid grid{4, 4, channel_means(images)};
  const Tensor img = images.image(0);
  const GameFunction game = model_game(model, img, labels.labels[0], grid);
  EXPECT_EQ(game.n, 16);

  const PlayerSet full = (PlayerSet{1} << 16) - 1;
  const double v_full = game.eval(full);
  const double v_empty = game.eval(0);
  EXPECT_TRUE(std::isfinite(v_full));
  EXPECT_TRUE(std::isfinite(v_empty));
  EXPECT_EQ(game.eval(0b1010101), game.eval(0b1010101));

  // batched and single evaluations agree
  const auto batch = game.evaluate({full, 0, 0b1100});
  EXPECT_NEAR(batch[0], v_full, 1e-12);
  EXPECT_NEAR(batch[1], v_empty, 1e-12);
  EXPECT_NEAR(batch[2], game.eval(0b1100), 1e-12);
}

TEST(Profile, FlatUnderConstantInteractionAndScaleInvariant) {
  // profile() is model-bound; exercise the normalization path directly
  InteractionProfile prof;
  prof.n = 16;
  prof.orders = {1, 4, 8, 12, 14};
  prof.j = {2.0, 2.0, 2.0, 2.0, 2.0};
  // mean-normalization is part of profile(); here verify proxy handles
  // flatness and band accounting
  EXPECT_THROW(proxy_m(prof, {}), NumericError);
  EXPECT_NEAR(band_mass(prof, 0.3, 0.7), 2.0, 1e-12);  // only order 8 (0.5n) is in band
}

TEST(Profile, TrainedAndUntrainedModelsDiffer) {
  const auto [images, labels] = synth_dataset(10, 30, 61);
  TrainConfig cfg;
  cfg.lambda = 0;
  cfg.epochs = 3;
  cfg.batch_size = 50;
  cfg.seed = 5;
  const TrainResult trained = train(cfg, images, labels);
  const TinyCnn untrained = TinyCnn::init(999, 10);

  PlayerGrid grid{4, 4, channel_means(images)};
  const auto idx = std::vector<std::size_t>{0, 1, 2};
  const ImageBatch sample = slice(images, idx);
  const LabelBatch sample_labels = slice(labels, idx);
  const std::vector<int> orders = {1, 4, 7, 10, 13};
  const ProfileBudget budget{4, 4};
  const InteractionProfile a =
      profile(trained.model, sample, sample_labels, grid, orders, budget, 3);
  const InteractionProfile b = profile(untrained, sample, sample_labels, grid, orders, budget, 3);
  ASSERT_EQ(a.j.size(), b.j.size());
  double l1 = 0, mean_a = 0;
  for (std::size_t i = 0; i < a.j.size(); ++i) {
    l1 += std::fabs(a.j[i] - b.j[i]);
    mean_a += a.j[i];
  }
  EXPECT_GT(l1, 0.0);
  EXPECT_NEAR(mean_a / static_cast<double>(a.j.size()), 1.0, 1e-9);  // normalization contract
}

TEST(Proxy, HandCaseAndMonotonicity) {
  InteractionProfile prof;
  prof.n = 10;
  prof.orders = {0, 1, 2, 3, 4, 5, 6, 7, 8};
  prof.j = {0.5, 0.3, 0.2, 0.2, 0.2, 0.2, 0.2, 0.1, 0.1};
  prof.stderr_.assign(9, 0.0);
  const double m = proxy_m(prof, {0.2, 0.2, 0.8});
  EXPECT_NEAR(m, std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(m, 1.7321, 5e-5);

  // raising a mid-band order (outside the low band and away from max/min)
  InteractionProfile raised = prof;
  raised.j[5] += 0.05;
  EXPECT_GT(proxy_m(raised, {0.2, 0.2, 0.8}), m);

  EXPECT_THROW(proxy_m(prof, {0.5, 0.4, 0.8}), DataError);  // a <= b violated
}

TEST(Proxy, NearestGridPointMappingCoversGaps) {
  InteractionProfile prof;
  prof.n = 10;
  prof.orders = {0, 4, 8};
  prof.j = {0.6, 0.25, 0.15};
  // orders 2..8 map to nearest of {0,4,8}: 2->0 or 4 (distance ties keep the
  // first, i.e. 0), 3..5 -> 4, 6 -> 4 or 8 (first: 4 at distance 2), 7,8 -> 8
  const double numer = prof.j[0] + 3 * prof.j[1] + prof.j[1] + 2 * prof.j[2];
  const double denom = 3 * prof.j[0];  // m = 0, 1, 2 all map to order 0 (distance ties keep the first)
  const double expected = std::sqrt(numer / denom / (0.6 - 0.15));
  EXPECT_NEAR(proxy_m(prof, {0.2, 0.2, 0.8}), expected, 1e-12);
}
