#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mixboost/corruption.hpp"

using namespace mixboost;

namespace {

ImageBatch gray_batch(std::size_t n, double value) {
  ImageBatch b;
  b.data = Tensor({n, 3, 32, 32});
  std::fill(b.data.data.begin(), b.data.data.end(), value);
  for (std::size_t i = 0; i < n; ++i) b.ids.push_back("gray-" + std::to_string(i));
  return b;
}

double mean_abs_deviation(const ImageBatch& a, const ImageBatch& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.numel(); ++i) {
    s += std::fabs(a.data.data[i] - b.data.data[i]);
  }
  return s / static_cast<double>(a.data.numel());
}

}  // namespace

TEST(Corrupt, GaussianSeverity1MatchesFoldedNormalMean) {
  // on a mid-gray image no clamping occurs at sigma = 0.04, so
  // E|out - in| = sigma * sqrt(2/pi)
  const ImageBatch clean = gray_batch(30, 0.5);
  const ImageBatch noisy = corrupt(clean, CorruptionKind::gaussian_noise, 1, 5);
  const double expected = 0.04 * std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(mean_abs_deviation(clean, noisy), expected, 0.1 * expected);
}

TEST(Corrupt, BrightnessShiftsAndClampsUniformImage) {
  const ImageBatch clean = gray_batch(2, 0.5);
  for (int severity = 1; severity <= 3; ++severity) {
    const double delta = 0.1 * severity;
    const ImageBatch out = corrupt(clean, CorruptionKind::brightness, severity, 1);
    for (double v : out.data.data) EXPECT_DOUBLE_EQ(v, 0.5 + delta);
  }
  const ImageBatch bright = gray_batch(1, 0.9);
  const ImageBatch clamped = corrupt(bright, CorruptionKind::brightness, 3, 1);
  for (double v : clamped.data.data) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Corrupt, SeverityThreeExceedsSeverityOneForEveryKind) {
  const auto [images, labels] = synth_dataset(10, 10, 77);
  for (CorruptionKind kind : kAllCorruptions) {
    const double dev1 = mean_abs_deviation(images, corrupt(images, kind, 1, 3));
    const double dev3 = mean_abs_deviation(images, corrupt(images, kind, 3, 3));
    EXPECT_GT(dev3, dev1) << corruption_name(kind);
  }
}

TEST(Corrupt, OutputsStayInUnitRangeAndAreDeterministic) {
  const auto [images, labels] = synth_dataset(10, 5, 13);
  for (CorruptionKind kind : kAllCorruptions) {
    for (int severity = 1; severity <= 3; ++severity) {
      const ImageBatch a = corrupt(images, kind, severity, 11);
      const ImageBatch b = corrupt(images, kind, severity, 11);
      EXPECT_EQ(a.data.data, b.data.data) << corruption_name(kind);
      for (double v : a.data.data) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
    }
  }
}

TEST(Corrupt, RejectsBadSeverityAndKindNames) {
  const ImageBatch clean = gray_batch(1, 0.5);
  EXPECT_THROW(corrupt(clean, CorruptionKind::gaussian_noise, 0, 1), DataError);
  EXPECT_THROW(corrupt(clean, CorruptionKind::gaussian_noise, 4, 1), DataError);
  EXPECT_THROW(parse_corruption("fog"), DataError);
  EXPECT_EQ(parse_corruption("pixelate"), CorruptionKind::pixelate);
}

TEST(Perturb, FrameZeroIsCleanAndScheduleIsDocumented) {
  const auto [images, labels] = synth_dataset(10, 2, 31);
  const Tensor img = images.image(0);

  const PerturbationSequence noise = perturb_sequence(img, "x", PerturbationKind::noise, 6, 9);
  ASSERT_EQ(noise.frames.size(), 6u);
  EXPECT_EQ(noise.frames[0].data, img.data);

  const PerturbationSequence shift =
      perturb_sequence(img, "x", PerturbationKind::translate, 6, 9);
  EXPECT_EQ(shift.frames[0].data, img.data);
  // frame t is shifted right by floor(t * max_shift / T) pixels with edge padding
  for (int t = 1; t < 6; ++t) {
    const std::size_t expected = static_cast<std::size_t>(t * kPerturbMaxShift / 6);
    const Tensor& frame = shift.frames[static_cast<std::size_t>(t)];
    for (std::size_t y = 0; y < 32; ++y) {
      for (std::size_t x = expected; x < 32; ++x) {
        ASSERT_EQ(frame.data[y * 32 + x], img.data[y * 32 + x - expected]);
      }
    }
  }
  EXPECT_THROW(perturb_sequence(img, "x", PerturbationKind::noise, 1, 9), DataError);
}

TEST(Perturb, SuiteAlternatesKindsAndIsDeterministic) {
  const auto [images, labels] = synth_dataset(10, 3, 41);
  const auto suite = make_perturbation_suite(images, 4, 5, 3);
  ASSERT_EQ(suite.size(), 4u);
  EXPECT_EQ(suite[0].kind, PerturbationKind::noise);
  EXPECT_EQ(suite[1].kind, PerturbationKind::translate);
  const auto suite2 = make_perturbation_suite(images, 4, 5, 3);
  for (std::size_t i = 0; i < suite.size(); ++i) {
    for (std::size_t t = 0; t < suite[i].frames.size(); ++t) {
      ASSERT_EQ(suite[i].frames[t].data, suite2[i].frames[t].data);
    }
  }
}

TEST(Ood, DeterministicCountAndRange) {
  const ImageBatch a = synth_ood(100, 3);
  EXPECT_EQ(a.size(), 100u);
  const ImageBatch b = synth_ood(100, 3);
  EXPECT_EQ(a.data.data, b.data.data);
  for (double v : a.data.data) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  EXPECT_THROW(synth_ood(0, 3), DataError);
}

TEST(Ood, PixelHistogramDiffersFromInDistribution) {
  // two-sample Kolmogorov-Smirnov statistic on pixel values
  const auto [images, labels] = synth_dataset(10, 20, 51);
  const ImageBatch ood = synth_ood(200, 7);
  std::vector<double> a(images.data.data.begin(), images.data.data.end());
  std::vector<double> b(ood.data.data.begin(), ood.data.data.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double ks = 0;
  std::size_t ia = 0, ib = 0;
  while (ia < a.size() && ib < b.size()) {
    if (a[ia] <= b[ib]) {
      ++ia;
    } else {
      ++ib;
    }
    const double fa = static_cast<double>(ia) / static_cast<double>(a.size());
    const double fb = static_cast<double>(ib) / static_cast<double>(b.size());
    ks = std::max(ks, std::fabs(fa - fb));
  }
  EXPECT_GT(ks, 0.1);
}
