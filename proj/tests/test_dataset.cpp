#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "mixboost/dataset.hpp"

using namespace mixboost;

TEST(Cifar, ParsesValidRecords) {
  std::vector<unsigned char> bytes;
  for (int rec = 0; rec < 2; ++rec) {
    bytes.push_back(static_cast<unsigned char>(rec + 3));  // labels 3, 4
    for (int p = 0; p < 3072; ++p) bytes.push_back(static_cast<unsigned char>((p + rec) % 256));
  }
  const auto [images, labels] = parse_cifar10_bytes(bytes);
  EXPECT_EQ(images.data.shape, (Shape{2, 3, 32, 32}));
  EXPECT_EQ(labels.labels, (std::vector<int>{3, 4}));
  EXPECT_DOUBLE_EQ(images.data.data[0], 0.0);             // record 0, pixel byte 0
  EXPECT_DOUBLE_EQ(images.data.data[1], 1.0 / 255.0);     // pixel bytes count up
  EXPECT_DOUBLE_EQ(images.data.data[3072], 1.0 / 255.0);  // record 1 pixels start at byte 1
}

TEST(Cifar, RejectsBadLengthAndLabels) {
  std::vector<unsigned char> bytes(3072, 0);  // one byte short of a record
  EXPECT_THROW(parse_cifar10_bytes(bytes), DataError);
  bytes.assign(3073, 0);
  bytes[0] = 10;  // label byte > 9
  EXPECT_THROW(parse_cifar10_bytes(bytes), DataError);
}

TEST(Cifar, WriteThenParseRoundTripsBitExactly) {
  const auto [images, labels] = synth_dataset(10, 3, 99);
  const auto bytes = to_cifar10_bytes(images, labels);
  const auto [parsed_images, parsed_labels] = parse_cifar10_bytes(bytes);
  EXPECT_EQ(parsed_labels.labels, labels.labels);
  // quantization to bytes must be stable across a second round trip
  const auto bytes2 = to_cifar10_bytes(parsed_images, parsed_labels);
  EXPECT_EQ(bytes, bytes2);
}

TEST(Synth, BalancedAndDeterministic) {
  const auto [images, labels] = synth_dataset(10, 100, 7);
  EXPECT_EQ(images.size(), 1000u);
  std::vector<int> counts(10, 0);
  for (int y : labels.labels) ++counts[static_cast<std::size_t>(y)];
  for (int c : counts) EXPECT_EQ(c, 100);
  for (double v : images.data.data) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  const auto [images2, labels2] = synth_dataset(10, 100, 7);
  EXPECT_EQ(images.data.data, images2.data.data);
  const auto [images3, labels3] = synth_dataset(10, 100, 8);
  EXPECT_NE(images.data.data, images3.data.data);
}

TEST(Synth, RejectsDegenerateRequests) {
  EXPECT_THROW(synth_dataset(1, 10, 1), DataError);
  EXPECT_THROW(synth_dataset(10, 0, 1), DataError);
  EXPECT_THROW(synth_dataset(11, 10, 1), DataError);
}

TEST(Synth, NearestCentroidBeatsChanceTwofold) {
  // classes must be visually separable in raw pixel space
  const auto [train_images, train_labels] = synth_dataset(10, 60, 21, "probe-train");
  const auto [test_images, test_labels] = synth_dataset(10, 20, 22, "probe-test");
  const std::size_t dim = train_images.pixels_per_image();
  std::vector<std::vector<double>> centroids(10, std::vector<double>(dim, 0.0));
  std::vector<int> counts(10, 0);
  for (std::size_t i = 0; i < train_images.size(); ++i) {
    const int y = train_labels.labels[i];
    ++counts[static_cast<std::size_t>(y)];
    const double* src = train_images.data.data.data() + i * dim;
    for (std::size_t d = 0; d < dim; ++d) centroids[static_cast<std::size_t>(y)][d] += src[d];
  }
  for (int k = 0; k < 10; ++k) {
    for (double& v : centroids[static_cast<std::size_t>(k)]) v /= counts[static_cast<std::size_t>(k)];
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_images.size(); ++i) {
    const double* src = test_images.data.data.data() + i * dim;
    int best = -1;
    double best_dist = 0;
    for (int k = 0; k < 10; ++k) {
      double dist = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = src[d] - centroids[static_cast<std::size_t>(k)][d];
        dist += diff * diff;
      }
      if (best < 0 || dist < best_dist) {
        best = k;
        best_dist = dist;
      }
    }
    if (best == test_labels.labels[i]) ++correct;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(test_images.size());
  EXPECT_GT(acc, 0.2) << "nearest-centroid accuracy must exceed 2x chance";
}

TEST(Synth, TrainTestIdsAreDisjoint) {
  const auto [train_images, tl] = synth_dataset(10, 10, 1, "train");
  const auto [test_images, sl] = synth_dataset(10, 10, 2, "test");
  std::set<std::string> train_ids(train_images.ids.begin(), train_images.ids.end());
  for (const std::string& id : test_images.ids) EXPECT_FALSE(train_ids.count(id));
}

TEST(Labels, OneHotValidatesRange) {
  LabelBatch labels{{0, 9}, 10};
  const auto q = one_hot(labels);
  EXPECT_DOUBLE_EQ(q[0], 1.0);
  EXPECT_DOUBLE_EQ(q[19], 1.0);
  LabelBatch bad{{0, 10}, 10};
  EXPECT_THROW(one_hot(bad), DataError);
}

TEST(Batches, SliceAndChannelMeans) {
  const auto [images, labels] = synth_dataset(10, 4, 5);
  const auto sub = slice(images, {0, 5, 10});
  EXPECT_EQ(sub.size(), 3u);
  EXPECT_EQ(sub.ids[1], images.ids[5]);
  const auto means = channel_means(images);
  for (double m : means) {
    EXPECT_GT(m, 0.05);
    EXPECT_LT(m, 0.95);
  }
}
