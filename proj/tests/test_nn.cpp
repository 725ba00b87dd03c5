#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <thread>

#include "mixboost/nn.hpp"
#include "support.hpp"

using namespace mixboost;

namespace {

Tensor forward_reference(const TinyCnn& model, const Tensor& images) {
  // straight-line forward pass, no tape, no GEMM
  Tensor x(images.shape);
  for (std::size_t i = 0; i < images.numel(); ++i) {
    x.data[i] = (images.data[i] - TinyCnn::kPixelMean) / TinyCnn::kPixelStd;
  }
  auto params = model.named_params();
  const Tensor& w1 = *params[0].second;
  const Tensor& b1 = *params[1].second;
  const Tensor& w2 = *params[2].second;
  const Tensor& b2 = *params[3].second;
  const Tensor& w3 = *params[4].second;
  const Tensor& b3 = *params[5].second;
  const Tensor& wd = *params[6].second;
  const Tensor& bd = *params[7].second;
  x = testsupport::ref_avg_pool2(testsupport::ref_relu(testsupport::ref_conv3x3(x, w1, b1)));
  x = testsupport::ref_avg_pool2(testsupport::ref_relu(testsupport::ref_conv3x3(x, w2, b2)));
  x = testsupport::ref_global_avg_pool(testsupport::ref_relu(testsupport::ref_conv3x3(x, w3, b3)));
  return testsupport::ref_dense(x, wd, bd);
}

}  // namespace

TEST(SgdSchedule, CosineEndpoints) {
  SgdSchedule s{0.05, 100, 0.9};
  EXPECT_DOUBLE_EQ(s.lr(0), 0.05);
  EXPECT_NEAR(s.lr(50), 0.025, 1e-15);
  EXPECT_NEAR(s.lr(100), 0.0, 1e-15);
  EXPECT_THROW(s.lr(101), NumericError);
}

TEST(TinyCnn, ZeroParametersGiveUniformSoftmax) {
  TinyCnn model = TinyCnn::init(1, 10);
  for (auto& [name, t] : model.named_params()) std::fill(t->data.begin(), t->data.end(), 0.0);
  Rng rng(3);
  const Tensor images = testsupport::random_tensor({4, 3, 32, 32}, rng, 0.0, 1.0);
  const Tensor logits = model.logits(images);
  ASSERT_EQ(logits.shape, (Shape{4, 10}));
  for (double v : logits.data) EXPECT_EQ(v, 0.0);
}

TEST(TinyCnn, LogitShapeContract) {
  const TinyCnn model = TinyCnn::init(2, 10);
  Rng rng(4);
  const Tensor images = testsupport::random_tensor({4, 3, 32, 32}, rng, 0.0, 1.0);
  EXPECT_EQ(model.logits(images).shape, (Shape{4, 10}));
  const Tensor bad = testsupport::random_tensor({4, 3, 16, 16}, rng, 0.0, 1.0);
  EXPECT_THROW(model.logits(bad), ShapeError);
}

TEST(TinyCnn, ForwardMatchesIndependentReference) {
  const TinyCnn model = TinyCnn::init(17, 10);
  Rng rng(5);
  const Tensor images = testsupport::random_tensor({3, 3, 32, 32}, rng, 0.0, 1.0);
  const Tensor got = model.logits(images);
  const Tensor ref = forward_reference(model, images);
  ASSERT_EQ(got.shape, ref.shape);
  for (std::size_t i = 0; i < ref.numel(); ++i) {
    EXPECT_NEAR(got.data[i], ref.data[i], 1e-9) << "logit " << i;
  }
}

TEST(TinyCnn, ParameterCountIsFixed) {
  const TinyCnn model = TinyCnn::init(8, 10);
  // conv1 3->16, conv2 16->32, conv3 32->128, dense 128->10
  const std::size_t expected = (16 * 3 * 9 + 16) + (32 * 16 * 9 + 32) + (128 * 32 * 9 + 128) +
                               (10 * 128 + 10);
  EXPECT_EQ(model.param_count(), expected);
  EXPECT_EQ(TinyCnn::init(9, 10).param_count(), expected);
}

TEST(TinyCnn, InitIsDeterministicPerSeed) {
  const TinyCnn a = TinyCnn::init(123, 10);
  const TinyCnn b = TinyCnn::init(123, 10);
  const TinyCnn c = TinyCnn::init(124, 10);
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
}

TEST(Sgd, StepFollowsScheduleAndMomentum) {
  TinyCnn model = TinyCnn::init(3, 10);
  auto params = model.named_params();
  const double before = params[0].second->data[0];
  SgdOptimizer opt({0.1, 10, 0.5});
  std::vector<std::vector<double>> grads;
  for (auto& [name, t] : params) grads.emplace_back(t->numel(), 1.0);
  opt.step(model, grads, 0);
  // v = 1, lr(0) = 0.1
  EXPECT_NEAR(model.named_params()[0].second->data[0], before - 0.1, 1e-15);
  opt.step(model, grads, 10);  // lr(total)=0 leaves parameters unchanged
  EXPECT_NEAR(model.named_params()[0].second->data[0], before - 0.1, 1e-15);
  EXPECT_THROW(opt.step(model, grads, 11), NumericError);
}

TEST(Checkpoint, RoundTripsBitExactly) {
  const TinyCnn model = TinyCnn::init(55, 10);
  nlohmann::ordered_json meta;
  meta["note"] = "test";
  const auto bytes = serialize_checkpoint(model, meta);
  const LoadedCheckpoint loaded = deserialize_checkpoint(bytes);
  EXPECT_EQ(loaded.model.hash(), model.hash());
  EXPECT_EQ(loaded.meta.at("note"), "test");
  const auto bytes2 = serialize_checkpoint(loaded.model, loaded.meta);
  EXPECT_EQ(bytes, bytes2);
}

TEST(Checkpoint, RejectsCorruptContainers) {
  const TinyCnn model = TinyCnn::init(56, 10);
  auto bytes = serialize_checkpoint(model, {});
  auto truncated = bytes;
  truncated.resize(truncated.size() / 2);
  EXPECT_THROW(deserialize_checkpoint(truncated), DataError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), DataError);
}

TEST(Checkpoint, FileRoundTrip) {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "mixboost_ckpt_test.bin";
  const TinyCnn model = TinyCnn::init(57, 10);
  save_checkpoint(path.string(), model, {{"seed", 57}});
  const LoadedCheckpoint loaded = load_checkpoint(path.string());
  EXPECT_EQ(loaded.model.hash(), model.hash());
  fs::remove(path);
}

TEST(TinyCnn, InferenceIsThreadSafeOnConstModel) {
  const TinyCnn model = TinyCnn::init(58, 10);
  Rng rng(6);
  const Tensor images = testsupport::random_tensor({2, 3, 32, 32}, rng, 0.0, 1.0);
  const Tensor expected = model.logits(images);
  std::vector<std::thread> workers;
  std::vector<int> ok(4, 0);
  for (int w = 0; w < 4; ++w) {
    workers.emplace_back([&, w] {
      for (int rep = 0; rep < 5; ++rep) {
        const Tensor got = model.logits(images);
        if (got.data == expected.data) ok[static_cast<std::size_t>(w)] = 1;
      }
    });
  }
  for (auto& t : workers) t.join();
  for (int v : ok) EXPECT_EQ(v, 1);
}
