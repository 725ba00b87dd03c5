// Fixed small CNN classifier, cosine-schedule SGD, and checkpoint IO.
//
// Architecture (32x32x3 input):
//   conv3x3(3->16) relu pool2 | conv3x3(16->32) relu pool2 |
//   conv3x3(32->128) relu gap | dense(128->K)
// Pixels are standardized inside the forward pass with fixed constants
// (mean 0.5, std 0.25) so every image-space component works in [0,1].
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mixboost/autodiff.hpp"
#include "mixboost/rng.hpp"
#include "mixboost/tensor.hpp"

namespace mixboost {

struct SgdSchedule {
  double lr0 = 0.05;
  std::size_t total_steps = 1;
  double momentum = 0.9;

  // lr(t) = lr0 * 0.5 * (1 + cos(pi * t / total_steps)), valid for
  // 0 <= t <= total_steps.
  double lr(std::size_t t) const {
    if (t > total_steps) {
      throw NumericError("schedule step " + std::to_string(t) + " out of range [0," +
                         std::to_string(total_steps) + "]");
    }
    return lr0 * 0.5 *
           (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) /
                           static_cast<double>(total_steps)));
  }
};

class TinyCnn {
 public:
  static constexpr std::size_t kImageSize = 32;
  static constexpr std::size_t kC1 = 16, kC2 = 32, kC3 = 128;
  static constexpr double kPixelMean = 0.5, kPixelStd = 0.25;
  static constexpr const char* kArchName = "tinycnn-c16-c32-c128";

  // He-normal initialization, deterministic per seed.
  static TinyCnn init(std::uint64_t seed, int num_classes = 10) {
    if (num_classes < 2) throw ConfigError("TinyCnn: need at least 2 classes");
    TinyCnn m;
    m.num_classes_ = num_classes;
    const auto K = static_cast<std::size_t>(num_classes);
    Rng rng(derive_seed(seed, "tinycnn-init"));
    m.w1_ = he_conv(rng, kC1, 3);
    m.b1_ = Tensor({kC1});
    m.w2_ = he_conv(rng, kC2, kC1);
    m.b2_ = Tensor({kC2});
    m.w3_ = he_conv(rng, kC3, kC2);
    m.b3_ = Tensor({kC3});
    m.wd_ = Tensor({K, kC3});
    {
      const double s = std::sqrt(2.0 / static_cast<double>(kC3));
      for (double& v : m.wd_.data) v = rng.normal(0.0, s);
    }
    m.bd_ = Tensor({K});
    return m;
  }

  int num_classes() const { return num_classes_; }

  std::vector<std::pair<std::string, Tensor*>> named_params() {
    return {{"conv1.w", &w1_}, {"conv1.b", &b1_}, {"conv2.w", &w2_}, {"conv2.b", &b2_},
            {"conv3.w", &w3_}, {"conv3.b", &b3_}, {"dense.w", &wd_}, {"dense.b", &bd_}};
  }

  std::vector<std::pair<std::string, const Tensor*>> named_params() const {
    return {{"conv1.w", &w1_}, {"conv1.b", &b1_}, {"conv2.w", &w2_}, {"conv2.b", &b2_},
            {"conv3.w", &w3_}, {"conv3.b", &b3_}, {"dense.w", &wd_}, {"dense.b", &bd_}};
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named_params()) n += t->numel();
    return n;
  }

  // Parameter leaves for one training step. Both forward branches of a step
  // must share these so gradients accumulate in one place.
  struct ParamNodes {
    std::array<Tape::NodeId, 8> ids;
  };

  ParamNodes add_params(Tape& tape) const {
    ParamNodes p{};
    std::size_t i = 0;
    for (const auto& [name, t] : named_params()) p.ids[i++] = tape.leaf(*t, true);
    return p;
  }

  // Recorded forward pass: images (B,3,32,32) in [0,1] -> logits (B,K).
  Tape::NodeId forward(Tape& tape, const ParamNodes& p, Tape::NodeId images) const {
    check_input(tape.value(images));
    Tape::NodeId x = standardize(tape, images);
    x = tape.relu(tape.conv3x3(x, p.ids[0], p.ids[1]));
    x = tape.avg_pool2(x);
    x = tape.relu(tape.conv3x3(x, p.ids[2], p.ids[3]));
    x = tape.avg_pool2(x);
    x = tape.relu(tape.conv3x3(x, p.ids[4], p.ids[5]));
    x = tape.global_avg_pool(x);
    return tape.dense(x, p.ids[6], p.ids[7]);
  }

  // Inference without gradient recording. Builds a private tape, so it is
  // safe to call concurrently against a const model.
  Tensor logits(const Tensor& images) const {
    Tape tape;
    ParamNodes p{};
    std::size_t i = 0;
    for (const auto& [name, t] : named_params()) p.ids[i++] = tape.leaf(*t, false);
    Tape::NodeId out = forward(tape, p, tape.leaf(images, false));
    return tape.value(out);
  }

  std::uint64_t hash() const {
    std::uint64_t h = fnv1a64(kArchName);
    h = fnv1a64(&num_classes_, sizeof(num_classes_), h);
    for (const auto& [name, t] : named_params()) {
      h = fnv1a64(name.data(), name.size(), h);
      h = fnv1a64(t->data.data(), t->data.size() * sizeof(double), h);
    }
    return h;
  }

 private:
  static Tensor he_conv(Rng& rng, std::size_t out_c, std::size_t in_c) {
    Tensor w({out_c, in_c, 3, 3});
    const double s = std::sqrt(2.0 / (static_cast<double>(in_c) * 9.0));
    for (double& v : w.data) v = rng.normal(0.0, s);
    return w;
  }

  static void check_input(const Tensor& images) {
    if (images.shape.size() != 4 || images.shape[1] != 3 || images.shape[2] != kImageSize ||
        images.shape[3] != kImageSize) {
      throw ShapeError("TinyCnn expects input (B,3,32,32), got " + shape_str(images.shape));
    }
  }

  // (x - mean) / std; linear, so PGD input gradients chain through it.
  static Tape::NodeId standardize(Tape& tape, Tape::NodeId images) {
    return tape.affine(images, 1.0 / kPixelStd, -kPixelMean / kPixelStd);
  }

  int num_classes_ = 10;
  Tensor w1_, b1_, w2_, b2_, w3_, b3_, wd_, bd_;
};

// Momentum SGD against the cosine schedule:
//   v <- momentum * v + g;  p <- p - lr(t) * v
class SgdOptimizer {
 public:
  explicit SgdOptimizer(SgdSchedule schedule) : schedule_(schedule) {}

  const SgdSchedule& schedule() const { return schedule_; }

  // `grads` must be ordered like model.named_params().
  void step(TinyCnn& model, const std::vector<std::vector<double>>& grads, std::size_t t) {
    const double lr = schedule_.lr(t);
    auto params = model.named_params();
    if (grads.size() != params.size()) {
      throw ShapeError("sgd step: expected " + std::to_string(params.size()) +
                       " gradient arrays, got " + std::to_string(grads.size()));
    }
    if (velocity_.empty()) {
      velocity_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        velocity_[i].assign(params[i].second->numel(), 0.0);
      }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i].second;
      const std::vector<double>& g = grads[i];
      if (g.size() != p.numel()) throw ShapeError("sgd step: gradient size mismatch");
      std::vector<double>& v = velocity_[i];
      for (std::size_t j = 0; j < g.size(); ++j) {
        v[j] = schedule_.momentum * v[j] + g[j];
        p.data[j] -= lr * v[j];
      }
    }
  }

 private:
  SgdSchedule schedule_;
  std::vector<std::vector<double>> velocity_;
};

// --- Checkpoint container ----------------------------------------------
//
//   bytes 0..7   magic "MBCHKPT1"
//   u32          format version (1)
//   u32          header length H
//   H bytes      header JSON: {"arch", "num_classes", "meta"}
//   u64          tensor count
//   per tensor:  u32 name length, name bytes, u32 ndim, u64 dims[ndim],
//                f64 data[prod(dims)]
// All integers and doubles little-endian.

inline constexpr const char* kCheckpointMagic = "MBCHKPT1";

inline std::vector<unsigned char> serialize_checkpoint(const TinyCnn& model,
                                                       const nlohmann::ordered_json& meta) {
  std::vector<unsigned char> out;
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
  put_u32le(out, 1);
  nlohmann::ordered_json header;
  header["arch"] = TinyCnn::kArchName;
  header["num_classes"] = model.num_classes();
  header["meta"] = meta;
  const std::string hs = header.dump();
  put_u32le(out, static_cast<std::uint32_t>(hs.size()));
  out.insert(out.end(), hs.begin(), hs.end());
  const auto params = model.named_params();
  put_u64le(out, params.size());
  for (const auto& [name, t] : params) {
    put_u32le(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32le(out, static_cast<std::uint32_t>(t->shape.size()));
    for (std::size_t d : t->shape) put_u64le(out, d);
    for (double v : t->data) put_f64le(out, v);
  }
  return out;
}

struct LoadedCheckpoint {
  TinyCnn model;
  nlohmann::ordered_json meta;
};

inline LoadedCheckpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  ByteReader r(bytes.data(), bytes.size());
  if (r.bytes(8) != kCheckpointMagic) throw DataError("checkpoint: bad magic");
  const std::uint32_t version = r.u32le();
  if (version != 1) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t hlen = r.u32le();
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(r.bytes(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header JSON: ") + e.what());
  }
  if (header.value("arch", "") != TinyCnn::kArchName) {
    throw DataError("checkpoint: architecture mismatch: file has '" +
                    header.value("arch", std::string("?")) + "', this build expects '" +
                    TinyCnn::kArchName + "'");
  }
  LoadedCheckpoint out{TinyCnn::init(0, header.value("num_classes", 10)),
                       header.value("meta", nlohmann::ordered_json::object())};
  const std::uint64_t count = r.u64le();
  auto params = out.model.named_params();
  if (count != params.size()) throw DataError("checkpoint: unexpected tensor count");
  for (auto& [name, t] : params) {
    const std::uint32_t nlen = r.u32le();
    const std::string fname = r.bytes(nlen);
    if (fname != name) throw DataError("checkpoint: expected tensor '" + name + "', found '" +
                                       fname + "'");
    const std::uint32_t ndim = r.u32le();
    Shape shape(ndim);
    for (auto& d : shape) d = r.u64le();
    if (shape != t->shape) throw DataError("checkpoint: shape mismatch for '" + name + "'");
    for (double& v : t->data) v = r.f64le();
  }
  if (r.remaining() != 0) throw DataError("checkpoint: trailing bytes");
  return out;
}

inline void save_checkpoint(const std::string& path, const TinyCnn& model,
                            const nlohmann::ordered_json& meta) {
  const auto bytes = serialize_checkpoint(model, meta);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open checkpoint for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("checkpoint write failed: " + path);
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace mixboost
