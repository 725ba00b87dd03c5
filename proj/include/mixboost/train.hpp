// The boosted training pipeline: augment -> random patch mask -> two forward
// passes -> combined loss
//
//   Loss(r1, lambda) = CE(y, logits) - lambda * L_boost(logits, masked_logits)
//
// where L_boost is the mean Shannon entropy of softmax(logits - masked_logits).
// L_boost is maximal (ln K) exactly when the masked and unmasked outputs agree
// up to a per-example constant, so minimizing the total loss pulls the two
// branches together and penalizes predictions that depend on the masked-out
// (high-order) context.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mixboost/augment.hpp"
#include "mixboost/masking.hpp"
#include "mixboost/nn.hpp"

namespace mixboost {

// Tensor-level boost loss (monitoring and tests); the recorded-graph twin is
// Tape::softmax_entropy(Tape::sub(...)).
inline double boost_loss(const Tensor& logits, const Tensor& masked_logits) {
  require(logits.shape.size() == 2, "boost_loss: logits must be (B,K)");
  require(logits.shape == masked_logits.shape,
          "boost_loss: logit shapes differ: " + shape_str(logits.shape) + " vs " +
              shape_str(masked_logits.shape));
  const std::size_t B = logits.shape[0], K = logits.shape[1];
  double total = 0;
  std::vector<double> logp(K);
  for (std::size_t b = 0; b < B; ++b) {
    double m = -HUGE_VAL;
    for (std::size_t k = 0; k < K; ++k) {
      logp[k] = logits.data[b * K + k] - masked_logits.data[b * K + k];
      m = std::max(m, logp[k]);
    }
    double s = 0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(logp[k] - m);
    const double lse = m + std::log(s);
    double h = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const double lp = logp[k] - lse;
      h -= std::exp(lp) * lp;
    }
    total += h;
  }
  return total / static_cast<double>(B);
}

// Mean cross entropy of logits against a row-stochastic label matrix.
inline double cross_entropy(const Tensor& logits, const std::vector<double>& soft_labels) {
  require(logits.shape.size() == 2, "cross_entropy: logits must be (B,K)");
  const std::size_t B = logits.shape[0], K = logits.shape[1];
  require(soft_labels.size() == B * K, "cross_entropy: label matrix size mismatch");
  double total = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* z = logits.data.data() + b * K;
    double m = z[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, z[k]);
    double s = 0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(z[k] - m);
    const double lse = m + std::log(s);
    for (std::size_t k = 0; k < K; ++k) total -= soft_labels[b * K + k] * (z[k] - lse);
  }
  return total / static_cast<double>(B);
}

inline double cross_entropy(const Tensor& logits, const LabelBatch& labels) {
  return cross_entropy(logits, one_hot(labels));
}

inline double total_loss(const std::vector<double>& soft_labels, const Tensor& logits,
                         const Tensor& masked_logits, double lambda) {
  if (!(lambda >= 0)) throw DataError("total_loss: lambda must be nonnegative");
  return cross_entropy(logits, soft_labels) - lambda * boost_loss(logits, masked_logits);
}

struct TrainConfig {
  double r1 = 0.7;
  double lambda = 1.0;
  AugmentSpec aug;
  int epochs = 30;
  int batch_size = 100;
  double lr0 = 0.05;
  double momentum = 0.9;
  int num_classes = 10;
  int mask_rows = 8;
  int mask_cols = 8;
  std::uint64_t seed = 1;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double ce = 0;
  double l_boost = 0;
  double train_acc = 0;
};

struct TrainResult {
  TinyCnn model;
  std::vector<EpochRecord> log;
};

// One training run. Deterministic: the same (config, data) pair reproduces
// the final parameters bit for bit. With lambda == 0 the mask branch is never
// built or sampled, so the trajectory is the plain no-boost baseline.
inline TrainResult train(const TrainConfig& cfg, const ImageBatch& images,
                         const LabelBatch& labels) {
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be positive");
  if (cfg.batch_size < 2) throw ConfigError("train: batch size must be at least 2");
  if (cfg.r1 < 0.0 || cfg.r1 > 1.0) throw ConfigError("train: r1 must be in [0,1]");
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) {
    throw ConfigError("train: lambda must be finite and nonnegative");
  }
  if (images.size() != labels.size()) throw DataError("train: image/label count mismatch");
  if (images.size() < static_cast<std::size_t>(cfg.batch_size)) {
    throw DataError("train: dataset smaller than one batch");
  }
  if (labels.num_classes != cfg.num_classes) {
    throw DataError("train: label classes do not match config");
  }

  const bool boosted = cfg.lambda > 0.0;
  const std::array<double, 3> fill = channel_means(images);
  MaskSpec mask_spec{cfg.mask_rows, cfg.mask_cols, cfg.r1, fill};

  TinyCnn model = TinyCnn::init(derive_seed(cfg.seed, "init"), cfg.num_classes);
  const std::size_t steps_per_epoch = images.size() / static_cast<std::size_t>(cfg.batch_size);
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.epochs);
  SgdOptimizer opt({cfg.lr0, total_steps, cfg.momentum});

  Rng rng_order(derive_seed(cfg.seed, "order"));
  Rng rng_mask(derive_seed(cfg.seed, "mask"));
  const std::vector<Tensor> mixer_pool =
      cfg.aug.op == AugmentOp::pixmix_style
          ? make_mixer_pool(16, images.data.shape[2], derive_seed(cfg.seed, "mixers"))
          : std::vector<Tensor>{};

  const auto K = static_cast<std::size_t>(cfg.num_classes);
  TrainResult result{std::move(model), {}};
  std::size_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = rng_order.permutation(images.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = opt.schedule().lr(step);
    std::size_t seen = 0, correct = 0;
    double sum_loss = 0, sum_ce = 0, sum_boost = 0;

    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(
                                                       s * static_cast<std::size_t>(cfg.batch_size)),
                                   order.begin() + static_cast<std::ptrdiff_t>(
                                                       (s + 1) * static_cast<std::size_t>(cfg.batch_size)));
      ImageBatch batch = slice(images, idx);
      LabelBatch batch_labels = slice(labels, idx);
      AugmentedBatch aug = apply_augmentation(cfg.aug, batch, batch_labels, fill, mixer_pool,
                                              derive_seed(derive_seed(cfg.seed, "aug"), step));

      Tape tape;
      TinyCnn::ParamNodes params = result.model.add_params(tape);
      Tape::NodeId x_clean = tape.leaf(aug.images.data, false);
      Tape::NodeId logits = result.model.forward(tape, params, x_clean);
      Tape::NodeId ce = tape.cross_entropy(logits, aug.soft_labels);

      Tape::NodeId loss;
      double boost_value = 0;
      if (boosted) {
        std::vector<MaskRealization> masks(batch.size());
        for (auto& m : masks) m = sample_mask(mask_spec, rng_mask);
        ImageBatch masked = apply_mask(aug.images, masks, fill);
        Tape::NodeId x_masked = tape.leaf(masked.data, false);
        Tape::NodeId masked_logits = result.model.forward(tape, params, x_masked);
        Tape::NodeId boost = tape.softmax_entropy(tape.sub(logits, masked_logits));
        boost_value = tape.value(boost).item();
        loss = tape.add_scaled(ce, boost, -cfg.lambda);
      } else {
        loss = ce;
      }

      const double loss_value = tape.value(loss).item();
      if (!std::isfinite(loss_value)) {
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch) + ", step " + std::to_string(step) +
                           " (lr=" + format_double(opt.schedule().lr(step)) + ")");
      }
      tape.backward(loss);

      std::vector<std::vector<double>> grads;
      grads.reserve(params.ids.size());
      for (Tape::NodeId id : params.ids) grads.push_back(tape.grad(id));
      opt.step(result.model, grads, step);

      sum_loss += loss_value;
      sum_ce += tape.value(ce).item();
      sum_boost += boost_value;
      const Tensor& z = tape.value(logits);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k) {
          if (z.data[b * K + k] > z.data[b * K + best]) best = k;
        }
        if (static_cast<int>(best) == batch_labels.labels[b]) ++correct;
        ++seen;
      }
    }

    rec.loss = sum_loss / static_cast<double>(steps_per_epoch);
    rec.ce = sum_ce / static_cast<double>(steps_per_epoch);
    rec.l_boost = sum_boost / static_cast<double>(steps_per_epoch);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    result.log.push_back(rec);
  }
  return result;
}

}  // namespace mixboost
