// Safety and robustness metrics: clean error, mini-mCE, mini-mFR, RMS
// calibration error, PGD adversarial error, max-softmax OOD scores
// (AUROC / FPR@95TPR), and the Wilcoxon signed-rank test.
#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mixboost/autodiff.hpp"
#include "mixboost/corruption.hpp"
#include "mixboost/dataset.hpp"
#include "mixboost/nn.hpp"

namespace mixboost {

// argmax class and max softmax probability per example
struct Prediction {
  int label;
  double confidence;
};

inline std::vector<Prediction> predict(const TinyCnn& model, const Tensor& images) {
  const Tensor logits = model.logits(images);
  const std::size_t B = logits.shape[0], K = logits.shape[1];
  std::vector<Prediction> out;
  out.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    const double* z = logits.data.data() + b * K;
    std::size_t best = 0;
    double m = z[0];
    for (std::size_t k = 1; k < K; ++k) {
      if (z[k] > m) {
        m = z[k];
        best = k;
      }
    }
    double s = 0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(z[k] - m);
    out.push_back({static_cast<int>(best), 1.0 / s});
  }
  return out;
}

// Batched inference to bound peak memory on large evaluation sets.
inline std::vector<Prediction> predict(const TinyCnn& model, const ImageBatch& images,
                                       std::size_t chunk = 256) {
  std::vector<Prediction> out;
  out.reserve(images.size());
  const std::size_t n = images.pixels_per_image();
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    const std::size_t count = std::min(chunk, images.size() - start);
    Tensor part({count, images.data.shape[1], images.data.shape[2], images.data.shape[3]});
    std::copy(images.data.data.begin() + static_cast<std::ptrdiff_t>(start * n),
              images.data.data.begin() + static_cast<std::ptrdiff_t>((start + count) * n),
              part.data.begin());
    for (const Prediction& p : predict(model, part)) out.push_back(p);
  }
  return out;
}

inline double error_rate(const std::vector<Prediction>& preds, const LabelBatch& labels) {
  if (preds.empty()) throw DataError("error_rate: empty prediction set");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].label != labels.labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(preds.size());
}

inline double clean_error(const TinyCnn& model, const ImageBatch& images,
                          const LabelBatch& labels) {
  if (images.size() == 0) throw DataError("clean_error: empty test set");
  return error_rate(predict(model, images), labels);
}

// Unnormalized mean error across (kind, severity) sets.
inline double mini_mce(const TinyCnn& model, const std::vector<CorruptionSet>& sets,
                       const LabelBatch& labels) {
  if (sets.empty()) throw DataError("mini_mce: no corruption sets");
  double sum = 0;
  for (const CorruptionSet& s : sets) sum += error_rate(predict(model, s.images), labels);
  return sum / static_cast<double>(sets.size());
}

// Fraction of adjacent frames whose predicted class changes.
inline double flip_rate(const std::vector<int>& frame_predictions) {
  const std::size_t T = frame_predictions.size();
  if (T < 2) throw DataError("flip_rate: sequence shorter than 2 frames");
  std::size_t flips = 0;
  for (std::size_t t = 1; t < T; ++t) {
    if (frame_predictions[t] != frame_predictions[t - 1]) ++flips;
  }
  return static_cast<double>(flips) / static_cast<double>(T - 1);
}

// Mean over sequences of adjacent-frame prediction flips / (T-1).
inline double mini_mfr(const TinyCnn& model, const std::vector<PerturbationSequence>& sequences) {
  if (sequences.empty()) throw DataError("mini_mfr: no sequences");
  double total = 0;
  for (const PerturbationSequence& seq : sequences) {
    const std::size_t T = seq.frames.size();
    if (T < 2) throw DataError("mini_mfr: sequence shorter than 2 frames");
    Tensor batch({T, 3, seq.frames[0].shape[1], seq.frames[0].shape[2]});
    for (std::size_t t = 0; t < T; ++t) {
      std::copy(seq.frames[t].data.begin(), seq.frames[t].data.end(),
                batch.data.begin() + static_cast<std::ptrdiff_t>(t * seq.frames[t].numel()));
    }
    std::vector<int> labels;
    labels.reserve(T);
    for (const Prediction& p : predict(model, batch)) labels.push_back(p.label);
    total += flip_rate(labels);
  }
  return total / static_cast<double>(sequences.size());
}

// RMS calibration error over equal-mass confidence bins:
// sqrt( sum_b (n_b/N) * (acc_b - conf_b)^2 ).
inline double rms_calibration(const std::vector<double>& confidences,
                              const std::vector<bool>& correctness, int num_bins) {
  if (confidences.empty()) throw DataError("rms_calibration: empty input");
  if (confidences.size() != correctness.size()) {
    throw DataError("rms_calibration: confidence/correctness length mismatch");
  }
  if (num_bins < 1) throw DataError("rms_calibration: need at least one bin");
  for (double c : confidences) {
    if (!(c >= 0.0 && c <= 1.0)) throw DataError("rms_calibration: confidence outside [0,1]");
  }
  const std::size_t n = confidences.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return confidences[a] < confidences[b]; });
  const auto bins = static_cast<std::size_t>(num_bins);
  double sum = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t lo = b * n / bins;
    const std::size_t hi = (b + 1) * n / bins;
    if (hi == lo) continue;
    double conf = 0, acc = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      conf += confidences[idx[i]];
      acc += correctness[idx[i]] ? 1.0 : 0.0;
    }
    const auto cnt = static_cast<double>(hi - lo);
    conf /= cnt;
    acc /= cnt;
    sum += cnt / static_cast<double>(n) * (acc - conf) * (acc - conf);
  }
  return std::sqrt(sum);
}

inline double rms_calibration(const TinyCnn& model, const ImageBatch& images,
                              const LabelBatch& labels, int num_bins) {
  const std::vector<Prediction> preds = predict(model, images);
  std::vector<double> conf(preds.size());
  std::vector<bool> correct(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    conf[i] = preds[i].confidence;
    correct[i] = preds[i].label == labels.labels[i];
  }
  return rms_calibration(conf, correct, num_bins);
}

// --- PGD ---------------------------------------------------------------------

struct PgdConfig {
  double epsilon = 8.0 / 255.0;   // L-inf radius in pixel units
  double step_size = 2.0 / 255.0;
  int num_steps = 10;
  bool random_start = true;
};

// Untargeted L-inf PGD on the cross-entropy:
//   x <- clip_[0,1]( project_eps( x + step * sign(grad_x CE) ) )
// epsilon == 0 returns the input bit-identically.
inline ImageBatch pgd_attack(const TinyCnn& model, const ImageBatch& images,
                             const LabelBatch& labels, const PgdConfig& cfg, std::uint64_t seed) {
  if (cfg.epsilon < 0) throw DataError("pgd: epsilon must be nonnegative");
  if (cfg.num_steps < 1) throw DataError("pgd: need at least one step");
  ImageBatch adv;
  adv.ids = images.ids;
  adv.data = images.data;
  if (cfg.epsilon == 0.0) return adv;

  const std::vector<double> targets = one_hot(labels);
  Rng rng(derive_seed(seed, "pgd"));
  if (cfg.random_start) {
    for (std::size_t i = 0; i < adv.data.numel(); ++i) {
      double v = adv.data.data[i] + rng.uniform(-cfg.epsilon, cfg.epsilon);
      v = std::min(images.data.data[i] + cfg.epsilon, std::max(images.data.data[i] - cfg.epsilon, v));
      adv.data.data[i] = std::min(1.0, std::max(0.0, v));
    }
  }
  for (int step = 0; step < cfg.num_steps; ++step) {
    Tape tape;
    TinyCnn::ParamNodes params{};
    std::size_t pi = 0;
    for (const auto& [name, t] : model.named_params()) params.ids[pi++] = tape.leaf(*t, false);
    const Tape::NodeId x = tape.leaf(adv.data, true);
    const Tape::NodeId logits = model.forward(tape, params, x);
    const Tape::NodeId loss = tape.cross_entropy(logits, targets);
    tape.backward(loss);
    const std::vector<double>& g = tape.grad(x);
    for (std::size_t i = 0; i < adv.data.numel(); ++i) {
      double v = adv.data.data[i] + cfg.step_size * (g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0));
      v = std::min(images.data.data[i] + cfg.epsilon, std::max(images.data.data[i] - cfg.epsilon, v));
      adv.data.data[i] = std::min(1.0, std::max(0.0, v));
    }
  }
  return adv;
}

inline double pgd_error(const TinyCnn& model, const ImageBatch& images, const LabelBatch& labels,
                        const PgdConfig& cfg, std::uint64_t seed) {
  const ImageBatch adv = pgd_attack(model, images, labels, cfg, seed);
  return error_rate(predict(model, adv), labels);
}

// --- OOD detection --------------------------------------------------------------

inline std::vector<double> msp_scores(const TinyCnn& model, const ImageBatch& images) {
  std::vector<double> scores;
  scores.reserve(images.size());
  for (const Prediction& p : predict(model, images)) scores.push_back(p.confidence);
  return scores;
}

// Rank-statistic AUROC with ties counted half. In-distribution is the
// positive class.
inline double auroc(const std::vector<double>& in_scores, const std::vector<double>& ood_scores) {
  if (in_scores.empty() || ood_scores.empty()) throw DataError("auroc: empty score set");
  double wins = 0;
  for (double a : in_scores) {
    for (double b : ood_scores) {
      if (a > b) {
        wins += 1.0;
      } else if (a == b) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(in_scores.size()) * static_cast<double>(ood_scores.size()));
}

// FPR at the highest threshold that accepts at least 95% of in-distribution
// scores (score >= threshold counts as accepted).
inline double fpr_at_95tpr(const std::vector<double>& in_scores,
                           const std::vector<double>& ood_scores) {
  if (in_scores.empty() || ood_scores.empty()) throw DataError("fpr@95tpr: empty score set");
  std::vector<double> sorted = in_scores;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto need = static_cast<std::size_t>(
      std::ceil(0.95 * static_cast<double>(sorted.size()) - 1e-12));
  const double threshold = sorted[std::max<std::size_t>(need, 1) - 1];
  std::size_t fp = 0;
  for (double s : ood_scores) {
    if (s >= threshold) ++fp;
  }
  return static_cast<double>(fp) / static_cast<double>(ood_scores.size());
}

struct OodResult {
  double auroc;
  double fpr_at_95tpr;
};

inline OodResult ood_scores(const TinyCnn& model, const ImageBatch& in_batch,
                            const ImageBatch& ood_batch) {
  if (in_batch.size() == 0 || ood_batch.size() == 0) {
    throw DataError("ood_scores: both batches must be nonempty");
  }
  const std::vector<double> in_s = msp_scores(model, in_batch);
  const std::vector<double> ood_s = msp_scores(model, ood_batch);
  return {auroc(in_s, ood_s), fpr_at_95tpr(in_s, ood_s)};
}

// --- Wilcoxon signed-rank test ---------------------------------------------------

enum class Alternative { two_sided, greater, less };

struct WilcoxonResult {
  double w_plus = 0;
  double w_minus = 0;
  int n_used = 0;  // nonzero differences
  double p_value = 0;
  bool significant = false;
  bool exact = false;
};

namespace detail {

// P(W+ >= threshold) over all 2^n sign assignments of the given ranks.
inline double exact_tail_geq(const std::vector<double>& ranks, double threshold) {
  const std::size_t n = ranks.size();
  std::size_t hits = 0;
  const std::size_t total = std::size_t{1} << n;
  for (std::size_t mask = 0; mask < total; ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) w += ranks[i];
    }
    if (w >= threshold - 1e-12) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace detail

// Zero differences are dropped; tied |differences| get mid-ranks. Exact
// distribution by enumeration for n <= 12, normal approximation (with tie
// correction and continuity correction) above.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs, double alpha = 0.05,
                                           Alternative alt = Alternative::two_sided) {
  std::vector<double> nonzero;
  for (double d : diffs) {
    if (d != 0.0) nonzero.push_back(d);
  }
  if (nonzero.size() < 5) {
    throw DataError("wilcoxon: need at least 5 nonzero paired differences, got " +
                    std::to_string(nonzero.size()));
  }
  const std::size_t n = nonzero.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::fabs(nonzero[a]) < std::fabs(nonzero[b]);
  });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && std::fabs(nonzero[idx[j + 1]]) == std::fabs(nonzero[idx[i]])) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // mid-rank (1-based)
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = mid;
    i = j + 1;
  }

  WilcoxonResult r;
  r.n_used = static_cast<int>(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (nonzero[k] > 0) {
      r.w_plus += ranks[k];
    } else {
      r.w_minus += ranks[k];
    }
  }

  if (n <= 12) {
    r.exact = true;
    const double p_greater = detail::exact_tail_geq(ranks, r.w_plus);
    const double p_less = detail::exact_tail_geq(ranks, r.w_minus);
    switch (alt) {
      case Alternative::greater: r.p_value = p_greater; break;
      case Alternative::less: r.p_value = p_less; break;
      case Alternative::two_sided: r.p_value = std::min(1.0, 2.0 * std::min(p_greater, p_less));
    }
  } else {
    const auto nd = static_cast<double>(n);
    const double mean = nd * (nd + 1.0) / 4.0;
    double tie_term = 0;
    i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && std::fabs(nonzero[idx[j + 1]]) == std::fabs(nonzero[idx[i]])) ++j;
      const auto t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
    const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
    const double sd = std::sqrt(var);
    const double z_greater = (r.w_plus - mean - 0.5) / sd;
    const double z_less = (r.w_minus - mean - 0.5) / sd;
    const double p_greater = 1.0 - detail::normal_cdf(z_greater);
    const double p_less = 1.0 - detail::normal_cdf(z_less);
    switch (alt) {
      case Alternative::greater: r.p_value = p_greater; break;
      case Alternative::less: r.p_value = p_less; break;
      case Alternative::two_sided: r.p_value = std::min(1.0, 2.0 * std::min(p_greater, p_less));
    }
  }
  r.significant = r.p_value < alpha;
  return r;
}

// --- Full report ------------------------------------------------------------------

struct EvalBundle {
  ImageBatch test_images;
  LabelBatch test_labels;
  std::vector<CorruptionSet> corruptions;
  LabelBatch corruption_labels;  // labels of the corruption base subset
  std::vector<PerturbationSequence> sequences;
  ImageBatch ood;
  ImageBatch pgd_images;
  LabelBatch pgd_labels;
  PgdConfig pgd;
  int calibration_bins = 10;
  std::uint64_t seed = 0;
};

struct SafetyReport {
  static constexpr const char* kSchema = "safety-report/1";

  std::optional<double> clean_error, mce, mfr, rms_clean, rms_corrupt, pgd_error, auroc,
      fpr_at_95tpr;
  std::string model_hash;
  std::string dataset_manifest;
  std::uint64_t seed = 0;
  std::vector<std::string> errors;  // per-metric failures, field left empty

  static const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names = {
        "clean_error", "mce",  "mfr",         "rms_clean",
        "rms_corrupt", "pgd_error", "auroc", "fpr_at_95tpr"};
    return names;
  }

  std::optional<double> metric(const std::string& name) const {
    if (name == "clean_error") return clean_error;
    if (name == "mce") return mce;
    if (name == "mfr") return mfr;
    if (name == "rms_clean") return rms_clean;
    if (name == "rms_corrupt") return rms_corrupt;
    if (name == "pgd_error") return pgd_error;
    if (name == "auroc") return auroc;
    if (name == "fpr_at_95tpr") return fpr_at_95tpr;
    throw DataError("unknown metric: " + name);
  }
};

inline nlohmann::ordered_json report_to_json(const SafetyReport& r) {
  nlohmann::ordered_json out;
  out["schema"] = SafetyReport::kSchema;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) {
      out[key] = *v;
    } else {
      out[key] = nullptr;
    }
  };
  put("clean_error", r.clean_error);
  put("mce", r.mce);
  put("mfr", r.mfr);
  put("rms_clean", r.rms_clean);
  put("rms_corrupt", r.rms_corrupt);
  put("pgd_error", r.pgd_error);
  put("auroc", r.auroc);
  put("fpr_at_95tpr", r.fpr_at_95tpr);
  out["model_hash"] = r.model_hash;
  out["dataset_manifest"] = r.dataset_manifest;
  out["seed"] = r.seed;
  out["errors"] = r.errors;
  return out;
}

inline SafetyReport report_from_json(const nlohmann::ordered_json& in) {
  SafetyReport r;
  try {
    if (in.value("schema", "") != SafetyReport::kSchema) {
      throw DataError("report schema mismatch");
    }
    auto get = [&](const char* key) -> std::optional<double> {
      if (!in.contains(key) || in.at(key).is_null()) return std::nullopt;
      return in.at(key).get<double>();
    };
    r.clean_error = get("clean_error");
    r.mce = get("mce");
    r.mfr = get("mfr");
    r.rms_clean = get("rms_clean");
    r.rms_corrupt = get("rms_corrupt");
    r.pgd_error = get("pgd_error");
    r.auroc = get("auroc");
    r.fpr_at_95tpr = get("fpr_at_95tpr");
    r.model_hash = in.value("model_hash", "");
    r.dataset_manifest = in.value("dataset_manifest", "");
    r.seed = in.value("seed", std::uint64_t{0});
    r.errors = in.value("errors", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report JSON: ") + e.what());
  }
  return r;
}

// Assembles every metric; individual failures are recorded and leave the
// field unset instead of aborting the report.
inline SafetyReport full_report(const TinyCnn& model, const EvalBundle& bundle) {
  SafetyReport r;
  r.model_hash = hex64(model.hash());
  r.seed = bundle.seed;
  auto guard = [&](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      r.errors.push_back(std::string(name) + ": " + e.what());
    }
  };
  guard("clean_error",
        [&] { r.clean_error = clean_error(model, bundle.test_images, bundle.test_labels); });
  guard("mce", [&] { r.mce = mini_mce(model, bundle.corruptions, bundle.corruption_labels); });
  guard("mfr", [&] { r.mfr = mini_mfr(model, bundle.sequences); });
  guard("rms_clean", [&] {
    r.rms_clean =
        rms_calibration(model, bundle.test_images, bundle.test_labels, bundle.calibration_bins);
  });
  guard("rms_corrupt", [&] {
    if (bundle.corruptions.empty()) throw DataError("no corruption sets");
    std::vector<double> conf;
    std::vector<bool> correct;
    for (const CorruptionSet& s : bundle.corruptions) {
      const std::vector<Prediction> preds = predict(model, s.images);
      for (std::size_t i = 0; i < preds.size(); ++i) {
        conf.push_back(preds[i].confidence);
        correct.push_back(preds[i].label == bundle.corruption_labels.labels[i]);
      }
    }
    r.rms_corrupt = rms_calibration(conf, correct, bundle.calibration_bins);
  });
  guard("pgd_error", [&] {
    r.pgd_error = pgd_error(model, bundle.pgd_images, bundle.pgd_labels, bundle.pgd,
                            derive_seed(bundle.seed, "pgd"));
  });
  guard("ood", [&] {
    const OodResult ood = ood_scores(model, bundle.test_images, bundle.ood);
    r.auroc = ood.auroc;
    r.fpr_at_95tpr = ood.fpr_at_95tpr;
  });
  return r;
}

}  // namespace mixboost
