#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "monofuse/bemd.hpp"
#include "monofuse/cnn.hpp"
#include "monofuse/image.hpp"

namespace monofuse::trainer {

enum class FeatureKind { Amplitude, Phase, Orientation, Fusion, Raw };

std::string to_string(FeatureKind kind);
FeatureKind parse_feature_kind(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t minibatch_size = 12;
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double l2 = 5e-4;
  std::uint64_t seed = 7;

  FeatureKind feature_kind = FeatureKind::Fusion;
  std::size_t imf_index = 0;        // IMF used by amplitude/phase/orientation
  double fusion_fraction = 0.4;     // share of IMFs fused for FeatureKind::Fusion
  bool fusion_weighted = false;

  bemd::SiftConfig sift;
  cnn::PaperModelOptions model;

  std::size_t eval_every = 5;  // epochs between metric checkpoints; the last epoch always counts
  std::size_t threads = 1;     // feature extraction / evaluation workers

  void validate() const;
};

struct Metrics {
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  double accuracy = 0.0;
  double precision = 0.0;  // macro
  double recall = 0.0;     // macro
  double f1 = 0.0;         // from macro precision and recall
  std::size_t total = 0;
};

/// Derives the scores from a confusion matrix. Per-class precision/recall are 0
/// when undefined; F1 is 0 when P+R is 0.
Metrics metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion);

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based across the run
  std::size_t epoch = 0;      // 1-based
  double loss = 0.0;          // mini-batch mean cross-entropy before the update
  std::vector<std::optional<double>> ratios;  // per parameterized layer
};

struct EpochCheckpoint {
  std::size_t epoch = 0;
  Metrics metrics;
};

struct TrainLog {
  std::vector<IterationRecord> iterations;
  std::vector<double> epoch_mean_loss;
  std::vector<EpochCheckpoint> checkpoints;
  std::vector<std::string> layer_names;  // one per ratio column
};

struct TrainResult {
  cnn::CnnModel model;
  TrainLog log;
};

/// Computes one sample's features from a raw image.
GrayImage extract_feature(const GrayImage& raw, const TrainConfig& cfg);

/// All five spectra from a single decomposition of one image.
std::map<FeatureKind, GrayImage> extract_all_features(const GrayImage& raw, const TrainConfig& cfg);

Dataset build_feature_dataset(const Dataset& raw, const TrainConfig& cfg);

/// One decomposition per sample, reused for every requested kind.
std::map<FeatureKind, Dataset> build_feature_datasets(const Dataset& raw, const TrainConfig& cfg,
                                                      std::span<const FeatureKind> kinds);

/// Seeded permutation of [0, count) cut into batches of `size`; the final
/// short batch is kept.
std::vector<std::vector<std::size_t>> make_minibatches(std::size_t count, std::size_t size,
                                                       std::uint64_t seed);
std::vector<std::vector<std::size_t>> make_minibatches(const Dataset& ds, std::size_t size,
                                                       std::uint64_t seed);

/// log10(mean |update| / mean |param|) per parameterized layer (weights and
/// biases pooled). A zero update reports -12; a layer whose parameters are all
/// zero is skipped (nullopt).
std::vector<std::optional<double>> parameter_ratio_log(const cnn::CnnModel& model,
                                                       const std::vector<cnn::Values>& update);

struct StepResult {
  double loss = 0.0;
  std::vector<std::optional<double>> ratios;
};

/// forward, backward and one momentum step on the samples `batch` of `ds`.
StepResult train_step(cnn::CnnModel& model, cnn::OptimizerState& state, const Dataset& ds,
                      std::span<const std::size_t> batch);

/// Mini-batch training. Epoch e (1-based) draws its batch order from seed+e.
/// With `eval_set`, metrics are recorded every cfg.eval_every epochs and at
/// the end.
TrainResult train(cnn::CnnModel model, const Dataset& ds, const TrainConfig& cfg,
                  const Dataset* eval_set = nullptr);

Metrics evaluate(const cnn::CnnModel& model, const Dataset& test, std::size_t threads = 1);

std::vector<std::string> ratio_layer_names(const cnn::CnnModel& model);

}  // namespace monofuse::trainer
