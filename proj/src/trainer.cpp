#include "monofuse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <utility>

#include "monofuse/fusion.hpp"
#include "monofuse/imageio.hpp"
#include "monofuse/monogenic.hpp"
#include "parallel_for.hpp"

namespace monofuse::trainer {

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::Amplitude: return "amplitude";
    case FeatureKind::Phase: return "phase";
    case FeatureKind::Orientation: return "orientation";
    case FeatureKind::Fusion: return "fusion";
    case FeatureKind::Raw: return "raw";
  }
  return "unknown";
}

FeatureKind parse_feature_kind(const std::string& name) {
  for (auto k : {FeatureKind::Amplitude, FeatureKind::Phase, FeatureKind::Orientation,
                 FeatureKind::Fusion, FeatureKind::Raw})
    if (to_string(k) == name) return k;
  throw Error(Errc::InvalidArgument, "unknown feature kind '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(Errc::InvalidArgument, "epochs must be >= 1");
  if (minibatch_size < 1) throw Error(Errc::InvalidArgument, "minibatch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw Error(Errc::InvalidArgument, "learning_rate must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(Errc::InvalidArgument, "momentum must lie in [0,1)");
  if (!(l2 >= 0.0)) throw Error(Errc::InvalidArgument, "l2 must be >= 0");
  if (!(fusion_fraction > 0.0 && fusion_fraction <= 1.0))
    throw Error(Errc::InvalidArgument, "fusion_fraction must lie in (0,1]");
  if (eval_every < 1) throw Error(Errc::InvalidArgument, "eval_every must be >= 1");
  sift.validate();
}

namespace {

struct Ratio {
  using I = unsigned __int128;
  I num = 0, den = 1;
  Ratio() = default;
  Ratio(I n, I d) : num(n), den(d) { reduce(); }
  void reduce() {
    I a = num, b = den;
    while (b) a = std::exchange(b, a % b);
    if (a > 1) num /= a, den /= a;
  }
  friend Ratio operator+(const Ratio& a, const Ratio& b) { return {a.num * b.den + b.num * a.den, a.den * b.den}; }
  friend Ratio operator*(const Ratio& a, const Ratio& b) { return {a.num * b.num, a.den * b.den}; }
  friend Ratio operator/(const Ratio& a, const Ratio& b) { return {a.num * b.den, a.den * b.num}; }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

}  // namespace

Metrics metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion) {
  Metrics m;
  const std::size_t k = confusion.size();
  for (const auto& row : confusion)
    if (row.size() != k) throw Error(Errc::InvalidArgument, "confusion matrix must be square");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < k; ++i) {
    correct += confusion[i][i];
    for (std::size_t j = 0; j < k; ++j) m.total += confusion[i][j];
  }
  if (m.total == 0) throw Error(Errc::EmptyDataset, "confusion matrix is empty");
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);
  // Macro averages are accumulated as exact fractions and rounded once.
  Ratio p_sum, r_sum;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t i = 0; i < k; ++i) {
      predicted += confusion[i][c];
      actual += confusion[c][i];
    }
    if (predicted) p_sum = p_sum + Ratio(confusion[c][c], predicted);
    if (actual) r_sum = r_sum + Ratio(confusion[c][c], actual);
  }
  const Ratio p = p_sum / Ratio(k, 1), r = r_sum / Ratio(k, 1);
  m.precision = p.value();
  m.recall = r.value();
  const Ratio pr = p + r;
  m.f1 = pr.num ? (Ratio(2, 1) * p * r / pr).value() : 0.0;
  m.confusion = std::move(confusion);
  return m;
}

namespace {

GrayImage normalized_or_raw(const GrayImage& raw) {
  try {
    return imageio::normalize(raw);
  } catch (const Error& e) {
    if (e.code() != Errc::ZeroVariance) throw;
    return raw;
  }
}

GrayImage scale_by(const GrayImage& img, double factor) {
  GrayImage out = img;
  for (auto& v : out.pixels()) v *= factor;
  return out;
}

GrayImage unit_amplitude(const GrayImage& amplitude) {
  const double hi = *std::max_element(amplitude.pixels().begin(), amplitude.pixels().end());
  return hi > 0.0 ? scale_by(amplitude, 1.0 / hi) : amplitude;
}

GrayImage unit_orientation(const monogenic::MonogenicComponents& mc) {
  GrayImage out(mc.orientation.rows(), mc.orientation.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.pixels()[i] = mc.valid_mask[i] ? mc.orientation.pixels()[i] / std::numbers::pi : 0.0;
  return out;
}

bool needs_decomposition(std::span<const FeatureKind> kinds) {
  return std::any_of(kinds.begin(), kinds.end(), [](FeatureKind k) { return k != FeatureKind::Raw; });
}

std::map<FeatureKind, GrayImage> features_for(const GrayImage& raw, const TrainConfig& cfg,
                                              std::span<const FeatureKind> kinds) {
  std::map<FeatureKind, GrayImage> out;
  GrayImage base = normalized_or_raw(raw);
  if (!needs_decomposition(kinds)) {
    out[FeatureKind::Raw] = std::move(base);
    return out;
  }
  const bemd::ImfStack stack = bemd::decompose(base, cfg.sift);
  std::optional<monogenic::MonogenicComponents> single;
  for (FeatureKind k : kinds) {
    switch (k) {
      case FeatureKind::Raw: out[k] = base; break;
      case FeatureKind::Amplitude:
      case FeatureKind::Phase:
      case FeatureKind::Orientation: {
        if (cfg.imf_index >= stack.imfs.size())
          throw Error(Errc::InvalidArgument, "decomposition produced " + std::to_string(stack.imfs.size()) +
                                                 " IMFs; IMF " + std::to_string(cfg.imf_index) + " requested");
        if (!single) single = monogenic::monogenic_components(stack.imfs[cfg.imf_index]);
        if (k == FeatureKind::Amplitude) out[k] = unit_amplitude(single->amplitude);
        else if (k == FeatureKind::Phase) out[k] = scale_by(single->phase, 1.0 / std::numbers::pi);
        else out[k] = unit_orientation(*single);
        break;
      }
      case FeatureKind::Fusion: {
        if (stack.imfs.empty()) throw Error(Errc::InvalidArgument, "decomposition produced no IMFs to fuse");
        std::vector<monogenic::MonogenicComponents> comps;
        for (const auto& imf : fusion::select_top_imfs(stack, cfg.fusion_fraction))
          comps.push_back(monogenic::monogenic_components(imf));
        const auto fused = fusion::fuse_orientations(comps, {cfg.fusion_weighted});
        out[k] = fusion::encode_unit_range(fused);
        break;
      }
    }
  }
  return out;
}

constexpr FeatureKind kAllKinds[] = {FeatureKind::Amplitude, FeatureKind::Phase, FeatureKind::Orientation,
                                     FeatureKind::Fusion, FeatureKind::Raw};

std::vector<cnn::Tensor> gather(const Dataset& ds, std::span<const std::size_t> idx,
                                std::vector<std::size_t>& labels) {
  std::vector<cnn::Tensor> batch;
  batch.reserve(idx.size());
  labels.clear();
  for (std::size_t i : idx) {
    batch.push_back(cnn::Tensor::from_image(ds.samples.at(i).image));
    labels.push_back(ds.samples[i].label);
  }
  return batch;
}

}  // namespace

GrayImage extract_feature(const GrayImage& raw, const TrainConfig& cfg) {
  const FeatureKind kinds[] = {cfg.feature_kind};
  return std::move(features_for(raw, cfg, kinds).at(cfg.feature_kind));
}

std::map<FeatureKind, GrayImage> extract_all_features(const GrayImage& raw, const TrainConfig& cfg) {
  return features_for(raw, cfg, kAllKinds);
}

std::map<FeatureKind, Dataset> build_feature_datasets(const Dataset& raw, const TrainConfig& cfg,
                                                      std::span<const FeatureKind> kinds) {
  raw.validate();
  cfg.sift.validate();
  std::vector<std::map<FeatureKind, GrayImage>> per_sample(raw.size());
  detail::parallel_for(raw.size(), cfg.threads, [&](std::size_t i) {
    try {
      per_sample[i] = features_for(raw.samples[i].image, cfg, kinds);
    } catch (const Error& e) {
      throw Error(e.code(), "sample " + std::to_string(i) + " (label " +
                                std::to_string(raw.samples[i].label) + "): " + e.what());
    }
  });
  std::map<FeatureKind, Dataset> out;
  for (FeatureKind k : kinds) {
    Dataset ds;
    ds.num_classes = raw.num_classes;
    ds.split = raw.split;
    ds.class_names = raw.class_names;
    ds.samples.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
      ds.samples.push_back({per_sample[i].at(k), raw.samples[i].label});
    out.emplace(k, std::move(ds));
  }
  return out;
}

Dataset build_feature_dataset(const Dataset& raw, const TrainConfig& cfg) {
  const FeatureKind kinds[] = {cfg.feature_kind};
  return std::move(build_feature_datasets(raw, cfg, kinds).at(cfg.feature_kind));
}

std::vector<std::vector<std::size_t>> make_minibatches(std::size_t count, std::size_t size,
                                                       std::uint64_t seed) {
  if (count == 0) throw Error(Errc::EmptyDataset, "cannot batch an empty dataset");
  if (size == 0) throw Error(Errc::InvalidArgument, "batch size must be >= 1");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = count - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t lo = 0; lo < count; lo += size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(lo),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, lo + size)));
  return batches;
}

std::vector<std::vector<std::size_t>> make_minibatches(const Dataset& ds, std::size_t size,
                                                       std::uint64_t seed) {
  return make_minibatches(ds.size(), size, seed);
}

std::vector<std::optional<double>> parameter_ratio_log(const cnn::CnnModel& model,
                                                       const std::vector<cnn::Values>& update) {
  const auto params = model.params();
  if (update.size() != params.size()) throw Error(Errc::ShapeMismatch, "update count does not match model");
  std::vector<std::optional<double>> out;
  for (std::size_t layer : model.parameterized_layers()) {
    double sum_u = 0.0, sum_p = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].layer != layer) continue;
      if (update[i].size() != params[i].values.size())
        throw Error(Errc::ShapeMismatch, "update shape does not match parameter");
      for (std::size_t j = 0; j < update[i].size(); ++j) {
        sum_u += std::abs(update[i][j]);
        sum_p += std::abs(params[i].values[j]);
      }
    }
    if (sum_p == 0.0) {
      out.emplace_back(std::nullopt);
    } else if (sum_u == 0.0) {
      out.emplace_back(-12.0);
    } else {
      // Both means share the element count, so it cancels.
      out.emplace_back(std::max(-12.0, std::log10(sum_u / sum_p)));
    }
  }
  return out;
}

std::vector<std::string> ratio_layer_names(const cnn::CnnModel& model) {
  std::vector<std::string> names;
  for (std::size_t layer : model.parameterized_layers())
    names.push_back(cnn::layer_name(model.layers()[layer]) + std::to_string(layer));
  return names;
}

StepResult train_step(cnn::CnnModel& model, cnn::OptimizerState& state, const Dataset& ds,
                      std::span<const std::size_t> batch) {
  std::vector<std::size_t> labels;
  const auto inputs = gather(ds, batch, labels);
  const auto fwd = cnn::forward(model, inputs);
  double total = 0.0;
  for (std::size_t s = 0; s < inputs.size(); ++s) total += cnn::loss(fwd.probs[s], labels[s]);
  StepResult r;
  r.loss = total / static_cast<double>(inputs.size());
  if (!std::isfinite(r.loss)) throw Error(Errc::NonFinite, "mini-batch loss is not finite");
  const auto grads = cnn::backward(model, fwd, labels);
  cnn::sgd_momentum_step(state, model, grads);
  r.ratios = parameter_ratio_log(model, state.velocity);
  return r;
}

TrainResult train(cnn::CnnModel model, const Dataset& ds, const TrainConfig& cfg, const Dataset* eval_set) {
  cfg.validate();
  ds.validate();
  if (!(model.input_shape() == cnn::Shape{1, ds.samples[0].image.rows(), ds.samples[0].image.cols()}))
    throw Error(Errc::ShapeMismatch, "model input does not match dataset images");

  TrainResult result{std::move(model), {}};
  auto& log = result.log;
  log.layer_names = ratio_layer_names(result.model);
  auto state = cnn::OptimizerState::for_model(result.model, cfg.learning_rate, cfg.momentum, cfg.l2);
  std::size_t iteration = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    const auto batches = make_minibatches(ds.size(), cfg.minibatch_size, cfg.seed + epoch);
    for (const auto& batch : batches) {
      ++iteration;
      StepResult step;
      try {
        step = train_step(result.model, state, ds, batch);
      } catch (const Error& e) {
        if (e.code() != Errc::NonFinite) throw;
        throw Error(Errc::NonFinite, "training aborted at iteration " + std::to_string(iteration) +
                                         " (epoch " + std::to_string(epoch) + "): " + e.what());
      }
      epoch_loss += step.loss;
      log.iterations.push_back({iteration, epoch, step.loss, std::move(step.ratios)});
    }
    log.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(batches.size()));
    if (eval_set && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs))
      log.checkpoints.push_back({epoch, evaluate(result.model, *eval_set, cfg.threads)});
  }
  return result;
}

Metrics evaluate(const cnn::CnnModel& model, const Dataset& test, std::size_t threads) {
  if (test.empty()) throw Error(Errc::EmptyDataset, "test set is empty");
  const std::size_t k = model.num_classes();
  std::vector<std::size_t> predicted(test.size());
  constexpr std::size_t kChunk = 16;
  const std::size_t chunks = (test.size() + kChunk - 1) / kChunk;
  detail::parallel_for(chunks, threads, [&](std::size_t c) {
    std::vector<cnn::Tensor> batch;
    const std::size_t lo = c * kChunk, hi = std::min(test.size(), lo + kChunk);
    for (std::size_t i = lo; i < hi; ++i) batch.push_back(cnn::Tensor::from_image(test.samples[i].image));
    const auto fwd = cnn::forward(model, batch);
    for (std::size_t i = lo; i < hi; ++i) predicted[i] = cnn::argmax(fwd.probs[i - lo]);
  });
  std::vector<std::vector<std::size_t>> confusion(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.samples[i].label >= k) throw Error(Errc::InvalidArgument, "test label outside model classes");
    ++confusion[test.samples[i].label][predicted[i]];
  }
  return metrics_from_confusion(std::move(confusion));
}

}  // namespace monofuse::trainer
