#include "monofuse/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <thread>

#include "parallel_for.hpp"

namespace monofuse::parallel {

namespace {

void check_same_architecture(const cnn::CnnModel& a, const cnn::CnnModel& b) {
  if (!(a.input_shape() == b.input_shape()) || a.layers().size() != b.layers().size())
    throw Error(Errc::ArchitectureMismatch, "models differ in input or depth");
  for (std::size_t i = 0; i < a.layers().size(); ++i)
    if (a.layers()[i].index() != b.layers()[i].index())
      throw Error(Errc::ArchitectureMismatch, "layer " + std::to_string(i) + " differs in kind");
  const auto pa = a.params(), pb = b.params();
  if (pa.size() != pb.size()) throw Error(Errc::ArchitectureMismatch, "parameter count differs");
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i].values.size() != pb[i].values.size())
      throw Error(Errc::ArchitectureMismatch, "parameter " + std::to_string(i) + " differs in size");
}

// Mean of the buffers selected by `active`, summed in index order.
void average_into(std::vector<cnn::Values>& dst,
                  const std::vector<const std::vector<cnn::Values>*>& sources) {
  dst = *sources[0];
  for (std::size_t w = 1; w < sources.size(); ++w)
    for (std::size_t i = 0; i < dst.size(); ++i)
      for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += (*sources[w])[i][j];
  const double inv = static_cast<double>(sources.size());
  if (sources.size() > 1)
    for (auto& v : dst)
      for (auto& x : v) x /= inv;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ShardPlan shard_dataset(const Dataset& ds, std::size_t k, std::uint64_t seed, std::size_t sync_interval) {
  if (k == 0) throw Error(Errc::InvalidArgument, "worker count must be >= 1");
  if (k > ds.size())
    throw Error(Errc::InvalidArgument, "more workers (" + std::to_string(k) + ") than samples (" +
                                           std::to_string(ds.size()) + ")");
  if (sync_interval == 0) throw Error(Errc::InvalidArgument, "sync_interval must be >= 1");
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  ShardPlan plan{k, std::vector<std::vector<std::size_t>>(k), sync_interval};
  for (std::size_t i = 0; i < order.size(); ++i) plan.shards[i % k].push_back(order[i]);
  return plan;
}

cnn::CnnModel average_parameters(std::span<const cnn::CnnModel> models) {
  if (models.empty()) throw Error(Errc::InvalidArgument, "no models to average");
  for (std::size_t w = 1; w < models.size(); ++w) check_same_architecture(models[0], models[w]);
  cnn::CnnModel out = models[0];
  auto dst = out.params();
  for (std::size_t w = 1; w < models.size(); ++w) {
    const auto src = models[w].params();
    for (std::size_t i = 0; i < dst.size(); ++i)
      for (std::size_t j = 0; j < dst[i].values.size(); ++j) dst[i].values[j] += src[i].values[j];
  }
  if (models.size() > 1) {
    const double n = static_cast<double>(models.size());
    for (auto& p : dst)
      for (auto& v : p.values) v /= n;
  }
  return out;
}

ParallelResult train_parallel(cnn::CnnModel initial, const Dataset& ds, const trainer::TrainConfig& cfg,
                              const ShardPlan& plan, const Dataset* eval_set) {
  cfg.validate();
  ds.validate();
  if (plan.num_workers == 0 || plan.shards.size() != plan.num_workers)
    throw Error(Errc::InvalidArgument, "shard plan worker count inconsistent");
  if (plan.sync_interval == 0) throw Error(Errc::InvalidArgument, "sync_interval must be >= 1");
  for (const auto& s : plan.shards) {
    if (s.empty()) throw Error(Errc::InvalidArgument, "empty shard");
    for (std::size_t i : s)
      if (i >= ds.size()) throw Error(Errc::InvalidArgument, "shard index out of range");
  }
  if (!(initial.input_shape() == cnn::Shape{1, ds.samples[0].image.rows(), ds.samples[0].image.cols()}))
    throw Error(Errc::ShapeMismatch, "model input does not match dataset images");

  const std::size_t k = plan.num_workers;
  std::vector<std::vector<std::size_t>> shards = plan.shards;
  for (auto& s : shards) std::sort(s.begin(), s.end());

  const auto state0 = cnn::OptimizerState::for_model(initial, cfg.learning_rate, cfg.momentum, cfg.l2);
  std::vector<cnn::CnnModel> models(k, initial);
  std::vector<cnn::OptimizerState> states(k, state0);

  ParallelResult result{std::move(initial), {}, {}};
  auto& log = result.log;
  log.layer_names = trainer::ratio_layer_names(result.model);
  std::size_t round = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::vector<std::vector<std::size_t>>> batches(k);
    for (std::size_t w = 0; w < k; ++w) {
      batches[w] = trainer::make_minibatches(shards[w].size(), cfg.minibatch_size, cfg.seed + epoch);
      for (auto& b : batches[w])
        for (auto& i : b) i = shards[w][i];
    }
    std::vector<std::size_t> cursor(k, 0);
    double epoch_loss = 0.0;
    std::size_t epoch_rounds = 0;

    while (true) {
      std::vector<std::size_t> active;
      for (std::size_t w = 0; w < k; ++w)
        if (cursor[w] < batches[w].size()) active.push_back(w);
      if (active.empty()) break;
      ++round;
      ++epoch_rounds;

      std::vector<double> loss_sum(k, 0.0);
      std::vector<std::size_t> steps(k, 0);
      detail::parallel_for(active.size(), active.size(), [&](std::size_t a) {
        const std::size_t w = active[a];
        for (std::size_t s = 0; s < plan.sync_interval && cursor[w] < batches[w].size(); ++s) {
          const auto r = trainer::train_step(models[w], states[w], ds, batches[w][cursor[w]++]);
          loss_sum[w] += r.loss;
          ++steps[w];
        }
      });

      // Coordinator: average the active replicas, then broadcast.
      std::vector<cnn::CnnModel> replicas;
      std::vector<const std::vector<cnn::Values>*> velocities;
      for (std::size_t w : active) {
        replicas.push_back(std::move(models[w]));
        velocities.push_back(&states[w].velocity);
      }
      cnn::CnnModel averaged = average_parameters(replicas);
      std::vector<cnn::Values> velocity;
      average_into(velocity, velocities);
      for (std::size_t w = 0; w < k; ++w) {
        models[w] = averaged;
        states[w].velocity = velocity;
      }

      SyncRoundReport report{round, epoch, std::vector<std::optional<double>>(k), cnn::parameter_checksum(averaged)};
      double round_loss = 0.0;
      for (std::size_t w : active) {
        report.worker_loss[w] = loss_sum[w] / static_cast<double>(steps[w]);
        round_loss += *report.worker_loss[w];
      }
      round_loss /= static_cast<double>(active.size());
      epoch_loss += round_loss;
      log.iterations.push_back({round, epoch, round_loss, trainer::parameter_ratio_log(averaged, velocity)});
      result.rounds.push_back(std::move(report));
      result.model = std::move(averaged);
    }
    log.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_rounds));
    if (eval_set && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs))
      log.checkpoints.push_back({epoch, trainer::evaluate(result.model, *eval_set, cfg.threads)});
  }
  return result;
}

ParallelResult train_parallel(const Dataset& ds, const trainer::TrainConfig& cfg, std::size_t k,
                              std::size_t sync_interval, const Dataset* eval_set) {
  ds.validate();
  auto model = cnn::build_paper_model(ds.samples[0].image.rows(), ds.samples[0].image.cols(), ds.num_classes,
                                      cfg.seed, cfg.model);
  return train_parallel(std::move(model), ds, cfg, shard_dataset(ds, k, cfg.seed, sync_interval), eval_set);
}

std::vector<BenchRow> run_bench(const Dataset& raw, const trainer::TrainConfig& cfg,
                                std::span<const std::size_t> worker_counts) {
  raw.validate();
  std::vector<BenchRow> rows;
  for (std::size_t k : worker_counts) {
    auto t0 = std::chrono::steady_clock::now();
    const ShardPlan plan = shard_dataset(raw, k, cfg.seed);
    std::vector<Dataset> bundles(k);
    for (std::size_t w = 0; w < k; ++w) {
      bundles[w].num_classes = raw.num_classes;
      bundles[w].class_names = raw.class_names;
      for (std::size_t i : plan.shards[w]) bundles[w].samples.push_back(raw.samples[i]);
    }
    rows.push_back({k, "bundle", seconds_since(t0), raw.size()});

    t0 = std::chrono::steady_clock::now();
    trainer::TrainConfig fcfg = cfg;
    fcfg.threads = k;
    const Dataset features = trainer::build_feature_dataset(raw, fcfg);
    rows.push_back({k, "decompose", seconds_since(t0), raw.size()});

    t0 = std::chrono::steady_clock::now();
    trainer::TrainConfig tcfg = cfg;
    tcfg.epochs = 1;
    train_parallel(features, tcfg, k, 1);
    rows.push_back({k, "train", seconds_since(t0), raw.size()});
  }
  return rows;
}

}  // namespace monofuse::parallel
