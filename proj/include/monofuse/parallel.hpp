#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "monofuse/cnn.hpp"
#include "monofuse/trainer.hpp"

namespace monofuse::parallel {

struct ShardPlan {
  std::size_t num_workers = 1;
  std::vector<std::vector<std::size_t>> shards;  // sample indices per worker
  std::size_t sync_interval = 1;                 // local mini-batch steps between averages
};

/// Deals a seeded permutation of the samples round-robin over k workers.
ShardPlan shard_dataset(const Dataset& ds, std::size_t k, std::uint64_t seed, std::size_t sync_interval = 1);

/// Element-wise mean of every parameter, summed in worker order.
cnn::CnnModel average_parameters(std::span<const cnn::CnnModel> models);

struct SyncRoundReport {
  std::size_t round = 0;  // 1-based
  std::size_t epoch = 0;
  std::vector<std::optional<double>> worker_loss;  // nullopt for a worker with no batch left
  std::uint64_t checksum = 0;                      // parameter_checksum of the averaged model
};

struct ParallelResult {
  cnn::CnnModel model;
  std::vector<SyncRoundReport> rounds;
  trainer::TrainLog log;
};

/// Synchronous parameter averaging. Each epoch every worker shuffles its shard
/// (seed + epoch) into mini-batches; each round the workers that still have
/// batches take up to sync_interval local steps, then weights and momentum
/// buffers of those workers are averaged and copied back to all workers.
/// Shards are visited in ascending sample order before shuffling, so a single
/// worker reproduces trainer::train exactly.
ParallelResult train_parallel(cnn::CnnModel initial, const Dataset& ds, const trainer::TrainConfig& cfg,
                              const ShardPlan& plan, const Dataset* eval_set = nullptr);

/// Builds the paper model from cfg.seed and shards ds over k workers.
ParallelResult train_parallel(const Dataset& ds, const trainer::TrainConfig& cfg, std::size_t k,
                              std::size_t sync_interval = 1, const Dataset* eval_set = nullptr);

struct BenchRow {
  std::size_t workers = 0;
  std::string stage;  // bundle | decompose | train
  double seconds = 0.0;
  std::size_t samples = 0;
};

/// Times the bundle, decompose and one-epoch train stages for each worker count.
std::vector<BenchRow> run_bench(const Dataset& raw, const trainer::TrainConfig& cfg,
                                std::span<const std::size_t> worker_counts);

}  // namespace monofuse::parallel
