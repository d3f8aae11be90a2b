#include "monofuse/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "monofuse/bemd.hpp"
#include "monofuse/checkpoint.hpp"
#include "monofuse/fusion.hpp"
#include "monofuse/imageio.hpp"
#include "monofuse/monogenic.hpp"
#include "monofuse/parallel.hpp"
#include "monofuse/synthetic.hpp"

namespace monofuse::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::size_t default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

template <class T>
void read_key(const json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::Config, std::string("key '") + key + "': " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot open for writing: " + path.string());
  out << text;
  if (!out) throw Error(Errc::Io, "write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json metrics_json(const trainer::Metrics& m) {
  return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall},
          {"f1", m.f1},             {"total", m.total},         {"confusion", m.confusion}};
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string train_log_csv(const trainer::TrainLog& log) {
  std::ostringstream out;
  out << "iteration,epoch,loss";
  for (const auto& n : log.layer_names) out << ",ratio_" << n;
  out << "\n";
  for (const auto& it : log.iterations) {
    out << it.iteration << ',' << it.epoch << ',' << format_double(it.loss);
    for (const auto& r : it.ratios) out << ',' << (r ? format_double(*r) : std::string());
    out << "\n";
  }
  return out.str();
}

// A dataset root either holds class directories directly or train/ and test/.
fs::path split_root(const fs::path& root, const char* split) {
  const fs::path sub = root / split;
  return fs::is_directory(sub) ? sub : root;
}

GrayImage load_any(const fs::path& path) {
  return path.extension() == ".mfm" ? imageio::load_matrix(path) : imageio::load_grayscale(path);
}

std::vector<std::size_t> parse_worker_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      const long v = std::stol(item);
      if (v < 1) throw std::invalid_argument("");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, "bad worker count '" + item + "'");
    }
  }
  if (out.empty()) throw Error(Errc::InvalidArgument, "empty worker list");
  return out;
}

void emit_stack(const bemd::ImfStack& stack, const fs::path& dir, bool heatmaps) {
  for (std::size_t i = 0; i < stack.imfs.size(); ++i) {
    const std::string stem = "imf_" + std::to_string(i);
    imageio::save_matrix(stack.imfs[i], dir / (stem + ".mfm"));
    if (heatmaps) imageio::render_heatmap(stack.imfs[i], dir / (stem + ".png"));
  }
  imageio::save_matrix(stack.residue, dir / "residue.mfm");
  if (heatmaps) imageio::render_heatmap(stack.residue, dir / "residue.png");
}

GrayImage mask_image(const std::vector<std::uint8_t>& mask, std::size_t rows, std::size_t cols) {
  GrayImage m(rows, cols);
  for (std::size_t i = 0; i < mask.size(); ++i) m.pixels()[i] = mask[i] ? 1.0 : 0.0;
  return m;
}

void emit_monogenic(const monogenic::MonogenicComponents& mc, const fs::path& dir, const std::string& prefix,
                    bool heatmaps) {
  const std::size_t rows = mc.amplitude.rows(), cols = mc.amplitude.cols();
  const std::pair<const char*, GrayImage> parts[] = {{"amplitude", mc.amplitude},
                                                     {"phase", mc.phase},
                                                     {"orientation", mc.orientation},
                                                     {"valid", mask_image(mc.valid_mask, rows, cols)}};
  for (const auto& [name, img] : parts) {
    imageio::save_matrix(img, dir / (prefix + name + ".mfm"));
    if (heatmaps) imageio::render_heatmap(img, dir / (prefix + name + ".png"));
  }
}

// Heatmaps of one sample through every stage, mirroring the pipeline figures.
void emit_sample_figures(const GrayImage& raw, const trainer::TrainConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  GrayImage base = raw;
  try {
    base = imageio::normalize(raw);
  } catch (const Error&) {
  }
  imageio::render_heatmap(base, dir / "input.png");
  const auto stack = bemd::decompose(base, cfg.sift);
  emit_stack(stack, dir, true);
  std::vector<monogenic::MonogenicComponents> comps;
  for (std::size_t i = 0; i < stack.imfs.size(); ++i) {
    comps.push_back(monogenic::monogenic_components(stack.imfs[i]));
    emit_monogenic(comps.back(), dir, "imf_" + std::to_string(i) + "_", true);
  }
  if (!stack.imfs.empty()) {
    const auto top = fusion::select_top_imfs(stack, cfg.fusion_fraction);
    const auto fused = fusion::fuse_orientations(std::span(comps.data(), top.size()), {cfg.fusion_weighted});
    imageio::render_heatmap(fusion::encode_unit_range(fused), dir / "fused_orientation.png");
  }
}

json checkpoint_metadata(const RunConfig& rc, const Dataset& train) {
  json meta = to_json(rc);
  meta.erase("data");
  meta.erase("out_dir");
  meta.erase("threads");
  meta["classes"] = train.class_names;
  return meta;
}

struct TrainOutput {
  cnn::CnnModel model;
  trainer::TrainLog log;
};

TrainOutput run_training(const RunConfig& rc, const Dataset& features, const Dataset* eval_set) {
  if (rc.workers > 1) {
    auto r = parallel::train_parallel(features, rc.train, rc.workers, rc.sync_interval, eval_set);
    return {std::move(r.model), std::move(r.log)};
  }
  auto model = cnn::build_paper_model(features.samples[0].image.rows(), features.samples[0].image.cols(),
                                      features.num_classes, rc.train.seed, rc.train.model);
  auto r = trainer::train(std::move(model), features, rc.train, eval_set);
  return {std::move(r.model), std::move(r.log)};
}

json checkpoints_json(const trainer::TrainLog& log) {
  json arr = json::array();
  for (const auto& c : log.checkpoints) {
    json j = metrics_json(c.metrics);
    j["epoch"] = c.epoch;
    arr.push_back(std::move(j));
  }
  return arr;
}

// ---- subcommands -----------------------------------------------------------

struct DecomposeArgs {
  std::string input, out_dir;
  bemd::SiftConfig sift;
  bool normalize = false;
};

void cmd_decompose(const DecomposeArgs& a) {
  const fs::path out(a.out_dir);
  fs::create_directories(out);
  GrayImage img = load_any(a.input);
  if (a.normalize) img = imageio::normalize(img);
  const auto stack = bemd::decompose(img, a.sift);
  if (stack.imfs.empty())
    std::cerr << "warning: " << a.input << " has too few extrema to sift; writing residue only\n";
  emit_stack(stack, out, true);
  write_json(out / "resolved_config.json", {{"command", "decompose"},
                                            {"input", a.input},
                                            {"normalize", a.normalize},
                                            {"imfs", a.sift.num_imfs},
                                            {"sd", a.sift.sd_threshold},
                                            {"max_sift", a.sift.max_sift_iterations},
                                            {"min_extrema", a.sift.min_extrema}});
}

void cmd_monogenic(const std::string& input, const std::string& out_dir) {
  const fs::path out(out_dir);
  fs::create_directories(out);
  const auto mc = monogenic::monogenic_components(load_any(input));
  emit_monogenic(mc, out, "", true);
  write_json(out / "resolved_config.json", {{"command", "monogenic"}, {"input", input}});
}

struct FuseArgs {
  std::vector<std::string> inputs, masks, amplitudes;
  std::string out;
  bool weighted = false;
};

void cmd_fuse(const FuseArgs& a) {
  if (!a.masks.empty() && a.masks.size() != a.inputs.size())
    throw Error(Errc::InvalidArgument, "--masks needs one file per input");
  if (a.weighted && a.amplitudes.size() != a.inputs.size())
    throw Error(Errc::InvalidArgument, "--weighted-by-amplitude needs --amplitudes, one per input");
  std::vector<monogenic::MonogenicComponents> maps;
  for (std::size_t i = 0; i < a.inputs.size(); ++i) {
    monogenic::MonogenicComponents mc;
    mc.orientation = imageio::load_matrix(a.inputs[i]);
    mc.valid_mask.assign(mc.orientation.size(), 1);
    if (!a.masks.empty()) {
      const auto mask = imageio::load_matrix(a.masks[i]);
      if (!mask.same_shape(mc.orientation)) throw Error(Errc::DimensionMismatch, "mask size differs from input");
      for (std::size_t p = 0; p < mask.size(); ++p) mc.valid_mask[p] = mask.pixels()[p] != 0.0;
    }
    if (a.weighted) mc.amplitude = imageio::load_matrix(a.amplitudes[i]);
    maps.push_back(std::move(mc));
  }
  const auto fused = fusion::fuse_orientations(maps, {a.weighted});
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  imageio::save_matrix(fused.angles, out);
  GrayImage state(fused.angles.rows(), fused.angles.cols());
  for (std::size_t i = 0; i < state.size(); ++i) state.pixels()[i] = static_cast<double>(fused.state[i]);
  fs::path state_path = out;
  state_path.replace_extension();
  state_path += "_state.mfm";
  imageio::save_matrix(state, state_path);
  fs::path png = out;
  imageio::render_heatmap(fusion::encode_unit_range(fused), png.replace_extension(".png"));
  fs::path cfg_path = out;
  cfg_path.replace_extension();
  cfg_path += "_config.json";
  write_json(cfg_path, {{"command", "fuse"}, {"inputs", a.inputs}, {"masks", a.masks},
                        {"weighted_by_amplitude", a.weighted}, {"amplitudes", a.amplitudes}});
}

struct TrainArgs {
  RunConfig rc;
  std::string out = "model.ckpt";
  std::string log = "train.csv";
};

void cmd_train(const TrainArgs& a) {
  const RunConfig& rc = a.rc;
  rc.train.validate();
  const Dataset raw = imageio::load_dataset_dir(split_root(rc.data, "train"), Split::Train);
  const Dataset features = trainer::build_feature_dataset(raw, rc.train);
  const auto out = run_training(rc, features, nullptr);
  const fs::path ckpt(a.out);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  cnn::save_checkpoint(out.model, checkpoint_metadata(rc, raw), ckpt);
  write_text(a.log, train_log_csv(out.log));
  fs::path cfg_path = ckpt;
  cfg_path.replace_extension();
  cfg_path += "_config.json";
  write_json(cfg_path, to_json(rc));
}

void cmd_eval(const std::string& model_path, const std::string& data, const std::string& out_path,
              std::size_t threads) {
  const auto ckpt = cnn::load_checkpoint(model_path);
  json meta = ckpt.metadata;
  meta["data"] = data;
  meta["threads"] = threads;
  meta.erase("classes");
  const RunConfig rc = parse_run_config(meta);
  const Dataset raw = imageio::load_dataset_dir(split_root(data, "test"), Split::Test);
  if (ckpt.metadata.contains("classes") &&
      ckpt.metadata.at("classes").get<std::vector<std::string>>() != raw.class_names)
    throw Error(Errc::InvalidArgument, "test classes differ from the classes the model was trained on");
  const Dataset features = trainer::build_feature_dataset(raw, rc.train);
  const auto m = trainer::evaluate(ckpt.model, features, threads);
  json j = metrics_json(m);
  j["classes"] = raw.class_names;
  j["feature"] = trainer::to_string(rc.train.feature_kind);
  write_json(out_path, j);
}

void cmd_pipeline(const RunConfig& rc) {
  rc.train.validate();
  const fs::path out = rc.out_dir;
  fs::create_directories(out);
  write_json(out / "resolved_config.json", to_json(rc));

  const Dataset raw_train = imageio::load_dataset_dir(split_root(rc.data, "train"), Split::Train);
  const Dataset raw_test = imageio::load_dataset_dir(split_root(rc.data, "test"), Split::Test);
  if (raw_test.class_names != raw_train.class_names)
    throw Error(Errc::InvalidArgument, "train and test class directories differ");
  if (rc.heatmaps) emit_sample_figures(raw_train.samples.front().image, rc.train, out / "heatmaps");

  const Dataset train = trainer::build_feature_dataset(raw_train, rc.train);
  const Dataset test = trainer::build_feature_dataset(raw_test, rc.train);
  const auto result = run_training(rc, train, &test);

  cnn::save_checkpoint(result.model, checkpoint_metadata(rc, raw_train), out / "model.ckpt");
  write_text(out / "train.csv", train_log_csv(result.log));
  json metrics{{"feature", trainer::to_string(rc.train.feature_kind)},
               {"classes", raw_train.class_names},
               {"checkpoints", checkpoints_json(result.log)},
               {"final", metrics_json(result.log.checkpoints.back().metrics)},
               {"epoch_mean_loss", result.log.epoch_mean_loss}};
  write_json(out / "metrics.json", metrics);
}

void cmd_bench(const RunConfig& rc, const std::string& workers, const std::string& out_path) {
  const Dataset raw = imageio::load_dataset_dir(split_root(rc.data, "train"), Split::Train);
  const auto counts = parse_worker_list(workers);
  const auto rows = parallel::run_bench(raw, rc.train, counts);
  std::ostringstream csv;
  csv << "workers,stage,seconds,samples\n";
  for (const auto& r : rows) csv << r.workers << ',' << r.stage << ',' << format_double(r.seconds) << ',' << r.samples << "\n";
  write_text(out_path, csv.str());
  fs::path cfg_path = out_path;
  cfg_path.replace_extension();
  cfg_path += "_config.json";
  json j = to_json(rc);
  j["bench_workers"] = counts;
  write_json(cfg_path, j);
}

struct SynthArgs {
  std::string out;
  synthetic::BenchmarkOptions opts;
};

void cmd_synth(const SynthArgs& a) {
  const fs::path out(a.out);
  const auto [train, test] = synthetic::make_illumination_benchmark(a.opts);
  imageio::save_dataset_dir(train, out / "train");
  imageio::save_dataset_dir(test, out / "test");
  write_json(out / "resolved_config.json", {{"command", "synth-data"},
                                            {"seed", a.opts.seed},
                                            {"train_per_class", a.opts.train_per_class},
                                            {"test_per_class", a.opts.test_per_class},
                                            {"size", a.opts.size},
                                            {"period", a.opts.period},
                                            {"gain_min", a.opts.gain_min},
                                            {"gain_max", a.opts.gain_max},
                                            {"noise_sigma", a.opts.noise_sigma}});
}

// Training flags shared by train, pipeline and bench. Values land in `rc`
// after the optional --config file has been applied.
struct TrainFlags {
  std::string config;
  std::string data;
  std::optional<std::string> feature;
  std::optional<std::size_t> epochs, batch, imf_index, workers, sync_interval, threads, imfs, max_sift;
  std::optional<double> lr, momentum, l2, sd, fusion_fraction;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app, bool with_data) {
    app->add_option("--config", config, "Run configuration JSON")->check(CLI::ExistingFile);
    if (with_data) app->add_option("--data", data, "Dataset root");
    app->add_option("--feature", feature, "amplitude|phase|orientation|fusion|raw");
    app->add_option("--epochs", epochs);
    app->add_option("--batch", batch, "Mini-batch size");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--momentum", momentum);
    app->add_option("--l2", l2);
    app->add_option("--seed", seed);
    app->add_option("--imf-index", imf_index);
    app->add_option("--fusion-fraction", fusion_fraction);
    app->add_option("--imfs", imfs);
    app->add_option("--sd", sd);
    app->add_option("--max-sift", max_sift);
    app->add_option("--sync-interval", sync_interval);
    app->add_option("--threads", threads, "Feature-extraction threads");
  }

  RunConfig resolve() const {
    RunConfig rc = config.empty() ? parse_run_config(json::object()) : load_run_config(config);
    if (!data.empty()) rc.data = data;
    if (feature) rc.train.feature_kind = trainer::parse_feature_kind(*feature);
    if (epochs) rc.train.epochs = *epochs;
    if (batch) rc.train.minibatch_size = *batch;
    if (lr) rc.train.learning_rate = *lr;
    if (momentum) rc.train.momentum = *momentum;
    if (l2) rc.train.l2 = *l2;
    if (seed) rc.train.seed = *seed;
    if (imf_index) rc.train.imf_index = *imf_index;
    if (fusion_fraction) rc.train.fusion_fraction = *fusion_fraction;
    if (imfs) rc.train.sift.num_imfs = *imfs;
    if (sd) rc.train.sift.sd_threshold = *sd;
    if (max_sift) rc.train.sift.max_sift_iterations = *max_sift;
    if (workers) rc.workers = *workers;
    if (sync_interval) rc.sync_interval = *sync_interval;
    if (threads) rc.train.threads = *threads;
    return rc;
  }
};

}  // namespace

RunConfig parse_run_config(const json& j) {
  static const char* kKeys[] = {"data",        "out_dir",      "feature",        "epochs",          "batch",
                                "lr",          "momentum",     "l2",             "seed",            "imf_index",
                                "fusion_fraction", "fusion_weighted", "imfs",     "sd",              "max_sift",
                                "min_extrema", "kernel",       "conv1_channels", "conv2_channels",  "eval_every",
                                "threads",     "workers",      "sync_interval",  "heatmaps"};
  if (!j.is_object()) throw Error(Errc::Config, "run configuration must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }) == std::end(kKeys))
      throw Error(Errc::Config, "unknown configuration key '" + key + "'");

  RunConfig rc;
  rc.train.threads = default_threads();
  std::string data = rc.data.string(), out_dir = rc.out_dir.string();
  read_key(j, "data", data);
  read_key(j, "out_dir", out_dir);
  rc.data = data;
  rc.out_dir = out_dir;
  std::string feature = trainer::to_string(rc.train.feature_kind);
  read_key(j, "feature", feature);
  try {
    rc.train.feature_kind = trainer::parse_feature_kind(feature);
  } catch (const Error& e) {
    throw Error(Errc::Config, e.what());
  }
  auto& t = rc.train;
  read_key(j, "epochs", t.epochs);
  read_key(j, "batch", t.minibatch_size);
  read_key(j, "lr", t.learning_rate);
  read_key(j, "momentum", t.momentum);
  read_key(j, "l2", t.l2);
  read_key(j, "seed", t.seed);
  read_key(j, "imf_index", t.imf_index);
  read_key(j, "fusion_fraction", t.fusion_fraction);
  read_key(j, "fusion_weighted", t.fusion_weighted);
  read_key(j, "imfs", t.sift.num_imfs);
  read_key(j, "sd", t.sift.sd_threshold);
  read_key(j, "max_sift", t.sift.max_sift_iterations);
  read_key(j, "min_extrema", t.sift.min_extrema);
  read_key(j, "kernel", t.model.kernel);
  read_key(j, "conv1_channels", t.model.conv1_channels);
  read_key(j, "conv2_channels", t.model.conv2_channels);
  read_key(j, "eval_every", t.eval_every);
  read_key(j, "threads", t.threads);
  read_key(j, "workers", rc.workers);
  read_key(j, "sync_interval", rc.sync_interval);
  read_key(j, "heatmaps", rc.heatmaps);
  if (rc.workers < 1) throw Error(Errc::Config, "workers must be >= 1");
  if (rc.sync_interval < 1) throw Error(Errc::Config, "sync_interval must be >= 1");
  try {
    t.validate();
  } catch (const Error& e) {
    throw Error(Errc::Config, e.what());
  }
  return rc;
}

json to_json(const RunConfig& rc) {
  const auto& t = rc.train;
  return {{"data", rc.data.string()},
          {"out_dir", rc.out_dir.string()},
          {"feature", trainer::to_string(t.feature_kind)},
          {"epochs", t.epochs},
          {"batch", t.minibatch_size},
          {"lr", t.learning_rate},
          {"momentum", t.momentum},
          {"l2", t.l2},
          {"seed", t.seed},
          {"imf_index", t.imf_index},
          {"fusion_fraction", t.fusion_fraction},
          {"fusion_weighted", t.fusion_weighted},
          {"imfs", t.sift.num_imfs},
          {"sd", t.sift.sd_threshold},
          {"max_sift", t.sift.max_sift_iterations},
          {"min_extrema", t.sift.min_extrema},
          {"kernel", t.model.kernel},
          {"conv1_channels", t.model.conv1_channels},
          {"conv2_channels", t.model.conv2_channels},
          {"eval_every", t.eval_every},
          {"threads", t.threads},
          {"workers", rc.workers},
          {"sync_interval", rc.sync_interval},
          {"heatmaps", rc.heatmaps}};
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::Config, path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args);
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"monofuse: EMD + monogenic orientation-fusion recognition pipeline"};
  app.name("monofuse");
  app.require_subcommand(1);

  DecomposeArgs dec;
  auto* decompose = app.add_subcommand("decompose", "Sift an image into IMFs and a residue");
  decompose->add_option("--input", dec.input)->required();
  decompose->add_option("--out-dir", dec.out_dir)->required();
  decompose->add_option("--imfs", dec.sift.num_imfs);
  decompose->add_option("--sd", dec.sift.sd_threshold);
  decompose->add_option("--max-sift", dec.sift.max_sift_iterations);
  decompose->add_flag("--normalize", dec.normalize, "z-score the image first");

  std::string mono_input, mono_out;
  auto* mono = app.add_subcommand("monogenic", "Amplitude, phase and orientation of a matrix");
  mono->add_option("--input", mono_input)->required();
  mono->add_option("--out-dir", mono_out)->required();

  FuseArgs fa;
  auto* fuse = app.add_subcommand("fuse", "Fuse orientation maps");
  fuse->add_option("--inputs", fa.inputs)->required()->expected(1, -1);
  fuse->add_option("--out", fa.out)->required();
  fuse->add_option("--masks", fa.masks, "Validity masks (0/1 MFM), one per input")->expected(1, -1);
  fuse->add_option("--amplitudes", fa.amplitudes, "Amplitude maps for weighting")->expected(1, -1);
  fuse->add_flag("--weighted-by-amplitude", fa.weighted);

  TrainArgs ta;
  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "Train the CNN on one spectrum type");
  train_flags.attach(train, true);
  train->add_option("--out", ta.out, "Checkpoint path");
  train->add_option("--log", ta.log, "Training log CSV");
  train->add_option("--workers", train_flags.workers, "Data-parallel replicas");

  std::string eval_model, eval_data, eval_out = "metrics.json";
  std::size_t eval_threads = default_threads();
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a test set");
  eval->add_option("--model", eval_model)->required();
  eval->add_option("--data", eval_data)->required();
  eval->add_option("--out", eval_out);
  eval->add_option("--threads", eval_threads);

  TrainFlags pipe_flags;
  std::string pipe_out;
  auto* pipeline = app.add_subcommand("pipeline", "decompose -> monogenic -> fuse -> train -> eval");
  pipe_flags.attach(pipeline, true);
  pipeline->add_option("--out-dir", pipe_out);
  pipeline->add_option("--workers", pipe_flags.workers, "Data-parallel replicas");

  TrainFlags bench_flags;
  std::string bench_workers = "1,2,4,8", bench_out = "bench.csv";
  auto* bench = app.add_subcommand("bench", "Per-stage timings across worker counts");
  bench_flags.attach(bench, true);
  bench->add_option("--workers", bench_workers, "Comma-separated worker counts");
  bench->add_option("--out", bench_out);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth-data", "Write the synthetic illumination benchmark");
  synth->add_option("--out", sa.out)->required();
  synth->add_option("--seed", sa.opts.seed);
  synth->add_option("--train-per-class", sa.opts.train_per_class);
  synth->add_option("--test-per-class", sa.opts.test_per_class);
  synth->add_option("--size", sa.opts.size);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*decompose) {
      cmd_decompose(dec);
    } else if (*mono) {
      cmd_monogenic(mono_input, mono_out);
    } else if (*fuse) {
      cmd_fuse(fa);
    } else if (*train) {
      ta.rc = train_flags.resolve();
      if (ta.rc.data.empty()) throw Error(Errc::Config, "--data or a config with 'data' is required");
      cmd_train(ta);
    } else if (*eval) {
      cmd_eval(eval_model, eval_data, eval_out, eval_threads);
    } else if (*pipeline) {
      RunConfig rc = pipe_flags.resolve();
      if (!pipe_out.empty()) rc.out_dir = pipe_out;
      if (rc.data.empty()) throw Error(Errc::Config, "--data or a config with 'data' is required");
      cmd_pipeline(rc);
    } else if (*bench) {
      RunConfig rc = bench_flags.resolve();
      if (rc.data.empty()) throw Error(Errc::Config, "--data or a config with 'data' is required");
      cmd_bench(rc, bench_workers, bench_out);
    } else if (*synth) {
      cmd_synth(sa);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace monofuse::cli
