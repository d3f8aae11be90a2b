// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <string>
#include <thread>

#include "monofuse/bemd.hpp"
#include "monofuse/cli.hpp"
#include "monofuse/monogenic.hpp"
#include "monofuse/parallel.hpp"
#include "monofuse/synthetic.hpp"
#include "monofuse/trainer.hpp"
#include "test_support.hpp"

using namespace monofuse;
using trainer::FeatureKind;
using Clock = std::chrono::steady_clock;
constexpr double pi = std::numbers::pi;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::size_t cores() { return std::max(1u, std::thread::hardware_concurrency()); }

struct Verdict {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int n, const Verdict& v) {
  std::printf("%s criterion %d: %s\n", v.pass ? "PASS" : "FAIL", n, v.detail.c_str());
  std::fflush(stdout);
  if (!v.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Verdict emd_reconstruction() {
  const auto t0 = Clock::now();
  const bemd::SiftConfig cfg;
  double worst = 0.0;
  std::size_t imfs = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto x = testing::random_image(32, 32, 1000 + s);
    const auto stack = bemd::decompose(x, cfg);
    imfs += stack.imfs.size();
    worst = std::max(worst, max_abs_diff(bemd::reconstruct(stack), x));
  }
  for (int t = 0; t < 10; ++t) {
    const synthetic::Tone tones[] = {{4.0 + t % 3, 1.0, 0.1 * t}, {16.0 + 2 * t, 0.5 + 0.1 * t, 0.3}};
    const auto x = synthetic::egg_crate(32, 32, tones);
    const auto stack = bemd::decompose(x, cfg);
    imfs += stack.imfs.size();
    worst = std::max(worst, max_abs_diff(bemd::reconstruct(stack), x));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-9 && secs < 60.0,
          fmt("max reconstruction error %.3e over 60 images (%zu IMFs), %.1fs", worst, imfs, secs)};
}

Verdict riesz_oracle() {
  double worst = 0.0;
  const auto check = [&](std::size_t n, std::uint64_t seed) {
    const auto img = testing::random_image(n, n, seed);
    const auto fast = monogenic::riesz_transform(img);
    const auto slow = monogenic::dft_riesz_oracle(img);
    worst = std::max({worst, max_abs_diff(fast.r1, slow.r1), max_abs_diff(fast.r2, slow.r2)});
  };
  for (std::uint64_t s = 0; s < 20; ++s) check(8, 2000 + s);
  for (std::uint64_t s = 0; s < 5; ++s) check(16, 3000 + s);
  return {worst < 1e-8, fmt("max |fast - oracle| %.3e over 25 images", worst)};
}

Verdict orientation_recovery() {
  const std::size_t n = 64, margin = 8;
  const double k = 4.0;
  bool pass = true;
  std::string detail;
  for (int deg : {0, 30, 60, 90, 120, 150}) {
    const double theta = deg * pi / 180.0;
    GrayImage img(n, n);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        img(y, x) = std::cos(2 * pi * k * (x * std::cos(theta) + y * std::sin(theta)) / n);
    const auto mc = monogenic::monogenic_components(img);
    std::size_t valid = 0, good = 0;
    for (std::size_t y = margin; y < n - margin; ++y)
      for (std::size_t x = margin; x < n - margin; ++x) {
        if (!mc.valid_mask[y * n + x]) continue;
        ++valid;
        double d = std::fmod(std::abs(mc.orientation(y, x) - theta), pi);
        if (std::min(d, pi - d) <= 2.0 * pi / 180.0) ++good;
      }
    const double frac = valid ? double(good) / double(valid) : 0.0;
    if (frac < 0.95) pass = false;
    detail += fmt("%s%d deg %.1f%%", detail.empty() ? "" : ", ", deg, 100.0 * frac);
  }
  return {pass, "within 2 deg: " + detail + " (need >= 95%)"};
}

Verdict gradient_check() {
  const auto ds = synthetic::make_toy_dataset(2, 12, 11);
  std::vector<cnn::Tensor> batch;
  std::vector<std::size_t> labels;
  for (const auto& s : ds.samples) {
    batch.push_back(cnn::Tensor::from_image(s.image));
    labels.push_back(s.label);
  }
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = testing::finite_difference_check(testing::toy_model(seed), batch, labels);
    worst = std::max(worst, r.max_relative_error);
    checked += r.checked;
  }
  return {worst < 1e-4, fmt("max relative error %.3e over %zu parameter checks, 5 seeds", worst, checked)};
}

Verdict overfit() {
  const auto t0 = Clock::now();
  const auto ds = synthetic::make_toy_dataset(10, 12, 21);
  std::string detail;
  for (double lr : {1e-4, 1e-3}) {
    trainer::TrainConfig cfg;
    cfg.epochs = 200;
    cfg.eval_every = 1;
    cfg.learning_rate = lr;
    cfg.feature_kind = FeatureKind::Raw;
    cfg.model = {3, 4, 4};
    const auto r = trainer::train(testing::toy_model(cfg.seed), ds, cfg, &ds);
    std::size_t first = 0;
    for (const auto& c : r.log.checkpoints)
      if (c.metrics.accuracy == 1.0) {
        first = c.epoch;
        break;
      }
    detail += fmt("%slr %g: %s", detail.empty() ? "" : "; ", lr,
                  first ? fmt("100%% train accuracy at epoch %zu", first).c_str()
                        : fmt("final train accuracy %.3f", r.log.checkpoints.back().metrics.accuracy).c_str());
    if (first) {
      const double secs = seconds_since(t0);
      return {secs < 300.0, fmt("%s (lr used %g), %.1fs", detail.c_str(), lr, secs)};
    }
  }
  return {false, detail + fmt(", %.1fs", seconds_since(t0))};
}

// Shared state for the benchmark criteria.
struct Benchmark {
  std::map<FeatureKind, Dataset> train, test;
  std::map<FeatureKind, trainer::TrainResult> runs;
  trainer::TrainConfig cfg;
  double seconds = 0.0;
};

double final_accuracy(const trainer::TrainLog& log) { return log.checkpoints.back().metrics.accuracy; }

Benchmark run_benchmark() {
  Benchmark b;
  const auto t0 = Clock::now();
  const synthetic::BenchmarkOptions opts;
  const auto [raw_train, raw_test] = synthetic::make_illumination_benchmark(opts);
  b.cfg.threads = cores();
  const FeatureKind kinds[] = {FeatureKind::Fusion, FeatureKind::Orientation, FeatureKind::Phase,
                               FeatureKind::Amplitude};
  b.train = trainer::build_feature_datasets(raw_train, b.cfg, kinds);
  b.test = trainer::build_feature_datasets(raw_test, b.cfg, kinds);
  std::printf("  benchmark: %zu train / %zu test images, %zux%zu, features in %.1fs, lr %g\n", raw_train.size(),
              raw_test.size(), opts.size, opts.size, seconds_since(t0), b.cfg.learning_rate);
  for (FeatureKind k : kinds) {
    const auto t1 = Clock::now();
    auto model = cnn::build_paper_model(opts.size, opts.size, raw_train.num_classes, b.cfg.seed, b.cfg.model);
    b.runs.emplace(k, trainer::train(std::move(model), b.train.at(k), b.cfg, &b.test.at(k)));
    std::printf("  %-11s test accuracy %.4f (%.1fs)\n", trainer::to_string(k).c_str(),
                final_accuracy(b.runs.at(k).log), seconds_since(t1));
    std::fflush(stdout);
  }
  b.seconds = seconds_since(t0);
  return b;
}

Verdict ranking(const Benchmark& b) {
  const double f = final_accuracy(b.runs.at(FeatureKind::Fusion).log);
  const double o = final_accuracy(b.runs.at(FeatureKind::Orientation).log);
  const double p = final_accuracy(b.runs.at(FeatureKind::Phase).log);
  const double a = final_accuracy(b.runs.at(FeatureKind::Amplitude).log);
  const bool order = f >= o && o >= p && p >= a;
  const bool pass = order && f - a >= 0.10 && f >= 0.90 && b.seconds < 1800.0;
  return {pass, fmt("fusion %.4f, orientation %.4f, phase %.4f, amplitude %.4f; order %s, gap %.1f points, "
                    "%.1fs on %zu cores",
                    f, o, p, a, order ? "holds" : "violated", 100.0 * (f - a), b.seconds, cores())};
}

Verdict training_health(const Benchmark& b) {
  const auto& log = b.runs.at(FeatureKind::Fusion).log;
  std::size_t first_rise = 0;
  for (std::size_t e = 3; e < log.epoch_mean_loss.size(); ++e)
    if (!(log.epoch_mean_loss[e] < log.epoch_mean_loss[e - 1])) {
      first_rise = e + 1;
      break;
    }
  bool band = true;
  std::string medians;
  for (std::size_t l = 0; l < log.layer_names.size(); ++l) {
    std::vector<double> v;
    for (const auto& it : log.iterations)
      if (it.ratios[l]) v.push_back(*it.ratios[l]);
    std::sort(v.begin(), v.end());
    const double med = v.empty() ? -99.0 : (v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]));
    if (med < -4.5 || med > -2.5) band = false;
    medians += fmt("%s%s %.2f", medians.empty() ? "" : ", ", log.layer_names[l].c_str(), med);
  }
  const std::string loss = first_rise ? fmt("loss rises at epoch %zu", first_rise)
                                      : fmt("loss falls every epoch after 3 (%.4f -> %.4f)", log.epoch_mean_loss[2],
                                            log.epoch_mean_loss.back());
  return {!first_rise && band, loss + "; median log10 update ratio " + medians};
}

std::vector<double> flat(const cnn::CnnModel& m) {
  std::vector<double> out;
  for (const auto& p : m.params()) out.insert(out.end(), p.values.begin(), p.values.end());
  return out;
}

Verdict parallel_equivalence(const Benchmark& b) {
  const auto& ds = b.train.at(FeatureKind::Fusion);
  const auto& test = b.test.at(FeatureKind::Fusion);
  const auto& seq = b.runs.at(FeatureKind::Fusion);

  const auto one = parallel::train_parallel(ds, b.cfg, 1, 1, &test);
  const bool identical = flat(one.model) == flat(seq.model) && one.log.epoch_mean_loss == seq.log.epoch_mean_loss;

  const auto t0 = Clock::now();
  const auto four = parallel::train_parallel(ds, b.cfg, 4, 1, &test);
  const double secs = seconds_since(t0);
  const double a1 = final_accuracy(one.log), a4 = final_accuracy(four.log);

  std::vector<cnn::CnnModel> models;
  for (std::uint64_t s = 1; s <= 4; ++s) models.push_back(cnn::build_paper_model(64, 64, 4, s));
  const auto avg = flat(parallel::average_parameters(models));
  std::vector<std::vector<double>> all;
  for (const auto& m : models) all.push_back(flat(m));
  double worst = 0.0;
  for (std::size_t i = 0; i < avg.size(); ++i) {
    long double sum = 0.0L;
    for (const auto& v : all) sum += v[i];
    worst = std::max(worst, std::abs(avg[i] - double(sum / all.size())));
  }
  return {identical && std::abs(a1 - a4) <= 0.05 && worst < 1e-12,
          fmt("k=1 %s sequential; accuracy k=1 %.4f, k=4 %.4f (%.1fs); averaging error %.3e",
              identical ? "bit-identical to" : "DIFFERS from", a1, a4, secs, worst)};
}

Verdict metrics_exact() {
  struct Case {
    std::vector<std::vector<std::size_t>> table;
    double accuracy, precision, recall, f1;
  };
  // Hand-computed as integer ratios.
  const Case cases[] = {
      {{{3, 2}, {1, 4}}, 7.0 / 10.0, 17.0 / 24.0, 7.0 / 10.0, 119.0 / 169.0},
      {{{5, 1, 0}, {2, 6, 2}, {0, 1, 3}}, 7.0 / 10.0, 289.0 / 420.0, 131.0 / 180.0, 1590078.0 / 2247840.0},
      {{{4, 0, 0}, {3, 0, 1}, {0, 0, 2}}, 3.0 / 5.0, 26.0 / 63.0, 2.0 / 3.0, 26.0 / 51.0},
  };
  bool pass = true;
  std::string detail;
  for (std::size_t i = 0; i < std::size(cases); ++i) {
    const auto& c = cases[i];
    const auto m = trainer::metrics_from_confusion(c.table);
    const bool ok = m.accuracy == c.accuracy && m.precision == c.precision && m.recall == c.recall && m.f1 == c.f1;
    if (!ok) {
      pass = false;
      detail += fmt(" table %zu got (%.17g, %.17g, %.17g, %.17g) want (%.17g, %.17g, %.17g, %.17g);", i + 1,
                    m.accuracy, m.precision, m.recall, m.f1, c.accuracy, c.precision, c.recall, c.f1);
    }
  }
  return {pass, pass ? "3 tables match exactly" : "mismatch:" + detail};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MONOFUSE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Verdict pipeline_determinism() {
  testing::TempDir tmp("accept");
  if (run_cli("synth-data --out " + (tmp / "data").string() + " --seed 5 --train-per-class 4 --test-per-class 2 --size 32"))
    return {false, "synth-data failed"};
  const nlohmann::json cfg = {{"data", (tmp / "data").string()}, {"epochs", 3}, {"batch", 4}, {"lr", 1e-3},
                              {"kernel", 3}, {"conv1_channels", 6}, {"conv2_channels", 6}, {"eval_every", 1},
                              {"seed", 13}};
  testing::write_bytes(tmp / "run.json", cfg.dump(2));
  for (const char* out : {"a", "b"})
    if (run_cli("pipeline --config " + (tmp / "run.json").string() + " --out-dir " + (tmp / out).string()))
      return {false, std::string("pipeline run ") + out + " failed"};
  bool same = true;
  std::string detail;
  for (const char* f : {"model.ckpt", "metrics.json", "train.csv"}) {
    const bool eq = testing::read_bytes(tmp / "a" / f) == testing::read_bytes(tmp / "b" / f) &&
                    !testing::read_bytes(tmp / "a" / f).empty();
    same = same && eq;
    detail += fmt("%s%s %s", detail.empty() ? "" : ", ", f, eq ? "identical" : "DIFFER");
  }
  return {same, detail};
}

void guarded(int n, const std::function<Verdict()>& fn) {
  try {
    report(n, fn());
  } catch (const std::exception& e) {
    report(n, {false, std::string("threw: ") + e.what()});
  }
}

}  // namespace

int main() {
  guarded(1, emd_reconstruction);
  guarded(2, riesz_oracle);
  guarded(3, orientation_recovery);
  guarded(4, gradient_check);
  guarded(5, overfit);
  try {
    const Benchmark b = run_benchmark();
    guarded(6, [&] { return ranking(b); });
    guarded(7, [&] { return training_health(b); });
    guarded(8, [&] { return parallel_equivalence(b); });
  } catch (const std::exception& e) {
    for (int n : {6, 7, 8}) report(n, {false, std::string("benchmark threw: ") + e.what()});
  }
  guarded(9, metrics_exact);
  guarded(10, pipeline_determinism);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures ? 1 : 0;
}
