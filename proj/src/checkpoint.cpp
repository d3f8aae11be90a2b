#include "monofuse/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "monofuse/imageio.hpp"

namespace monofuse::cnn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= T(in[at + i]) << (8 * i);
  return v;
}

std::pair<std::size_t, std::size_t> matrix_dims(const Layer& layer, bool is_bias, std::size_t count) {
  if (is_bias) return {1, count};
  if (const auto* c = std::get_if<Conv>(&layer)) return {c->out_channels, count / c->out_channels};
  const auto& d = std::get<Dense>(layer);
  return {d.out_features, d.in_features};
}

Layer layer_from_json(const json& j) {
  const std::string type = j.at("type");
  if (type == "conv") {
    Conv c;
    c.in_channels = j.at("in_channels");
    c.out_channels = j.at("out_channels");
    c.kernel_rows = j.at("kernel").at(0);
    c.kernel_cols = j.at("kernel").at(1);
    return c;
  }
  if (type == "dense") {
    Dense d;
    d.in_features = j.at("in_features");
    d.out_features = j.at("out_features");
    return d;
  }
  if (type == "lrn") return Lrn{j.at("radius"), j.at("alpha"), j.at("beta"), j.at("k")};
  if (type == "relu") return Relu{};
  if (type == "maxpool") return MaxPool{};
  if (type == "flatten") return Flatten{};
  if (type == "softmax") return Softmax{};
  throw Error(Errc::MalformedHeader, "unknown layer type " + type);
}

}  // namespace

json describe_layers(const CnnModel& model) {
  json layers = json::array();
  for (const auto& l : model.layers()) {
    json j{{"type", layer_name(l)}};
    if (const auto* c = std::get_if<Conv>(&l)) {
      j["in_channels"] = c->in_channels;
      j["out_channels"] = c->out_channels;
      j["kernel"] = {c->kernel_rows, c->kernel_cols};
    } else if (const auto* d = std::get_if<Dense>(&l)) {
      j["in_features"] = d->in_features;
      j["out_features"] = d->out_features;
    } else if (const auto* n = std::get_if<Lrn>(&l)) {
      j["radius"] = n->radius;
      j["alpha"] = n->alpha;
      j["beta"] = n->beta;
      j["k"] = n->k;
    }
    layers.push_back(std::move(j));
  }
  return layers;
}

void save_checkpoint(const CnnModel& model, const json& metadata, const fs::path& path) {
  const auto& in = model.input_shape();
  json manifest{{"format", "monofuse-checkpoint"},
                {"version", kVersion},
                {"input", {in.channels, in.rows, in.cols}},
                {"layers", describe_layers(model)},
                {"metadata", metadata}};
  json params = json::array();
  std::vector<std::uint8_t> blobs;
  for (const auto& p : model.params()) {
    const auto [rows, cols] = matrix_dims(model.layers()[p.layer], p.is_bias, p.values.size());
    params.push_back({{"layer", p.layer}, {"kind", p.is_bias ? "biases" : "weights"}, {"rows", rows}, {"cols", cols}});
    GrayImage m(rows, cols, std::vector<double>(p.values.begin(), p.values.end()));
    const auto enc = imageio::encode_matrix(m);
    blobs.insert(blobs.end(), enc.begin(), enc.end());
  }
  manifest["parameters"] = std::move(params);
  const std::string text = manifest.dump(2);

  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'M', 'F', 'C', 'K'});
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blobs.begin(), blobs.end());

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::Io, "cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(Errc::Io, "write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::FileNotFound, path.string());
  const std::vector<std::uint8_t> data{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  if (data.size() < 16) throw Error(Errc::TruncatedPayload, "checkpoint header truncated");
  if (std::memcmp(data.data(), "MFCK", 4) != 0) throw Error(Errc::BadMagic, "expected MFCK");
  if (get_le<std::uint32_t>(data, 4) != kVersion) throw Error(Errc::MalformedHeader, "unsupported checkpoint version");
  const auto len = get_le<std::uint64_t>(data, 8);
  if (data.size() - 16 < len) throw Error(Errc::TruncatedPayload, "manifest truncated");

  json manifest;
  try {
    manifest = json::parse(data.begin() + 16, data.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedHeader, std::string("manifest: ") + e.what());
  }

  try {
    std::vector<Layer> layers;
    for (const auto& j : manifest.at("layers")) layers.push_back(layer_from_json(j));
    std::size_t pos = 16 + len;
    for (auto& l : layers) {
      auto read_param = [&](Values& dst) {
        if (data.size() - pos < 12) throw Error(Errc::TruncatedPayload, "parameter blob truncated");
        const std::size_t rows = get_le<std::uint32_t>(data, pos + 4);
        const std::size_t cols = get_le<std::uint32_t>(data, pos + 8);
        const std::size_t bytes = 12 + 8 * rows * cols;
        if (data.size() - pos < bytes) throw Error(Errc::TruncatedPayload, "parameter blob truncated");
        const auto m = imageio::decode_matrix(std::span(data.data() + pos, bytes));
        dst.assign(m.pixels().begin(), m.pixels().end());
        pos += bytes;
      };
      if (auto* c = std::get_if<Conv>(&l)) {
        read_param(c->weights);
        read_param(c->biases);
      } else if (auto* d = std::get_if<Dense>(&l)) {
        read_param(d->weights);
        read_param(d->biases);
      }
    }
    const auto& in = manifest.at("input");
    LoadedCheckpoint out{CnnModel(Shape{in.at(0), in.at(1), in.at(2)}, std::move(layers)),
                         manifest.value("metadata", json::object())};
    return out;
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedHeader, std::string("manifest: ") + e.what());
  }
}

}  // namespace monofuse::cnn
