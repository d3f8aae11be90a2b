#include "monofuse/cnn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>

namespace monofuse::cnn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

Shape conv_output(const Conv& c, const Shape& in) {
  if (in.channels != c.in_channels)
    throw Error(Errc::ShapeMismatch, "conv expects " + std::to_string(c.in_channels) +
                                         " channels, got " + to_string(in));
  if (in.rows < c.kernel_rows || in.cols < c.kernel_cols)
    throw Error(Errc::ShapeMismatch, "conv kernel larger than input " + to_string(in));
  return {c.out_channels, in.rows - c.kernel_rows + 1, in.cols - c.kernel_cols + 1};
}

Shape layer_output(const Layer& layer, const Shape& in) {
  return std::visit(
      overloaded{
          [&](const Conv& c) { return conv_output(c, in); },
          [&](const Relu&) { return in; },
          [&](const Lrn&) { return in; },
          [&](const MaxPool&) {
            if (in.rows < 2 || in.cols < 2)
              throw Error(Errc::ShapeMismatch, "max pool input smaller than 2x2: " + to_string(in));
            return Shape{in.channels, in.rows / 2, in.cols / 2};
          },
          [&](const Flatten&) { return Shape{in.size(), 1, 1}; },
          [&](const Dense& d) {
            if (in.size() != d.in_features)
              throw Error(Errc::ShapeMismatch, "dense expects " + std::to_string(d.in_features) +
                                                   " features, got " + to_string(in));
            return Shape{d.out_features, 1, 1};
          },
          [&](const Softmax&) {
            if (in.rows != 1 || in.cols != 1)
              throw Error(Errc::ShapeMismatch, "softmax expects a feature vector");
            return in;
          },
      },
      layer);
}

// Unfolds one sample into a (C*kr*kc) x (out_rows*out_cols) patch matrix.
void im2col(const Tensor& x, const Conv& c, std::size_t out_rows, std::size_t out_cols,
            RowMatrix& col) {
  const std::size_t in_rows = x.shape.rows, in_cols = x.shape.cols;
  col.resize(static_cast<Eigen::Index>(c.in_channels * c.kernel_rows * c.kernel_cols),
             static_cast<Eigen::Index>(out_rows * out_cols));
  std::size_t row = 0;
  for (std::size_t ch = 0; ch < c.in_channels; ++ch)
    for (std::size_t ki = 0; ki < c.kernel_rows; ++ki)
      for (std::size_t kj = 0; kj < c.kernel_cols; ++kj, ++row) {
        double* dst = col.data() + row * out_rows * out_cols;
        for (std::size_t r = 0; r < out_rows; ++r) {
          const double* src = x.values.data() + (ch * in_rows + r + ki) * in_cols + kj;
          std::copy(src, src + out_cols, dst + r * out_cols);
        }
      }
}

void col2im_add(const RowMatrix& col, const Conv& c, const Shape& in_shape, std::size_t out_rows,
                std::size_t out_cols, Values& dx) {
  const std::size_t in_rows = in_shape.rows, in_cols = in_shape.cols;
  std::size_t row = 0;
  for (std::size_t ch = 0; ch < c.in_channels; ++ch)
    for (std::size_t ki = 0; ki < c.kernel_rows; ++ki)
      for (std::size_t kj = 0; kj < c.kernel_cols; ++kj, ++row) {
        const double* src = col.data() + row * out_rows * out_cols;
        for (std::size_t r = 0; r < out_rows; ++r) {
          double* dst = dx.data() + (ch * in_rows + r + ki) * in_cols + kj;
          for (std::size_t q = 0; q < out_cols; ++q) dst[q] += src[r * out_cols + q];
        }
      }
}

Tensor conv_forward(const Conv& c, const Tensor& x, const Shape& out_shape) {
  RowMatrix col;
  im2col(x, c, out_shape.rows, out_shape.cols, col);
  Tensor y(out_shape);
  const auto k = static_cast<Eigen::Index>(c.in_channels * c.kernel_rows * c.kernel_cols);
  const auto p = static_cast<Eigen::Index>(out_shape.rows * out_shape.cols);
  ConstMatMap w(c.weights.data(), static_cast<Eigen::Index>(c.out_channels), k);
  MatMap out(y.values.data(), static_cast<Eigen::Index>(c.out_channels), p);
  out.noalias() = w * col;
  for (std::size_t o = 0; o < c.out_channels; ++o) out.row(static_cast<Eigen::Index>(o)).array() += c.biases[o];
  return y;
}

// Sum of squares over the channel window centred on each channel, per pixel.
std::vector<double> lrn_scale(const Tensor& x, const Lrn& p) {
  const std::size_t ch = x.shape.channels, plane = x.shape.rows * x.shape.cols;
  std::vector<double> scale(x.values.size());
  for (std::size_t c = 0; c < ch; ++c) {
    const std::size_t lo = c >= p.radius ? c - p.radius : 0;
    const std::size_t hi = std::min(ch - 1, c + p.radius);
    for (std::size_t i = 0; i < plane; ++i) {
      double s = 0.0;
      for (std::size_t j = lo; j <= hi; ++j) {
        const double a = x.values[j * plane + i];
        s += a * a;
      }
      scale[c * plane + i] = p.k + p.alpha * s;
    }
  }
  return scale;
}

std::uint64_t fnv1a(std::uint64_t h, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    h ^= (bits >> (8 * i)) & 0xffu;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.channels) + "," + std::to_string(s.rows) + "," +
         std::to_string(s.cols) + ")";
}

Tensor::Tensor(Shape s, Values v) : shape(s), values(std::move(v)) {
  if (values.size() != shape.size())
    throw Error(Errc::ShapeMismatch, "value count does not match shape " + to_string(shape));
}

Tensor Tensor::from_image(const GrayImage& img) {
  return Tensor(Shape{1, img.rows(), img.cols()}, Values(img.pixels().begin(), img.pixels().end()));
}

std::string layer_name(const Layer& layer) {
  return std::visit(overloaded{
                        [](const Conv&) { return std::string("conv"); },
                        [](const Relu&) { return std::string("relu"); },
                        [](const MaxPool&) { return std::string("maxpool"); },
                        [](const Lrn&) { return std::string("lrn"); },
                        [](const Flatten&) { return std::string("flatten"); },
                        [](const Dense&) { return std::string("dense"); },
                        [](const Softmax&) { return std::string("softmax"); },
                    },
                    layer);
}

CnnModel::CnnModel(Shape input, std::vector<Layer> layers)
    : input_(input), layers_(std::move(layers)) {
  if (layers_.empty() || !std::holds_alternative<Softmax>(layers_.back()))
    throw Error(Errc::ShapeMismatch, "model must end in exactly one softmax layer");
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i)
    if (std::holds_alternative<Softmax>(layers_[i]))
      throw Error(Errc::ShapeMismatch, "softmax may only appear as the last layer");
  for (const auto& l : layers_) {
    if (const auto* c = std::get_if<Conv>(&l)) {
      if (c->weights.size() != c->out_channels * c->in_channels * c->kernel_rows * c->kernel_cols ||
          c->biases.size() != c->out_channels)
        throw Error(Errc::ShapeMismatch, "conv parameter sizes inconsistent");
    } else if (const auto* d = std::get_if<Dense>(&l)) {
      if (d->weights.size() != d->out_features * d->in_features || d->biases.size() != d->out_features)
        throw Error(Errc::ShapeMismatch, "dense parameter sizes inconsistent");
    }
  }
  for (const auto& p : params())
    for (double v : p.values)
      if (!std::isfinite(v))
        throw Error(Errc::NonFinite, "non-finite parameter in layer " + std::to_string(p.layer));
  output_shapes();
}

std::vector<Shape> CnnModel::output_shapes() const {
  std::vector<Shape> shapes;
  Shape s = input_;
  for (const auto& l : layers_) {
    s = layer_output(l, s);
    shapes.push_back(s);
  }
  return shapes;
}

std::size_t CnnModel::num_classes() const { return output_shapes().back().channels; }

std::vector<ParamRef> CnnModel::params() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (auto* c = std::get_if<Conv>(&layers_[i])) {
      out.push_back({i, false, c->weights});
      out.push_back({i, true, c->biases});
    } else if (auto* d = std::get_if<Dense>(&layers_[i])) {
      out.push_back({i, false, d->weights});
      out.push_back({i, true, d->biases});
    }
  }
  return out;
}

std::vector<ConstParamRef> CnnModel::params() const {
  std::vector<ConstParamRef> out;
  for (auto& p : const_cast<CnnModel*>(this)->params())
    out.push_back({p.layer, p.is_bias, p.values});
  return out;
}

std::vector<std::size_t> CnnModel::parameterized_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (std::holds_alternative<Conv>(layers_[i]) || std::holds_alternative<Dense>(layers_[i]))
      out.push_back(i);
  return out;
}

bool operator==(const CnnModel& a, const CnnModel& b) {
  if (!(a.input_ == b.input_) || a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i)
    if (a.layers_[i].index() != b.layers_[i].index()) return false;
  const auto pa = a.params(), pb = b.params();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].values.size() != pb[i].values.size()) return false;
    // Bitwise comparison so that -0.0 and 0.0 differ and NaN equals itself.
    for (std::size_t j = 0; j < pa[i].values.size(); ++j)
      if (std::bit_cast<std::uint64_t>(pa[i].values[j]) != std::bit_cast<std::uint64_t>(pb[i].values[j]))
        return false;
  }
  // Hyperparameters of parameter-free layers.
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const auto* la = std::get_if<Lrn>(&a.layers_[i]);
    const auto* lb = std::get_if<Lrn>(&b.layers_[i]);
    if (la && (la->radius != lb->radius || la->alpha != lb->alpha || la->beta != lb->beta || la->k != lb->k))
      return false;
    const auto* ca = std::get_if<Conv>(&a.layers_[i]);
    const auto* cb = std::get_if<Conv>(&b.layers_[i]);
    if (ca && (ca->kernel_rows != cb->kernel_rows || ca->in_channels != cb->in_channels)) return false;
  }
  return true;
}

OptimizerState OptimizerState::for_model(const CnnModel& model, double learning_rate,
                                         double momentum, double l2) {
  OptimizerState s;
  s.learning_rate = learning_rate;
  s.momentum = momentum;
  s.l2 = l2;
  for (const auto& p : model.params()) s.velocity.emplace_back(p.values.size(), 0.0);
  return s;
}

Tensor lrn_forward(const Tensor& x, const Lrn& p) {
  const auto scale = lrn_scale(x, p);
  Tensor y(x.shape);
  for (std::size_t i = 0; i < y.values.size(); ++i)
    y.values[i] = x.values[i] * std::pow(scale[i], -p.beta);
  return y;
}

ForwardResult forward(const CnnModel& model, std::span<const Tensor> batch) {
  if (batch.empty()) throw Error(Errc::InvalidArgument, "empty batch");
  for (const auto& t : batch)
    if (!(t.shape == model.input_shape()))
      throw Error(Errc::ShapeMismatch, "input " + to_string(t.shape) + " but model expects " +
                                           to_string(model.input_shape()));
  const auto shapes = model.output_shapes();
  const auto& layers = model.layers();
  const std::size_t n = batch.size();

  ForwardResult res;
  res.cache.model = &model;
  res.cache.model_checksum = parameter_checksum(model);
  res.cache.layer_inputs.resize(layers.size());
  res.cache.pool_argmax.resize(layers.size());
  res.cache.lrn_scale.resize(layers.size());

  std::vector<Tensor> current(batch.begin(), batch.end());
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const Shape& out_shape = shapes[li];
    std::vector<Tensor> next(n);
    std::visit(
        overloaded{
            [&](const Conv& c) {
              for (std::size_t s = 0; s < n; ++s) next[s] = conv_forward(c, current[s], out_shape);
            },
            [&](const Relu&) {
              for (std::size_t s = 0; s < n; ++s) {
                next[s] = current[s];
                for (auto& v : next[s].values) v = v > 0.0 ? v : 0.0;
              }
            },
            [&](const Lrn& p) {
              auto& scales = res.cache.lrn_scale[li];
              scales.resize(n);
              for (std::size_t s = 0; s < n; ++s) {
                scales[s] = lrn_scale(current[s], p);
                next[s] = Tensor(out_shape);
                for (std::size_t i = 0; i < next[s].values.size(); ++i)
                  next[s].values[i] = current[s].values[i] * std::pow(scales[s][i], -p.beta);
              }
            },
            [&](const MaxPool&) {
              auto& arg = res.cache.pool_argmax[li];
              arg.resize(n);
              const Shape& in = current[0].shape;
              for (std::size_t s = 0; s < n; ++s) {
                next[s] = Tensor(out_shape);
                arg[s].resize(out_shape.size());
                for (std::size_t ch = 0; ch < out_shape.channels; ++ch)
                  for (std::size_t r = 0; r < out_shape.rows; ++r)
                    for (std::size_t c = 0; c < out_shape.cols; ++c) {
                      std::size_t best = (ch * in.rows + 2 * r) * in.cols + 2 * c;
                      for (std::size_t dr = 0; dr < 2; ++dr)
                        for (std::size_t dc = 0; dc < 2; ++dc) {
                          const std::size_t idx = (ch * in.rows + 2 * r + dr) * in.cols + 2 * c + dc;
                          if (current[s].values[idx] > current[s].values[best]) best = idx;
                        }
                      const std::size_t o = (ch * out_shape.rows + r) * out_shape.cols + c;
                      next[s].values[o] = current[s].values[best];
                      arg[s][o] = static_cast<std::uint32_t>(best);
                    }
              }
            },
            [&](const Flatten&) {
              for (std::size_t s = 0; s < n; ++s) next[s] = Tensor(out_shape, current[s].values);
            },
            [&](const Dense& d) {
              ConstMatMap w(d.weights.data(), static_cast<Eigen::Index>(d.out_features),
                            static_cast<Eigen::Index>(d.in_features));
              ConstVecMap b(d.biases.data(), static_cast<Eigen::Index>(d.out_features));
              for (std::size_t s = 0; s < n; ++s) {
                next[s] = Tensor(out_shape);
                ConstVecMap x(current[s].values.data(), static_cast<Eigen::Index>(d.in_features));
                VecMap y(next[s].values.data(), static_cast<Eigen::Index>(d.out_features));
                y.noalias() = w * x + b;
              }
            },
            [&](const Softmax&) {
              for (std::size_t s = 0; s < n; ++s) {
                next[s] = Tensor(out_shape);
                const auto& z = current[s].values;
                const double zmax = *std::max_element(z.begin(), z.end());
                double total = 0.0;
                for (std::size_t i = 0; i < z.size(); ++i) total += next[s].values[i] = std::exp(z[i] - zmax);
                for (auto& v : next[s].values) v /= total;
              }
            },
        },
        layers[li]);
    if (std::holds_alternative<Softmax>(layers[li])) res.logits = current;
    res.cache.layer_inputs[li] = std::move(current);
    current = std::move(next);
  }
  res.probs = std::move(current);
  return res;
}

double loss(const Tensor& probs, std::size_t label) {
  if (label >= probs.values.size()) throw Error(Errc::InvalidArgument, "label out of range");
  return -std::log(std::max(probs.values[label], 1e-12));
}

GradientSet backward(const CnnModel& model, const ForwardResult& fwd,
                     std::span<const std::size_t> labels, std::span<const double> sample_weights) {
  const auto& cache = fwd.cache;
  const std::size_t n = fwd.probs.size();
  if (cache.model != &model || cache.model_checksum != parameter_checksum(model))
    throw Error(Errc::InvalidArgument, "forward cache is stale or belongs to another model");
  if (labels.size() != n) throw Error(Errc::InvalidArgument, "label count does not match batch");
  if (!sample_weights.empty() && sample_weights.size() != n)
    throw Error(Errc::InvalidArgument, "sample weight count does not match batch");

  const auto& layers = model.layers();
  const auto params = model.params();
  GradientSet gs;
  std::vector<std::size_t> param_index(layers.size(), SIZE_MAX);
  for (std::size_t i = 0; i < params.size(); ++i) {
    gs.grads.emplace_back(params[i].values.size(), 0.0);
    if (!params[i].is_bias) param_index[params[i].layer] = i;
  }

  // Combined softmax + cross-entropy gradient at the logits.
  std::vector<Tensor> delta(n);
  for (std::size_t s = 0; s < n; ++s) {
    if (labels[s] >= fwd.probs[s].values.size()) throw Error(Errc::InvalidArgument, "label out of range");
    const double w = (sample_weights.empty() ? 1.0 : sample_weights[s]) / static_cast<double>(n);
    delta[s] = fwd.probs[s];
    delta[s].values[labels[s]] -= 1.0;
    for (auto& v : delta[s].values) v *= w;
  }

  for (std::size_t li = layers.size() - 1; li-- > 0;) {
    const auto& inputs = cache.layer_inputs[li];
    const bool need_input_grad = li > 0;
    std::vector<Tensor> prev(n);
    std::visit(
        overloaded{
            [&](const Conv& c) {
              auto& gw = gs.grads[param_index[li]];
              auto& gb = gs.grads[param_index[li] + 1];
              const Shape& out_shape = delta[0].shape;
              const auto k = static_cast<Eigen::Index>(c.in_channels * c.kernel_rows * c.kernel_cols);
              const auto p = static_cast<Eigen::Index>(out_shape.rows * out_shape.cols);
              const auto oc = static_cast<Eigen::Index>(c.out_channels);
              MatMap dw(gw.data(), oc, k);
              ConstMatMap w(c.weights.data(), oc, k);
              RowMatrix col, dcol;
              for (std::size_t s = 0; s < n; ++s) {
                ConstMatMap dout(delta[s].values.data(), oc, p);
                im2col(inputs[s], c, out_shape.rows, out_shape.cols, col);
                dw.noalias() += dout * col.transpose();
                for (Eigen::Index o = 0; o < oc; ++o) gb[static_cast<std::size_t>(o)] += dout.row(o).sum();
                if (need_input_grad) {
                  dcol.noalias() = w.transpose() * dout;
                  prev[s] = Tensor(inputs[s].shape);
                  col2im_add(dcol, c, inputs[s].shape, out_shape.rows, out_shape.cols, prev[s].values);
                }
              }
            },
            [&](const Relu&) {
              for (std::size_t s = 0; s < n; ++s) {
                prev[s] = std::move(delta[s]);
                for (std::size_t i = 0; i < prev[s].values.size(); ++i)
                  if (!(inputs[s].values[i] > 0.0)) prev[s].values[i] = 0.0;
              }
            },
            [&](const Lrn& p) {
              const auto& scales = cache.lrn_scale[li];
              for (std::size_t s = 0; s < n; ++s) {
                const Shape& sh = inputs[s].shape;
                const std::size_t plane = sh.rows * sh.cols;
                const auto& a = inputs[s].values;
                const auto& sc = scales[s];
                const auto& g = delta[s].values;
                prev[s] = Tensor(sh);
                // t_c = g_c * a_c * scale_c^(-beta-1), summed over windows containing j.
                std::vector<double> t(a.size());
                for (std::size_t i = 0; i < a.size(); ++i) t[i] = g[i] * a[i] * std::pow(sc[i], -p.beta - 1.0);
                for (std::size_t j = 0; j < sh.channels; ++j) {
                  const std::size_t lo = j >= p.radius ? j - p.radius : 0;
                  const std::size_t hi = std::min(sh.channels - 1, j + p.radius);
                  for (std::size_t i = 0; i < plane; ++i) {
                    double acc = 0.0;
                    for (std::size_t c = lo; c <= hi; ++c) acc += t[c * plane + i];
                    const std::size_t idx = j * plane + i;
                    prev[s].values[idx] =
                        g[idx] * std::pow(sc[idx], -p.beta) - 2.0 * p.alpha * p.beta * a[idx] * acc;
                  }
                }
              }
            },
            [&](const MaxPool&) {
              const auto& arg = cache.pool_argmax[li];
              for (std::size_t s = 0; s < n; ++s) {
                prev[s] = Tensor(inputs[s].shape);
                for (std::size_t o = 0; o < delta[s].values.size(); ++o)
                  prev[s].values[arg[s][o]] += delta[s].values[o];
              }
            },
            [&](const Flatten&) {
              for (std::size_t s = 0; s < n; ++s) prev[s] = Tensor(inputs[s].shape, std::move(delta[s].values));
            },
            [&](const Dense& d) {
              auto& gw = gs.grads[param_index[li]];
              auto& gb = gs.grads[param_index[li] + 1];
              const auto out = static_cast<Eigen::Index>(d.out_features);
              const auto in = static_cast<Eigen::Index>(d.in_features);
              MatMap dw(gw.data(), out, in);
              VecMap db(gb.data(), out);
              ConstMatMap w(d.weights.data(), out, in);
              for (std::size_t s = 0; s < n; ++s) {
                ConstVecMap g(delta[s].values.data(), out);
                ConstVecMap x(inputs[s].values.data(), in);
                dw.noalias() += g * x.transpose();
                db += g;
                if (need_input_grad) {
                  prev[s] = Tensor(inputs[s].shape);
                  VecMap dx(prev[s].values.data(), in);
                  dx.noalias() = w.transpose() * g;
                }
              }
            },
            [&](const Softmax&) { throw Error(Errc::ShapeMismatch, "softmax before the last layer"); },
        },
        layers[li]);
    if (!need_input_grad) break;
    delta = std::move(prev);
  }
  return gs;
}

void sgd_momentum_step(OptimizerState& state, CnnModel& model, const GradientSet& grads) {
  auto params = model.params();
  if (grads.grads.size() != params.size() || state.velocity.size() != params.size())
    throw Error(Errc::ShapeMismatch, "gradient/velocity count does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads.grads[i].size() != params[i].values.size() || state.velocity[i].size() != params[i].values.size())
      throw Error(Errc::ShapeMismatch, "gradient/velocity shape does not match parameter");
    for (std::size_t j = 0; j < grads.grads[i].size(); ++j)
      if (!std::isfinite(grads.grads[i][j]))
        throw Error(Errc::NonFinite, "gradient of layer " + std::to_string(params[i].layer) +
                                         (params[i].is_bias ? " bias" : " weight") + " index " +
                                         std::to_string(j));
  }
  const double lr = state.learning_rate, rho = state.momentum;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double decay = params[i].is_bias ? 0.0 : state.l2;
    auto w = params[i].values;
    const auto& g = grads.grads[i];
    auto& v = state.velocity[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] + decay * w[j];
      v[j] = rho * v[j] - lr * gj;
      w[j] += v[j];
    }
  }
}

CnnModel build_paper_model(std::size_t rows, std::size_t cols, std::size_t num_classes,
                           std::uint64_t seed, const PaperModelOptions& opts) {
  if (num_classes < 1) throw Error(Errc::InvalidArgument, "num_classes must be >= 1");
  const std::size_t k = opts.kernel;
  auto after_block = [k](std::size_t n) -> std::size_t { return n < k ? 0 : (n - k + 1) / 2; };
  if (k == 0 || after_block(after_block(rows)) == 0 || after_block(after_block(cols)) == 0)
    throw Error(Errc::InvalidArgument, "input " + std::to_string(rows) + "x" + std::to_string(cols) +
                                           " too small for two " + std::to_string(k) + "x" +
                                           std::to_string(k) + " conv + pool blocks");

  std::mt19937_64 rng(seed);
  auto init = [&rng](Values& w, std::size_t fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (auto& v : w) v = dist(rng);
  };

  Conv c1{1, opts.conv1_channels, k, k, {}, {}};
  c1.weights.resize(c1.out_channels * k * k);
  c1.biases.assign(c1.out_channels, 0.0);
  init(c1.weights, k * k);

  Conv c2{opts.conv1_channels, opts.conv2_channels, k, k, {}, {}};
  c2.weights.resize(c2.out_channels * c2.in_channels * k * k);
  c2.biases.assign(c2.out_channels, 0.0);
  init(c2.weights, c2.in_channels * k * k);

  const std::size_t flat = opts.conv2_channels * after_block(after_block(rows)) * after_block(after_block(cols));
  Dense d{flat, num_classes, Values(flat * num_classes), Values(num_classes, 0.0)};
  init(d.weights, flat);

  return CnnModel(Shape{1, rows, cols},
                  {std::move(c1), Relu{}, Lrn{}, MaxPool{}, std::move(c2), Relu{}, MaxPool{}, Flatten{},
                   std::move(d), Softmax{}});
}

std::size_t argmax(const Tensor& t) {
  return static_cast<std::size_t>(std::max_element(t.values.begin(), t.values.end()) - t.values.begin());
}

std::uint64_t parameter_checksum(const CnnModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : model.params())
    for (double v : p.values) h = fnv1a(h, v);
  return h;
}

}  // namespace monofuse::cnn
