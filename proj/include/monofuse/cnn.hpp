#pragma once

#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "monofuse/image.hpp"

namespace monofuse::cnn {

struct Shape {
  std::size_t channels = 1;
  std::size_t rows = 1;
  std::size_t cols = 1;

  std::size_t size() const noexcept { return channels * rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// 64-byte aligned storage for activations, parameters and gradients. Eigen
/// chooses its kernel peeling from buffer addresses, so fixed alignment keeps
/// results independent of heap layout.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Values = std::vector<double, AlignedAllocator<double>>;

/// Dense (channels, rows, cols) array; a feature vector is (n, 1, 1).
struct Tensor {
  Shape shape;
  Values values;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(s), values(s.size(), fill) {}
  Tensor(Shape s, Values v);

  static Tensor from_image(const GrayImage& img);
};

// Layer kinds. Convolution is a valid (unpadded) stride-1 cross-correlation.
struct Conv {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_rows = 1;
  std::size_t kernel_cols = 1;
  Values weights;  // (out, in, kr, kc)
  Values biases;   // (out)
};
struct Relu {};
struct MaxPool {};  // 2x2 window, stride 2; odd trailing rows/cols are dropped
struct Lrn {
  std::size_t radius = 2;
  double alpha = 1e-4;
  double beta = 0.75;
  double k = 2.0;
};
struct Flatten {};
struct Dense {
  std::size_t in_features = 1;
  std::size_t out_features = 1;
  Values weights;  // (out, in)
  Values biases;
};
struct Softmax {};

using Layer = std::variant<Conv, Relu, MaxPool, Lrn, Flatten, Dense, Softmax>;

std::string layer_name(const Layer& layer);

/// A reference to one trainable array inside a model.
struct ParamRef {
  std::size_t layer = 0;
  bool is_bias = false;
  std::span<double> values;
};
struct ConstParamRef {
  std::size_t layer = 0;
  bool is_bias = false;
  std::span<const double> values;
};

class CnnModel {
 public:
  CnnModel() = default;
  CnnModel(Shape input, std::vector<Layer> layers);

  const Shape& input_shape() const noexcept { return input_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }

  /// Output shape of every layer, in order. Throws Errc::ShapeMismatch on an
  /// incompatible stack.
  std::vector<Shape> output_shapes() const;
  std::size_t num_classes() const;

  /// Trainable arrays in a fixed order: per layer, weights then biases.
  std::vector<ParamRef> params();
  std::vector<ConstParamRef> params() const;

  /// Layers owning parameters, in order.
  std::vector<std::size_t> parameterized_layers() const;

  friend bool operator==(const CnnModel&, const CnnModel&);

 private:
  Shape input_;
  std::vector<Layer> layers_;
};

/// Per-parameter arrays mirroring CnnModel::params() order.
struct GradientSet {
  std::vector<Values> grads;
};

struct OptimizerState {
  std::vector<Values> velocity;
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double l2 = 5e-4;

  static OptimizerState for_model(const CnnModel& model, double learning_rate, double momentum,
                                  double l2);
};

/// What backward needs from the matching forward pass.
struct ForwardCache {
  const CnnModel* model = nullptr;
  std::uint64_t model_checksum = 0;
  std::vector<std::vector<Tensor>> layer_inputs;        // [layer][sample]
  std::vector<std::vector<std::vector<std::uint32_t>>> pool_argmax;  // [layer][sample]
  std::vector<std::vector<std::vector<double>>> lrn_scale;           // [layer][sample]
};

struct ForwardResult {
  std::vector<Tensor> logits;  // Softmax input
  std::vector<Tensor> probs;   // Softmax output
  ForwardCache cache;
};

ForwardResult forward(const CnnModel& model, std::span<const Tensor> batch);

/// Cross-entropy -log p[label], with p clamped to at least 1e-12.
double loss(const Tensor& probs, std::size_t label);

/// Gradients of the weighted mean cross-entropy
/// (1/B) * sum_s weight_s * loss_s. Empty weights mean all ones.
GradientSet backward(const CnnModel& model, const ForwardResult& fwd,
                     std::span<const std::size_t> labels,
                     std::span<const double> sample_weights = {});

/// v <- momentum*v - lr*(g + l2*w); w <- w + v. L2 decay applies to weights,
/// not biases. Throws Errc::NonFinite (model untouched) on a non-finite gradient.
void sgd_momentum_step(OptimizerState& state, CnnModel& model, const GradientSet& grads);

Tensor lrn_forward(const Tensor& x, const Lrn& params);

struct PaperModelOptions {
  std::size_t kernel = 5;
  std::size_t conv1_channels = 50;
  std::size_t conv2_channels = 50;
};

/// Conv(k) -> ReLU -> LRN -> MaxPool -> Conv(k) -> ReLU -> MaxPool -> Flatten ->
/// Dense(num_classes) -> Softmax. Weights ~ N(0, sqrt(2/fan_in)), biases 0.
CnnModel build_paper_model(std::size_t rows, std::size_t cols, std::size_t num_classes,
                           std::uint64_t seed, const PaperModelOptions& opts = {});

std::size_t argmax(const Tensor& t);

/// FNV-1a over the bit patterns of every parameter, in params() order.
std::uint64_t parameter_checksum(const CnnModel& model);

}  // namespace monofuse::cnn
