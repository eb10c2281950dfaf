#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flnet/errors.hpp"

namespace flnet::ad {

// Dense (batch, channels, height, width) shape. Scalars use {1,1,1,1}.
struct Shape {
  int b = 1, c = 1, h = 1, w = 1;
  size_t numel() const { return size_t(b) * c * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// One node of the dynamic tape. Ownership flows from outputs to inputs, and
// backprop closures hold raw pointers only, so releasing the loss tensor
// releases the whole graph while parameters survive in the model.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> val;
  std::vector<T> grad;
  bool requires_grad = false;
  std::string name;
  std::vector<std::shared_ptr<Node<T>>> inputs;
  std::function<void()> backprop;

  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), T(0));
  }
};

// Value-semantic handle to a node. T is float for training and inference;
// double instantiations exist for the finite-difference gradient checks.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : node(std::move(n)) {}

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor from(Shape s, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T v);

  bool defined() const { return node != nullptr; }
  const Shape& shape() const { return node->shape; }
  std::vector<T>& values() { return node->val; }
  const std::vector<T>& values() const { return node->val; }
  std::vector<T>& grad() { return node->grad; }
  const std::vector<T>& grad() const { return node->grad; }
  bool requires_grad() const { return node && node->requires_grad; }
  T item() const { return node->val.at(0); }
  void set_name(const std::string& n) { node->name = n; }
  const std::string& name() const { return node->name; }
  void zero_grad() { node->grad.assign(node->val.size(), T(0)); }

  std::shared_ptr<Node<T>> node;
};

// Reverse pass from a scalar loss: seeds d(loss)/d(loss) = 1, then visits
// every reachable node exactly once in reverse topological order,
// accumulating gradients additively across fan-out.
template <typename T>
void backward(const Tensor<T>& loss);

// --------------------------------------------------------------------- ops

// Cross-correlation convolution, zero padding, odd kernel.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int padding, int stride = 1);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Elementwise sum. b may have batch 1 to broadcast across a's batch.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

// (B, C*r^2, H, W) -> (B, C, H*r, W*r); exact permutation.
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r);

// 2x2 max pooling, stride 2. Backward routes to the argmax, first index in
// row-major window order on ties.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x);

// Nearest-neighbor 2x upsampling.
template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// Mean |pred - target| over valid pixels (mask empty = all valid, else
// nonzero mask byte = excluded). Shapes of target/mask match pred.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const std::vector<T>& target,
                  const std::vector<uint8_t>& invalid_mask);

// Weighted cross-entropy over (B, n_classes, H, W) logits with int labels in
// [0, n_classes). Optional focal factor (1 - p_true)^gamma. The mean is
// normalized by the summed weights of the valid pixels.
template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, const std::vector<int32_t>& labels,
                             const std::optional<std::array<T, 3>>& class_weights,
                             std::optional<T> focal_gamma,
                             const std::vector<uint8_t>& invalid_mask);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace flnet::ad
