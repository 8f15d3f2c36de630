#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsegan {

/// Thrown when an op produces a NaN/Inf value; carries the op name.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct TensorNode {
  std::vector<int> shape;
  std::vector<float> values;
  bool requires_grad = false;
  std::shared_ptr<TensorNode> grad;  // leaf gradient accumulator
  std::int64_t tape_index = -1;      // entry that produced this node, -1 for leaves
};

/// Value-semantic handle to an immutable float tensor. Copies share storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
  static Tensor ones(std::vector<int> shape);
  static Tensor from_data(std::vector<int> shape, std::vector<float> data,
                          bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->values.size()); }

  const std::vector<float>& values() const { return node_->values; }

  /// Direct write access for leaf tensors (parameter updates). Must not be
  /// called on tensors produced by recorded ops.
  std::vector<float>& leaf_values() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg);

  bool is_leaf() const { return node_->tape_index < 0; }

  /// Accumulated gradient of a leaf (null handle until backward ran).
  Tensor grad() const;
  void zero_grad();

  Tensor detach() const;

  float item() const;
  float at(int i) const;
  float at(int i, int j) const;
  float at(int i, int j, int k) const;

  TensorNode* node() const { return node_.get(); }

  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

struct TapeEntry {
  const char* op = "";
  Tensor output;
  std::vector<Tensor> inputs;
  // Receives the output gradient and a per-input "gradient needed" mask;
  // returns one gradient per input (undefined handle where not needed).
  std::function<std::vector<Tensor>(const Tensor&, const std::vector<char>&)> backward;
};

/// Ordered record of executed differentiable ops for one logical thread.
class Tape {
 public:
  std::vector<TapeEntry> entries;
  void clear() { entries.clear(); }
  std::size_t size() const { return entries.size(); }
};

Tape* active_tape();
bool grad_enabled();

/// Makes a tape the active recording target for the current scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Disables recording for the current scope (pure evaluation).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool previous_;
};

/// Reverse sweep from a scalar root; fills .grad on every reachable
/// requires_grad tensor.
void backward(const Tensor& root);

/// Gradients of a scalar root w.r.t. selected inputs, without touching any
/// .grad buffer. With create_graph the returned tensors are themselves
/// differentiable (recorded on the active tape).
std::vector<Tensor> grads_of(const Tensor& root, const std::vector<Tensor>& inputs,
                             bool create_graph);

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

}  // namespace dsegan
