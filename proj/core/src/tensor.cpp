#include "dsegan/tensor.hpp"

#include <cmath>
#include <unordered_map>

#include "dsegan/ops.hpp"

namespace dsegan {

namespace {
thread_local Tape* g_active_tape = nullptr;
thread_local bool g_grad_enabled = true;
}  // namespace

Tape* active_tape() { return g_active_tape; }
bool grad_enabled() { return g_grad_enabled; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradScope::~NoGradScope() { g_grad_enabled = previous_; }

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

static void validate_shape(const std::vector<int>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must have rank >= 1");
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
  }
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  validate_shape(shape);
  auto node = std::make_shared<TensorNode>();
  node->values.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0f);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (float& v : t.node()->values) v = value;
  if (!std::isfinite(value)) throw NumericError("tensor fill value is not finite");
  return t;
}

Tensor Tensor::ones(std::vector<int> shape) { return full(std::move(shape), 1.0f); }

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
  validate_shape(shape);
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw NumericError("from_data: input contains non-finite values");
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

std::vector<float>& Tensor::leaf_values() const {
  if (!is_leaf()) throw std::logic_error("leaf_values() called on an op result");
  return node_->values;
}

void Tensor::set_requires_grad(bool rg) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad only valid on leaves");
  node_->requires_grad = rg;
}

Tensor Tensor::grad() const {
  if (!node_->grad) return Tensor();
  return Tensor(node_->grad);
}

void Tensor::zero_grad() { node_->grad.reset(); }

Tensor Tensor::detach() const {
  auto node = std::make_shared<TensorNode>();
  node->shape = node_->shape;
  node->values = node_->values;
  node->requires_grad = false;
  return Tensor(std::move(node));
}

float Tensor::item() const {
  if (numel() != 1) throw std::logic_error("item() requires a single-element tensor");
  return node_->values[0];
}

float Tensor::at(int i) const { return node_->values[static_cast<std::size_t>(i)]; }

float Tensor::at(int i, int j) const {
  return node_->values[static_cast<std::size_t>(i) * dim(1) + j];
}

float Tensor::at(int i, int j, int k) const {
  return node_->values[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
}

// ---------------------------------------------------------------------------
// Reverse sweep

namespace {

// Walks the tape backwards from root, accumulating gradients per node.
// Accumulation adds are recorded only when create_graph is set.
std::unordered_map<TensorNode*, Tensor> run_backward(const Tensor& root, bool create_graph) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined root");
  if (root.numel() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got " + shape_str(root.shape()));
  }
  Tape* tape = g_active_tape;
  if (tape == nullptr) throw std::logic_error("backward: no active tape");
  if (create_graph && !g_grad_enabled) {
    throw std::logic_error("backward: create_graph requires grad mode");
  }

  std::unordered_map<TensorNode*, Tensor> grads;
  grads[root.node()] = Tensor::ones(root.shape());

  const std::int64_t start = root.node()->tape_index;
  for (std::int64_t idx = start; idx >= 0; --idx) {
    // Copy out of the tape: backward calls may append entries and reallocate.
    Tensor output = tape->entries[static_cast<std::size_t>(idx)].output;
    auto it = grads.find(output.node());
    if (it == grads.end()) continue;
    Tensor gout = it->second;
    auto backward_fn = tape->entries[static_cast<std::size_t>(idx)].backward;
    std::vector<Tensor> inputs = tape->entries[static_cast<std::size_t>(idx)].inputs;

    std::vector<char> need(inputs.size());
    bool any = false;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      need[i] = inputs[i].requires_grad() ? 1 : 0;
      any = any || need[i];
    }
    if (!any) continue;

    std::vector<Tensor> gins;
    if (create_graph) {
      gins = backward_fn(gout, need);
    } else {
      NoGradScope no_grad;
      gins = backward_fn(gout, need);
    }
    if (gins.size() != inputs.size()) {
      throw std::logic_error("backward: gradient count mismatch in op");
    }
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!need[i] || !gins[i].defined()) continue;
      if (gins[i].shape() != inputs[i].shape()) {
        throw std::logic_error(std::string("backward: gradient shape mismatch in op ") +
                               tape->entries[static_cast<std::size_t>(idx)].op);
      }
      auto found = grads.find(inputs[i].node());
      if (found == grads.end()) {
        grads[inputs[i].node()] = gins[i];
      } else if (create_graph) {
        found->second = add(found->second, gins[i]);
      } else {
        NoGradScope no_grad;
        found->second = add(found->second, gins[i]);
      }
    }
  }
  return grads;
}

}  // namespace

void backward(const Tensor& root) {
  auto grads = run_backward(root, /*create_graph=*/false);
  for (auto& [node, g] : grads) {
    if (!node->requires_grad) continue;
    if (!node->grad) {
      auto buf = std::make_shared<TensorNode>();
      buf->shape = node->shape;
      buf->values.assign(node->values.size(), 0.0f);
      node->grad = std::move(buf);
    }
    const auto& gv = g.values();
    auto& acc = node->grad->values;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gv[i];
  }
}

std::vector<Tensor> grads_of(const Tensor& root, const std::vector<Tensor>& inputs,
                             bool create_graph) {
  auto grads = run_backward(root, create_graph);
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (const Tensor& in : inputs) {
    auto it = grads.find(in.node());
    if (it == grads.end()) {
      out.push_back(Tensor::zeros(in.shape()));
    } else {
      out.push_back(it->second);
    }
  }
  return out;
}

}  // namespace dsegan
