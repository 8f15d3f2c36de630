#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dsegan/tensor.hpp"

namespace dsegan {

// Named parameter collection. Order is the identity: optimizers address
// parameters positionally, checkpoints address them by name.
struct ParamSet {
  std::vector<std::pair<std::string, Tensor>> items;

  void add(const std::string& name, const Tensor& t);
  // Merges another set under a prefix, as in "dse.element_gate".
  void adopt(const std::string& prefix, const ParamSet& other);
  const Tensor* find(const std::string& name) const;
  std::vector<Tensor> tensors() const;
  std::size_t size() const { return items.size(); }
};

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.0f;
  float beta2 = 0.99f;
  float eps = 1e-8f;
};

// Adam with bias correction. Moment buffers are exposed so a checkpoint can
// save and restore them, making an interrupted run resume bit-identically.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  // Applies one update in place. grads[i] pairs with params[i]; shapes must
  // match. Missing gradients are not allowed; pass zeros to freeze a step.
  void step(const std::vector<Tensor>& params, const std::vector<Tensor>& grads);

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps_taken() const { return t_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(std::int64_t t, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace dsegan
