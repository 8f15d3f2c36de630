#include "dsegan/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace dsegan {

void ParamSet::add(const std::string& name, const Tensor& t) {
  if (find(name) != nullptr) {
    throw std::invalid_argument("ParamSet: duplicate parameter name '" + name + "'");
  }
  items.emplace_back(name, t);
}

void ParamSet::adopt(const std::string& prefix, const ParamSet& other) {
  for (const auto& [name, t] : other.items) add(prefix + "." + name, t);
}

const Tensor* ParamSet::find(const std::string& name) const {
  for (const auto& [n, t] : items) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::vector<Tensor> ParamSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items.size());
  for (const auto& [n, t] : items) out.push_back(t);
  return out;
}

void Adam::step(const std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("Adam: parameter and gradient counts differ");
  }
  if (m_.empty()) {
    for (const Tensor& p : params) {
      m_.push_back(Tensor::zeros(p.shape()));
      v_.push_back(Tensor::zeros(p.shape()));
    }
  }
  if (m_.size() != params.size()) {
    throw std::invalid_argument("Adam: parameter count changed between steps");
  }
  t_ += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape()) {
      throw std::invalid_argument("Adam: gradient shape mismatch at index " + std::to_string(i));
    }
    std::vector<float>& p = params[i].leaf_values();
    std::vector<float>& m = m_[i].leaf_values();
    std::vector<float>& v = v_[i].leaf_values();
    const std::vector<float>& g = grads[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0f - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0f - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= static_cast<float>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

void Adam::restore(std::int64_t t, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != v.size()) {
    throw std::invalid_argument("Adam: moment vectors must pair up");
  }
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace dsegan
