#include "dsegan/ops.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <utility>

namespace dsegan {

namespace {

using BackwardFn = std::function<std::vector<Tensor>(const Tensor&, const std::vector<char>&)>;

void check_finite(const char* op, const std::vector<float>& values) {
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("op '") + op + "' produced a non-finite value");
    }
  }
}

Tensor make_op_result(const char* op, std::vector<int> shape, std::vector<float> values,
                      std::vector<Tensor> inputs, BackwardFn backward_fn) {
  check_finite(op, values);
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  Tensor out(std::move(node));

  Tape* tape = active_tape();
  bool any_grad = false;
  for (const Tensor& t : inputs) any_grad = any_grad || t.requires_grad();
  if (tape != nullptr && grad_enabled() && any_grad) {
    out.node()->requires_grad = true;
    out.node()->tape_index = static_cast<std::int64_t>(tape->entries.size());
    tape->entries.push_back(TapeEntry{op, out, std::move(inputs), std::move(backward_fn)});
  }
  return out;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

using IndexMap = std::shared_ptr<const std::vector<std::int64_t>>;

Tensor gather_map(const Tensor& x, const IndexMap& map, std::vector<int> out_shape);

// out[map[i]] += x[i]; -1 entries are dropped. Backward of gather_map.
Tensor scatter_map(const Tensor& x, const IndexMap& map, std::vector<int> out_shape) {
  require(static_cast<std::int64_t>(map->size()) == x.numel(),
          "scatter: map length must equal input size");
  std::vector<float> out(static_cast<std::size_t>(shape_numel(out_shape)), 0.0f);
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const std::int64_t j = (*map)[i];
    if (j >= 0) out[static_cast<std::size_t>(j)] += xv[i];
  }
  std::vector<int> in_shape = x.shape();
  return make_op_result(
      "scatter", std::move(out_shape), std::move(out), {x},
      [map, in_shape](const Tensor& gout, const std::vector<char>&) {
        return std::vector<Tensor>{gather_map(gout, map, in_shape)};
      });
}

// out[i] = x[map[i]], or 0 where map[i] == -1.
Tensor gather_map(const Tensor& x, const IndexMap& map, std::vector<int> out_shape) {
  require(static_cast<std::int64_t>(map->size()) == shape_numel(out_shape),
          "gather: map length must equal output size");
  std::vector<float> out(map->size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::int64_t j = (*map)[i];
    out[i] = j >= 0 ? xv[static_cast<std::size_t>(j)] : 0.0f;
  }
  std::vector<int> in_shape = x.shape();
  return make_op_result(
      "gather", std::move(out_shape), std::move(out), {x},
      [map, in_shape](const Tensor& gout, const std::vector<char>&) {
        return std::vector<Tensor>{scatter_map(gout, map, in_shape)};
      });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 tensors required");
  require(a.dim(1) == b.dim(0), "matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(static_cast<std::size_t>(m) * n, 0.0f);
  const float* av = a.values().data();
  const float* bv = b.values().data();
  for (int i = 0; i < m; ++i) {
    const float* arow = av + static_cast<std::size_t>(i) * k;
    float* crow = out.data() + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const float apv = arow[p];
      if (apv == 0.0f) continue;
      const float* brow = bv + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += apv * brow[j];
    }
  }
  return make_op_result("matmul", {m, n}, std::move(out), {a, b},
                        [a, b](const Tensor& gout, const std::vector<char>& need) {
                          std::vector<Tensor> gins(2);
                          if (need[0]) gins[0] = matmul(gout, transpose(b));
                          if (need[1]) gins[1] = matmul(transpose(a), gout);
                          return gins;
                        });
}

Tensor transpose(const Tensor& x) {
  require(x.rank() == 2, "transpose: rank-2 tensor required");
  const int m = x.dim(0), n = x.dim(1);
  std::vector<float> out(static_cast<std::size_t>(m) * n);
  const float* xv = x.values().data();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out[static_cast<std::size_t>(j) * m + i] = xv[static_cast<std::size_t>(i) * n + j];
    }
  }
  return make_op_result("transpose", {n, m}, std::move(out), {x},
                        [](const Tensor& gout, const std::vector<char>&) {
                          return std::vector<Tensor>{transpose(gout)};
                        });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: element count mismatch, " + shape_str(x.shape()) + " to " + shape_str(shape));
  std::vector<int> old_shape = x.shape();
  std::vector<float> out = x.values();
  return make_op_result("reshape", std::move(shape), std::move(out), {x},
                        [old_shape](const Tensor& gout, const std::vector<char>&) {
                          return std::vector<Tensor>{reshape(gout, old_shape)};
                        });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool scalar_b = b.numel() == 1;
  require(scalar_b || a.shape() == b.shape(),
          "add: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  std::vector<float> out(a.values());
  const auto& bv = b.values();
  if (scalar_b) {
    const float c = bv[0];
    for (float& v : out) v += c;
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  }
  std::vector<int> b_shape = b.shape();
  return make_op_result("add", a.shape(), std::move(out), {a, b},
                        [scalar_b, b_shape](const Tensor& gout, const std::vector<char>& need) {
                          std::vector<Tensor> gins(2);
                          if (need[0]) gins[0] = gout;
                          if (need[1]) {
                            gins[1] = scalar_b ? reshape(sum_all(gout), b_shape) : gout;
                          }
                          return gins;
                        });
}

Tensor add_scalar(const Tensor& x, float c) {
  std::vector<float> out(x.values());
  for (float& v : out) v += c;
  return make_op_result("add_scalar", x.shape(), std::move(out), {x},
                        [](const Tensor& gout, const std::vector<char>&) {
                          return std::vector<Tensor>{gout};
                        });
}

Tensor scale(const Tensor& x, float c) {
  std::vector<float> out(x.values());
  for (float& v : out) v *= c;
  return make_op_result("scale", x.shape(), std::move(out), {x},
                        [c](const Tensor& gout, const std::vector<char>&) {
                          return std::vector<Tensor>{scale(gout, c)};
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0f)); }

namespace {
enum class MulMode { kSame, kScalar, kTrailing };

MulMode mul_mode(const Tensor& a, const Tensor& b) {
  if (b.numel() == 1) return MulMode::kScalar;
  if (a.shape() == b.shape()) return MulMode::kSame;
  if (a.rank() == b.rank() && b.dim(b.rank() - 1) == 1) {
    bool leading_match = true;
    for (int i = 0; i + 1 < a.rank(); ++i) leading_match = leading_match && a.dim(i) == b.dim(i);
    if (leading_match) return MulMode::kTrailing;
  }
  throw std::invalid_argument("hadamard: incompatible shapes " + shape_str(a.shape()) + " and " +
                              shape_str(b.shape()));
}

// Sum over the trailing axis, collapsing it to extent 1.
Tensor sum_trailing(const Tensor& x) {
  const int last = x.dim(x.rank() - 1);
  const int outer = static_cast<int>(x.numel() / last);
  Tensor flat = reshape(x, {outer, last});
  Tensor summed = matmul(flat, Tensor::ones({last, 1}));
  std::vector<int> shape = x.shape();
  shape.back() = 1;
  return reshape(summed, shape);
}
}  // namespace

Tensor hadamard(const Tensor& a, const Tensor& b) {
  const MulMode mode = mul_mode(a, b);
  std::vector<float> out(a.values());
  const auto& bv = b.values();
  switch (mode) {
    case MulMode::kScalar: {
      const float c = bv[0];
      for (float& v : out) v *= c;
      break;
    }
    case MulMode::kSame:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
      break;
    case MulMode::kTrailing: {
      const int last = a.dim(a.rank() - 1);
      const std::size_t outer = static_cast<std::size_t>(a.numel() / last);
      for (std::size_t o = 0; o < outer; ++o) {
        const float c = bv[o];
        float* row = out.data() + o * last;
        for (int j = 0; j < last; ++j) row[j] *= c;
      }
      break;
    }
  }
  return make_op_result("hadamard", a.shape(), std::move(out), {a, b},
                        [a, b, mode](const Tensor& gout, const std::vector<char>& need) {
                          std::vector<Tensor> gins(2);
                          if (need[0]) gins[0] = hadamard(gout, b);
                          if (need[1]) {
                            Tensor prod = hadamard(gout, a);
                            switch (mode) {
                              case MulMode::kScalar:
                                gins[1] = reshape(sum_all(prod), b.shape());
                                break;
                              case MulMode::kSame:
                                gins[1] = prod;
                                break;
                              case MulMode::kTrailing:
                                gins[1] = sum_trailing(prod);
                                break;
                            }
                          }
                          return gins;
                        });
}

Tensor tanh(const Tensor& x) {
  std::vector<float> out(x.values());
  for (float& v : out) v = std::tanh(v);
  Tensor result = make_op_result("tanh", x.shape(), std::move(out), {x}, nullptr);
  if (result.requires_grad()) {
    Tape* tape = active_tape();
    tape->entries.back().backward = [result](const Tensor& gout, const std::vector<char>&) {
      Tensor one_minus_sq = add_scalar(scale(hadamard(result, result), -1.0f), 1.0f);
      return std::vector<Tensor>{hadamard(gout, one_minus_sq)};
    };
  }
  return result;
}

Tensor exp(const Tensor& x) {
  std::vector<float> out(x.values());
  for (float& v : out) v = std::exp(v);
  Tensor result = make_op_result("exp", x.shape(), std::move(out), {x}, nullptr);
  if (result.requires_grad()) {
    Tape* tape = active_tape();
    tape->entries.back().backward = [result](const Tensor& gout, const std::vector<char>&) {
      return std::vector<Tensor>{hadamard(gout, result)};
    };
  }
  return result;
}

Tensor log(const Tensor& x) {
  std::vector<float> out(x.values());
  for (float& v : out) v = std::log(v);
  return make_op_result("log", x.shape(), std::move(out), {x},
                        [x](const Tensor& gout, const std::vector<char>&) {
                          return std::vector<Tensor>{hadamard(gout, pow_scalar(x, -1.0f))};
                        });
}

namespace {
Tensor masked_passthrough(const char* op, const Tensor& x, std::vector<float> out,
                          std::vector<float> mask) {
  auto mask_t = std::make_shared<std::vector<float>>(std::move(mask));
  std::vector<int> shape = x.shape();
  return make_op_result(op, x.shape(), std::move(out), {x},
                        [mask_t, shape](const Tensor& gout, const std::vector<char>&) {
                          Tensor m = Tensor::from_data(shape, *mask_t);
                          return std::vector<Tensor>{hadamard(gout, m)};
                        });
}
}  // namespace

Tensor relu(const Tensor& x) {
  std::vector<float> out(x.values());
  std::vector<float> mask(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] > 0.0f) {
      mask[i] = 1.0f;
    } else {
      out[i] = 0.0f;  // subgradient 0 at the kink
    }
  }
  return masked_passthrough("relu", x, std::move(out), std::move(mask));
}

Tensor leaky_relu(const Tensor& x, float slope) {
  std::vector<float> out(x.values());
  std::vector<float> mask(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] > 0.0f) {
      mask[i] = 1.0f;
    } else {
      out[i] *= slope;
      mask[i] = slope;
    }
  }
  return masked_passthrough("leaky_relu", x, std::move(out), std::move(mask));
}

Tensor clamp(const Tensor& x, float lo, float hi) {
  require(lo <= hi, "clamp: lo must not exceed hi");
  std::vector<float> out(x.values());
  std::vector<float> mask(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < lo) {
      out[i] = lo;
    } else if (out[i] > hi) {
      out[i] = hi;
    } else {
      mask[i] = 1.0f;
    }
  }
  return masked_passthrough("clamp", x, std::move(out), std::move(mask));
}

Tensor pow_scalar(const Tensor& x, float exponent) {
  std::vector<float> out(x.values());
  for (float& v : out) {
    v = static_cast<float>(std::pow(static_cast<double>(v), static_cast<double>(exponent)));
  }
  return make_op_result("pow", x.shape(), std::move(out), {x},
                        [x, exponent](const Tensor& gout, const std::vector<char>&) {
                          Tensor d = scale(pow_scalar(x, exponent - 1.0f), exponent);
                          return std::vector<Tensor>{hadamard(gout, d)};
                        });
}

Tensor relu_clip(const Tensor& x, const Tensor& alpha) {
  require(alpha.numel() == 1, "relu_clip: alpha must be a single-element tensor");
  return relu(hadamard(tanh(x), alpha));
}

namespace {
Tensor softmax_rows(const Tensor& x) {
  const int m = x.dim(0), n = x.dim(1);
  std::vector<float> out(x.values());
  for (int i = 0; i < m; ++i) {
    float* row = out.data() + static_cast<std::size_t>(i) * n;
    float mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (int j = 0; j < n; ++j) row[j] *= inv;
  }
  Tensor result = make_op_result("softmax", x.shape(), std::move(out), {x}, nullptr);
  if (result.requires_grad()) {
    Tape* tape = active_tape();
    tape->entries.back().backward = [result, n](const Tensor& gout, const std::vector<char>&) {
      // dx = y * (g - rowsum(g * y))
      Tensor gy = hadamard(gout, result);
      Tensor row_sums = matmul(gy, Tensor::ones({n, 1}));
      Tensor centered = sub(gout, broadcast_cols(row_sums, n));
      return std::vector<Tensor>{hadamard(result, centered)};
    };
  }
  return result;
}
}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  if (x.rank() == 1) {
    require(axis == 0, "softmax: axis out of range for rank-1 tensor");
    return reshape(softmax_rows(reshape(x, {1, x.dim(0)})), x.shape());
  }
  require(x.rank() == 2, "softmax: rank-1 or rank-2 tensors only");
  require(axis == 0 || axis == 1, "softmax: axis out of range");
  if (axis == 1) return softmax_rows(x);
  return transpose(softmax_rows(transpose(x)));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  require(q.rank() == 2 && k.rank() == 2 && v.rank() == 2, "attention: rank-2 tensors required");
  require(q.dim(1) == k.dim(1), "attention: q and k must share the feature dimension");
  require(k.dim(0) == v.dim(0), "attention: k and v must share the key count");
  Tensor logits = matmul(q, transpose(k));
  return matmul(softmax(logits, 1), v);
}

Tensor sum(const Tensor& x, int axis) {
  if (x.rank() == 1) {
    require(axis == 0, "sum: axis out of range for rank-1 tensor");
    return matmul(reshape(x, {1, x.dim(0)}), Tensor::ones({x.dim(0), 1}));
  }
  require(x.rank() == 2, "sum: rank-1 or rank-2 tensors only");
  require(axis == 0 || axis == 1, "sum: axis out of range");
  if (axis == 0) return matmul(Tensor::ones({1, x.dim(0)}), x);
  return matmul(x, Tensor::ones({x.dim(1), 1}));
}

Tensor mean(const Tensor& x, int axis) {
  const int extent = x.rank() == 1 ? x.dim(0) : x.dim(axis);
  return scale(sum(x, axis), 1.0f / static_cast<float>(extent));
}

Tensor sum_all(const Tensor& x) {
  const int n = static_cast<int>(x.numel());
  return matmul(reshape(x, {1, n}), Tensor::ones({n, 1}));
}

Tensor mean_all(const Tensor& x) {
  return scale(sum_all(x), 1.0f / static_cast<float>(x.numel()));
}

Tensor broadcast_rows(const Tensor& row, int m) {
  require(row.rank() == 2 && row.dim(0) == 1, "broadcast_rows: [1 x n] tensor required");
  return matmul(Tensor::ones({m, 1}), row);
}

Tensor broadcast_cols(const Tensor& col, int n) {
  require(col.rank() == 2 && col.dim(1) == 1, "broadcast_cols: [m x 1] tensor required");
  return matmul(col, Tensor::ones({1, n}));
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: at least one part required");
  const int n = parts[0].dim(1);
  int rows = 0;
  for (const Tensor& p : parts) {
    require(p.rank() == 2 && p.dim(1) == n, "concat_rows: column counts must match");
    rows += p.dim(0);
  }
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(rows) * n);
  for (const Tensor& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  std::vector<int> row_counts;
  for (const Tensor& p : parts) row_counts.push_back(p.dim(0));
  return make_op_result("concat_rows", {rows, n}, std::move(out), parts,
                        [row_counts](const Tensor& gout, const std::vector<char>& need) {
                          std::vector<Tensor> gins(row_counts.size());
                          int start = 0;
                          for (std::size_t i = 0; i < row_counts.size(); ++i) {
                            if (need[i]) gins[i] = slice(gout, 0, start, row_counts[i]);
                            start += row_counts[i];
                          }
                          return gins;
                        });
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  if (a.rank() == 1) {
    require(b.rank() == 1 && axis == 0, "concat: rank-1 tensors concat along axis 0");
    Tensor joined = concat(reshape(a, {1, a.dim(0)}), reshape(b, {1, b.dim(0)}), 1);
    return reshape(joined, {a.dim(0) + b.dim(0)});
  }
  require(a.rank() == 2 && b.rank() == 2, "concat: rank-1 or rank-2 tensors only");
  require(axis == 0 || axis == 1, "concat: axis out of range");
  if (axis == 0) return concat_rows({a, b});
  return transpose(concat_rows({transpose(a), transpose(b)}));
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
  if (x.rank() == 1) {
    require(axis == 0, "slice: axis out of range for rank-1 tensor");
    Tensor s = slice(reshape(x, {1, x.dim(0)}), 1, start, len);
    return reshape(s, {len});
  }
  require(x.rank() == 2, "slice: rank-1 or rank-2 tensors only");
  require(axis == 0 || axis == 1, "slice: axis out of range");
  const int m = x.dim(0), n = x.dim(1);
  const int extent = axis == 0 ? m : n;
  require(start >= 0 && len > 0 && start + len <= extent, "slice: range out of bounds");

  auto map = std::make_shared<std::vector<std::int64_t>>();
  std::vector<int> out_shape;
  if (axis == 0) {
    out_shape = {len, n};
    map->resize(static_cast<std::size_t>(len) * n);
    for (int i = 0; i < len; ++i) {
      for (int j = 0; j < n; ++j) {
        (*map)[static_cast<std::size_t>(i) * n + j] = static_cast<std::int64_t>(start + i) * n + j;
      }
    }
  } else {
    out_shape = {m, len};
    map->resize(static_cast<std::size_t>(m) * len);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < len; ++j) {
        (*map)[static_cast<std::size_t>(i) * len + j] = static_cast<std::int64_t>(i) * n + start + j;
      }
    }
  }
  return gather_map(x, map, out_shape);
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
  require(x.rank() == 2, "gather_rows: rank-2 tensor required");
  const int m = x.dim(0), n = x.dim(1);
  auto map = std::make_shared<std::vector<std::int64_t>>(rows.size() * static_cast<std::size_t>(n));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r] >= 0 && rows[r] < m, "gather_rows: row index out of range");
    for (int j = 0; j < n; ++j) {
      (*map)[r * n + j] = static_cast<std::int64_t>(rows[r]) * n + j;
    }
  }
  return gather_map(x, map, {static_cast<int>(rows.size()), n});
}

Tensor embed_rows(const Tensor& table, const std::vector<int>& ids) {
  return gather_rows(table, ids);
}

Tensor permute_cols(const Tensor& x, const std::vector<int>& perm) {
  require(x.rank() == 2, "permute_cols: rank-2 tensor required");
  const int m = x.dim(0), n = x.dim(1);
  require(static_cast<int>(perm.size()) == n, "permute_cols: permutation length must equal columns");
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (int p : perm) {
    require(p >= 0 && p < n && !seen[static_cast<std::size_t>(p)],
            "permute_cols: not a permutation");
    seen[static_cast<std::size_t>(p)] = 1;
  }
  auto map = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      (*map)[static_cast<std::size_t>(i) * n + j] =
          static_cast<std::int64_t>(i) * n + perm[static_cast<std::size_t>(j)];
    }
  }
  return gather_map(x, map, {m, n});
}

Tensor upsample_nearest(const Tensor& x, int h, int w, int factor) {
  require(x.rank() == 2 && x.dim(0) == h * w, "upsample: token count must equal h*w");
  require(factor >= 1, "upsample: factor must be >= 1");
  const int c = x.dim(1);
  const int oh = h * factor, ow = w * factor;
  auto map = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(oh) * ow * c);
  for (int oy = 0; oy < oh; ++oy) {
    const int iy = oy / factor;
    for (int ox = 0; ox < ow; ++ox) {
      const int ix = ox / factor;
      const std::int64_t src = (static_cast<std::int64_t>(iy) * w + ix) * c;
      const std::size_t dst = (static_cast<std::size_t>(oy) * ow + ox) * c;
      for (int ch = 0; ch < c; ++ch) (*map)[dst + ch] = src + ch;
    }
  }
  return gather_map(x, map, {oh * ow, c});
}

int conv_output_extent(int extent, int k, int stride, int pad) {
  return (extent + 2 * pad - k) / stride + 1;
}

Tensor unfold(const Tensor& x, int h, int w, int k, int stride, int pad) {
  require(x.rank() == 2 && x.dim(0) == h * w, "unfold: token count must equal h*w");
  const int c = x.dim(1);
  const int oh = conv_output_extent(h, k, stride, pad);
  const int ow = conv_output_extent(w, k, stride, pad);
  require(oh > 0 && ow > 0, "unfold: kernel does not fit input");
  auto map = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(oh) * ow * k * k * c);
  std::size_t pos = 0;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * stride - pad + ky;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * stride - pad + kx;
          const bool inside = iy >= 0 && iy < h && ix >= 0 && ix < w;
          const std::int64_t src = inside ? (static_cast<std::int64_t>(iy) * w + ix) * c : -1;
          for (int ch = 0; ch < c; ++ch) {
            (*map)[pos++] = src < 0 ? -1 : src + ch;
          }
        }
      }
    }
  }
  return gather_map(x, map, {oh * ow, k * k * c});
}

Tensor l2_norm(const Tensor& x, float eps) {
  return pow_scalar(add_scalar(sum_all(hadamard(x, x)), eps), 0.5f);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  require(x.rank() == 2, "layer_norm: rank-2 tensor required");
  const int d = x.dim(1);
  require(gain.rank() == 2 && gain.dim(0) == 1 && gain.dim(1) == d, "layer_norm: gain must be [1 x d]");
  require(bias.rank() == 2 && bias.dim(0) == 1 && bias.dim(1) == d, "layer_norm: bias must be [1 x d]");
  Tensor row_mean = mean(x, 1);
  Tensor centered = sub(x, broadcast_cols(row_mean, d));
  Tensor var = mean(hadamard(centered, centered), 1);
  Tensor inv_std = pow_scalar(add_scalar(var, eps), -0.5f);
  Tensor normalized = hadamard(centered, inv_std);
  const int m = x.dim(0);
  return add(hadamard(normalized, broadcast_rows(gain, m)), broadcast_rows(bias, m));
}

Tensor gelu(const Tensor& x) {
  // 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
  Tensor cube = hadamard(hadamard(x, x), x);
  Tensor inner = scale(add(x, scale(cube, 0.044715f)), 0.7978845608f);
  Tensor gate = add_scalar(tanh(inner), 1.0f);
  return scale(hadamard(x, gate), 0.5f);
}

Tensor detach(const Tensor& x) { return x.detach(); }

}  // namespace dsegan
