#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "dsegan/tensor.hpp"

namespace dsegan {

// All ops produce new tensors, validate output finiteness (NumericError names
// the op), and record onto the active tape when any input requires grad.
// Backward functions are themselves built from these ops, so gradients of
// gradients are available (needed by the gradient-penalty term).

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, std::vector<int> shape);

/// a + b. Shapes must match, or b must be a single-element tensor.
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, float c);
Tensor scale(const Tensor& x, float c);
Tensor sub(const Tensor& a, const Tensor& b);

/// Elementwise product. Shapes must match, or b is single-element, or b has
/// a's shape with the trailing axis collapsed to 1 (e.g. [L,h,d] * [L,h,1]).
Tensor hadamard(const Tensor& a, const Tensor& b);

Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, float slope);
Tensor pow_scalar(const Tensor& x, float exponent);
Tensor clamp(const Tensor& x, float lo, float hi);

/// max(0, alpha * tanh(x)); alpha is a single-element tensor. Output range
/// [0, alpha] for alpha >= 0.
Tensor relu_clip(const Tensor& x, const Tensor& alpha);

/// Max-subtracted softmax along `axis` (rank 1 or 2).
Tensor softmax(const Tensor& x, int axis);

/// softmax(q k^T) v with unscaled dot products; softmax over the key axis.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Sum / mean along one axis of a rank-2 tensor, keeping the reduced axis as
/// extent 1. Rank-1 tensors reduce to a single element with axis 0.
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

/// Replicates a [1 x n] row (or [m x 1] column) m (or n) times.
Tensor broadcast_rows(const Tensor& row, int m);
Tensor broadcast_cols(const Tensor& col, int n);

Tensor concat(const Tensor& a, const Tensor& b, int axis);
/// Stacks rank-2 tensors with equal column counts along axis 0.
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice(const Tensor& x, int axis, int start, int len);

/// New tensor whose row i is x's row rows[i]; duplicates allowed.
Tensor gather_rows(const Tensor& x, const std::vector<int>& rows);

// Column permutation: out[:, j] = x[:, perm[j]]. perm must be a permutation of 0..n-1.
Tensor permute_cols(const Tensor& x, const std::vector<int>& perm);

/// Row lookup into an embedding table; gradient scatters into the table.
Tensor embed_rows(const Tensor& table, const std::vector<int>& ids);

/// Nearest-neighbor upsampling of a [h*w x c] token grid by integer factor.
Tensor upsample_nearest(const Tensor& x, int h, int w, int factor);

/// im2col for a [h*w x c] grid: output row per output position holds the
/// k*k*c patch (zero padded), ready for a matmul with a [k*k*c x oc] weight.
Tensor unfold(const Tensor& x, int h, int w, int k, int stride, int pad);
int conv_output_extent(int extent, int k, int stride, int pad);

/// sqrt(sum(x^2) + eps), as a single-element tensor.
Tensor l2_norm(const Tensor& x, float eps = 1e-12f);

/// Pre-norm transformer helper: (x - mean) / sqrt(var + eps) * gain + bias,
/// per row; gain/bias are [1 x d].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);

/// tanh-approximation gelu.
Tensor gelu(const Tensor& x);

Tensor detach(const Tensor& x);

}  // namespace dsegan
