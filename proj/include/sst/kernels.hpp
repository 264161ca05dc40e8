#pragma once

#include <cstddef>
#include <span>

#include "sst/tensor.hpp"

// Deterministic dense kernels. All reductions run sequentially in index
// order, so identical inputs give bit-identical outputs on every run.
// Non-finite inputs raise NumericError.
namespace sst::kernels {

// c[i][j] = sum_t a[i][t] * b[t][j], accumulated in f32 for t = 0..k-1.
Tensor matmul(const Tensor& a, const Tensor& b);

// x[..., k] times w[k, n] -> [..., n]; leading dims are flattened into rows.
Tensor linear(const Tensor& x, const Tensor& w);

// y_i = x_i / sqrt(mean_j(x_j^2) + eps) * gain_i, per row of the last dim.
// The mean of squares is accumulated in double.
Tensor rms_norm(const Tensor& x, std::span<const float> gain, float eps);
Tensor rms_norm(const Tensor& x, const Tensor& gain, float eps);

// Elementwise a + b and a * b over equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& x);
void softmax_inplace(std::span<float> row);

float silu(float x);
Tensor silu(const Tensor& x);

// Rotates interleaved pairs (x[2i], x[2i+1]) of q_or_k[heads, s, head_dim]
// by angle (start_pos + row) / theta_base^(2i / head_dim).
Tensor rope_apply(const Tensor& q_or_k, std::size_t start_pos,
                  double theta_base);

// Index of the largest logit; ties go to the lowest index.
std::size_t argmax_greedy(std::span<const float> logits);

}  // namespace sst::kernels
