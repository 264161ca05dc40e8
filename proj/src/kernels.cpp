#include "sst/kernels.hpp"

#include <cmath>
#include <string>

namespace sst::kernels {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 operands, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul inner dimension mismatch: " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  require_finite(a, "matmul lhs");
  require_finite(b, "matmul rhs");

  Tensor c({m, n});
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* pc = c.data().data();
  // i-t-j loop order: each c[i][j] still receives its k terms in t order.
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = pc + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const float av = pa[i * k + t];
      const float* brow = pb + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor linear(const Tensor& x, const Tensor& w) {
  if (x.rank() < 1 || w.rank() != 2 || x.row_size() != w.dim(0)) {
    throw ShapeError("linear: cannot apply " + shape_str(w.shape()) + " to " +
                     shape_str(x.shape()));
  }
  Tensor flat = x.reshaped({x.row_count(), x.row_size()});
  Tensor y = matmul(flat, w);
  Shape out_shape = x.shape();
  out_shape.back() = w.dim(1);
  return y.reshaped(std::move(out_shape));
}

Tensor rms_norm(const Tensor& x, std::span<const float> gain, float eps) {
  if (!(eps > 0.0f)) throw std::invalid_argument("rms_norm: eps must be > 0");
  const std::size_t d = x.row_size();
  if (gain.size() != d) {
    throw ShapeError("rms_norm: gain has " + std::to_string(gain.size()) +
                     " values, rows have " + std::to_string(d));
  }
  require_finite(x, "rms_norm input");

  Tensor y(x.shape());
  for (std::size_t r = 0; r < x.row_count(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    double sum_sq = 0.0;
    for (float v : in) sum_sq += static_cast<double>(v) * v;
    const float inv = static_cast<float>(
        1.0 / std::sqrt(sum_sq / static_cast<double>(d) + eps));
    for (std::size_t i = 0; i < d; ++i) out[i] = in[i] * inv * gain[i];
  }
  return y;
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, float eps) {
  return rms_norm(x, gain.data(), eps);
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = a;
  for (std::size_t i = 0; i < c.numel(); ++i) c[i] += b[i];
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor c = a;
  for (std::size_t i = 0; i < c.numel(); ++i) c[i] *= b[i];
  return c;
}

void softmax_inplace(std::span<float> row) {
  if (row.empty()) return;
  float max_v = row[0];
  for (float v : row) max_v = std::max(max_v, v);
  double sum = 0.0;
  for (float& v : row) {
    v = std::exp(v - max_v);
    sum += v;
  }
  const double inv = 1.0 / sum;
  for (float& v : row) v = static_cast<float>(v * inv);
}

Tensor softmax_rows(const Tensor& x) {
  require_finite(x, "softmax input");
  Tensor y = x;
  for (std::size_t r = 0; r < y.row_count(); ++r) softmax_inplace(y.row(r));
  return y;
}

float silu(float x) { return x / (1.0f + std::exp(-x)); }

Tensor silu(const Tensor& x) {
  require_finite(x, "silu input");
  Tensor y = x;
  for (float& v : y.data()) v = silu(v);
  return y;
}

Tensor rope_apply(const Tensor& q_or_k, std::size_t start_pos,
                  double theta_base) {
  if (q_or_k.rank() != 3) {
    throw ShapeError("rope_apply expects [heads, s, head_dim], got " +
                     shape_str(q_or_k.shape()));
  }
  const std::size_t heads = q_or_k.dim(0), s = q_or_k.dim(1),
                    head_dim = q_or_k.dim(2);
  if (head_dim % 2 != 0) {
    throw ShapeError("rope_apply: head_dim must be even, got " +
                     std::to_string(head_dim));
  }
  require_finite(q_or_k, "rope input");

  Tensor out = q_or_k;
  const std::size_t half = head_dim / 2;
  std::vector<float> cos_t(s * half), sin_t(s * half);
  for (std::size_t p = 0; p < s; ++p) {
    const double pos = static_cast<double>(start_pos + p);
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::pow(
          theta_base, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
      cos_t[p * half + i] = static_cast<float>(std::cos(pos * freq));
      sin_t[p * half + i] = static_cast<float>(std::sin(pos * freq));
    }
  }
  auto data = out.data();
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t p = 0; p < s; ++p) {
      float* v = data.data() + (h * s + p) * head_dim;
      for (std::size_t i = 0; i < half; ++i) {
        const float c = cos_t[p * half + i], sn = sin_t[p * half + i];
        const float x0 = v[2 * i], x1 = v[2 * i + 1];
        v[2 * i] = x0 * c - x1 * sn;
        v[2 * i + 1] = x0 * sn + x1 * c;
      }
    }
  }
  return out;
}

std::size_t argmax_greedy(std::span<const float> logits) {
  if (logits.empty()) throw std::invalid_argument("argmax_greedy: empty logits");
  require_finite(logits, "argmax logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

}  // namespace sst::kernels
