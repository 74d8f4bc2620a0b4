#pragma once

// Inference kernels. Accumulation is done in double and rounded once to
// float32 per output element.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include "ddr/nn/tensor.hpp"

namespace ddr::nn {

/// Cross-correlation of x[C_in, L] with weight[C_out, C_in, K], zero padding.
inline Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor* bias, std::size_t stride,
                     std::size_t padding) {
  require_rank(x, 2, "conv1d input");
  require_rank(weight, 3, "conv1d weight");
  const std::size_t c_in = x.dim(0), len = x.dim(1);
  const std::size_t c_out = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != c_in) {
    throw Error(ErrorCode::ShapeMismatch, "conv1d: weight " + shape_string(weight.shape) + " vs input " +
                                              shape_string(x.shape));
  }
  if (bias) require_shape(*bias, {c_out}, "conv1d bias");
  if (stride == 0 || len + 2 * padding < k) throw Error(ErrorCode::ShapeMismatch, "conv1d: empty output");
  const std::size_t l_out = (len + 2 * padding - k) / stride + 1;

  Tensor out({c_out, l_out});
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t t = 0; t < l_out; ++t) {
      double acc = bias ? bias->data[o] : 0.0;
      const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(t * stride) - static_cast<std::ptrdiff_t>(padding);
      for (std::size_t c = 0; c < c_in; ++c) {
        const float* w = &weight.data[(o * c_in + c) * k];
        const float* xr = &x.data[c * len];
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t pos = base + static_cast<std::ptrdiff_t>(j);
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
          acc += static_cast<double>(w[j]) * xr[pos];
        }
      }
      out.at(o, t) = static_cast<float>(acc);
    }
  }
  return out;
}

/// Per-channel affine normalization of x[C, L] with stored statistics.
inline Tensor batchnorm1d_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                                const Tensor& running_var, double eps) {
  require_rank(x, 2, "batchnorm input");
  const Shape ch{x.dim(0)};
  require_shape(gamma, ch, "batchnorm weight");
  require_shape(beta, ch, "batchnorm bias");
  require_shape(running_mean, ch, "batchnorm running_mean");
  require_shape(running_var, ch, "batchnorm running_var");
  Tensor out(x.shape);
  for (std::size_t c = 0; c < x.dim(0); ++c) {
    const double scale = gamma.data[c] / std::sqrt(static_cast<double>(running_var.data[c]) + eps);
    for (std::size_t t = 0; t < x.dim(1); ++t) {
      out.at(c, t) = static_cast<float>((x.at(c, t) - static_cast<double>(running_mean.data[c])) * scale + beta.data[c]);
    }
  }
  return out;
}

inline void relu_inplace(Tensor& x) {
  for (auto& v : x.data) v = std::max(v, 0.0f);
}

inline void add_inplace(Tensor& x, const Tensor& y) {
  if (x.shape != y.shape) throw Error(ErrorCode::ShapeMismatch, "add: " + shape_string(x.shape) + " vs " + shape_string(y.shape));
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] += y.data[i];
}

/// Max pooling along the time axis; padded positions never win.
inline Tensor maxpool1d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  require_rank(x, 2, "maxpool input");
  const std::size_t len = x.dim(1);
  if (len + 2 * padding < kernel) throw Error(ErrorCode::ShapeMismatch, "maxpool: empty output");
  const std::size_t l_out = (len + 2 * padding - kernel) / stride + 1;
  Tensor out({x.dim(0), l_out});
  for (std::size_t c = 0; c < x.dim(0); ++c) {
    for (std::size_t t = 0; t < l_out; ++t) {
      float best = -std::numeric_limits<float>::infinity();
      for (std::size_t j = 0; j < kernel; ++j) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + j) - static_cast<std::ptrdiff_t>(padding);
        if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
        best = std::max(best, x.at(c, static_cast<std::size_t>(pos)));
      }
      out.at(c, t) = best;
    }
  }
  return out;
}

/// y = W x + b for each row of x[N, in]; W is [out, in].
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in) {
    throw Error(ErrorCode::ShapeMismatch, "linear: weight " + shape_string(weight.shape) + " vs input " + shape_string(x.shape));
  }
  if (bias) require_shape(*bias, {out_dim}, "linear bias");
  Tensor out({n, out_dim});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < out_dim; ++o) {
      double acc = bias ? bias->data[o] : 0.0;
      const float* w = &weight.data[o * in];
      const float* xr = &x.data[r * in];
      for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(w[i]) * xr[i];
      out.at(r, o) = static_cast<float>(acc);
    }
  }
  return out;
}

/// Normalizes each row of x[L, d], then applies the elementwise affine.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "layer_norm input");
  const std::size_t d = x.dim(1);
  require_shape(gamma, {d}, "layer_norm weight");
  require_shape(beta, {d}, "layer_norm bias");
  Tensor out(x.shape);
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    double mean = 0;
    for (std::size_t i = 0; i < d; ++i) mean += x.at(r, i);
    mean /= static_cast<double>(d);
    double var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (x.at(r, i) - mean) * (x.at(r, i) - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      out.at(r, i) = static_cast<float>((x.at(r, i) - mean) * inv * gamma.data[i] + beta.data[i]);
    }
  }
  return out;
}

/// Numerically stable softmax of each row, in place.
inline void softmax_rows(std::vector<double>& scores, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = &scores[r * cols];
    const double mx = *std::max_element(row, row + cols);
    double sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= sum;
#ifndef NDEBUG
    double check = 0;
    for (std::size_t c = 0; c < cols; ++c) check += row[c];
    assert(std::abs(check - 1.0) < 1e-6);
#endif
  }
}

struct AttentionWeights {
  const Tensor* wq = nullptr;
  const Tensor* wk = nullptr;
  const Tensor* wv = nullptr;
  const Tensor* wo = nullptr;
  const Tensor* bq = nullptr;
  const Tensor* bk = nullptr;
  const Tensor* bv = nullptr;
  const Tensor* bo = nullptr;
};

/// Multi-head scaled dot-product self-attention over x[L, d].
inline Tensor multi_head_attention(const Tensor& x, const AttentionWeights& w, std::size_t heads) {
  require_rank(x, 2, "attention input");
  const std::size_t len = x.dim(0), d = x.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw Error(ErrorCode::ShapeMismatch, "attention: d_model " + std::to_string(d) + " not divisible by " +
                                              std::to_string(heads) + " heads");
  }
  for (const Tensor* m : {w.wq, w.wk, w.wv, w.wo}) {
    if (!m) throw Error(ErrorCode::MissingTensor, "attention projection");
    require_shape(*m, {d, d}, "attention projection");
  }
  const Tensor q = linear(x, *w.wq, w.bq);
  const Tensor k = linear(x, *w.wk, w.bk);
  const Tensor v = linear(x, *w.wv, w.bv);

  const std::size_t dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor concat({len, d});
  std::vector<double> scores(len * len);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dk;
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        double acc = 0;
        for (std::size_t c = 0; c < dk; ++c) acc += static_cast<double>(q.at(i, off + c)) * k.at(j, off + c);
        scores[i * len + j] = acc * scale;
      }
    }
    softmax_rows(scores, len, len);
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t c = 0; c < dk; ++c) {
        double acc = 0;
        for (std::size_t j = 0; j < len; ++j) acc += scores[i * len + j] * v.at(j, off + c);
        concat.at(i, off + c) = static_cast<float>(acc);
      }
    }
  }
  return linear(concat, *w.wo, w.bo);
}

inline Tensor transpose2d(const Tensor& x) {
  require_rank(x, 2, "transpose input");
  Tensor out({x.dim(1), x.dim(0)});
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    for (std::size_t j = 0; j < x.dim(1); ++j) out.at(j, i) = x.at(i, j);
  }
  return out;
}

}  // namespace ddr::nn
