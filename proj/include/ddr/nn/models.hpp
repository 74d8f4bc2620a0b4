#pragma once

// Forward passes for the bundled architectures:
//   resnet1d_*     stem conv(k7, s2) + BN + ReLU + maxpool(3, 2), four stages
//                  of basic blocks (conv-BN-ReLU-conv-BN + shortcut, ReLU after
//                  the sum; stride 2 and a 1x1 projection at the entry of
//                  stages 2-4), flatten, FC-ReLU-FC head.
//   tfenc_heading  conv embedding (same padding) scaled by sqrt(d_model),
//                  post-norm encoder layers (MHSA, FFN with ReLU), last time
//                  step, FC-ReLU-FC head. No positional encoding.

#include <cmath>
#include <string>
#include <vector>

#include "ddr/nn/model_bundle.hpp"
#include "ddr/nn/ops.hpp"

namespace ddr::nn {

struct InferenceOutput {
  enum class Kind { Scalar, Vec2 };
  Kind kind = Kind::Scalar;
  std::vector<double> values;
  // Norm of the raw 2-vector before renormalization (direction head only).
  double raw_norm = 0.0;

  double scalar() const { return values.at(0); }
};

namespace detail {
inline void check_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw Error(ErrorCode::NonFinite, std::string("non-finite activation after ") + where);
}

inline Tensor normalize_window(const ModelBundle& b, const Tensor& window) {
  require_shape(window, {kInputChannels, b.input_window}, "input window");
  Tensor x = window;
  for (std::size_t c = 0; c < kInputChannels; ++c) {
    const double mean = b.normalization.mean[c];
    const double sd = b.normalization.std[c];
    for (std::size_t t = 0; t < b.input_window; ++t) x.at(c, t) = static_cast<float>((x.at(c, t) - mean) / sd);
  }
  return x;
}

inline Tensor batchnorm(const ModelBundle& b, const Tensor& x, const std::string& p) {
  return batchnorm1d_infer(x, b.get(p + ".weight"), b.get(p + ".bias"), b.get(p + ".running_mean"),
                           b.get(p + ".running_var"), b.resnet.bn_eps);
}

inline Tensor flatten_row(const Tensor& x) { return Tensor({1, x.size()}, x.data); }
}  // namespace detail

/// One basic residual block; `prefix` is e.g. "layer2.0".
inline Tensor basic_block(const ModelBundle& b, const Tensor& x, const std::string& prefix, std::size_t stride) {
  const std::size_t pad = b.resnet.block_kernel / 2;
  Tensor y = conv1d(x, b.get(prefix + ".conv1.weight"), nullptr, stride, pad);
  y = detail::batchnorm(b, y, prefix + ".bn1");
  relu_inplace(y);
  y = conv1d(y, b.get(prefix + ".conv2.weight"), nullptr, 1, pad);
  y = detail::batchnorm(b, y, prefix + ".bn2");

  if (const Tensor* proj = b.find(prefix + ".downsample.0.weight")) {
    Tensor shortcut = conv1d(x, *proj, nullptr, stride, 0);
    shortcut = detail::batchnorm(b, shortcut, prefix + ".downsample.1");
    add_inplace(y, shortcut);
  } else {
    add_inplace(y, x);
  }
  relu_inplace(y);
  return y;
}

inline InferenceOutput resnet1d_forward(const ModelBundle& b, const Tensor& window) {
  if (!is_resnet(b.arch)) throw Error(ErrorCode::UnsupportedArch, "resnet1d_forward on " + std::string(to_string(b.arch)));
  const auto& h = b.resnet;
  Tensor x = detail::normalize_window(b, window);

  x = conv1d(x, b.get("stem.conv.weight"), nullptr, 2, h.stem_kernel / 2);
  x = detail::batchnorm(b, x, "stem.bn");
  relu_inplace(x);
  x = maxpool1d(x, 3, 2, 1);
  detail::check_finite(x, "stem");

  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t blk = 0; blk < h.blocks[s]; ++blk) {
      const std::size_t stride = (s > 0 && blk == 0) ? 2 : 1;
      x = basic_block(b, x, "layer" + std::to_string(s + 1) + "." + std::to_string(blk), stride);
    }
    detail::check_finite(x, "residual stage");
  }

  Tensor z = detail::flatten_row(x);
  if (h.head_hidden > 0) {
    z = linear(z, b.get("fc1.weight"), &b.get("fc1.bias"));
    relu_inplace(z);
    z = linear(z, b.get("fc2.weight"), &b.get("fc2.bias"));
  } else {
    z = linear(z, b.get("fc.weight"), &b.get("fc.bias"));
  }
  detail::check_finite(z, "regression head");

  InferenceOutput out;
  if (b.arch == ArchId::ResNet1dVel) {
    out.values = {static_cast<double>(z.data[0])};
    return out;
  }
  out.kind = InferenceOutput::Kind::Vec2;
  const double vx = z.data[0], vy = z.data[1];
  out.raw_norm = std::hypot(vx, vy);
  if (!(out.raw_norm > 0.0)) throw Error(ErrorCode::NonFinite, "direction head produced a zero vector");
  out.values = {vx / out.raw_norm, vy / out.raw_norm};
  return out;
}

/// One post-norm encoder layer over x[L, d].
inline Tensor encoder_layer(const ModelBundle& b, const Tensor& x, std::size_t index) {
  const auto& h = b.transformer;
  const std::size_t d = h.d_model;
  const std::string p = "encoder.layers." + std::to_string(index);

  const Tensor& in_w = b.get(p + ".self_attn.in_proj_weight");
  const Tensor& in_b = b.get(p + ".self_attn.in_proj_bias");
  Tensor wq({d, d}), wk({d, d}), wv({d, d}), bq({d}), bk({d}), bv({d});
  for (std::size_t i = 0; i < d * d; ++i) {
    wq.data[i] = in_w.data[i];
    wk.data[i] = in_w.data[d * d + i];
    wv.data[i] = in_w.data[2 * d * d + i];
  }
  for (std::size_t i = 0; i < d; ++i) {
    bq.data[i] = in_b.data[i];
    bk.data[i] = in_b.data[d + i];
    bv.data[i] = in_b.data[2 * d + i];
  }
  const AttentionWeights aw{&wq, &wk, &wv, &b.get(p + ".self_attn.out_proj.weight"),
                            &bq, &bk, &bv, &b.get(p + ".self_attn.out_proj.bias")};

  Tensor y = multi_head_attention(x, aw, h.heads);
  add_inplace(y, x);
  y = layer_norm(y, b.get(p + ".norm1.weight"), b.get(p + ".norm1.bias"), h.ln_eps);

  Tensor f = linear(y, b.get(p + ".linear1.weight"), &b.get(p + ".linear1.bias"));
  relu_inplace(f);
  f = linear(f, b.get(p + ".linear2.weight"), &b.get(p + ".linear2.bias"));
  add_inplace(f, y);
  return layer_norm(f, b.get(p + ".norm2.weight"), b.get(p + ".norm2.bias"), h.ln_eps);
}

/// Heading displacement (rad) over the window.
inline double transformer_encoder_forward(const ModelBundle& b, const Tensor& window) {
  if (b.arch != ArchId::TfEncHeading) {
    throw Error(ErrorCode::UnsupportedArch, "transformer_encoder_forward on " + std::string(to_string(b.arch)));
  }
  const auto& h = b.transformer;
  Tensor x = detail::normalize_window(b, window);
  x = conv1d(x, b.get("embed.weight"), &b.get("embed.bias"), 1, h.embed_kernel / 2);
  x = transpose2d(x);  // [L, d]
  const float scale = static_cast<float>(std::sqrt(static_cast<double>(h.d_model)));
  for (auto& v : x.data) v *= scale;

  for (std::size_t l = 0; l < h.layers; ++l) {
    x = encoder_layer(b, x, l);
    detail::check_finite(x, "encoder layer");
  }

  Tensor last({1, h.d_model});
  const auto row = x.row(x.dim(0) - 1);
  std::copy(row.begin(), row.end(), last.data.begin());
  Tensor z = linear(last, b.get("head.fc1.weight"), &b.get("head.fc1.bias"));
  relu_inplace(z);
  z = linear(z, b.get("head.fc2.weight"), &b.get("head.fc2.bias"));
  detail::check_finite(z, "regression head");
  return z.data[0];
}

/// Dispatches on the bundle's architecture.
inline InferenceOutput forward(const ModelBundle& b, const Tensor& window) {
  if (is_resnet(b.arch)) return resnet1d_forward(b, window);
  InferenceOutput out;
  out.values = {transformer_encoder_forward(b, window)};
  return out;
}

}  // namespace ddr::nn
