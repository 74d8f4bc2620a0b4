#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ddr/error.hpp"

namespace ddr::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

/// Dense row-major float32 tensor.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f) : shape(std::move(s)), data(element_count(shape), fill) {}
  Tensor(Shape s, std::vector<float> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != element_count(shape)) {
      throw Error(ErrorCode::ShapeMismatch, "data length " + std::to_string(data.size()) + " does not match shape " +
                                                shape_string(shape));
    }
  }

  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t size() const { return data.size(); }

  float& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  float at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  float& at(std::size_t i, std::size_t j, std::size_t k) { return data[(i * shape[1] + j) * shape[2] + k]; }
  float at(std::size_t i, std::size_t j, std::size_t k) const { return data[(i * shape[1] + j) * shape[2] + k]; }

  std::span<const float> row(std::size_t i) const { return {data.data() + i * shape[1], shape[1]}; }
  std::span<float> row(std::size_t i) { return {data.data() + i * shape[1], shape[1]}; }

  bool all_finite() const {
    for (float v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

inline void require_shape(const Tensor& t, const Shape& expected, const std::string& name) {
  if (t.shape != expected) {
    throw Error(ErrorCode::ShapeMismatch,
                name + ": expected " + shape_string(expected) + ", got " + shape_string(t.shape));
  }
}

inline void require_rank(const Tensor& t, std::size_t rank, const std::string& name) {
  if (t.rank() != rank) {
    throw Error(ErrorCode::ShapeMismatch, name + ": expected rank " + std::to_string(rank) + ", got shape " +
                                              shape_string(t.shape));
  }
}

}  // namespace ddr::nn
