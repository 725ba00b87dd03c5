// Dense n-dimensional tensor of 64-bit floats with an optional gradient slot.
#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mixboost/common.hpp"

namespace mixboost {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

struct Tensor {
  Shape shape;
  DVec data;
  std::optional<DVec> grad;

  Tensor() = default;

  // zero-filled
  explicit Tensor(Shape s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}

  Tensor(Shape s, DVec d) : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
  }

  // uninitialized storage for outputs that are fully overwritten
  static Tensor uninit(Shape s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.resize(numel_of(t.shape));
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t numel() const { return data.size(); }

  double item() const {
    if (data.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape));
    return data[0];
  }

  std::size_t dim(std::size_t i) const { return shape.at(i); }

  // Flat offset for a (b, c, h, w) index; tensors are row-major.
  std::size_t offset4(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
    return ((b * shape[1] + c) * shape[2] + h) * shape[3] + w;
  }

  void alloc_grad() {
    if (!grad) grad.emplace(data.size(), 0.0);
  }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
  }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

inline void require_shape(const Tensor& t, const Shape& expected, const std::string& what) {
  if (t.shape != expected) {
    throw ShapeError(what + ": expected shape " + shape_str(expected) + ", got " +
                     shape_str(t.shape));
  }
}

inline void ensure_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) throw NumericError(what + ": non-finite values");
}

}  // namespace mixboost
