// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitplan/errors.hpp"

namespace splitplan {

// Element types a boundary tensor can be transmitted as.
enum class DataType : uint8_t { F32 = 0, F16 = 1, U8 = 2 };

constexpr int dtype_width(DataType t) {
  switch (t) {
    case DataType::F32: return 4;
    case DataType::F16: return 2;
    case DataType::U8: return 1;
  }
  return 4;
}

std::string dtype_name(DataType t);
DataType dtype_from_name(const std::string& name);

// Dimensioned tensor descriptor, channels-first (C, H, W) for activations.
// The batch dimension is implicit and fixed at one image.
struct TensorShape {
  std::vector<int64_t> dims;

  TensorShape() = default;
  TensorShape(std::initializer_list<int64_t> d) : dims(d) { validate(); }
  explicit TensorShape(std::vector<int64_t> d) : dims(std::move(d)) { validate(); }

  void validate() const {
    if (dims.empty()) throw StructuralError("TensorShape: no dims");
    for (int64_t d : dims) {
      if (d < 1) throw StructuralError("TensorShape: dim " + std::to_string(d) + " < 1");
    }
  }

  int64_t elements() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }

  bool operator==(const TensorShape& o) const { return dims == o.dims; }
  bool operator!=(const TensorShape& o) const { return !(*this == o); }

  // "3x800x800" style, also used by the CLI for --input.
  std::string str() const;
  static TensorShape parse(const std::string& text);
};

inline int64_t tensor_bytes(const TensorShape& shape, DataType dtype) {
  return shape.elements() * dtype_width(dtype);
}

}  // namespace splitplan
