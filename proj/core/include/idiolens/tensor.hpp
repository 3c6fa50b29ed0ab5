#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "idiolens/error.hpp"

namespace idiolens {

/// Dense row-major tensor of rank 0..8.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::vector<std::uint32_t> dims, T fill = T{}) : dims_(std::move(dims)) {
    data_.assign(element_count(dims_), fill);
  }
  Tensor(std::vector<std::uint32_t> dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != element_count(dims_)) fail(ErrorKind::input, "tensor payload does not match its shape");
  }

  std::size_t rank() const { return dims_.size(); }
  std::uint32_t dim(std::size_t axis) const { return dims_.at(axis); }
  const std::vector<std::uint32_t>& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  template <class... I>
  T& operator()(I... idx) { return data_[offset({static_cast<std::size_t>(idx)...})]; }
  template <class... I>
  const T& operator()(I... idx) const { return data_[offset({static_cast<std::size_t>(idx)...})]; }

  /// Contiguous view of the innermost row addressed by the leading indices.
  template <class... I>
  std::span<const T> row(I... idx) const {
    const std::size_t inner = dims_.back();
    std::size_t base = 0;
    std::size_t axis = 0;
    for (std::size_t i : {static_cast<std::size_t>(idx)...}) base = base * dims_[axis++] + i;
    return std::span<const T>(data_).subspan(base * inner, inner);
  }

  static std::size_t element_count(const std::vector<std::uint32_t>& dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) off = off * dims_[axis++] + i;
    return off;
  }

  std::vector<std::uint32_t> dims_;
  std::vector<T> data_;
};

using FloatTensor = Tensor<float>;
using DoubleTensor = Tensor<double>;
using AnyTensor = std::variant<FloatTensor, DoubleTensor>;

}  // namespace idiolens
