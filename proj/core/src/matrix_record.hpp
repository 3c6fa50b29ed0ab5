#pragma once

// Eigen <-> float64 tensor conversion shared by the projection records.

#include <string_view>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "idiolens/dumpio.hpp"

namespace idiolens::detail {

inline DoubleTensor to_tensor(const Eigen::MatrixXd& m) {
  DoubleTensor t({static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t(r, c) = m(r, c);
  return t;
}

inline DoubleTensor to_tensor(const Eigen::VectorXd& v) {
  DoubleTensor t({static_cast<std::uint32_t>(v.size())});
  for (Eigen::Index i = 0; i < v.size(); ++i) t(i) = v(i);
  return t;
}

inline const DoubleTensor& need(const Record& r, std::string_view role, std::size_t rank) {
  const AnyTensor* t = r.find(role);
  if (!t) throw DumpError(DumpErrc::bad_metadata, fmt::format("record lacks tensor '{}'", role));
  const auto* d = std::get_if<DoubleTensor>(t);
  if (!d || d->rank() != rank)
    throw DumpError(DumpErrc::bad_metadata, fmt::format("tensor '{}' must be float64 of rank {}", role, rank));
  return *d;
}

inline Eigen::MatrixXd to_matrix(const DoubleTensor& t) {
  Eigen::MatrixXd m(t.dim(0), t.dim(1));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = t(r, c);
  return m;
}

inline Eigen::VectorXd to_vector(const DoubleTensor& t) {
  Eigen::VectorXd v(t.dim(0));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = t(i);
  return v;
}

}  // namespace idiolens::detail
