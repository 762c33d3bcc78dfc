#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace cah {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Dense row-major array of fixed rank with runtime extents. Used for index-heavy
// geometric objects (Christoffel symbols, curvature, vector-valued forms) where
// Eigen's matrix types would need awkward reshaping.
template <std::size_t Rank>
class DenseTensor {
 public:
  DenseTensor() { extents_.fill(0); }

  explicit DenseTensor(std::array<int, Rank> extents) : extents_(extents) {
    std::size_t size = 1;
    for (int e : extents_) size *= static_cast<std::size_t>(e);
    data_.assign(size, 0.0);
  }

  template <typename... I>
  double& operator()(I... idx) {
    static_assert(sizeof...(I) == Rank);
    return data_[offset({static_cast<int>(idx)...})];
  }

  template <typename... I>
  double operator()(I... idx) const {
    static_assert(sizeof...(I) == Rank);
    return data_[offset({static_cast<int>(idx)...})];
  }

  int extent(std::size_t k) const { return extents_[k]; }
  const std::array<int, Rank>& extents() const { return extents_; }
  std::size_t size() const { return data_.size(); }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, v < 0 ? -v : v);
    return m;
  }

 private:
  std::size_t offset(const std::array<int, Rank>& idx) const {
    std::size_t off = 0;
    for (std::size_t k = 0; k < Rank; ++k) off = off * extents_[k] + idx[k];
    return off;
  }

  std::array<int, Rank> extents_;
  std::vector<double> data_;
};

using Tensor3 = DenseTensor<3>;
using Tensor4 = DenseTensor<4>;

// Strictly antisymmetric square array stored as its strict upper triangle, so
// X(i,j) == -X(j,i) holds exactly.
class AntisymmetricMatrix {
 public:
  AntisymmetricMatrix() = default;
  explicit AntisymmetricMatrix(int dim) : dim_(dim), upper_(packed_size(dim), 0.0) {}

  static std::size_t packed_size(int dim) {
    return dim <= 1 ? 0 : static_cast<std::size_t>(dim) * (dim - 1) / 2;
  }

  int dim() const { return dim_; }

  double operator()(int i, int j) const {
    if (i == j) return 0.0;
    return i < j ? upper_[index(i, j)] : -upper_[index(j, i)];
  }

  // Sets X(i,j) for i < j (and implicitly X(j,i)).
  void set(int i, int j, double value) {
    if (i < j) {
      upper_[index(i, j)] = value;
    } else if (j < i) {
      upper_[index(j, i)] = -value;
    }
  }

  std::vector<double>& packed() { return upper_; }
  const std::vector<double>& packed() const { return upper_; }

  Mat dense() const {
    Mat m = Mat::Zero(dim_, dim_);
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j) m(i, j) = (*this)(i, j);
    return m;
  }

  std::size_t index(int i, int j) const {
    // row-major strict upper triangle
    return static_cast<std::size_t>(i) * (2 * dim_ - i - 1) / 2 + (j - i - 1);
  }

 private:
  int dim_ = 0;
  std::vector<double> upper_;
};

}  // namespace cah
