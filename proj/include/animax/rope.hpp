#pragma once

#include <Eigen/Core>
#include <vector>

namespace animax {

// 3D rotary table over (i, j, k) = (temporal, width, height). A head of
// `head_dim` channels holds head_dim/2 rotation pairs: floor(P/3) pairs each for
// j and k, the remainder for i. Pair order within a head is [i | j | k].
class RopeTable {
 public:
  RopeTable() = default;
  // temporal: number of distinct temporal indices (f + 2 when halves share).
  RopeTable(int temporal, int height, int width, int head_dim, double base = 10000.0);

  int temporal() const { return temporal_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int head_dim() const { return head_dim_; }
  int pairs() const { return head_dim_ / 2; }
  int temporal_pairs() const { return pairs() - 2 * spatial_pairs_; }
  int spatial_pairs() const { return spatial_pairs_; }

  // Rotation angle of every pair at (i, j, k), 0 <= i < temporal, j < width, k < height.
  Eigen::VectorXd angles(int i, int j, int k) const;

 private:
  int temporal_ = 0, height_ = 0, width_ = 0, head_dim_ = 0, spatial_pairs_ = 0;
  std::vector<double> freq_t_, freq_s_;
};

// Rotates consecutive channel pairs (2p, 2p+1) of every head_dim-sized chunk of
// `token` by the table angles at (i, j, k).
template <typename Derived>
void apply_rope(const RopeTable& table, int i, int j, int k, Eigen::MatrixBase<Derived>& token) {
  const Eigen::VectorXd ang = table.angles(i, j, k);
  using Scalar = typename Derived::Scalar;
  const Eigen::Index hd = table.head_dim();
  for (Eigen::Index base = 0; base + hd <= token.size(); base += hd) {
    for (Eigen::Index p = 0; p < ang.size(); ++p) {
      const Scalar c = static_cast<Scalar>(std::cos(ang(p)));
      const Scalar s = static_cast<Scalar>(std::sin(ang(p)));
      const Scalar a = token(base + 2 * p), b = token(base + 2 * p + 1);
      token(base + 2 * p) = a * c - b * s;
      token(base + 2 * p + 1) = a * s + b * c;
    }
  }
}

}  // namespace animax
