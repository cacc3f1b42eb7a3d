#include "animax/rope.hpp"

#include <cmath>

#include "animax/error.hpp"

namespace animax {

RopeTable::RopeTable(int temporal, int height, int width, int head_dim, double base)
    : temporal_(temporal), height_(height), width_(width), head_dim_(head_dim) {
  if (temporal < 1 || height < 1 || width < 1) throw ValidationError("rope: table dims must be positive");
  if (head_dim < 2 || head_dim % 2 != 0) throw ValidationError("rope: head_dim must be even and >= 2");
  spatial_pairs_ = pairs() / 3;
  auto freqs = [base](int n) {
    std::vector<double> f(static_cast<size_t>(n));
    for (int p = 0; p < n; ++p) f[static_cast<size_t>(p)] = std::pow(base, -static_cast<double>(p) / n);
    return f;
  };
  freq_t_ = freqs(temporal_pairs());
  freq_s_ = freqs(spatial_pairs_);
}

Eigen::VectorXd RopeTable::angles(int i, int j, int k) const {
  if (i < 0 || i >= temporal_ || j < 0 || j >= width_ || k < 0 || k >= height_)
    throw ValidationError("rope: position out of table range");
  Eigen::VectorXd a(pairs());
  Eigen::Index p = 0;
  for (double f : freq_t_) a(p++) = i * f;
  for (double f : freq_s_) a(p++) = j * f;
  for (double f : freq_s_) a(p++) = k * f;
  return a;
}

}  // namespace animax
