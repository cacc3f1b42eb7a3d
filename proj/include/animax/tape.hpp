#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace animax::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One attention group: query rows attend to key rows of a (possibly different) matrix.
struct AttentionGroup {
  std::vector<int> queries;
  std::vector<int> keys;
};

// Per-row rotary angles; pair p of every head rotates channels (2p, 2p+1).
template <typename Scalar>
struct RotaryAngles {
  Matrix<Scalar> cos;  // rows x pairs
  Matrix<Scalar> sin;
};

// Reverse-mode tape over row-major matrices. Nodes are appended in evaluation
// order and backward() walks them in reverse.
template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using Var = int;

  Var leaf(Mat value, bool requires_grad) { return push(std::move(value), requires_grad, {}); }

  const Mat& value(Var v) const { return nodes_[static_cast<size_t>(v)].value; }
  const Mat& grad(Var v) const { return nodes_[static_cast<size_t>(v)].grad; }
  bool requires_grad(Var v) const { return nodes_[static_cast<size_t>(v)].requires_grad; }

  Var matmul(Var a, Var b);
  // a * b + bias (bias is 1 x cols, broadcast over rows)
  Var linear(Var x, Var weight, Var bias);
  Var add(Var a, Var b);
  // Rows of `src` selected by `index`.
  Var gather_rows(Var src, std::vector<int> index);
  Var silu(Var x);
  Var layer_norm(Var x, Scalar eps = Scalar(1e-6));
  // x * (1 + scale) + shift, all same shape
  Var modulate(Var x, Var scale, Var shift);
  Var rotary(Var x, int heads, const RotaryAngles<Scalar>* angles);
  Var attention(Var q, Var k, Var v, int heads, const std::vector<AttentionGroup>* groups);
  // Mean of (pred - target)^2 over the masked rows; target carries no gradient.
  Var masked_mse(Var pred, const Mat* target, const std::vector<int>* rows);

  // Seeds d(out)/d(out) = 1 for a 1x1 output.
  void backward(Var out);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Var push(Mat value, bool requires_grad, std::function<void()> backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }
  Node& node(Var v) { return nodes_[static_cast<size_t>(v)]; }
  Mat& grad_ref(Var v) {
    auto& n = node(v);
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  bool any_grad(Var a) const { return requires_grad(a); }
  bool any_grad(Var a, Var b) const { return requires_grad(a) || requires_grad(b); }

  std::vector<Node> nodes_;
};

}  // namespace animax::nn
