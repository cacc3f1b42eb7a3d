#include "animax/tape.hpp"

#include <memory>
#include <stdexcept>

namespace animax::nn {

template <typename Scalar>
typename Tape<Scalar>::Var Tape<Scalar>::matmul(Var a, Var b) {
  const Var out = static_cast<Var>(nodes_.size());
  return push(value(a) * value(b), any_grad(a, b), [this, a, b, out] {
    const Mat& g = grad_ref(out);
    if (requires_grad(a)) grad_ref(a).noalias() += g * value(b).transpose();
    if (requires_grad(b)) grad_ref(b).noalias() += value(a).transpose() * g;
  });
}

template <typename Scalar>
typename Tape<Scalar>::Var Tape<Scalar>::linear(Var x, Var weight, Var bias) {
  const Var out = static_cast<Var>(nodes_.size());
  Mat y = value(x) * value(weight);
  y.rowwise() += value(bias).row(0);
  return push(std::move(y), requires_grad(x) || requires_grad(weight) || requires_grad(bias), [this, x, weight, bias, out] {
    const Mat& g = grad_ref(out);
    if (requires_grad(x)) grad_ref(x).noalias() += g * value(weight).transpose();
    if (requires_grad(weight)) grad_ref(weight).noalias() += value(x).transpose() * g;
    if (requires_grad(bias)) grad_ref(bias).row(0) += g.colwise().sum();
  });
}

template <typename Scalar>
typename Tape<Scalar>::Var Tape<Scalar>::add(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
    throw std::invalid_argument("tape add: shape mismatch");
  const Var out = static_cast<Var>(nodes_.size());
  return push(value(a) + value(b), any_grad(a, b), [this, a, b, out] {
    const Mat& g = grad_ref(out);
    if (requires_grad(a)) grad_ref(a) += g;
    if (requires_grad(b)) grad_ref(b) += g;
  });
}

template <typename Scalar>
typename Tape<Scalar>::Var Tape<Scalar>::gather_rows(Var src, std::vector<int> index) {
  const Var out = static_cast<Var>(nodes_.size());
  const Mat& s = value(src);
  Mat y(static_cast<Eigen::Index>(index.size()), s.cols());
  for (size_t r = 0; r < index.size(); ++r) y.row(static_cast<Eigen::Index>(r)) = s.row(index[r]);
  return push(std::move(y), any_grad(src), [this, src, out, index = std::move(index)] {
    const Mat& g = grad_ref(out);
    Mat& gs = grad_ref(src);
    for (size_t r = 0; r < index.size(); ++r) gs.row(index[r]) += g.row(static_cast<Eigen::Index>(r));
  });
}

template <typename Scalar>
typename Tape<Scalar>::Var Tape<Scalar>::silu(Var x) {
  const Var out = static_cast<Var>(nodes_.size());
  const Mat& v = value(x);
  const Mat sig = (Scalar(1) + (-v.array()).exp()).inverse().matrix();
  Mat y = (v.array() * sig.array()).matrix();
  return push(std::move(y), any_grad(x), [this, x, out, sig] {
    const Mat& g = grad_ref(out);
    const auto& v = value(x).array();
    grad_ref(x).array() += g.array() * (sig.array() * (Scalar(1) + v * (Scalar(1) - sig.array())));
  });
}

template <typename Scalar>
typename Tape<Scalar>::Var Tape<Scalar>::layer_norm(Var x, Scalar eps) {
  const Var out = static_cast<Var>(nodes_.size());
  const Mat& v = value(x);
  const auto cols = static_cast<Scalar>(v.cols());
  Mat y(v.rows(), v.cols());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(v.rows());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const Scalar mean = v.row(r).sum() / cols;
    const auto centered = (v.row(r).array() - mean).eval();
    const Scalar var = centered.square().sum() / cols;
    inv_std(r) = Scalar(1) / std::sqrt(var + eps);
    y.row(r) = (centered * inv_std(r)).matrix();
  }
  Mat yc = y;
  return push(std::move(y), any_grad(x), [this, x, out, yc = std::move(yc), inv_std, cols] {
    const Mat& g = grad_ref(out);
    Mat& gx = grad_ref(x);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const Scalar mg = g.row(r).sum() / cols;
      const Scalar mgy = g.row(r).dot(yc.row(r)) / cols;
      gx.row(r).array() += inv_std(r) * (g.row(r).array() - mg - yc.row(r).array() * mgy);
    }
  });
}

template <typename Scalar>
typename Tape<Scalar>::Var Tape<Scalar>::modulate(Var x, Var scale, Var shift) {
  const Var out = static_cast<Var>(nodes_.size());
  Mat y = (value(x).array() * (Scalar(1) + value(scale).array()) + value(shift).array()).matrix();
  return push(std::move(y), requires_grad(x) || requires_grad(scale) || requires_grad(shift), [this, x, scale, shift, out] {
    const Mat& g = grad_ref(out);
    if (requires_grad(x)) grad_ref(x).array() += g.array() * (Scalar(1) + value(scale).array());
    if (requires_grad(scale)) grad_ref(scale).array() += g.array() * value(x).array();
    if (requires_grad(shift)) grad_ref(shift) += g;
  });
}

namespace {

template <typename Scalar>
void rotate_pairs(Matrix<Scalar>& m, int heads, const RotaryAngles<Scalar>& ang, bool inverse) {
  const Eigen::Index head_dim = m.cols() / heads;
  const Eigen::Index pairs = ang.cos.cols();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (int h = 0; h < heads; ++h) {
      for (Eigen::Index p = 0; p < pairs; ++p) {
        const Scalar c = ang.cos(r, p);
        const Scalar s = inverse ? -ang.sin(r, p) : ang.sin(r, p);
        Scalar& a = m(r, h * head_dim + 2 * p);
        Scalar& b = m(r, h * head_dim + 2 * p + 1);
        const Scalar a0 = a, b0 = b;
        a = a0 * c - b0 * s;
        b = a0 * s + b0 * c;
      }
    }
  }
}

}  // namespace

template <typename Scalar>
typename Tape<Scalar>::Var Tape<Scalar>::rotary(Var x, int heads, const RotaryAngles<Scalar>* angles) {
  const Var out = static_cast<Var>(nodes_.size());
  Mat y = value(x);
  if (angles->cos.rows() != y.rows() || 2 * angles->cos.cols() * heads > y.cols())
    throw std::invalid_argument("tape rotary: angle table does not match input");
  rotate_pairs(y, heads, *angles, false);
  return push(std::move(y), any_grad(x), [this, x, out, heads, angles] {
    Mat g = grad_ref(out);
    rotate_pairs(g, heads, *angles, true);
    grad_ref(x) += g;
  });
}

template <typename Scalar>
typename Tape<Scalar>::Var Tape<Scalar>::attention(Var q, Var k, Var v, int heads,
                                                   const std::vector<AttentionGroup>* groups) {
  const Var out = static_cast<Var>(nodes_.size());
  const Mat& qv = value(q);
  const Mat& kv = value(k);
  const Mat& vv = value(v);
  const Eigen::Index dh = qv.cols() / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  Mat y = Mat::Zero(qv.rows(), vv.cols());
  auto probs = std::make_shared<std::vector<Mat>>();
  probs->reserve(groups->size() * static_cast<size_t>(heads));
  for (const auto& grp : *groups) {
    for (int h = 0; h < heads; ++h) {
      const auto cols = Eigen::seqN(h * dh, dh);
      const Mat qg = qv(grp.queries, cols);
      const Mat kg = kv(grp.keys, cols);
      const Mat vg = vv(grp.keys, cols);
      Mat s = (qg * kg.transpose()) * scale;
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const Scalar m = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - m).exp().matrix();
        s.row(r) /= s.row(r).sum();
      }
      y(grp.queries, cols) = s * vg;
      probs->push_back(std::move(s));
    }
  }
  return push(std::move(y), requires_grad(q) || requires_grad(k) || requires_grad(v), [this, q, k, v, out, heads, groups, probs, dh, scale] {
    const Mat& g = grad_ref(out);
    const Mat& qv = value(q);
    const Mat& kv = value(k);
    const Mat& vv = value(v);
    Mat gq = Mat::Zero(qv.rows(), qv.cols());
    Mat gk = Mat::Zero(kv.rows(), kv.cols());
    Mat gv = Mat::Zero(vv.rows(), vv.cols());
    size_t idx = 0;
    for (const auto& grp : *groups) {
      for (int h = 0; h < heads; ++h) {
        const auto cols = Eigen::seqN(h * dh, dh);
        const Mat& p = (*probs)[idx++];
        const Mat go = g(grp.queries, cols);
        const Mat qg = qv(grp.queries, cols);
        const Mat kg = kv(grp.keys, cols);
        const Mat vg = vv(grp.keys, cols);
        const Mat dp = go * vg.transpose();
        Mat ds = p.cwiseProduct(dp);
        const auto rowsum = ds.rowwise().sum().eval();
        ds -= p.cwiseProduct(rowsum.replicate(1, p.cols()));
        ds *= scale;
        gq(grp.queries, cols) += ds * kg;
        gk(grp.keys, cols) += ds.transpose() * qg;
        gv(grp.keys, cols) += p.transpose() * go;
      }
    }
    if (requires_grad(q)) grad_ref(q) += gq;
    if (requires_grad(k)) grad_ref(k) += gk;
    if (requires_grad(v)) grad_ref(v) += gv;
  });
}

template <typename Scalar>
typename Tape<Scalar>::Var Tape<Scalar>::masked_mse(Var pred, const Mat* target, const std::vector<int>* rows) {
  const Var out = static_cast<Var>(nodes_.size());
  const Mat& p = value(pred);
  const Scalar denom = static_cast<Scalar>(rows->size()) * static_cast<Scalar>(p.cols());
  Scalar sum = 0;
  for (int r : *rows) sum += (p.row(r) - target->row(r)).squaredNorm();
  Mat y(1, 1);
  y(0, 0) = sum / denom;
  return push(std::move(y), any_grad(pred), [this, pred, target, rows, out, denom] {
    const Scalar g = grad_ref(out)(0, 0);
    Mat& gp = grad_ref(pred);
    const Mat& p = value(pred);
    for (int r : *rows) gp.row(r) += (Scalar(2) * g / denom) * (p.row(r) - target->row(r));
  });
}

template <typename Scalar>
void Tape<Scalar>::backward(Var out) {
  if (value(out).size() != 1) throw std::invalid_argument("tape backward: output must be scalar");
  grad_ref(out).setOnes();
  for (Var i = out; i >= 0; --i) {
    auto& n = node(i);
    if (n.backward && n.requires_grad && n.grad.size() != 0) n.backward();
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace animax::nn
