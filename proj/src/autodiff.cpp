#include "kpi/autodiff.hpp"

#include <cmath>

namespace kpi::ad {

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput(std::string(op) + ": shape mismatch");
  }
}

void check_vector(const Mat& a, const char* op) {
  if (a.cols() != 1) {
    throw InvalidInput(std::string(op) + ": expected a column vector");
  }
}

}  // namespace

Var Tape::push(Mat value, std::function<void(Tape&, const Mat&)> back) {
  Node n;
  n.value = std::move(value);
  n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Mat value) { return push(std::move(value), nullptr); }

Var Tape::add(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "add");
  int ia = a.idx_, ib = b.idx_;
  return push(a.value() + b.value(), [ia, ib](Tape& t, const Mat& g) {
    t.grad_of(ia) += g;
    t.grad_of(ib) += g;
  });
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "sub");
  int ia = a.idx_, ib = b.idx_;
  return push(a.value() - b.value(), [ia, ib](Tape& t, const Mat& g) {
    t.grad_of(ia) += g;
    t.grad_of(ib) -= g;
  });
}

Var Tape::cwise_mul(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "cwise_mul");
  int ia = a.idx_, ib = b.idx_;
  return push(a.value().cwiseProduct(b.value()), [ia, ib](Tape& t, const Mat& g) {
    t.grad_of(ia) += g.cwiseProduct(t.value_of(ib));
    t.grad_of(ib) += g.cwiseProduct(t.value_of(ia));
  });
}

Var Tape::matmul(Var a, Var b) {
  if (a.value().cols() != b.value().rows()) {
    throw InvalidInput("matmul: inner dimension mismatch");
  }
  int ia = a.idx_, ib = b.idx_;
  return push(a.value() * b.value(), [ia, ib](Tape& t, const Mat& g) {
    t.grad_of(ia) += g * t.value_of(ib).transpose();
    t.grad_of(ib) += t.value_of(ia).transpose() * g;
  });
}

Var Tape::scale(Var a, double c) {
  int ia = a.idx_;
  return push(a.value() * c, [ia, c](Tape& t, const Mat& g) {
    t.grad_of(ia) += g * c;
  });
}

Var Tape::sigmoid(Var a) {
  int ia = a.idx_;
  Mat y = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  int iy = static_cast<int>(nodes_.size());
  return push(std::move(y), [ia, iy](Tape& t, const Mat& g) {
    const Mat& y = t.value_of(iy);
    t.grad_of(ia) += g.cwiseProduct(y.cwiseProduct(Mat::Ones(y.rows(), y.cols()) - y));
  });
}

Var Tape::elu(Var a) {
  int ia = a.idx_;
  Mat y = a.value().unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  int iy = static_cast<int>(nodes_.size());
  return push(std::move(y), [ia, iy](Tape& t, const Mat& g) {
    const Mat& x = t.value_of(ia);
    const Mat& y = t.value_of(iy);
    Mat d = x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    // below zero, d/dx elu = exp(x) = y + 1
    Mat dneg = (y.array() + 1.0).matrix();
    for (long j = 0; j < x.cols(); ++j)
      for (long i = 0; i < x.rows(); ++i)
        if (x(i, j) <= 0.0) d(i, j) = dneg(i, j);
    t.grad_of(ia) += g.cwiseProduct(d);
  });
}

Var Tape::leaky_relu(Var a, double slope) {
  int ia = a.idx_;
  Mat y = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return push(std::move(y), [ia, slope](Tape& t, const Mat& g) {
    const Mat& x = t.value_of(ia);
    Mat d = x.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    t.grad_of(ia) += g.cwiseProduct(d);
  });
}

Var Tape::log(Var a) {
  int ia = a.idx_;
  return push(a.value().array().log().matrix(), [ia](Tape& t, const Mat& g) {
    t.grad_of(ia) += g.cwiseQuotient(t.value_of(ia));
  });
}

Var Tape::softmax(Var a) {
  check_vector(a.value(), "softmax");
  int ia = a.idx_;
  double m = a.value().maxCoeff();
  Mat e = (a.value().array() - m).exp().matrix();
  Mat y = e / e.sum();
  int iy = static_cast<int>(nodes_.size());
  return push(std::move(y), [ia, iy](Tape& t, const Mat& g) {
    const Mat& y = t.value_of(iy);
    double gy = (g.array() * y.array()).sum();
    t.grad_of(ia) += (y.array() * (g.array() - gy)).matrix();
  });
}

Var Tape::logsumexp(Var a) {
  check_vector(a.value(), "logsumexp");
  int ia = a.idx_;
  double m = a.value().maxCoeff();
  double s = (a.value().array() - m).exp().sum();
  Mat out(1, 1);
  out(0, 0) = m + std::log(s);
  int iy = static_cast<int>(nodes_.size());
  return push(std::move(out), [ia, iy](Tape& t, const Mat& g) {
    const Mat& x = t.value_of(ia);
    double lse = t.value_of(iy)(0, 0);
    t.grad_of(ia) += g(0, 0) * (x.array() - lse).exp().matrix();
  });
}

Var Tape::dot(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "dot");
  int ia = a.idx_, ib = b.idx_;
  Mat out(1, 1);
  out(0, 0) = (a.value().array() * b.value().array()).sum();
  return push(std::move(out), [ia, ib](Tape& t, const Mat& g) {
    t.grad_of(ia) += g(0, 0) * t.value_of(ib);
    t.grad_of(ib) += g(0, 0) * t.value_of(ia);
  });
}

Var Tape::squared_norm(Var a) {
  int ia = a.idx_;
  Mat out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return push(std::move(out), [ia](Tape& t, const Mat& g) {
    t.grad_of(ia) += 2.0 * g(0, 0) * t.value_of(ia);
  });
}

Var Tape::cosine(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "cosine");
  double na = a.value().norm();
  double nb = b.value().norm();
  if (na < 1e-12 || nb < 1e-12) {
    throw DegenerateEmbedding("cosine similarity undefined for zero-norm vector");
  }
  int ia = a.idx_, ib = b.idx_;
  double c = (a.value().array() * b.value().array()).sum() / (na * nb);
  Mat out(1, 1);
  out(0, 0) = c;
  return push(std::move(out), [ia, ib, na, nb, c](Tape& t, const Mat& g) {
    const Mat& av = t.value_of(ia);
    const Mat& bv = t.value_of(ib);
    t.grad_of(ia) += g(0, 0) * (bv / (na * nb) - (c / (na * na)) * av);
    t.grad_of(ib) += g(0, 0) * (av / (na * nb) - (c / (nb * nb)) * bv);
  });
}

Var Tape::layer_norm(Var a, double eps) {
  check_vector(a.value(), "layer_norm");
  int ia = a.idx_;
  long n = a.value().rows();
  double mu = a.value().mean();
  double var = (a.value().array() - mu).square().sum() / static_cast<double>(n);
  double sigma = std::sqrt(var + eps);
  Mat y = ((a.value().array() - mu) / sigma).matrix();
  int iy = static_cast<int>(nodes_.size());
  return push(std::move(y), [ia, iy, sigma, n](Tape& t, const Mat& g) {
    const Mat& y = t.value_of(iy);
    double gm = g.mean();
    double gym = (g.array() * y.array()).sum() / static_cast<double>(n);
    t.grad_of(ia) += ((g.array() - gm - y.array() * gym) / sigma).matrix();
  });
}

Var Tape::sum(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidInput("sum: empty operand list");
  Mat v = xs[0].value();
  std::vector<int> idx;
  idx.reserve(xs.size());
  idx.push_back(xs[0].idx_);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    check_same_shape(v, xs[i].value(), "sum");
    v += xs[i].value();
    idx.push_back(xs[i].idx_);
  }
  return push(std::move(v), [idx](Tape& t, const Mat& g) {
    for (int i : idx) t.grad_of(i) += g;
  });
}

Var Tape::average(const std::vector<Var>& xs) {
  return scale(sum(xs), 1.0 / static_cast<double>(xs.size()));
}

Var Tape::cwise_max(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidInput("cwise_max: empty operand list");
  Mat v = xs[0].value();
  Eigen::MatrixXi arg = Eigen::MatrixXi::Zero(v.rows(), v.cols());
  std::vector<int> idx;
  idx.push_back(xs[0].idx_);
  for (std::size_t k = 1; k < xs.size(); ++k) {
    check_same_shape(v, xs[k].value(), "cwise_max");
    const Mat& x = xs[k].value();
    for (long j = 0; j < v.cols(); ++j)
      for (long i = 0; i < v.rows(); ++i)
        if (x(i, j) > v(i, j)) {
          v(i, j) = x(i, j);
          arg(i, j) = static_cast<int>(k);
        }
    idx.push_back(xs[k].idx_);
  }
  return push(std::move(v), [idx, arg](Tape& t, const Mat& g) {
    for (long j = 0; j < g.cols(); ++j)
      for (long i = 0; i < g.rows(); ++i)
        t.grad_of(idx[static_cast<std::size_t>(arg(i, j))])(i, j) += g(i, j);
  });
}

Var Tape::concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidInput("concat_rows: empty operand list");
  long total = 0;
  for (const Var& x : xs) {
    check_vector(x.value(), "concat_rows");
    total += x.value().rows();
  }
  Mat v(total, 1);
  std::vector<int> idx;
  std::vector<long> offs;
  long off = 0;
  for (const Var& x : xs) {
    v.block(off, 0, x.value().rows(), 1) = x.value();
    idx.push_back(x.idx_);
    offs.push_back(off);
    off += x.value().rows();
  }
  return push(std::move(v), [idx, offs](Tape& t, const Mat& g) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      Mat& pg = t.grad_of(idx[k]);
      pg += g.block(offs[k], 0, pg.rows(), 1);
    }
  });
}

Var Tape::weighted_sum(const std::vector<Var>& items, Var weights) {
  if (items.empty()) throw InvalidInput("weighted_sum: empty operand list");
  check_vector(weights.value(), "weighted_sum");
  if (weights.value().rows() != static_cast<long>(items.size())) {
    throw InvalidInput("weighted_sum: weight count mismatch");
  }
  Mat v = Mat::Zero(items[0].value().rows(), items[0].value().cols());
  std::vector<int> idx;
  for (std::size_t k = 0; k < items.size(); ++k) {
    check_same_shape(items[0].value(), items[k].value(), "weighted_sum");
    v += weights.value()(static_cast<long>(k), 0) * items[k].value();
    idx.push_back(items[k].idx_);
  }
  int iw = weights.idx_;
  return push(std::move(v), [idx, iw](Tape& t, const Mat& g) {
    const Mat& w = t.value_of(iw);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      t.grad_of(idx[k]) += w(static_cast<long>(k), 0) * g;
      t.grad_of(iw)(static_cast<long>(k), 0) +=
          (g.array() * t.value_of(idx[k]).array()).sum();
    }
  });
}

Var Tape::slice_rows(Var a, long start, long len) {
  check_vector(a.value(), "slice_rows");
  if (start < 0 || start + len > a.value().rows()) {
    throw InvalidInput("slice_rows: out of range");
  }
  int ia = a.idx_;
  return push(a.value().block(start, 0, len, 1), [ia, start, len](Tape& t, const Mat& g) {
    t.grad_of(ia).block(start, 0, len, 1) += g;
  });
}

Var Tape::take_row(Var a, long row) {
  if (row < 0 || row >= a.value().rows()) {
    throw InvalidInput("take_row: out of range");
  }
  int ia = a.idx_;
  return push(a.value().row(row).transpose(), [ia, row](Tape& t, const Mat& g) {
    t.grad_of(ia).row(row) += g.transpose();
  });
}

Var Tape::scale_by(Var a, Var s) {
  if (s.value().rows() != 1 || s.value().cols() != 1) {
    throw InvalidInput("scale_by: scale must be 1x1");
  }
  int ia = a.idx_, is = s.idx_;
  return push(a.value() * s.value()(0, 0), [ia, is](Tape& t, const Mat& g) {
    t.grad_of(ia) += g * t.value_of(is)(0, 0);
    t.grad_of(is)(0, 0) += (g.array() * t.value_of(ia).array()).sum();
  });
}

Var Tape::scalar_affine(Var s, double mul, double add) {
  if (s.value().rows() != 1 || s.value().cols() != 1) {
    throw InvalidInput("scalar_affine: operand must be 1x1");
  }
  int is = s.idx_;
  Mat out(1, 1);
  out(0, 0) = mul * s.value()(0, 0) + add;
  return push(std::move(out), [is, mul](Tape& t, const Mat& g) {
    t.grad_of(is)(0, 0) += mul * g(0, 0);
  });
}

void Tape::backward(Var output) {
  if (output.tape_ != this) throw InvalidInput("backward: var from another tape");
  const Mat& out = output.value();
  if (out.rows() != 1 || out.cols() != 1) {
    throw InvalidInput("backward: output must be scalar");
  }
  nodes_[output.idx_].grad(0, 0) = 1.0;
  for (int i = output.idx_; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back(*this, nodes_[i].grad);
  }
}

}  // namespace kpi::ad
