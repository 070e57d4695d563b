#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <vector>

#include "kpi/errors.hpp"

namespace kpi::ad {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

class Tape;

// Handle to a node on a Tape. Cheap to copy; owns nothing.
class Var {
 public:
  Var() = default;
  const Mat& value() const;
  const Mat& grad() const;
  long rows() const { return value().rows(); }
  long cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int index) : tape_(tape), idx_(index) {}
  Tape* tape_ = nullptr;
  int idx_ = -1;
};

// Reverse-mode tape over float64 matrices. Column vectors are D x 1.
// One backward() per tape; gradients accumulate into every node and are
// read back from the leaves afterwards.
class Tape {
 public:
  Var leaf(Mat value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cwise_mul(Var a, Var b);
  Var matmul(Var a, Var b);
  Var scale(Var a, double c);

  Var sigmoid(Var a);
  Var elu(Var a);
  Var leaky_relu(Var a, double slope);
  Var log(Var a);

  // column-vector ops
  Var softmax(Var a);
  Var logsumexp(Var a);                       // -> 1x1
  Var dot(Var a, Var b);                      // -> 1x1
  Var squared_norm(Var a);                    // -> 1x1
  Var cosine(Var a, Var b);                   // -> 1x1; DegenerateEmbedding on zero norm
  Var layer_norm(Var a, double eps = 1e-9);   // pre-affine normalization

  // n-ary
  Var sum(const std::vector<Var>& xs);
  Var average(const std::vector<Var>& xs);
  Var cwise_max(const std::vector<Var>& xs);  // subgradient to first argmax
  Var concat_rows(const std::vector<Var>& xs);
  Var weighted_sum(const std::vector<Var>& items, Var weights);  // weights n x 1

  Var slice_rows(Var a, long start, long len);
  Var take_row(Var a, long row);              // row of a matrix as a column vector

  // 1x1 helpers
  Var scale_by(Var a, Var s);                 // s is 1x1
  Var scalar_affine(Var s, double mul, double add);

  void backward(Var output);                  // output must be 1x1

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, const Mat&)> back;  // pushes grad into parents
  };

  Var push(Mat value, std::function<void(Tape&, const Mat&)> back);
  Mat& grad_of(int idx) { return nodes_[idx].grad; }
  const Mat& value_of(int idx) const { return nodes_[idx].value; }

  // deque keeps node references stable while the tape grows
  std::deque<Node> nodes_;
};

inline const Mat& Var::value() const { return tape_->nodes_[idx_].value; }
inline const Mat& Var::grad() const { return tape_->nodes_[idx_].grad; }

}  // namespace kpi::ad
