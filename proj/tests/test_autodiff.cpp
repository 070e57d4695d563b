#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kpi/autodiff.hpp"
#include "kpi/rng.hpp"

using kpi::ad::Mat;
using kpi::ad::Tape;
using kpi::ad::Var;

namespace {

Mat random_mat(kpi::rng::Stream& rng, long rows, long cols) {
  Mat m(rows, cols);
  for (long j = 0; j < cols; ++j)
    for (long i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

// Central finite differences on a scalar function of one leaf matrix.
template <typename Fn>
Mat fd_grad(const Mat& x0, Fn f, double h = 1e-6) {
  Mat g = Mat::Zero(x0.rows(), x0.cols());
  Mat x = x0;
  for (long j = 0; j < x.cols(); ++j) {
    for (long i = 0; i < x.rows(); ++i) {
      double keep = x(i, j);
      x(i, j) = keep + h;
      double fp = f(x);
      x(i, j) = keep - h;
      double fm = f(x);
      x(i, j) = keep;
      g(i, j) = (fp - fm) / (2.0 * h);
    }
  }
  return g;
}

double max_rel_err(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (long j = 0; j < a.cols(); ++j)
    for (long i = 0; i < a.rows(); ++i) {
      double denom = std::max({std::abs(a(i, j)), std::abs(b(i, j)), 1e-6});
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / denom);
    }
  return worst;
}

}  // namespace

TEST_CASE("forward values of primitive ops") {
  Tape t;
  Mat a(2, 1), b(2, 1);
  a << 1.0, 2.0;
  b << 3.0, -1.0;
  Var va = t.leaf(a), vb = t.leaf(b);
  CHECK(t.add(va, vb).value()(0, 0) == doctest::Approx(4.0));
  CHECK(t.sub(va, vb).value()(1, 0) == doctest::Approx(3.0));
  CHECK(t.dot(va, vb).value()(0, 0) == doctest::Approx(1.0));
  CHECK(t.squared_norm(va).value()(0, 0) == doctest::Approx(5.0));

  Mat s(3, 1);
  s << std::log(2.0), 0.0, -1e9;
  Var vs = t.leaf(s);
  Mat sm = t.softmax(vs).value();
  CHECK(sm(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(sm(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax sums to one and is shift invariant in ranking") {
  kpi::rng::Stream rng(11, "softmax");
  for (int it = 0; it < 20; ++it) {
    Mat s = random_mat(rng, 6, 1);
    Tape t;
    Mat y = t.softmax(t.leaf(s)).value();
    CHECK(y.sum() == doctest::Approx(1.0).epsilon(1e-12));
    Mat y2 = t.softmax(t.leaf((s.array() + 7.5).matrix())).value();
    // order of weights is preserved under a constant score shift
    for (long i = 0; i < 6; ++i)
      for (long j = 0; j < 6; ++j)
        CHECK((y(i, 0) < y(j, 0)) == (y2(i, 0) < y2(j, 0)));
  }
}

TEST_CASE("layer_norm forward statistics") {
  kpi::rng::Stream rng(3, "ln");
  Mat x = random_mat(rng, 16, 1);
  Tape t;
  Mat y = t.layer_norm(t.leaf(x)).value();
  CHECK(std::abs(y.mean()) < 1e-9);
  double var = (y.array() - y.mean()).square().sum() / 16.0;
  CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gradients match finite differences") {
  kpi::rng::Stream rng(42, "fd");

  SUBCASE("matmul chain with sigmoid") {
    Mat w0 = random_mat(rng, 3, 4), x0 = random_mat(rng, 4, 1);
    auto f = [&](const Mat& w) {
      Tape t;
      return t.squared_norm(t.sigmoid(t.matmul(t.leaf(w), t.leaf(x0)))).value()(0, 0);
    };
    Tape t;
    Var w = t.leaf(w0);
    Var out = t.squared_norm(t.sigmoid(t.matmul(w, t.leaf(x0))));
    t.backward(out);
    CHECK(max_rel_err(w.grad(), fd_grad(w0, f)) < 1e-6);
  }

  SUBCASE("softmax + weighted_sum + cosine") {
    Mat s0 = random_mat(rng, 4, 1);
    std::vector<Mat> items0;
    for (int i = 0; i < 4; ++i) items0.push_back(random_mat(rng, 5, 1));
    Mat target = random_mat(rng, 5, 1);
    auto f = [&](const Mat& s) {
      Tape t;
      std::vector<Var> items;
      for (const Mat& m : items0) items.push_back(t.leaf(m));
      Var w = t.softmax(t.leaf(s));
      return t.cosine(t.weighted_sum(items, w), t.leaf(target)).value()(0, 0);
    };
    Tape t;
    std::vector<Var> items;
    for (const Mat& m : items0) items.push_back(t.leaf(m));
    Var s = t.leaf(s0);
    Var out = t.cosine(t.weighted_sum(items, t.softmax(s)), t.leaf(target));
    t.backward(out);
    CHECK(max_rel_err(s.grad(), fd_grad(s0, f)) < 1e-6);
  }

  SUBCASE("elu, leaky_relu, layer_norm, logsumexp composite") {
    Mat x0 = random_mat(rng, 6, 1);
    auto f = [&](const Mat& x) {
      Tape t;
      Var v = t.leaf(x);
      Var a = t.elu(v);
      Var b = t.leaky_relu(v, 0.2);
      Var c = t.layer_norm(t.add(a, b));
      return t.logsumexp(c).value()(0, 0);
    };
    Tape t;
    Var v = t.leaf(x0);
    Var out = t.logsumexp(t.layer_norm(t.add(t.elu(v), t.leaky_relu(v, 0.2))));
    t.backward(out);
    CHECK(max_rel_err(v.grad(), fd_grad(x0, f)) < 1e-5);
  }

  SUBCASE("cwise_max routes gradient to the argmax item") {
    Mat a0(2, 1), b0(2, 1);
    a0 << 2.0, -1.0;
    b0 << 1.0, 3.0;
    Tape t;
    Var a = t.leaf(a0), b = t.leaf(b0);
    Var m = t.cwise_max({a, b});
    CHECK(m.value()(0, 0) == 2.0);
    CHECK(m.value()(1, 0) == 3.0);
    Mat w(2, 1);
    w << 1.0, 1.0;
    t.backward(t.dot(m, t.leaf(w)));
    CHECK(a.grad()(0, 0) == 1.0);
    CHECK(a.grad()(1, 0) == 0.0);
    CHECK(b.grad()(0, 0) == 0.0);
    CHECK(b.grad()(1, 0) == 1.0);
  }

  SUBCASE("slice, take_row, concat, scale_by") {
    Mat m0 = random_mat(rng, 3, 4);
    Mat s0 = random_mat(rng, 1, 1);
    auto f = [&](const Mat& m) {
      Tape t;
      Var mm = t.leaf(m);
      Var r0 = t.take_row(mm, 0);
      Var r2 = t.take_row(mm, 2);
      Var cat = t.concat_rows({r0, r2});
      Var sliced = t.slice_rows(cat, 2, 4);
      return t.squared_norm(t.scale_by(sliced, t.leaf(s0))).value()(0, 0);
    };
    Tape t;
    Var mm = t.leaf(m0);
    Var out = t.squared_norm(t.scale_by(
        t.slice_rows(t.concat_rows({t.take_row(mm, 0), t.take_row(mm, 2)}), 2, 4),
        t.leaf(s0)));
    t.backward(out);
    CHECK(max_rel_err(mm.grad(), fd_grad(m0, f)) < 1e-6);
  }
}

TEST_CASE("error paths") {
  Tape t;
  Mat a(2, 1);
  a << 1.0, 2.0;
  Mat b(3, 1);
  b << 1.0, 2.0, 3.0;
  Var va = t.leaf(a), vb = t.leaf(b);
  CHECK_THROWS_AS(t.add(va, vb), kpi::InvalidInput);
  CHECK_THROWS_AS(t.cosine(va, t.leaf(Mat::Zero(2, 1))), kpi::DegenerateEmbedding);
  CHECK_THROWS_AS(t.backward(va), kpi::InvalidInput);
  CHECK_THROWS_AS(t.sum({}), kpi::InvalidInput);
}
