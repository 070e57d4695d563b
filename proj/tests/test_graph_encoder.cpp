#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kpi/graph_encoder.hpp"
#include "support/fixtures.hpp"

using namespace kpi;
using kpi::testing::GraphBuilder;

namespace {

double elu_ref(double x) { return x > 0.0 ? x : std::expm1(x); }
double leaky_ref(double x) { return x > 0.0 ? x : 0.2 * x; }

// Dense oracle: materializes full n x n attention matrices per layer and
// runs the same two-layer + projection computation with plain Eigen.
Eigen::MatrixXd dense_gat_oracle(const std::vector<std::vector<int>>& adjacency,
                                 const Eigen::MatrixXd& x_rows,  // n x d
                                 const model::ModelState& s) {
  const long n = x_rows.rows();
  auto layer = [&](const Eigen::MatrixXd& x, const Eigen::MatrixXd& w,
                   const Eigen::VectorXd& a_src, const Eigen::VectorXd& a_dst,
                   bool phi) {
    Eigen::MatrixXd u = x * w.transpose();  // n x h
    Eigen::VectorXd src = u * a_src;
    Eigen::VectorXd dst = u * a_dst;
    Eigen::MatrixXd attn = Eigen::MatrixXd::Zero(n, n);
    for (long i = 0; i < n; ++i) {
      std::vector<long> allowed{i};
      for (int j : adjacency[static_cast<std::size_t>(i)]) allowed.push_back(j);
      double m = -1e300;
      for (long j : allowed) m = std::max(m, leaky_ref(src[i] + dst[j]));
      double z = 0.0;
      for (long j : allowed) z += std::exp(leaky_ref(src[i] + dst[j]) - m);
      for (long j : allowed) attn(i, j) = std::exp(leaky_ref(src[i] + dst[j]) - m) / z;
    }
    Eigen::MatrixXd out = attn * u;
    if (phi) out = out.unaryExpr(&elu_ref);
    return out;
  };
  Eigen::MatrixXd h1 = layer(x_rows, s.param("gat.l1.weight"), s.param("gat.l1.attn_src"),
                             s.param("gat.l1.attn_dst"), true);
  Eigen::MatrixXd h2 = layer(h1, s.param("gat.l2.weight"), s.param("gat.l2.attn_src"),
                             s.param("gat.l2.attn_dst"), false);
  Eigen::MatrixXd proj =
      (h2 * s.param("gat.proj.w1").transpose()).unaryExpr(&elu_ref) *
      s.param("gat.proj.w2").transpose();
  return proj;  // n x d rows
}

}  // namespace

TEST_CASE("single node reduces to chained matrix application") {
  const int dim = 4;
  auto state = testing::tiny_state(dim, {"dz"});
  rng::Stream rng(3, "single");
  Eigen::VectorXd x = testing::random_vec(rng, dim);

  auto out = gnn::gat_forward({{}}, {{0, x}}, state);
  // alpha = 1 throughout, so the forward is just the layer chain
  Eigen::VectorXd u1 = (state.param("gat.l1.weight") * x).unaryExpr(&elu_ref);
  Eigen::VectorXd u2 = state.param("gat.l2.weight") * u1;
  Eigen::VectorXd want =
      state.param("gat.proj.w2") * (state.param("gat.proj.w1") * u2).unaryExpr(&elu_ref);
  CHECK((out.at(0) - want).norm() < 1e-12);
}

TEST_CASE("disconnected nodes do not influence each other") {
  const int dim = 4;
  auto state = testing::tiny_state(dim, {"dz"});
  rng::Stream rng(5, "locality");
  Eigen::VectorXd a = testing::random_vec(rng, dim);
  Eigen::VectorXd b = testing::random_vec(rng, dim);
  Eigen::VectorXd b2 = testing::random_vec(rng, dim);

  auto out1 = gnn::gat_forward({{}, {}}, {{0, a}, {1, b}}, state);
  auto out2 = gnn::gat_forward({{}, {}}, {{0, a}, {1, b2}}, state);
  CHECK(out1.at(0) == out2.at(0));  // bit-identical
}

TEST_CASE("three-hop features cannot reach a node through two layers") {
  const int dim = 4;
  auto state = testing::tiny_state(dim, {"dz"});
  rng::Stream rng(6, "threehop");
  // chain 0 - 1 - 2 - 3
  std::vector<std::vector<int>> adj = {{1}, {0, 2}, {1, 3}, {2}};
  std::map<int, Eigen::VectorXd> f1, f2;
  for (int i = 0; i < 4; ++i) f1[i] = testing::random_vec(rng, dim);
  f2 = f1;
  f2[3] = testing::random_vec(rng, dim);  // perturb the 3-hop-away node
  auto o1 = gnn::gat_forward(adj, f1, state);
  auto o2 = gnn::gat_forward(adj, f2, state);
  CHECK(o1.at(0) == o2.at(0));
  CHECK(o1.at(1) != o2.at(1));  // 2 hops away, reachable
}

TEST_CASE("gat_forward matches the dense oracle on random graphs") {
  const int dim = 4;
  auto state = testing::tiny_state(dim, {"dz"});
  rng::Stream rng(11, "dense");
  for (int it = 0; it < 10; ++it) {
    std::vector<std::vector<int>> adj = {{1, 2}, {0, 3}, {0}, {1}};
    Eigen::MatrixXd x(4, dim);
    std::map<int, Eigen::VectorXd> features;
    for (int i = 0; i < 4; ++i) {
      Eigen::VectorXd v = testing::random_vec(rng, dim);
      x.row(i) = v.transpose();
      features[i] = v;
    }
    auto got = gnn::gat_forward(adj, features, state);
    Eigen::MatrixXd want = dense_gat_oracle(adj, x, state);
    for (int i = 0; i < 4; ++i) {
      CHECK((got.at(i) - want.row(i).transpose()).norm() < 1e-10);
    }
  }
}

TEST_CASE("attention rows sum to one over the neighborhood") {
  const int dim = 4;
  auto state = testing::tiny_state(dim, {"dz"});
  rng::Stream rng(13, "rows");
  for (int it = 0; it < 50; ++it) {
    int n = static_cast<int>(rng.uniform_int(2, 7));
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (int e = 0; e < 2 * n; ++e) {
      int a = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
      int b = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
      if (a == b) continue;
      adj[static_cast<std::size_t>(a)].push_back(b);
      adj[static_cast<std::size_t>(b)].push_back(a);
    }
    std::vector<Eigen::VectorXd> feats;
    for (int i = 0; i < n; ++i) feats.push_back(testing::random_vec(rng, dim));
    auto rows = gnn::gat_attention_rows(
        gnn::topology_with_self_loops(adj), feats, state.param("gat.l1.weight"),
        state.param("gat.l1.attn_src"), state.param("gat.l1.attn_dst"));
    for (const auto& row : rows) {
      CHECK(std::abs(row.sum() - 1.0) <= 1e-9);
      for (long k = 0; k < row.size(); ++k) CHECK(row[k] > 0.0);
    }
  }
}

TEST_CASE("permutation equivariance") {
  const int dim = 4;
  auto state = testing::tiny_state(dim, {"dz"});
  rng::Stream rng(17, "perm");
  std::map<int, Eigen::VectorXd> f;
  for (int i = 0; i < 4; ++i) f[i] = testing::random_vec(rng, dim);
  std::vector<std::vector<int>> adj = {{1}, {0, 2}, {1, 3}, {2}};

  // relabel via the permutation p(i) = (i + 1) % 4
  auto p = [](int i) { return (i + 1) % 4; };
  std::vector<std::vector<int>> adj_p(4);
  std::map<int, Eigen::VectorXd> f_p;
  for (int i = 0; i < 4; ++i) {
    f_p[p(i)] = f[i];
    for (int j : adj[static_cast<std::size_t>(i)]) {
      adj_p[static_cast<std::size_t>(p(i))].push_back(p(j));
    }
  }
  auto out = gnn::gat_forward(adj, f, state);
  auto out_p = gnn::gat_forward(adj_p, f_p, state);
  for (int i = 0; i < 4; ++i) {
    CHECK((out.at(i) - out_p.at(p(i))).norm() == 0.0);
  }
}

TEST_CASE("gat gradients match finite differences on a 5-node graph") {
  const int dim = 4;
  auto state = testing::tiny_state(dim, {"dz"});
  rng::Stream rng(23, "gatfd");
  std::vector<std::vector<int>> adj = {{1, 2}, {0, 3}, {0, 4}, {1}, {2}};
  std::vector<Eigen::VectorXd> feats;
  for (int i = 0; i < 5; ++i) feats.push_back(testing::random_vec(rng, dim));
  Eigen::VectorXd target = testing::random_vec(rng, dim);

  auto loss_of = [&](const model::ModelState& s) {
    ad::Tape tape;
    auto params = model::make_tape_params(tape, s);
    std::vector<ad::Var> fv;
    for (const auto& x : feats) fv.push_back(tape.leaf(x));
    auto out = gnn::gat_forward_t(tape, gnn::topology_with_self_loops(adj), fv, params);
    ad::Var loss = tape.squared_norm(tape.sub(out[0], tape.leaf(target)));
    for (std::size_t i = 1; i < out.size(); ++i) {
      loss = tape.add(loss, tape.squared_norm(tape.sub(out[i], tape.leaf(target))));
    }
    return loss.value()(0, 0);
  };

  // analytic gradients
  ad::Tape tape;
  auto params = model::make_tape_params(tape, state);
  std::vector<ad::Var> fv;
  for (const auto& x : feats) fv.push_back(tape.leaf(x));
  auto out = gnn::gat_forward_t(tape, gnn::topology_with_self_loops(adj), fv, params);
  ad::Var loss = tape.squared_norm(tape.sub(out[0], tape.leaf(target)));
  for (std::size_t i = 1; i < out.size(); ++i) {
    loss = tape.add(loss, tape.squared_norm(tape.sub(out[i], tape.leaf(target))));
  }
  tape.backward(loss);

  const double h = 1e-5;
  for (const std::string name :
       {"gat.l1.weight", "gat.l1.attn_src", "gat.l1.attn_dst", "gat.l2.weight",
        "gat.l2.attn_src", "gat.l2.attn_dst", "gat.proj.w1", "gat.proj.w2"}) {
    Eigen::MatrixXd analytic = params.at(name).grad();
    Eigen::MatrixXd& p = state.param(name);
    double worst = 0.0;
    for (long i = 0; i < p.rows(); ++i) {
      for (long j = 0; j < p.cols(); ++j) {
        double keep = p(i, j);
        p(i, j) = keep + h;
        double fp = loss_of(state);
        p(i, j) = keep - h;
        double fm = loss_of(state);
        p(i, j) = keep;
        double fd = (fp - fm) / (2.0 * h);
        double denom = std::max({std::abs(fd), std::abs(analytic(i, j)), 1e-6});
        worst = std::max(worst, std::abs(fd - analytic(i, j)) / denom);
      }
    }
    INFO(name);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("compute_prototypes extracts disease rows in label order") {
  const int dim = 4;
  rng::Stream rng(29, "proto");
  GraphBuilder b(dim);
  b.node("dza", testing::random_vec(rng, dim), true);
  b.node("dzb", testing::random_vec(rng, dim), true);
  b.node("dzc", testing::random_vec(rng, dim), true);
  b.node("ent", testing::random_vec(rng, dim));
  int rel = b.relation("r");
  b.edge(0, rel, 3);

  auto state = testing::tiny_state(dim, {"dza", "dzb", "dzc"});
  auto protos = gnn::compute_prototypes(b.graph, state);
  CHECK(protos.labels == std::vector<std::string>{"dza", "dzb", "dzc"});
  CHECK(protos.embeddings.rows() == 3);
  CHECK(protos.embeddings.cols() == dim);

  // identical isolated features produce identical prototype rows
  GraphBuilder iso(dim);
  Eigen::VectorXd shared = testing::random_vec(rng, dim);
  iso.node("dza", shared, true);
  iso.node("dzb", shared, true);
  auto p2 = gnn::compute_prototypes(iso.graph, state);
  CHECK((p2.embeddings.row(0) - p2.embeddings.row(1)).norm() == 0.0);

  // recomputation without parameter change is bit-identical
  auto p3 = gnn::compute_prototypes(iso.graph, state);
  CHECK(p2.embeddings == p3.embeddings);

  GraphBuilder nodisease(dim);
  nodisease.node("ent", testing::random_vec(rng, dim));
  CHECK_THROWS_AS(gnn::compute_prototypes(nodisease.graph, state), InvalidGraph);
}

TEST_CASE("graph patient embedding") {
  const int dim = 4;
  auto state = testing::tiny_state(dim, {"dz"});
  rng::Stream rng(31, "hgp");

  SUBCASE("singleton subgraph equals the single-node forward") {
    GraphBuilder b(dim);
    Eigen::VectorXd x = testing::random_vec(rng, dim);
    b.node("dz", x, true);
    retrieval::PatientSubgraph ps;
    ps.center = 0;
    ps.nodes = {0};
    ps.attention = {{0, 1.0}};
    Eigen::VectorXd got = gnn::graph_patient_embedding(ps, b.graph, state);
    auto want = gnn::gat_forward({{}}, {{0, x}}, state);
    CHECK((got - want.at(0)).norm() < 1e-12);
  }

  SUBCASE("uniform attention reduces to the unweighted forward") {
    GraphBuilder b(dim);
    for (int i = 0; i < 3; ++i) {
      b.node("n" + std::to_string(i), testing::random_vec(rng, dim), i == 0);
    }
    int rel = b.relation("r");
    b.edge(0, rel, 1);
    b.edge(1, rel, 2);
    retrieval::PatientSubgraph ps;
    ps.center = 0;
    ps.nodes = {0, 1, 2};
    ps.edges = b.graph.edges;
    ps.attention = {{0, 1.0 / 3}, {1, 1.0 / 3}, {2, 1.0 / 3}};
    Eigen::VectorXd got = gnn::graph_patient_embedding(ps, b.graph, state);
    std::map<int, Eigen::VectorXd> f;
    for (int i = 0; i < 3; ++i) f[i] = b.graph.nodes[i].embedding;
    auto want = gnn::gat_forward({{1}, {0, 2}, {1}}, f, state);
    CHECK((got - want.at(0)).norm() < 1e-9);
  }

  SUBCASE("skewed attention matches the dense oracle with scaled features") {
    GraphBuilder b(dim);
    for (int i = 0; i < 3; ++i) {
      b.node("n" + std::to_string(i), testing::random_vec(rng, dim), i == 0);
    }
    int rel = b.relation("r");
    b.edge(0, rel, 1);
    b.edge(0, rel, 2);
    retrieval::PatientSubgraph ps;
    ps.center = 0;
    ps.nodes = {0, 1, 2};
    ps.edges = b.graph.edges;
    ps.attention = {{0, 0.6}, {1, 0.3}, {2, 0.1}};
    Eigen::VectorXd got = gnn::graph_patient_embedding(ps, b.graph, state);

    Eigen::MatrixXd x(3, dim);
    x.row(0) = (0.6 * 3) * b.graph.nodes[0].embedding.transpose();
    x.row(1) = (0.3 * 3) * b.graph.nodes[1].embedding.transpose();
    x.row(2) = (0.1 * 3) * b.graph.nodes[2].embedding.transpose();
    Eigen::MatrixXd want = dense_gat_oracle({{1, 2}, {0}, {0}}, x, state);
    CHECK((got - want.row(0).transpose()).norm() < 1e-10);
  }
}

TEST_CASE("random prototype mode uses the free matrix") {
  const int dim = 4;
  rng::Stream rng(37, "randproto");
  GraphBuilder b(dim);
  b.node("dza", testing::random_vec(rng, dim), true);
  b.node("dzb", testing::random_vec(rng, dim), true);
  auto state = testing::tiny_state(dim, {"dza", "dzb"}, 7, "random");
  auto protos = gnn::prototypes_for(b.graph, state);
  CHECK(protos.labels == std::vector<std::string>{"dza", "dzb"});
  CHECK(protos.embeddings == state.param("prototypes.free"));
}
