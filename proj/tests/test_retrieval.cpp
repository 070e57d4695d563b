#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <deque>
#include <set>

#include "kpi/retrieval.hpp"
#include "support/fixtures.hpp"

using namespace kpi;
using kpi::testing::GraphBuilder;

namespace {

fusion::UnifiedGraph chain_graph(int dim) {
  // d - a - b - c
  GraphBuilder b(dim);
  rng::Stream rng(5, "chain");
  int a = b.node("a", testing::random_vec(rng, dim));
  int bb = b.node("b", testing::random_vec(rng, dim));
  int c = b.node("c", testing::random_vec(rng, dim));
  int d = b.node("d", testing::random_vec(rng, dim), true);
  int rel = b.relation("causes");
  b.edge(d, rel, a);
  b.edge(a, rel, bb);
  b.edge(bb, rel, c);
  return b.graph;
}

// independent depth-limited BFS oracle over an explicit adjacency map
std::set<int> bfs_oracle(const fusion::UnifiedGraph& g, int center, int max_depth) {
  std::map<int, std::set<int>> adj;
  for (const auto& e : g.edges) {
    if (e.head == e.tail) continue;
    adj[e.head].insert(e.tail);
    adj[e.tail].insert(e.head);
  }
  std::map<int, int> depth{{center, 0}};
  std::deque<int> q{center};
  while (!q.empty()) {
    int cur = q.front();
    q.pop_front();
    if (depth[cur] >= max_depth) continue;
    for (int nb : adj[cur]) {
      if (!depth.count(nb)) {
        depth[nb] = depth[cur] + 1;
        q.push_back(nb);
      }
    }
  }
  std::set<int> out;
  for (auto& [id, d] : depth) out.insert(id);
  return out;
}

}  // namespace

TEST_CASE("two_hop_neighborhood on a chain stops at depth two") {
  auto g = chain_graph(8);
  auto sg = retrieval::two_hop_neighborhood(g, "d");
  // node ids: a=0 b=1 c=2 d=3
  CHECK(sg.center == 3);
  CHECK(sg.nodes == std::vector<int>{0, 1, 3});  // d, a, b; c is 3 hops away
  CHECK(sg.edges.size() == 2);

  CHECK_THROWS_AS(retrieval::two_hop_neighborhood(g, "nope"), UnknownDisease);
  // "a" exists but is not a disease node
  CHECK_THROWS_AS(retrieval::two_hop_neighborhood(g, "a"), UnknownDisease);
}

TEST_CASE("isolated disease node yields a singleton subgraph") {
  GraphBuilder b(8);
  rng::Stream rng(6, "iso");
  b.node("alone", testing::random_vec(rng, 8), true);
  auto sg = retrieval::two_hop_neighborhood(b.graph, "alone");
  CHECK(sg.nodes == std::vector<int>{0});
  CHECK(sg.edges.empty());
}

TEST_CASE("two_hop matches a BFS oracle on random graphs") {
  rng::Stream rng(77, "bfs");
  for (int it = 0; it < 10; ++it) {
    GraphBuilder b(4);
    for (int i = 0; i < 20; ++i) {
      b.node("n" + std::string(1, static_cast<char>('a' + i)),
             testing::random_vec(rng, 4), i == 0);
    }
    int rel = b.relation("r");
    int n_edges = static_cast<int>(rng.uniform_int(15, 35));
    for (int e = 0; e < n_edges; ++e) {
      int h = static_cast<int>(rng.index(20));
      int t = static_cast<int>(rng.index(20));
      if (h != t) b.edge(h, rel, t);
    }
    auto sg = retrieval::two_hop_neighborhood(b.graph, b.graph.nodes[0].canonical_label);
    std::set<int> got(sg.nodes.begin(), sg.nodes.end());
    CHECK(got == bfs_oracle(b.graph, 0, 2));
    // induced edges: both endpoints inside
    for (const auto& e : sg.edges) {
      CHECK(got.count(e.head));
      CHECK(got.count(e.tail));
    }
  }
}

TEST_CASE("two_hop output independent of edge insertion order") {
  rng::Stream rng(78, "order");
  GraphBuilder b1(4), b2(4);
  for (int i = 0; i < 8; ++i) {
    auto v = testing::random_vec(rng, 4);
    b1.node("n" + std::to_string(i), v, i == 0);
    b2.node("n" + std::to_string(i), v, i == 0);
  }
  int r1 = b1.relation("r"), r2 = b2.relation("r");
  std::vector<std::pair<int, int>> edges = {{0, 1}, {1, 2}, {2, 3}, {0, 4}, {4, 5}, {6, 7}};
  for (const auto& [h, t] : edges) b1.edge(h, r1, t);
  for (auto it = edges.rbegin(); it != edges.rend(); ++it) b2.edge(it->second, r2, it->first);
  auto s1 = retrieval::two_hop_neighborhood(b1.graph, "n0");
  auto s2 = retrieval::two_hop_neighborhood(b2.graph, "n0");
  CHECK(s1.nodes == s2.nodes);
}

TEST_CASE("build_query blends prior and evidence convexly") {
  const int dim = 4;
  auto state = testing::tiny_state(dim, {"dz"});
  text::HashEncoder enc(dim);
  kw::KeywordSet keywords;
  keywords.terms = {{"fever", 1.0}, {"cough", 0.8}};

  std::vector<Eigen::VectorXd> protos = {Eigen::VectorXd::Unit(dim, 0),
                                         Eigen::VectorXd::Unit(dim, 1)};
  Eigen::VectorXd h_d = 0.5 * (protos[0] + protos[1]);

  // keyword aggregate computed through an independent value-level route
  std::vector<Eigen::VectorXd> adapted;
  for (const auto& [term, s] : keywords.terms) {
    adapted.push_back(state.param("adapter.weight") * enc.encode_text(term) +
                      state.param("adapter.bias"));
  }
  Eigen::VectorXd h_k = text::gated_aggregate(adapted, state.param("gate.keywords"));

  SUBCASE("beta_param 0 gives the midpoint") {
    auto q = retrieval::build_query(keywords, enc, state, protos);
    CHECK(q.beta_effective == doctest::Approx(0.5).epsilon(1e-12));
    CHECK((q.values - (0.5 * h_d + 0.5 * h_k)).norm() < 1e-12);
  }

  SUBCASE("large negative beta_param recovers the keyword evidence") {
    state.param("retrieval.beta")(0, 0) = -40.0;
    auto q = retrieval::build_query(keywords, enc, state, protos);
    CHECK((q.values - h_k).norm() < 1e-9);
  }

  SUBCASE("large positive beta_param recovers the prototype prior") {
    state.param("retrieval.beta")(0, 0) = 40.0;
    auto q = retrieval::build_query(keywords, enc, state, protos);
    CHECK((q.values - h_d).norm() < 1e-9);
  }

  SUBCASE("coordinates stay between the two sources") {
    rng::Stream rng(3, "beta");
    for (int it = 0; it < 10; ++it) {
      state.param("retrieval.beta")(0, 0) = rng.uniform(-3.0, 3.0);
      auto q = retrieval::build_query(keywords, enc, state, protos);
      for (int i = 0; i < dim; ++i) {
        CHECK(q.values[i] >= std::min(h_d[i], h_k[i]) - 1e-12);
        CHECK(q.values[i] <= std::max(h_d[i], h_k[i]) + 1e-12);
      }
    }
  }

  SUBCASE("empty inputs rejected") {
    kw::KeywordSet none;
    CHECK_THROWS_AS(retrieval::build_query(none, enc, state, protos), InvalidInput);
    CHECK_THROWS_AS(retrieval::build_query(keywords, enc, state, {}), InvalidInput);
  }
}

TEST_CASE("attend_subgraph attention") {
  const int dim = 4;
  auto state = testing::tiny_state(dim, {"dz"});

  SUBCASE("single node takes all attention") {
    GraphBuilder b(dim);
    rng::Stream rng(4, "att1");
    b.node("dz", testing::random_vec(rng, dim), true);
    auto sg = retrieval::two_hop_neighborhood(b.graph, "dz");
    retrieval::QueryVector q{testing::random_vec(rng, dim), 0.5};
    auto ps = retrieval::attend_subgraph(q, sg, b.graph, state);
    CHECK(ps.attention.at(0) == 1.0);
  }

  SUBCASE("identical embeddings share attention equally") {
    GraphBuilder b(dim);
    rng::Stream rng(8, "att2");
    auto shared = testing::random_vec(rng, dim);
    b.node("dz", shared, true);
    b.node("x", shared);
    int rel = b.relation("r");
    b.edge(0, rel, 1);
    auto sg = retrieval::two_hop_neighborhood(b.graph, "dz");
    retrieval::QueryVector q{testing::random_vec(rng, dim), 0.5};
    auto ps = retrieval::attend_subgraph(q, sg, b.graph, state);
    CHECK(ps.attention.at(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ps.attention.at(1) == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("scores ln2 and 0 give closed-form softmax weights") {
    // engineered heads: every wq maps the query to 1, every wk reads the
    // first embedding coordinate, so s_v = h_v[0] exactly (d_head = 1)
    GraphBuilder b(dim);
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(dim);
    e1[0] = std::log(2.0);
    b.node("dz", e1, true);
    b.node("x", Eigen::VectorXd::Zero(dim));
    int rel = b.relation("r");
    b.edge(0, rel, 1);

    for (int h = 0; h < model::kRetrievalHeads; ++h) {
      state.param("retrieval.wq.h" + std::to_string(h)) =
          Eigen::MatrixXd::Zero(1, dim);
      state.param("retrieval.wq.h" + std::to_string(h))(0, 0) = 1.0;
      state.param("retrieval.wk.h" + std::to_string(h)) =
          Eigen::MatrixXd::Zero(1, dim);
      state.param("retrieval.wk.h" + std::to_string(h))(0, 0) = 1.0;
    }
    retrieval::QueryVector q{Eigen::VectorXd::Unit(dim, 0), 0.5};
    auto sg = retrieval::two_hop_neighborhood(b.graph, "dz");
    auto ps = retrieval::attend_subgraph(q, sg, b.graph, state);
    CHECK(ps.attention.at(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(ps.attention.at(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  SUBCASE("attention normalizes and stays positive on random instances") {
    rng::Stream rng(19, "attn");
    for (int it = 0; it < 50; ++it) {
      GraphBuilder b(dim);
      int n = static_cast<int>(rng.uniform_int(1, 7));
      for (int i = 0; i < n; ++i) {
        b.node("n" + std::to_string(i), testing::random_vec(rng, dim), i == 0);
      }
      int rel = b.relation("r");
      for (int i = 1; i < n; ++i) b.edge(0, rel, i);
      auto sg = retrieval::two_hop_neighborhood(b.graph, "n0");
      retrieval::QueryVector q{testing::random_vec(rng, dim), 0.5};
      auto ps = retrieval::attend_subgraph(q, sg, b.graph, state);
      double sum = 0.0;
      for (const auto& [id, a] : ps.attention) {
        CHECK(a > 0.0);
        sum += a;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("subgraph_triples sorts by max endpoint attention") {
  const int dim = 4;
  GraphBuilder b(dim);
  rng::Stream rng(4, "triples");
  b.node("dz", testing::random_vec(rng, dim), true);
  b.node("mid", testing::random_vec(rng, dim));
  b.node("far", testing::random_vec(rng, dim));
  int rel = b.relation("causes");
  b.edge(0, rel, 1);
  b.edge(1, rel, 2);

  retrieval::PatientSubgraph ps;
  ps.center = 0;
  ps.nodes = {0, 1, 2};
  ps.edges = b.graph.edges;
  ps.attention = {{0, 0.5}, {1, 0.3}, {2, 0.2}};
  auto triples = retrieval::subgraph_triples(ps, b.graph);
  REQUIRE(triples.size() == 2);
  CHECK(triples[0].head == "dz");   // max endpoint 0.5
  CHECK(triples[1].head == "mid");  // max endpoint 0.3
  CHECK(triples[0].alpha_head == 0.5);
  CHECK(triples[0].alpha_tail == 0.3);
}
