#include "kpi/graph_encoder.hpp"

#include <algorithm>

namespace kpi::gnn {

namespace {

constexpr double kLeakySlope = 0.2;

// One attention layer: x_i' = sum_{j in N(i)} alpha_ij W x_j with
// alpha_ij = softmax_j leaky(a_src . Wx_i + a_dst . Wx_j).
std::vector<ad::Var> gat_layer(ad::Tape& tape, const Topology& topo,
                               const std::vector<ad::Var>& features, ad::Var weight,
                               ad::Var attn_src, ad::Var attn_dst, bool apply_phi) {
  std::vector<ad::Var> transformed;
  std::vector<ad::Var> src_terms;
  std::vector<ad::Var> dst_terms;
  transformed.reserve(features.size());
  for (const ad::Var& x : features) {
    ad::Var u = tape.matmul(weight, x);
    transformed.push_back(u);
    src_terms.push_back(tape.dot(attn_src, u));
    dst_terms.push_back(tape.dot(attn_dst, u));
  }
  std::vector<ad::Var> out;
  out.reserve(features.size());
  for (std::size_t i = 0; i < topo.size(); ++i) {
    std::vector<ad::Var> scores;
    std::vector<ad::Var> neigh;
    for (int j : topo[i]) {
      scores.push_back(tape.leaky_relu(
          tape.add(src_terms[i], dst_terms[static_cast<std::size_t>(j)]), kLeakySlope));
      neigh.push_back(transformed[static_cast<std::size_t>(j)]);
    }
    ad::Var alpha = tape.softmax(tape.concat_rows(scores));
    ad::Var agg = tape.weighted_sum(neigh, alpha);
    out.push_back(apply_phi ? tape.elu(agg) : agg);
  }
  return out;
}

}  // namespace

Topology topology_with_self_loops(const std::vector<std::vector<int>>& adjacency) {
  Topology topo(adjacency.size());
  for (std::size_t i = 0; i < adjacency.size(); ++i) {
    topo[i].push_back(static_cast<int>(i));
    for (int j : adjacency[i]) topo[i].push_back(j);
    std::sort(topo[i].begin(), topo[i].end());
    topo[i].erase(std::unique(topo[i].begin(), topo[i].end()), topo[i].end());
  }
  return topo;
}

std::vector<ad::Var> gat_forward_t(ad::Tape& tape, const Topology& topo,
                                   const std::vector<ad::Var>& features,
                                   const model::TapeParams& params) {
  if (features.empty()) throw InvalidInput("gat_forward: empty graph");
  if (features.size() != topo.size()) {
    throw InvalidInput("gat_forward: feature/topology size mismatch");
  }
  auto h1 = gat_layer(tape, topo, features, params.at("gat.l1.weight"),
                      params.at("gat.l1.attn_src"), params.at("gat.l1.attn_dst"),
                      /*apply_phi=*/true);
  auto h2 = gat_layer(tape, topo, h1, params.at("gat.l2.weight"),
                      params.at("gat.l2.attn_src"), params.at("gat.l2.attn_dst"),
                      /*apply_phi=*/false);
  std::vector<ad::Var> out;
  out.reserve(h2.size());
  ad::Var pw1 = params.at("gat.proj.w1");
  ad::Var pw2 = params.at("gat.proj.w2");
  for (const ad::Var& x : h2) {
    out.push_back(tape.matmul(pw2, tape.elu(tape.matmul(pw1, x))));
  }
  return out;
}

std::vector<Eigen::VectorXd> gat_attention_rows(const Topology& topo,
                                                const std::vector<Eigen::VectorXd>& features,
                                                const Eigen::MatrixXd& weight,
                                                const Eigen::VectorXd& attn_src,
                                                const Eigen::VectorXd& attn_dst) {
  std::vector<Eigen::VectorXd> rows;
  std::vector<Eigen::VectorXd> u;
  u.reserve(features.size());
  for (const auto& x : features) u.push_back(weight * x);
  for (std::size_t i = 0; i < topo.size(); ++i) {
    Eigen::VectorXd scores(static_cast<long>(topo[i].size()));
    for (std::size_t k = 0; k < topo[i].size(); ++k) {
      double e = attn_src.dot(u[i]) + attn_dst.dot(u[static_cast<std::size_t>(topo[i][k])]);
      scores[static_cast<long>(k)] = e > 0.0 ? e : kLeakySlope * e;
    }
    double m = scores.maxCoeff();
    Eigen::VectorXd ex = (scores.array() - m).exp();
    rows.push_back(ex / ex.sum());
  }
  return rows;
}

std::map<int, Eigen::VectorXd> gat_forward(const std::vector<std::vector<int>>& adjacency,
                                           const std::map<int, Eigen::VectorXd>& features,
                                           const model::ModelState& state) {
  if (features.size() != adjacency.size()) {
    throw InvalidInput("gat_forward: every node needs an initial feature");
  }
  ad::Tape tape;
  model::TapeParams params = model::make_tape_params(tape, state);
  std::vector<ad::Var> feats;
  std::vector<int> ids;
  for (const auto& [id, vec] : features) {
    ids.push_back(id);
    feats.push_back(tape.leaf(vec));
  }
  // features keyed by dense ids 0..n-1 in adjacency order
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] != static_cast<int>(i)) {
      throw InvalidInput("gat_forward: node ids must be dense 0..n-1");
    }
  }
  auto out = gat_forward_t(tape, topology_with_self_loops(adjacency), feats, params);
  std::map<int, Eigen::VectorXd> result;
  for (std::size_t i = 0; i < out.size(); ++i) {
    result[ids[i]] = out[i].value();
  }
  return result;
}

std::vector<ad::Var> compute_prototypes_t(ad::Tape& tape, const fusion::UnifiedGraph& graph,
                                          const model::TapeParams& params) {
  auto disease_ids = graph.disease_node_ids();
  if (disease_ids.empty()) {
    throw InvalidGraph("compute_prototypes: graph has no disease nodes");
  }
  std::vector<ad::Var> feats;
  feats.reserve(graph.nodes.size());
  for (const auto& n : graph.nodes) feats.push_back(tape.leaf(n.embedding));
  auto encoded =
      gat_forward_t(tape, topology_with_self_loops(graph.adjacency()), feats, params);
  std::vector<ad::Var> rows;
  rows.reserve(disease_ids.size());
  for (int id : disease_ids) rows.push_back(encoded[static_cast<std::size_t>(id)]);
  return rows;
}

PrototypeSet compute_prototypes(const fusion::UnifiedGraph& graph,
                                const model::ModelState& state) {
  ad::Tape tape;
  model::TapeParams params = model::make_tape_params(tape, state);
  auto rows = compute_prototypes_t(tape, graph, params);
  PrototypeSet set;
  for (int id : graph.disease_node_ids()) {
    set.labels.push_back(graph.nodes[static_cast<std::size_t>(id)].canonical_label);
  }
  set.embeddings.resize(static_cast<long>(rows.size()), state.hyper.dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    set.embeddings.row(static_cast<long>(i)) = rows[i].value().transpose();
  }
  return set;
}

std::vector<ad::Var> prototype_rows_t(ad::Tape& tape, const fusion::UnifiedGraph& graph,
                                      const model::ModelState& state,
                                      const model::TapeParams& params) {
  if (state.hyper.prototype_mode == "random") {
    ad::Var free = params.at("prototypes.free");
    std::vector<ad::Var> rows;
    for (long r = 0; r < free.rows(); ++r) rows.push_back(tape.take_row(free, r));
    return rows;
  }
  return compute_prototypes_t(tape, graph, params);
}

PrototypeSet prototypes_for(const fusion::UnifiedGraph& graph,
                            const model::ModelState& state) {
  if (state.hyper.prototype_mode == "random") {
    PrototypeSet set;
    set.labels = state.schema.labels;
    set.embeddings = state.param("prototypes.free");
    return set;
  }
  return compute_prototypes(graph, state);
}

ad::Var graph_patient_embedding_t(ad::Tape& tape, const retrieval::AttendedSubgraph& att,
                                  const fusion::UnifiedGraph& graph,
                                  const model::TapeParams& params) {
  const auto& nodes = att.topology.nodes;
  const double n = static_cast<double>(nodes.size());

  // local adjacency over subgraph node positions
  std::map<int, int> pos;
  for (std::size_t i = 0; i < nodes.size(); ++i) pos[nodes[i]] = static_cast<int>(i);
  std::vector<std::vector<int>> adj(nodes.size());
  for (const auto& e : att.topology.edges) {
    if (e.head == e.tail) continue;
    adj[static_cast<std::size_t>(pos.at(e.head))].push_back(pos.at(e.tail));
    adj[static_cast<std::size_t>(pos.at(e.tail))].push_back(pos.at(e.head));
  }

  std::vector<ad::Var> feats;
  feats.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    ad::Var base = tape.leaf(graph.nodes[static_cast<std::size_t>(nodes[i])].embedding);
    ad::Var a = tape.slice_rows(att.alpha, static_cast<long>(i), 1);
    feats.push_back(tape.scale_by(base, tape.scalar_affine(a, n, 0.0)));
  }
  auto out = gat_forward_t(tape, topology_with_self_loops(adj), feats, params);
  return out[static_cast<std::size_t>(pos.at(att.topology.center))];
}

Eigen::VectorXd graph_patient_embedding(const retrieval::PatientSubgraph& subgraph,
                                        const fusion::UnifiedGraph& graph,
                                        const model::ModelState& state) {
  ad::Tape tape;
  model::TapeParams params = model::make_tape_params(tape, state);
  retrieval::AttendedSubgraph att;
  att.topology.center = subgraph.center;
  att.topology.nodes = subgraph.nodes;
  att.topology.edges = subgraph.edges;
  ad::Mat alpha(static_cast<long>(subgraph.nodes.size()), 1);
  for (std::size_t i = 0; i < subgraph.nodes.size(); ++i) {
    alpha(static_cast<long>(i), 0) = subgraph.attention.at(subgraph.nodes[i]);
  }
  att.alpha = tape.leaf(alpha);
  return graph_patient_embedding_t(tape, att, graph, params).value();
}

}  // namespace kpi::gnn
