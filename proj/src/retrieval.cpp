#include "kpi/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <tuple>

namespace kpi::retrieval {

QueryBuild build_query_t(ad::Tape& tape, const kw::KeywordSet& keywords,
                         const text::Encoder& base_encoder,
                         const model::TapeParams& params,
                         const std::vector<ad::Var>& prototype_rows) {
  if (keywords.terms.empty()) {
    throw InvalidInput("build_query: empty keyword set");
  }
  if (prototype_rows.empty()) {
    throw InvalidInput("build_query: empty prototype set");
  }
  ad::Var aw = params.at("adapter.weight");
  ad::Var ab = params.at("adapter.bias");
  std::vector<ad::Var> kvecs;
  kvecs.reserve(keywords.terms.size());
  for (const auto& [term, score] : keywords.terms) {
    ad::Var base = tape.leaf(base_encoder.encode_text(term));
    kvecs.push_back(text::adapter_apply_t(tape, base, aw, ab));
  }
  ad::Var hk = text::gated_aggregate_t(tape, kvecs, params.at("gate.keywords"));
  ad::Var hd = tape.average(prototype_rows);
  ad::Var beta = tape.sigmoid(params.at("retrieval.beta"));
  ad::Var one_minus = tape.scalar_affine(beta, -1.0, 1.0);
  ad::Var q = tape.add(tape.scale_by(hd, beta), tape.scale_by(hk, one_minus));
  return {q, beta};
}

QueryVector build_query(const kw::KeywordSet& keywords, const text::Encoder& base_encoder,
                        const model::ModelState& state,
                        const std::vector<Eigen::VectorXd>& prototypes) {
  ad::Tape tape;
  model::TapeParams params = model::make_tape_params(tape, state);
  std::vector<ad::Var> rows;
  rows.reserve(prototypes.size());
  for (const auto& p : prototypes) rows.push_back(tape.leaf(p));
  QueryBuild qb = build_query_t(tape, keywords, base_encoder, params, rows);
  return {qb.query.value(), qb.beta.value()(0, 0)};
}

HopSubgraph two_hop_neighborhood(const fusion::UnifiedGraph& graph,
                                 const std::string& disease_label) {
  auto center = graph.disease_node(disease_label);
  if (!center) {
    throw UnknownDisease("no disease node for label: " + disease_label);
  }
  auto adj = graph.adjacency();
  std::map<int, int> depth;
  depth[*center] = 0;
  std::deque<int> queue{*center};
  while (!queue.empty()) {
    int cur = queue.front();
    queue.pop_front();
    if (depth[cur] == 2) continue;
    for (int nb : adj[static_cast<std::size_t>(cur)]) {
      if (!depth.count(nb)) {
        depth[nb] = depth[cur] + 1;
        queue.push_back(nb);
      }
    }
  }
  HopSubgraph sg;
  sg.center = *center;
  for (const auto& [id, d] : depth) sg.nodes.push_back(id);
  std::sort(sg.nodes.begin(), sg.nodes.end());
  std::set<int> in_set(sg.nodes.begin(), sg.nodes.end());
  for (const auto& e : graph.edges) {
    if (in_set.count(e.head) && in_set.count(e.tail)) sg.edges.push_back(e);
  }
  std::sort(sg.edges.begin(), sg.edges.end());
  return sg;
}

AttendedSubgraph attend_subgraph_t(ad::Tape& tape, ad::Var query,
                                   const HopSubgraph& subgraph,
                                   const fusion::UnifiedGraph& graph,
                                   const model::TapeParams& params) {
  if (subgraph.nodes.empty()) {
    throw InvalidInput("attend_subgraph: empty subgraph");
  }
  const int heads = model::kRetrievalHeads;
  const double inv_sqrt_d =
      1.0 / std::sqrt(static_cast<double>(query.rows() / heads));

  std::vector<ad::Var> node_embs;
  node_embs.reserve(subgraph.nodes.size());
  for (int id : subgraph.nodes) {
    node_embs.push_back(tape.leaf(graph.nodes[static_cast<std::size_t>(id)].embedding));
  }

  std::vector<ad::Var> per_node_scores;
  for (std::size_t v = 0; v < node_embs.size(); ++v) {
    std::vector<ad::Var> head_scores;
    for (int h = 0; h < heads; ++h) {
      ad::Var wq = params.at("retrieval.wq.h" + std::to_string(h));
      ad::Var wk = params.at("retrieval.wk.h" + std::to_string(h));
      ad::Var s = tape.dot(tape.matmul(wq, query), tape.matmul(wk, node_embs[v]));
      head_scores.push_back(tape.scale(s, inv_sqrt_d));
    }
    per_node_scores.push_back(tape.average(head_scores));
  }
  ad::Var alpha = tape.softmax(tape.concat_rows(per_node_scores));
  return {subgraph, alpha};
}

PatientSubgraph attend_subgraph(const QueryVector& query, const HopSubgraph& subgraph,
                                const fusion::UnifiedGraph& graph,
                                const model::ModelState& state) {
  ad::Tape tape;
  model::TapeParams params = model::make_tape_params(tape, state);
  AttendedSubgraph att =
      attend_subgraph_t(tape, tape.leaf(query.values), subgraph, graph, params);
  PatientSubgraph out;
  out.center = subgraph.center;
  out.nodes = subgraph.nodes;
  out.edges = subgraph.edges;
  const ad::Mat& a = att.alpha.value();
  for (std::size_t i = 0; i < subgraph.nodes.size(); ++i) {
    out.attention[subgraph.nodes[i]] = a(static_cast<long>(i), 0);
  }
  return out;
}

std::vector<AttributedTriple> subgraph_triples(const PatientSubgraph& subgraph,
                                               const fusion::UnifiedGraph& graph) {
  std::vector<AttributedTriple> triples;
  for (const auto& e : subgraph.edges) {
    AttributedTriple t;
    t.head = graph.nodes[static_cast<std::size_t>(e.head)].canonical_label;
    t.relation = graph.relations[static_cast<std::size_t>(e.relation)].canonical_label;
    t.tail = graph.nodes[static_cast<std::size_t>(e.tail)].canonical_label;
    t.alpha_head = subgraph.attention.at(e.head);
    t.alpha_tail = subgraph.attention.at(e.tail);
    triples.push_back(std::move(t));
  }
  std::sort(triples.begin(), triples.end(),
            [](const AttributedTriple& a, const AttributedTriple& b) {
              double ma = std::max(a.alpha_head, a.alpha_tail);
              double mb = std::max(b.alpha_head, b.alpha_tail);
              if (ma != mb) return ma > mb;
              return std::tie(a.head, a.relation, a.tail) <
                     std::tie(b.head, b.relation, b.tail);
            });
  return triples;
}

}  // namespace kpi::retrieval
