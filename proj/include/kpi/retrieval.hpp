#pragma once

#include <map>
#include <string>
#include <vector>

#include "kpi/autodiff.hpp"
#include "kpi/keywords.hpp"
#include "kpi/kg_fusion.hpp"
#include "kpi/tape_params.hpp"
#include "kpi/text_encoding.hpp"

namespace kpi::retrieval {

struct QueryVector {
  Eigen::VectorXd values;
  double beta_effective = 0.0;
};

struct QueryBuild {
  ad::Var query;
  ad::Var beta;  // 1x1, sigmoid of the raw coefficient
};

// q_p = beta * mean(prototypes) + (1 - beta) * gated-aggregated keyword
// embeddings, keyword vectors produced by the trainable encoder f.
QueryBuild build_query_t(ad::Tape& tape, const kw::KeywordSet& keywords,
                         const text::Encoder& base_encoder,
                         const model::TapeParams& params,
                         const std::vector<ad::Var>& prototype_rows);
QueryVector build_query(const kw::KeywordSet& keywords, const text::Encoder& base_encoder,
                        const model::ModelState& state,
                        const std::vector<Eigen::VectorXd>& prototypes);

struct HopSubgraph {
  int center = 0;
  std::vector<int> nodes;           // sorted unified-graph ids, includes center
  std::vector<fusion::Edge> edges;  // induced, sorted
};

// Undirected 2-hop neighborhood of the disease node; UnknownDisease when
// the label does not resolve to an is_disease node.
HopSubgraph two_hop_neighborhood(const fusion::UnifiedGraph& graph,
                                 const std::string& disease_label);

struct PatientSubgraph {
  int center = 0;
  std::vector<int> nodes;
  std::vector<fusion::Edge> edges;
  std::map<int, double> attention;  // node id -> alpha, sums to 1
};

struct AttendedSubgraph {
  HopSubgraph topology;
  ad::Var alpha;  // n x 1 over topology.nodes order
};

// Multi-head cross attention between the query and subgraph node
// embeddings; per-head scores are averaged before one softmax over nodes.
AttendedSubgraph attend_subgraph_t(ad::Tape& tape, ad::Var query,
                                   const HopSubgraph& subgraph,
                                   const fusion::UnifiedGraph& graph,
                                   const model::TapeParams& params);
PatientSubgraph attend_subgraph(const QueryVector& query, const HopSubgraph& subgraph,
                                const fusion::UnifiedGraph& graph,
                                const model::ModelState& state);

struct AttributedTriple {
  std::string head;
  std::string relation;
  std::string tail;
  double alpha_head = 0.0;
  double alpha_tail = 0.0;
};

// Subgraph dump for explanation: triples sorted by max endpoint
// attention, descending (ties by labels for determinism).
std::vector<AttributedTriple> subgraph_triples(const PatientSubgraph& subgraph,
                                               const fusion::UnifiedGraph& graph);

}  // namespace kpi::retrieval
