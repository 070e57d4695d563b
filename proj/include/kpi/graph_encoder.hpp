#pragma once

#include <map>
#include <string>
#include <vector>

#include "kpi/autodiff.hpp"
#include "kpi/kg_fusion.hpp"
#include "kpi/retrieval.hpp"
#include "kpi/tape_params.hpp"

namespace kpi::gnn {

// Neighbor lists with self-loops; index order defines feature order.
using Topology = std::vector<std::vector<int>>;

Topology topology_with_self_loops(const std::vector<std::vector<int>>& adjacency);

// g(.): two graph attention layers (additive scoring, leaky-relu slope
// 0.2, softmax over the in-neighborhood) and a two-matrix projection
// head. The nonlinearity runs after layer 1 and inside the head only.
std::vector<ad::Var> gat_forward_t(ad::Tape& tape, const Topology& topo,
                                   const std::vector<ad::Var>& features,
                                   const model::TapeParams& params);

// value-level contract form: node id -> encoded embedding
std::map<int, Eigen::VectorXd> gat_forward(const std::vector<std::vector<int>>& adjacency,
                                           const std::map<int, Eigen::VectorXd>& features,
                                           const model::ModelState& state);

// First-layer attention rows (one per node over its in-neighborhood),
// exposed for the normalization checks.
std::vector<Eigen::VectorXd> gat_attention_rows(const Topology& topo,
                                                const std::vector<Eigen::VectorXd>& features,
                                                const Eigen::MatrixXd& weight,
                                                const Eigen::VectorXd& attn_src,
                                                const Eigen::VectorXd& attn_dst);

struct PrototypeSet {
  std::vector<std::string> labels;   // canonical label order
  Eigen::MatrixXd embeddings;        // one row per label
};

// Rows of gat_forward(G_u) at disease nodes in canonical label order;
// InvalidGraph when the graph has no disease nodes.
std::vector<ad::Var> compute_prototypes_t(ad::Tape& tape, const fusion::UnifiedGraph& graph,
                                          const model::TapeParams& params);
PrototypeSet compute_prototypes(const fusion::UnifiedGraph& graph,
                                const model::ModelState& state);

// Prototype rows regardless of mode: graph-derived or the free matrix
// (random-prototype ablation).
std::vector<ad::Var> prototype_rows_t(ad::Tape& tape, const fusion::UnifiedGraph& graph,
                                      const model::ModelState& state,
                                      const model::TapeParams& params);
PrototypeSet prototypes_for(const fusion::UnifiedGraph& graph,
                            const model::ModelState& state);

// Subgraph forward with retrieval attention entering as feature scaling
// alpha_v * |nodes| (uniform attention reduces to a plain forward);
// returns the center node's encoding h_gp.
ad::Var graph_patient_embedding_t(ad::Tape& tape, const retrieval::AttendedSubgraph& att,
                                  const fusion::UnifiedGraph& graph,
                                  const model::TapeParams& params);
Eigen::VectorXd graph_patient_embedding(const retrieval::PatientSubgraph& subgraph,
                                        const fusion::UnifiedGraph& graph,
                                        const model::ModelState& state);

}  // namespace kpi::gnn
