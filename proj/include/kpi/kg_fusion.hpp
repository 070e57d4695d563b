#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "kpi/kg_construction.hpp"
#include "kpi/text_encoding.hpp"

namespace kpi::fusion {

struct FusedNode {
  int id = 0;
  std::string canonical_label;
  std::vector<std::string> members;
  Eigen::VectorXd embedding;
  bool is_disease = false;
};

struct FusedRelation {
  int id = 0;
  std::string canonical_label;
  std::vector<std::string> members;
  std::string definition;
  Eigen::VectorXd embedding;
};

struct Edge {
  int head = 0;
  int relation = 0;
  int tail = 0;
  auto operator<=>(const Edge&) const = default;
};

struct UnifiedGraph {
  int dim = 0;
  double delta = 0.0;
  std::string corpus_hash;
  std::vector<FusedNode> nodes;
  std::vector<FusedRelation> relations;
  std::vector<Edge> edges;

  std::optional<int> node_by_label(const std::string& canonical) const;
  std::optional<int> disease_node(const std::string& label) const;
  std::vector<int> disease_node_ids() const;  // canonical label order
  // undirected neighbor lists, self excluded, sorted, deduplicated
  std::vector<std::vector<int>> adjacency() const;

  void save(const std::string& path) const;
  static UnifiedGraph load(const std::string& path);
  void save_stream(std::ostream& out) const;
  static UnifiedGraph load_stream(std::istream& in);
};

// One frozen embedding per surface text (order preserving).
std::vector<Eigen::VectorXd> embed_items(const text::Encoder& encoder,
                                         const std::vector<std::string>& surface_texts);

// Single-linkage transitive closure over pairwise cosine similarity
// strictly above delta; clusters are sorted index lists, sorted by their
// smallest member. Throws InvalidInput on zero-norm embeddings or delta
// outside (0, 1].
std::vector<std::vector<int>> cluster_by_similarity(
    const std::vector<Eigen::VectorXd>& embeddings, double delta);

// Most frequent surface form, frequency ties broken lexicographically.
std::string elect_canonical(const std::vector<std::string>& members,
                            const std::vector<long>& counts);

UnifiedGraph fuse(const std::vector<kg::KnowledgeTriplet>& corpus,
                  const std::vector<kg::RelationDefinition>& definitions,
                  double delta, const text::Encoder& encoder,
                  const std::vector<std::string>& disease_labels,
                  const std::string& corpus_hash);

}  // namespace kpi::fusion
