#pragma once

// Shared hand-built fixtures for the unit tests.

#include <string>
#include <vector>

#include "kpi/kg_fusion.hpp"
#include "kpi/model_state.hpp"
#include "kpi/patient_encoder.hpp"
#include "kpi/rng.hpp"
#include "kpi/text_encoding.hpp"

namespace kpi::testing {

inline Eigen::VectorXd random_vec(rng::Stream& rng, int dim) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  return v;
}

struct GraphBuilder {
  fusion::UnifiedGraph graph;

  explicit GraphBuilder(int dim) {
    graph.dim = dim;
    graph.delta = 0.85;
    graph.corpus_hash = "fixture";
  }

  // nodes must be added in canonical label order
  int node(const std::string& label, const Eigen::VectorXd& emb, bool is_disease = false) {
    fusion::FusedNode n;
    n.id = static_cast<int>(graph.nodes.size());
    n.canonical_label = label;
    n.members = {label};
    n.embedding = emb;
    n.is_disease = is_disease;
    graph.nodes.push_back(n);
    return n.id;
  }

  int relation(const std::string& label) {
    fusion::FusedRelation r;
    r.id = static_cast<int>(graph.relations.size());
    r.canonical_label = label;
    r.members = {label};
    r.definition = "fixture relation";
    r.embedding = Eigen::VectorXd::Ones(graph.dim);
    graph.relations.push_back(r);
    return r.id;
  }

  void edge(int head, int rel, int tail) { graph.edges.push_back({head, rel, tail}); }
};

inline model::ModelState tiny_state(int dim, const std::vector<std::string>& labels,
                                    std::uint64_t seed = 7,
                                    const std::string& prototype_mode = "graph") {
  model::Hyper hyper;
  hyper.dim = dim;
  hyper.seed = seed;
  hyper.prototype_mode = prototype_mode;
  model::DataSchema schema;
  schema.gender_categories = {"F", "M"};
  schema.clinical_fields = {"p0", "p1"};
  schema.labels = labels;
  return model::ModelState::init(hyper, schema, "fixture");
}

inline patient::PatientRecord tiny_record(const std::string& id,
                                          const std::string& narrative,
                                          const std::string& gender, int age,
                                          const std::string& label = "") {
  patient::PatientRecord r;
  r.id = id;
  r.narrative = narrative;
  r.gender = gender;
  r.age = age;
  r.clinical_profile = {{"p0", 0.4}, {"p1", 0.9}};
  if (!label.empty()) r.label = label;
  return r;
}

}  // namespace kpi::testing
