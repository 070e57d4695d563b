#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kpi/graph_encoder.hpp"
#include "kpi/keywords.hpp"
#include "kpi/patient_encoder.hpp"

namespace kpi::train {

// InfoNCE over cosine similarity to every prototype; the denominator
// includes the positive.
ad::Var contrastive_loss_t(ad::Tape& tape, ad::Var h_p,
                           const std::vector<ad::Var>& prototypes, int positive_index,
                           double tau);
double contrastive_loss(const Eigen::VectorXd& h_p, const gnn::PrototypeSet& prototypes,
                        const std::string& positive_label, double tau);

double semantic_consistency_loss(const Eigen::VectorXd& h_gp, const Eigen::VectorXd& h_p);

struct LossParts {
  double total = 0.0;
  double contrastive = 0.0;
  double consistency = 0.0;
};

struct TotalLossResult {
  LossParts parts;
  std::map<std::string, Eigen::MatrixXd> gradients;  // empty unless requested
};

// Mean over the batch of L_con + lambda * L_sem. Prototypes are
// recomputed on the same tape, so gradients flow through them into the
// graph encoder and through the query prior into retrieval. The teacher
// path (keywords -> query -> subgraph -> h_gp) is skipped when lambda
// is exactly zero.
TotalLossResult total_loss(const std::vector<patient::PatientRecord>& batch,
                           const model::ModelState& state,
                           const fusion::UnifiedGraph& graph,
                           const kw::CorpusStats& stats, const text::Encoder& encoder,
                           bool with_gradients);

struct Prediction {
  std::vector<std::string> ranked_labels;
  std::vector<double> scores;  // non-increasing, aligned with ranked_labels
};

// Cosine ranking of h_p against every prototype. Label-agnostic: the
// record's label field is never read.
Prediction predict(const patient::PatientRecord& record, const model::ModelState& state,
                   const gnn::PrototypeSet& prototypes, const text::Encoder& encoder);

// Per-case cosine similarities, columns aligned with prototype labels.
Eigen::MatrixXd score_matrix(const std::vector<patient::PatientRecord>& records,
                             const model::ModelState& state,
                             const gnn::PrototypeSet& prototypes,
                             const text::Encoder& encoder);
Prediction prediction_from_scores(const Eigen::VectorXd& row,
                                  const std::vector<std::string>& labels);

struct TrainResult {
  model::ModelState best_state;
  std::vector<std::pair<long, double>> trace;  // (step, loss)
  double best_valid_hit1 = 0.0;
  int best_epoch = -1;
};

TrainResult train(const std::vector<patient::PatientRecord>& train_records,
                  const std::vector<patient::PatientRecord>& valid_records,
                  model::ModelState state, const fusion::UnifiedGraph& graph,
                  const text::Encoder& encoder);

void save_trace(const std::string& path, const std::vector<std::pair<long, double>>& trace);

}  // namespace kpi::train
