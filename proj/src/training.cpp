#include "kpi/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "kpi/retrieval.hpp"
#include "kpi/rng.hpp"

namespace kpi::train {

ad::Var contrastive_loss_t(ad::Tape& tape, ad::Var h_p,
                           const std::vector<ad::Var>& prototypes, int positive_index,
                           double tau) {
  if (tau <= 0.0) throw InvalidInput("contrastive_loss: tau must be positive");
  if (positive_index < 0 || positive_index >= static_cast<int>(prototypes.size())) {
    throw InvalidInput("contrastive_loss: positive label not among prototypes");
  }
  std::vector<ad::Var> scores;
  scores.reserve(prototypes.size());
  for (const ad::Var& p : prototypes) {
    scores.push_back(tape.scale(tape.cosine(h_p, p), 1.0 / tau));
  }
  ad::Var stacked = tape.concat_rows(scores);
  return tape.sub(tape.logsumexp(stacked), tape.slice_rows(stacked, positive_index, 1));
}

double contrastive_loss(const Eigen::VectorXd& h_p, const gnn::PrototypeSet& prototypes,
                        const std::string& positive_label, double tau) {
  auto it = std::find(prototypes.labels.begin(), prototypes.labels.end(), positive_label);
  if (it == prototypes.labels.end()) {
    throw InvalidInput("contrastive_loss: positive label not among prototypes");
  }
  ad::Tape tape;
  ad::Var h = tape.leaf(h_p);
  std::vector<ad::Var> rows;
  for (long r = 0; r < prototypes.embeddings.rows(); ++r) {
    rows.push_back(tape.leaf(prototypes.embeddings.row(r).transpose()));
  }
  int pos = static_cast<int>(it - prototypes.labels.begin());
  return contrastive_loss_t(tape, h, rows, pos, tau).value()(0, 0);
}

double semantic_consistency_loss(const Eigen::VectorXd& h_gp, const Eigen::VectorXd& h_p) {
  if (h_gp.size() != h_p.size()) {
    throw InvalidInput("semantic_consistency_loss: dimension mismatch");
  }
  return (h_gp - h_p).squaredNorm();
}

TotalLossResult total_loss(const std::vector<patient::PatientRecord>& batch,
                           const model::ModelState& state,
                           const fusion::UnifiedGraph& graph,
                           const kw::CorpusStats& stats, const text::Encoder& encoder,
                           bool with_gradients) {
  if (batch.empty()) throw InvalidInput("total_loss: empty batch");
  const double lambda = state.hyper.lambda;

  ad::Tape tape;
  model::TapeParams params = model::make_tape_params(tape, state);
  std::vector<ad::Var> protos = gnn::prototype_rows_t(tape, graph, state, params);

  std::vector<ad::Var> con_terms;
  std::vector<ad::Var> sem_terms;
  for (const auto& record : batch) {
    if (!record.label) {
      throw InvalidInput("total_loss: training record without gold label: " + record.id);
    }
    ad::Var h_p = patient::patient_embedding_t(tape, record, encoder, params, state);
    int pos = state.label_index(*record.label);
    con_terms.push_back(contrastive_loss_t(tape, h_p, protos, pos, state.hyper.tau));

    if (lambda != 0.0) {
      kw::KeywordSet keywords =
          kw::extract_keywords(record.narrative, stats, state.hyper.theta);
      retrieval::QueryBuild qb =
          retrieval::build_query_t(tape, keywords, encoder, params, protos);
      retrieval::HopSubgraph sub = retrieval::two_hop_neighborhood(graph, *record.label);
      retrieval::AttendedSubgraph att =
          retrieval::attend_subgraph_t(tape, qb.query, sub, graph, params);
      ad::Var h_gp = gnn::graph_patient_embedding_t(tape, att, graph, params);
      sem_terms.push_back(tape.squared_norm(tape.sub(h_gp, h_p)));
    }
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  ad::Var con_mean = tape.scale(tape.sum(con_terms), inv_n);
  ad::Var objective = con_mean;
  double sem_mean_value = 0.0;
  if (!sem_terms.empty()) {
    ad::Var sem_mean = tape.scale(tape.sum(sem_terms), inv_n);
    sem_mean_value = sem_mean.value()(0, 0);
    objective = tape.add(con_mean, tape.scale(sem_mean, lambda));
  }

  TotalLossResult result;
  result.parts.contrastive = con_mean.value()(0, 0);
  result.parts.consistency = sem_mean_value;
  result.parts.total = objective.value()(0, 0);
  if (with_gradients) {
    tape.backward(objective);
    result.gradients = model::collect_gradients(params);
  }
  return result;
}

Prediction prediction_from_scores(const Eigen::VectorXd& row,
                                  const std::vector<std::string>& labels) {
  std::vector<int> order(static_cast<std::size_t>(row.size()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&row](int a, int b) {
    if (row[a] != row[b]) return row[a] > row[b];
    return a < b;  // ties broken by canonical label order
  });
  Prediction p;
  for (int idx : order) {
    p.ranked_labels.push_back(labels[static_cast<std::size_t>(idx)]);
    p.scores.push_back(row[idx]);
  }
  return p;
}

Prediction predict(const patient::PatientRecord& record, const model::ModelState& state,
                   const gnn::PrototypeSet& prototypes, const text::Encoder& encoder) {
  Eigen::VectorXd h_p = patient::patient_embedding(record, encoder, state);
  double hn = h_p.norm();
  if (hn < 1e-12) throw DegenerateEmbedding("predict: zero-norm patient embedding");
  Eigen::VectorXd scores(prototypes.embeddings.rows());
  for (long r = 0; r < prototypes.embeddings.rows(); ++r) {
    Eigen::VectorXd proto = prototypes.embeddings.row(r).transpose();
    double pn = proto.norm();
    if (pn < 1e-12) throw DegenerateEmbedding("predict: zero-norm prototype");
    scores[r] = h_p.dot(proto) / (hn * pn);
  }
  return prediction_from_scores(scores, prototypes.labels);
}

Eigen::MatrixXd score_matrix(const std::vector<patient::PatientRecord>& records,
                             const model::ModelState& state,
                             const gnn::PrototypeSet& prototypes,
                             const text::Encoder& encoder) {
  Eigen::MatrixXd scores(static_cast<long>(records.size()), prototypes.embeddings.rows());
  for (std::size_t i = 0; i < records.size(); ++i) {
    Eigen::VectorXd h_p = patient::patient_embedding(records[i], encoder, state);
    double hn = h_p.norm();
    if (hn < 1e-12) throw DegenerateEmbedding("score_matrix: zero-norm patient embedding");
    for (long r = 0; r < prototypes.embeddings.rows(); ++r) {
      Eigen::VectorXd proto = prototypes.embeddings.row(r).transpose();
      double pn = proto.norm();
      if (pn < 1e-12) throw DegenerateEmbedding("score_matrix: zero-norm prototype");
      scores(static_cast<long>(i), r) = h_p.dot(proto) / (hn * pn);
    }
  }
  return scores;
}

namespace {

// first-order adaptive-moment optimizer
struct Adam {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::map<std::string, Eigen::MatrixXd> m, v;

  explicit Adam(double learning_rate) : lr(learning_rate) {}

  void step(model::ModelState& state, const std::map<std::string, Eigen::MatrixXd>& grads) {
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto& [name, g] : grads) {
      Eigen::MatrixXd& p = state.param(name);
      auto mit = m.find(name);
      if (mit == m.end()) {
        m[name] = Eigen::MatrixXd::Zero(g.rows(), g.cols());
        v[name] = Eigen::MatrixXd::Zero(g.rows(), g.cols());
      }
      Eigen::MatrixXd& mm = m[name];
      Eigen::MatrixXd& vv = v[name];
      mm = beta1 * mm + (1.0 - beta1) * g;
      vv = beta2 * vv + (1.0 - beta2) * g.cwiseProduct(g);
      Eigen::MatrixXd mhat = mm / bc1;
      Eigen::MatrixXd vhat = vv / bc2;
      p.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
    }
  }
};

double validation_hit1(const std::vector<patient::PatientRecord>& valid,
                       const model::ModelState& state, const fusion::UnifiedGraph& graph,
                       const text::Encoder& encoder) {
  if (valid.empty()) return 0.0;
  gnn::PrototypeSet protos = gnn::prototypes_for(graph, state);
  long hits = 0;
  for (const auto& r : valid) {
    if (!r.label) continue;
    Prediction p = predict(r, state, protos, encoder);
    if (!p.ranked_labels.empty() && p.ranked_labels.front() == *r.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(valid.size());
}

}  // namespace

TrainResult train(const std::vector<patient::PatientRecord>& train_records,
                  const std::vector<patient::PatientRecord>& valid_records,
                  model::ModelState state, const fusion::UnifiedGraph& graph,
                  const text::Encoder& encoder) {
  if (train_records.empty()) throw InvalidInput("train: empty training split");

  // prototype rows must line up with the schema label order
  {
    gnn::PrototypeSet protos = gnn::prototypes_for(graph, state);
    if (protos.labels != state.schema.labels) {
      throw InvalidGraph("train: prototype labels do not match the model schema");
    }
  }

  std::vector<std::string> narratives;
  narratives.reserve(train_records.size());
  for (const auto& r : train_records) narratives.push_back(r.narrative);
  kw::CorpusStats stats = kw::build_stats(narratives);

  rng::Stream shuffle_rng(state.hyper.seed, "training");
  Adam opt(state.hyper.learning_rate);

  TrainResult result;
  result.best_state = state;
  result.best_valid_hit1 = -1.0;

  std::vector<std::size_t> order(train_records.size());
  std::iota(order.begin(), order.end(), 0);
  const int batch_size = std::max(1, state.hyper.batch_size);

  long step = 0;
  for (int epoch = 0; epoch < state.hyper.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      std::vector<patient::PatientRecord> batch;
      for (std::size_t i = start; i < order.size() && i < start + batch_size; ++i) {
        batch.push_back(train_records[order[i]]);
      }
      TotalLossResult res = total_loss(batch, state, graph, stats, encoder, true);
      if (!std::isfinite(res.parts.total)) {
        throw DivergenceAbort("train: non-finite loss at step " + std::to_string(step),
                              step);
      }
      opt.step(state, res.gradients);
      result.trace.emplace_back(step, res.parts.total);
      ++step;
    }
    double hit1 = validation_hit1(valid_records, state, graph, encoder);
    if (hit1 > result.best_valid_hit1) {
      result.best_valid_hit1 = hit1;
      result.best_state = state;
      result.best_epoch = epoch;
    }
  }
  if (state.hyper.epochs == 0) {
    result.best_state = state;
    result.best_valid_hit1 = validation_hit1(valid_records, state, graph, encoder);
    result.best_epoch = -1;
  }
  return result;
}

void save_trace(const std::string& path, const std::vector<std::pair<long, double>>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write loss trace: " + path);
  out.precision(17);
  for (const auto& [step, loss] : trace) {
    out << step << " " << loss << "\n";
  }
}

}  // namespace kpi::train
