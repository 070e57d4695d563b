#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kpi/kg_construction.hpp"
#include "kpi/kg_fusion.hpp"
#include "kpi/training.hpp"

namespace kpi::eval {

double hit_at_k(const std::vector<train::Prediction>& predictions,
                const std::vector<std::string>& gold, int k);

// mean of 1 / log2(rank + 1) over cases, rank 1-indexed, no cutoff;
// InvalidRanking if a gold label is missing from its ranking
double ndcg(const std::vector<train::Prediction>& predictions,
            const std::vector<std::string>& gold);

// Mann-Whitney AUC for one label: positives are cases whose gold is the
// label, everyone scored by that label's column; ties count 0.5.
// Degenerate labels (no positive or no negative) -> absent.
std::optional<double> auc_for_label(const Eigen::MatrixXd& scores,
                                    const std::vector<std::string>& gold,
                                    const std::vector<std::string>& labels,
                                    const std::string& label);

// Mean over the category's labels with a defined AUC; absent if none.
std::optional<double> auc_one_vs_rest(const Eigen::MatrixXd& scores,
                                      const std::vector<std::string>& gold,
                                      const std::vector<std::string>& labels,
                                      const std::vector<std::string>& category_labels);

struct CategoryMetrics {
  double hit1 = 0.0;
  double hit3 = 0.0;
  double hit10 = 0.0;
  std::optional<double> auc;
  double ndcg = 0.0;
  long cases = 0;
};

using CategoryMap = std::map<std::string, std::vector<std::string>>;  // category -> labels

struct EvalReport {
  std::map<std::string, CategoryMetrics> per_category;
  CategoryMetrics overall;
  std::uint64_t seed = 0;
  std::string dataset_hash;
  std::string checkpoint_id;

  std::string to_json() const;
  std::string to_table() const;  // flat category x metric rows
};

EvalReport evaluate(const std::vector<patient::PatientRecord>& test_records,
                    const model::ModelState& state, const fusion::UnifiedGraph& graph,
                    const text::Encoder& encoder, const CategoryMap& categories,
                    const std::string& dataset_hash);

struct SyntheticSpec {
  int categories = 6;
  int tags_per_category = 5;
  int train_per_tag = 40;
  int valid_per_tag = 10;
  int test_per_tag = 10;
  double keyword_signal_strength = 0.9;
  double shared_keyword_fraction = 0.0;  // category-shared keyword draws
  std::uint64_t seed = 7;
};

struct SyntheticBundle {
  std::vector<kg::DiseaseDescription> corpus;
  std::vector<kg::KnowledgeTriplet> gold_facts;
  std::vector<patient::PatientRecord> train;
  std::vector<patient::PatientRecord> valid;
  std::vector<patient::PatientRecord> test;
  CategoryMap categories;
  // recorded-mock transcripts: file name -> response body
  std::map<std::string, std::string> transcripts;
};

SyntheticBundle generate_synthetic(const SyntheticSpec& spec);

CategoryMap load_categories(const std::string& path);
void save_categories(const std::string& path, const CategoryMap& categories);

enum class ExperimentKind { data_scaling, single_class_imbalance, lambda_sweep, ablation };
ExperimentKind experiment_kind_from(const std::string& name);

struct ExperimentSetting {
  std::string name;
  EvalReport report;
};

struct ExperimentPlan {
  ExperimentKind kind = ExperimentKind::data_scaling;
  std::string target_category;       // imbalance kind
  std::vector<double> proportions;   // scaling / imbalance
  std::vector<double> lambdas;       // lambda sweep
};

// Trains one model per setting on a modified dataset/hyper and evaluates
// on the untouched test split.
std::vector<ExperimentSetting> run_experiment(
    const ExperimentPlan& plan, const SyntheticBundle& data,
    const fusion::UnifiedGraph& graph, const model::Hyper& base_hyper,
    const text::Encoder& encoder, const std::string& dataset_hash);

// Subsample helpers (deterministic in seed), exposed for tests.
std::vector<patient::PatientRecord> subsample_all_labels(
    const std::vector<patient::PatientRecord>& records, double fraction,
    std::uint64_t seed);
std::vector<patient::PatientRecord> subsample_category(
    const std::vector<patient::PatientRecord>& records,
    const std::vector<std::string>& category_labels, double fraction, std::uint64_t seed);

model::DataSchema schema_from(const std::vector<patient::PatientRecord>& records,
                              const std::vector<std::string>& labels);

std::string dataset_hash_of(const std::vector<patient::PatientRecord>& records);

}  // namespace kpi::eval
