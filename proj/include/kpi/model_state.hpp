#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kpi/errors.hpp"

namespace kpi::model {

inline constexpr int kRetrievalHeads = 4;
inline constexpr int kSegmentHeads = 2;
inline constexpr int kAgeBuckets = 13;  // decades, 0-120 clamped

struct Hyper {
  int dim = 64;
  double tau = 0.1;
  double lambda = 0.5;
  double learning_rate = 1e-3;
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 7;
  double theta = 0.05;
  double delta = 0.85;
  double beta_init = 0.0;
  std::string prototype_mode = "graph";  // graph | random (ablation)
};

// Dataset-derived vocabularies fixed at init and persisted with the
// checkpoint so inference sees the same layout.
struct DataSchema {
  std::vector<std::string> gender_categories;  // sorted
  std::vector<std::string> clinical_fields;    // sorted, order defines h_c
  std::vector<std::string> labels;             // canonical disease label order
};

// Exhaustive registry of trainable tensors; every gradient check and the
// checkpoint format iterate this registry by name.
class ModelState {
 public:
  Hyper hyper;
  DataSchema schema;
  std::string corpus_hash;

  static ModelState init(const Hyper& hyper, const DataSchema& schema,
                         const std::string& corpus_hash);

  Eigen::MatrixXd& param(const std::string& name);
  const Eigen::MatrixXd& param(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }
  const std::map<std::string, Eigen::MatrixXd>& params() const { return params_; }
  std::map<std::string, Eigen::MatrixXd>& params() { return params_; }

  int gender_index(const std::string& gender) const;  // UnknownCategory
  int label_index(const std::string& label) const;    // UnknownDisease

  std::string serialize() const;
  void save(const std::string& path) const;
  static ModelState load(const std::string& path);
  static ModelState deserialize(const std::string& bytes);

  std::string checkpoint_id() const;  // hash of the serialized form

 private:
  std::map<std::string, Eigen::MatrixXd> params_;
};

}  // namespace kpi::model
