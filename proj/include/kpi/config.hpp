#pragma once

#include <string>
#include <vector>

#include "kpi/chat_client.hpp"
#include "kpi/evaluation.hpp"
#include "kpi/text_encoding.hpp"

namespace kpi::cfg {

struct Paths {
  std::string corpus;
  std::string triplets;
  std::string definitions;
  std::string graph;
  std::string dataset_dir;      // holds train.jsonl / valid.jsonl / test.jsonl
  std::string categories;
  std::string checkpoint;
  std::string loss_trace;
  std::string reports_dir;
  std::string stats_cache;
};

struct ExperimentConfig {
  std::string target_category;
  std::vector<double> proportions;
  std::vector<double> lambdas;
};

struct PipelineConfig {
  text::EncoderConfig encoder;
  double delta = 0.85;
  double theta = 0.05;
  double tau = 0.1;
  double lambda = 0.5;
  double beta_init = 0.0;
  double learning_rate = 1e-3;
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 7;
  std::string prototype_mode = "graph";
  int explanation_top_n = 5;
  Paths paths;
  kg::ClientConfig client;
  eval::SyntheticSpec synthetic;
  ExperimentConfig experiment;
};

// Parses and validates the single JSON config file; unknown keys at any
// level are rejected.
PipelineConfig load_config(const std::string& path);
PipelineConfig parse_config(const std::string& json_text);

}  // namespace kpi::cfg
