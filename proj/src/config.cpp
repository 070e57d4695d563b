#include "kpi/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace kpi::cfg {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& scope) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown config key: " + scope + key);
    }
  }
}

template <typename T>
void maybe(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

PipelineConfig parse_config(const std::string& json_text) {
  json j = json::parse(json_text);
  PipelineConfig c;

  reject_unknown(j, {"encoder", "delta", "theta", "tau", "lambda", "beta_init",
                     "learning_rate", "epochs", "batch_size", "seed", "prototype_mode",
                     "explanation", "paths", "client", "synthetic", "experiment"},
                 "");

  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    reject_unknown(e, {"kind", "dim", "endpoint", "credential_env"}, "encoder.");
    maybe(e, "kind", c.encoder.kind);
    maybe(e, "dim", c.encoder.dim);
    maybe(e, "endpoint", c.encoder.endpoint);
    maybe(e, "credential_env", c.encoder.credential_env);
  }
  maybe(j, "delta", c.delta);
  maybe(j, "theta", c.theta);
  maybe(j, "tau", c.tau);
  maybe(j, "lambda", c.lambda);
  maybe(j, "beta_init", c.beta_init);
  maybe(j, "learning_rate", c.learning_rate);
  maybe(j, "epochs", c.epochs);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "seed", c.seed);
  maybe(j, "prototype_mode", c.prototype_mode);

  if (j.contains("explanation")) {
    const json& e = j.at("explanation");
    reject_unknown(e, {"top_n"}, "explanation.");
    maybe(e, "top_n", c.explanation_top_n);
  }
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    reject_unknown(p,
                   {"corpus", "triplets", "definitions", "graph", "dataset_dir",
                    "categories", "checkpoint", "loss_trace", "reports_dir",
                    "stats_cache"},
                   "paths.");
    maybe(p, "corpus", c.paths.corpus);
    maybe(p, "triplets", c.paths.triplets);
    maybe(p, "definitions", c.paths.definitions);
    maybe(p, "graph", c.paths.graph);
    maybe(p, "dataset_dir", c.paths.dataset_dir);
    maybe(p, "categories", c.paths.categories);
    maybe(p, "checkpoint", c.paths.checkpoint);
    maybe(p, "loss_trace", c.paths.loss_trace);
    maybe(p, "reports_dir", c.paths.reports_dir);
    maybe(p, "stats_cache", c.paths.stats_cache);
  }
  if (j.contains("client")) {
    const json& cl = j.at("client");
    reject_unknown(cl,
                   {"mode", "transcript_dir", "endpoint", "credential_env",
                    "max_retries", "rate_limit_per_minute"},
                   "client.");
    maybe(cl, "mode", c.client.mode);
    maybe(cl, "transcript_dir", c.client.transcript_dir);
    maybe(cl, "endpoint", c.client.endpoint);
    maybe(cl, "credential_env", c.client.credential_env);
    maybe(cl, "max_retries", c.client.max_retries);
    maybe(cl, "rate_limit_per_minute", c.client.rate_limit_per_minute);
  }
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    reject_unknown(s,
                   {"categories", "tags_per_category", "train_per_tag", "valid_per_tag",
                    "test_per_tag", "keyword_signal_strength", "shared_keyword_fraction"},
                   "synthetic.");
    maybe(s, "categories", c.synthetic.categories);
    maybe(s, "tags_per_category", c.synthetic.tags_per_category);
    maybe(s, "train_per_tag", c.synthetic.train_per_tag);
    maybe(s, "valid_per_tag", c.synthetic.valid_per_tag);
    maybe(s, "test_per_tag", c.synthetic.test_per_tag);
    maybe(s, "keyword_signal_strength", c.synthetic.keyword_signal_strength);
    maybe(s, "shared_keyword_fraction", c.synthetic.shared_keyword_fraction);
  }
  if (j.contains("experiment")) {
    const json& e = j.at("experiment");
    reject_unknown(e, {"target_category", "proportions", "lambdas"}, "experiment.");
    maybe(e, "target_category", c.experiment.target_category);
    maybe(e, "proportions", c.experiment.proportions);
    maybe(e, "lambdas", c.experiment.lambdas);
  }

  if (c.delta <= 0.0 || c.delta > 1.0) throw ConfigError("delta must be in (0, 1]");
  if (c.tau <= 0.0) throw ConfigError("tau must be positive");
  if (c.lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (c.encoder.dim <= 0) throw ConfigError("encoder.dim must be positive");
  if (c.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (c.explanation_top_n < 0) throw ConfigError("explanation.top_n must be >= 0");
  if (c.synthetic.keyword_signal_strength < 0.0 ||
      c.synthetic.keyword_signal_strength > 1.0) {
    throw ConfigError("synthetic.keyword_signal_strength must be in [0, 1]");
  }
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace kpi::cfg
