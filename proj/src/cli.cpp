#include "kpi/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kpi/explanation.hpp"
#include "kpi/rng.hpp"

namespace kpi::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string hex_hash(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(rng::fnv1a64(bytes)));
  return std::string(buf);
}

void require_input(const std::string& path, const std::string& producer) {
  if (path.empty()) {
    throw ConfigError("config path missing for an artifact produced by `" + producer + "`");
  }
  if (!fs::exists(path)) {
    throw ConfigError("missing prerequisite artifact: " + path + " (run `kpi " +
                      producer + "` first)");
  }
}

cfg::PipelineConfig with_overrides(cfg::PipelineConfig config, const Options& opt) {
  if (opt.seed) config.seed = *opt.seed;
  return config;
}

model::Hyper hyper_from(const cfg::PipelineConfig& c) {
  model::Hyper h;
  h.dim = c.encoder.dim;
  h.tau = c.tau;
  h.lambda = c.lambda;
  h.learning_rate = c.learning_rate;
  h.epochs = c.epochs;
  h.batch_size = c.batch_size;
  h.seed = c.seed;
  h.theta = c.theta;
  h.delta = c.delta;
  h.beta_init = c.beta_init;
  h.prototype_mode = c.prototype_mode;
  return h;
}

std::vector<std::string> graph_labels(const fusion::UnifiedGraph& graph) {
  std::vector<std::string> labels;
  for (int id : graph.disease_node_ids()) {
    labels.push_back(graph.nodes[static_cast<std::size_t>(id)].canonical_label);
  }
  return labels;
}

std::string records_to_bytes(const std::vector<patient::PatientRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) {
    json j{{"id", r.id},
           {"narrative", r.narrative},
           {"gender", r.gender},
           {"age", r.age},
           {"clinical_profile", r.clinical_profile}};
    if (r.label) j["label"] = *r.label;
    out << j.dump() << "\n";
  }
  return out.str();
}

eval::CategoryMap categories_or_default(const cfg::PipelineConfig& config) {
  if (!config.paths.categories.empty() && fs::exists(config.paths.categories)) {
    return eval::load_categories(config.paths.categories);
  }
  return {};
}

void check_corpus_hash(const fusion::UnifiedGraph& graph, const model::ModelState& state) {
  if (graph.corpus_hash != state.corpus_hash) {
    throw ConfigError("checkpoint was trained against a different graph (corpus hash " +
                      state.corpus_hash + " vs " + graph.corpus_hash + ")");
  }
}

}  // namespace

void write_artifact(const std::string& path, const std::string& bytes, bool force) {
  if (path.empty()) throw ConfigError("artifact path not configured");
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  if (fs::exists(p)) {
    std::string existing = read_file(path);
    if (existing == bytes) return;  // idempotent rewrite
    if (!force) {
      throw IoError("refusing to overwrite differing artifact without --force: " + path);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write artifact: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing artifact: " + path);
}

int cmd_synth(const cfg::PipelineConfig& config_in, const Options& opt) {
  cfg::PipelineConfig config = with_overrides(config_in, opt);
  eval::SyntheticSpec spec = config.synthetic;
  spec.seed = config.seed;
  eval::SyntheticBundle bundle = eval::generate_synthetic(spec);

  std::ostringstream corpus;
  for (const auto& d : bundle.corpus) {
    corpus << json{{"label", d.label}, {"description", d.description}}.dump() << "\n";
  }
  write_artifact(config.paths.corpus, corpus.str(), opt.force);

  if (config.paths.dataset_dir.empty()) throw ConfigError("paths.dataset_dir not set");
  fs::create_directories(config.paths.dataset_dir);
  fs::path dir(config.paths.dataset_dir);
  write_artifact((dir / "train.jsonl").string(), records_to_bytes(bundle.train), opt.force);
  write_artifact((dir / "valid.jsonl").string(), records_to_bytes(bundle.valid), opt.force);
  write_artifact((dir / "test.jsonl").string(), records_to_bytes(bundle.test), opt.force);

  std::ostringstream facts;
  for (const auto& t : bundle.gold_facts) {
    facts << json{{"head", t.head},
                  {"relation", t.relation},
                  {"tail", t.tail},
                  {"source_disease", t.source_disease}}
                 .dump()
          << "\n";
  }
  write_artifact((dir / "facts.jsonl").string(), facts.str(), opt.force);

  if (!config.paths.categories.empty()) {
    write_artifact(config.paths.categories, json(bundle.categories).dump(2), opt.force);
  }
  if (!config.client.transcript_dir.empty()) {
    fs::create_directories(config.client.transcript_dir);
    for (const auto& [name, body] : bundle.transcripts) {
      write_artifact((fs::path(config.client.transcript_dir) / name).string(), body,
                     opt.force);
    }
  }
  std::cout << "synth: " << bundle.corpus.size() << " diseases, " << bundle.train.size()
            << " train / " << bundle.valid.size() << " valid / " << bundle.test.size()
            << " test records\n";
  return 0;
}

int cmd_build_kg(const cfg::PipelineConfig& config_in, const Options& opt) {
  cfg::PipelineConfig config = with_overrides(config_in, opt);
  require_input(config.paths.corpus, "synth");
  auto corpus = kg::load_corpus(config.paths.corpus);
  auto client = kg::make_client(config.client);
  kg::KgBuildResult result = kg::build_knowledge(client.get(), corpus);

  std::ostringstream triplets;
  for (const auto& t : result.triplets) {
    triplets << json{{"head", t.head},
                     {"relation", t.relation},
                     {"tail", t.tail},
                     {"source_disease", t.source_disease}}
                    .dump()
             << "\n";
  }
  write_artifact(config.paths.triplets, triplets.str(), opt.force);

  std::ostringstream defs;
  for (const auto& d : result.definitions) {
    defs << json{{"relation", d.relation}, {"definition", d.definition}}.dump() << "\n";
  }
  write_artifact(config.paths.definitions, defs.str(), opt.force);

  std::cout << "build-kg: " << result.triplets.size() << " triplets, "
            << result.definitions.size() << " relation definitions, "
            << result.malformed_total << " malformed lines dropped\n";
  for (const auto& label : result.knowledge_poor) {
    std::cerr << "warning: no triplets extracted for " << label << " (knowledge-poor)\n";
  }
  return 0;
}

int cmd_fuse(const cfg::PipelineConfig& config_in, const Options& opt) {
  cfg::PipelineConfig config = with_overrides(config_in, opt);
  require_input(config.paths.corpus, "synth");
  require_input(config.paths.triplets, "build-kg");
  require_input(config.paths.definitions, "build-kg");

  auto corpus = kg::load_corpus(config.paths.corpus);
  auto triplets = kg::load_triplets(config.paths.triplets);
  auto definitions = kg::load_definitions(config.paths.definitions);
  std::vector<std::string> labels;
  labels.reserve(corpus.size());
  for (const auto& d : corpus) labels.push_back(d.label);

  auto encoder = text::make_encoder(config.encoder);
  std::string corpus_hash = hex_hash(read_file(config.paths.corpus));
  fusion::UnifiedGraph graph =
      fusion::fuse(triplets, definitions, config.delta, *encoder, labels, corpus_hash);

  std::ostringstream bytes(std::ios::binary);
  graph.save_stream(bytes);
  write_artifact(config.paths.graph, bytes.str(), opt.force);
  std::cout << "fuse: " << graph.nodes.size() << " nodes, " << graph.relations.size()
            << " relations, " << graph.edges.size() << " edges (delta=" << config.delta
            << ", corpus " << corpus_hash << ")\n";
  return 0;
}

int cmd_train(const cfg::PipelineConfig& config_in, const Options& opt) {
  cfg::PipelineConfig config = with_overrides(config_in, opt);
  require_input(config.paths.graph, "fuse");
  require_input(config.paths.dataset_dir, "synth");
  fs::path dir(config.paths.dataset_dir);
  require_input((dir / "train.jsonl").string(), "synth");
  require_input((dir / "valid.jsonl").string(), "synth");

  fusion::UnifiedGraph graph = fusion::UnifiedGraph::load(config.paths.graph);
  auto train_records = patient::load_records((dir / "train.jsonl").string());
  auto valid_records = patient::load_records((dir / "valid.jsonl").string());
  auto encoder = text::make_encoder(config.encoder);

  model::DataSchema schema = eval::schema_from(train_records, graph_labels(graph));
  model::ModelState state =
      model::ModelState::init(hyper_from(config), schema, graph.corpus_hash);
  train::TrainResult result =
      train::train(train_records, valid_records, state, graph, *encoder);

  write_artifact(config.paths.checkpoint, result.best_state.serialize(), opt.force);
  if (!config.paths.loss_trace.empty()) {
    std::ostringstream trace;
    trace.precision(17);
    for (const auto& [step, loss] : result.trace) trace << step << " " << loss << "\n";
    write_artifact(config.paths.loss_trace, trace.str(), opt.force);
  }
  if (!config.paths.stats_cache.empty()) {
    std::vector<std::string> narratives;
    for (const auto& r : train_records) narratives.push_back(r.narrative);
    kw::build_stats(narratives).save(config.paths.stats_cache, graph.corpus_hash);
  }
  std::cout << "train: best valid hit@1 " << result.best_valid_hit1 << " at epoch "
            << result.best_epoch << ", checkpoint "
            << result.best_state.checkpoint_id() << "\n";
  return 0;
}

int cmd_eval(const cfg::PipelineConfig& config_in, const Options& opt) {
  cfg::PipelineConfig config = with_overrides(config_in, opt);
  require_input(config.paths.graph, "fuse");
  require_input(config.paths.checkpoint, "train");
  fs::path dir(config.paths.dataset_dir);
  require_input((dir / "test.jsonl").string(), "synth");

  fusion::UnifiedGraph graph = fusion::UnifiedGraph::load(config.paths.graph);
  model::ModelState state = model::ModelState::load(config.paths.checkpoint);
  check_corpus_hash(graph, state);
  auto test_records = patient::load_records((dir / "test.jsonl").string());
  auto encoder = text::make_encoder(config.encoder);

  eval::EvalReport report =
      eval::evaluate(test_records, state, graph, *encoder, categories_or_default(config),
                     eval::dataset_hash_of(test_records));

  if (config.paths.reports_dir.empty()) throw ConfigError("paths.reports_dir not set");
  fs::create_directories(config.paths.reports_dir);
  fs::path rdir(config.paths.reports_dir);
  write_artifact((rdir / "eval_report.json").string(), report.to_json(), opt.force);
  write_artifact((rdir / "eval_report.tsv").string(), report.to_table(), opt.force);
  std::cout << "eval: overall hit@1 " << report.overall.hit1 << ", ndcg "
            << report.overall.ndcg << " over " << report.overall.cases << " cases\n";
  return 0;
}

int cmd_predict(const cfg::PipelineConfig& config_in, const Options& opt,
                const std::string& records_file, const std::string& out_file) {
  cfg::PipelineConfig config = with_overrides(config_in, opt);
  require_input(config.paths.graph, "fuse");
  require_input(config.paths.checkpoint, "train");
  require_input(records_file, "synth");

  fusion::UnifiedGraph graph = fusion::UnifiedGraph::load(config.paths.graph);
  model::ModelState state = model::ModelState::load(config.paths.checkpoint);
  check_corpus_hash(graph, state);
  auto records = patient::load_records(records_file);
  auto encoder = text::make_encoder(config.encoder);
  gnn::PrototypeSet protos = gnn::prototypes_for(graph, state);

  std::ostringstream out;
  for (const auto& r : records) {
    train::Prediction p = train::predict(r, state, protos, *encoder);
    out << json{{"id", r.id}, {"ranked_labels", p.ranked_labels}, {"scores", p.scores}}
               .dump()
        << "\n";
  }
  write_artifact(out_file, out.str(), opt.force);
  std::cout << "predict: " << records.size() << " records -> " << out_file << "\n";
  return 0;
}

int cmd_explain(const cfg::PipelineConfig& config_in, const Options& opt,
                const std::string& records_file, const std::string& out_file) {
  cfg::PipelineConfig config = with_overrides(config_in, opt);
  require_input(config.paths.graph, "fuse");
  require_input(config.paths.checkpoint, "train");
  require_input(records_file, "synth");

  fusion::UnifiedGraph graph = fusion::UnifiedGraph::load(config.paths.graph);
  model::ModelState state = model::ModelState::load(config.paths.checkpoint);
  check_corpus_hash(graph, state);
  auto records = patient::load_records(records_file);
  auto encoder = text::make_encoder(config.encoder);
  gnn::PrototypeSet protos = gnn::prototypes_for(graph, state);

  // keyword statistics for the retrieval query: cache or training split
  kw::CorpusStats stats;
  bool have_stats = !config.paths.stats_cache.empty() &&
                    kw::CorpusStats::load(config.paths.stats_cache, graph.corpus_hash,
                                          stats);
  if (!have_stats) {
    fs::path dir(config.paths.dataset_dir);
    require_input((dir / "train.jsonl").string(), "synth");
    auto train_records = patient::load_records((dir / "train.jsonl").string());
    std::vector<std::string> narratives;
    for (const auto& r : train_records) narratives.push_back(r.narrative);
    stats = kw::build_stats(narratives);
  }

  auto client = kg::make_client(config.client);
  std::vector<Eigen::VectorXd> proto_rows;
  for (long r = 0; r < protos.embeddings.rows(); ++r) {
    proto_rows.push_back(protos.embeddings.row(r).transpose());
  }

  std::ostringstream out;
  for (const auto& r : records) {
    patient::PatientRecord unlabeled = r;
    unlabeled.label.reset();  // explanation is label-free
    train::Prediction pred = train::predict(unlabeled, state, protos, *encoder);

    kw::KeywordSet keywords = kw::extract_keywords(r.narrative, stats, config.theta);
    retrieval::QueryVector query =
        retrieval::build_query(keywords, *encoder, state, proto_rows);
    retrieval::HopSubgraph hop =
        retrieval::two_hop_neighborhood(graph, pred.ranked_labels.front());
    retrieval::PatientSubgraph subgraph =
        retrieval::attend_subgraph(query, hop, graph, state);

    expl::ExplanationRequest request{unlabeled, pred, subgraph};
    expl::Explanation e =
        expl::explain(request, graph, client.get(), config.explanation_top_n);

    json triples = json::array();
    for (const auto& t : e.supporting_triples) {
      triples.push_back({{"head", t.head},
                         {"relation", t.relation},
                         {"tail", t.tail},
                         {"alpha_head", t.alpha_head},
                         {"alpha_tail", t.alpha_tail}});
    }
    out << json{{"record_id", r.id},
                {"predicted_label", pred.ranked_labels.front()},
                {"text", e.text},
                {"triples", triples},
                {"generator", e.generator}}
               .dump()
        << "\n";
  }
  write_artifact(out_file, out.str(), opt.force);
  std::cout << "explain: " << records.size() << " records -> " << out_file << "\n";
  return 0;
}

int cmd_experiment(const cfg::PipelineConfig& config_in, const Options& opt,
                   const std::string& kind) {
  cfg::PipelineConfig config = with_overrides(config_in, opt);
  require_input(config.paths.graph, "fuse");
  fs::path dir(config.paths.dataset_dir);
  require_input((dir / "train.jsonl").string(), "synth");
  require_input((dir / "valid.jsonl").string(), "synth");
  require_input((dir / "test.jsonl").string(), "synth");

  fusion::UnifiedGraph graph = fusion::UnifiedGraph::load(config.paths.graph);
  auto encoder = text::make_encoder(config.encoder);

  eval::SyntheticBundle data;
  data.train = patient::load_records((dir / "train.jsonl").string());
  data.valid = patient::load_records((dir / "valid.jsonl").string());
  data.test = patient::load_records((dir / "test.jsonl").string());
  data.categories = categories_or_default(config);

  eval::ExperimentPlan plan;
  plan.kind = eval::experiment_kind_from(kind);
  plan.target_category = config.experiment.target_category;
  plan.proportions = config.experiment.proportions;
  plan.lambdas = config.experiment.lambdas;

  auto settings = eval::run_experiment(plan, data, graph, hyper_from(config), *encoder,
                                       eval::dataset_hash_of(data.test));

  if (config.paths.reports_dir.empty()) throw ConfigError("paths.reports_dir not set");
  fs::create_directories(config.paths.reports_dir);
  fs::path rdir(config.paths.reports_dir);
  std::ostringstream table;
  for (const auto& s : settings) {
    write_artifact((rdir / ("experiment_" + kind + "_" + s.name + ".json")).string(),
                   s.report.to_json(), opt.force);
    std::istringstream rows(s.report.to_table());
    std::string row;
    while (std::getline(rows, row)) table << s.name << "\t" << row << "\n";
  }
  write_artifact((rdir / ("experiment_" + kind + ".tsv")).string(), table.str(),
                 opt.force);
  std::cout << "experiment " << kind << ": " << settings.size() << " settings -> "
            << config.paths.reports_dir << "\n";
  return 0;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"knowledge-graph prototype disease prediction pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  Options opt;
  std::uint64_t seed_value = 0;
  bool seed_set = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "pipeline config file")->required();
    cmd->add_flag("--force", opt.force, "overwrite differing artifacts");
    cmd->add_option("--seed", seed_value, "override the config seed")
        ->each([&seed_set](const std::string&) { seed_set = true; });
  };

  auto* synth = app.add_subcommand("synth", "generate the synthetic fixture");
  auto* build_kg = app.add_subcommand("build-kg", "extract triplets and definitions");
  auto* fuse = app.add_subcommand("fuse", "fuse triplets into the unified graph");
  auto* train_cmd = app.add_subcommand("train", "train and checkpoint the model");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate the checkpoint on the test split");
  auto* predict = app.add_subcommand("predict", "rank diseases for a records file");
  auto* explain = app.add_subcommand("explain", "generate explanations for a records file");
  auto* experiment = app.add_subcommand("experiment", "run an experiment series");

  std::string records_file, out_file, kind;
  for (CLI::App* cmd : {synth, build_kg, fuse, train_cmd, eval_cmd}) add_common(cmd);
  add_common(predict);
  predict->add_option("--records", records_file, "input records file (label optional)")
      ->required();
  predict->add_option("--out", out_file, "predictions output file")->required();
  add_common(explain);
  explain->add_option("--records", records_file, "input records file")->required();
  explain->add_option("--out", out_file, "explanations output file")->required();
  add_common(experiment);
  experiment
      ->add_option("--kind", kind,
                   "data_scaling | single_class_imbalance | lambda_sweep | ablation")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    cfg::PipelineConfig config = cfg::load_config(config_path);
    if (seed_set) opt.seed = seed_value;
    if (synth->parsed()) return cmd_synth(config, opt);
    if (build_kg->parsed()) return cmd_build_kg(config, opt);
    if (fuse->parsed()) return cmd_fuse(config, opt);
    if (train_cmd->parsed()) return cmd_train(config, opt);
    if (eval_cmd->parsed()) return cmd_eval(config, opt);
    if (predict->parsed()) return cmd_predict(config, opt, records_file, out_file);
    if (explain->parsed()) return cmd_explain(config, opt, records_file, out_file);
    if (experiment->parsed()) return cmd_experiment(config, opt, kind);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace kpi::cli
