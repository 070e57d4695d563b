#include "kpi/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kpi/rng.hpp"

namespace kpi::eval {

namespace {
using nlohmann::json;
}

double hit_at_k(const std::vector<train::Prediction>& predictions,
                const std::vector<std::string>& gold, int k) {
  if (predictions.size() != gold.size()) {
    throw InvalidInput("hit_at_k: prediction/gold length mismatch");
  }
  if (k < 1) throw InvalidInput("hit_at_k: k must be >= 1");
  if (predictions.empty()) return 0.0;
  long hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& ranked = predictions[i].ranked_labels;
    auto end = ranked.begin() + std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k));
    if (std::find(ranked.begin(), end, gold[i]) != end) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double ndcg(const std::vector<train::Prediction>& predictions,
            const std::vector<std::string>& gold) {
  if (predictions.size() != gold.size()) {
    throw InvalidInput("ndcg: prediction/gold length mismatch");
  }
  if (predictions.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& ranked = predictions[i].ranked_labels;
    auto it = std::find(ranked.begin(), ranked.end(), gold[i]);
    if (it == ranked.end()) {
      throw InvalidRanking("ndcg: gold label absent from ranking: " + gold[i]);
    }
    double rank = static_cast<double>(it - ranked.begin()) + 1.0;
    acc += 1.0 / std::log2(rank + 1.0);
  }
  return acc / static_cast<double>(predictions.size());
}

std::optional<double> auc_for_label(const Eigen::MatrixXd& scores,
                                    const std::vector<std::string>& gold,
                                    const std::vector<std::string>& labels,
                                    const std::string& label) {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw InvalidInput("auc_for_label: unknown label: " + label);
  long col = it - labels.begin();
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    (gold[i] == label ? pos : neg).push_back(scores(static_cast<long>(i), col));
  }
  if (pos.empty() || neg.empty()) return std::nullopt;
  double wins = 0.0;
  for (double p : pos) {
    for (double n : neg) {
      if (p > n) wins += 1.0;
      else if (p == n) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

std::optional<double> auc_one_vs_rest(const Eigen::MatrixXd& scores,
                                      const std::vector<std::string>& gold,
                                      const std::vector<std::string>& labels,
                                      const std::vector<std::string>& category_labels) {
  double acc = 0.0;
  long n = 0;
  for (const auto& label : category_labels) {
    auto auc = auc_for_label(scores, gold, labels, label);
    if (auc) {
      acc += *auc;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return acc / static_cast<double>(n);
}

namespace {

CategoryMetrics metrics_for(const std::vector<train::Prediction>& preds,
                            const std::vector<std::string>& gold,
                            const Eigen::MatrixXd& scores,
                            const std::vector<std::string>& labels,
                            const std::vector<long>& case_rows,
                            const std::vector<std::string>& auc_labels,
                            const std::vector<std::string>& all_gold) {
  CategoryMetrics m;
  m.cases = static_cast<long>(case_rows.size());
  std::vector<train::Prediction> sub_preds;
  std::vector<std::string> sub_gold;
  for (long row : case_rows) {
    sub_preds.push_back(preds[static_cast<std::size_t>(row)]);
    sub_gold.push_back(gold[static_cast<std::size_t>(row)]);
  }
  if (!sub_preds.empty()) {
    m.hit1 = hit_at_k(sub_preds, sub_gold, 1);
    m.hit3 = hit_at_k(sub_preds, sub_gold, 3);
    m.hit10 = hit_at_k(sub_preds, sub_gold, 10);
    m.ndcg = ndcg(sub_preds, sub_gold);
  }
  m.auc = auc_one_vs_rest(scores, all_gold, labels, auc_labels);
  return m;
}

}  // namespace

EvalReport evaluate(const std::vector<patient::PatientRecord>& test_records,
                    const model::ModelState& state, const fusion::UnifiedGraph& graph,
                    const text::Encoder& encoder, const CategoryMap& categories,
                    const std::string& dataset_hash) {
  if (test_records.empty()) throw InvalidInput("evaluate: empty test set");
  for (const auto& r : test_records) {
    if (!r.label) throw InvalidInput("evaluate: test record without gold label: " + r.id);
  }

  gnn::PrototypeSet protos = gnn::prototypes_for(graph, state);
  Eigen::MatrixXd scores = train::score_matrix(test_records, state, protos, encoder);

  std::vector<train::Prediction> preds;
  std::vector<std::string> gold;
  for (std::size_t i = 0; i < test_records.size(); ++i) {
    preds.push_back(
        train::prediction_from_scores(scores.row(static_cast<long>(i)), protos.labels));
    gold.push_back(*test_records[i].label);
  }

  // category lookup; labels outside the map fall back to themselves
  std::map<std::string, std::string> category_of;
  for (const auto& [cat, labels] : categories) {
    for (const auto& l : labels) category_of[l] = cat;
  }
  CategoryMap effective = categories;
  for (const auto& g : gold) {
    if (!category_of.count(g)) {
      category_of[g] = g;
      effective[g] = {g};
    }
  }

  EvalReport report;
  report.seed = state.hyper.seed;
  report.dataset_hash = dataset_hash;
  report.checkpoint_id = state.checkpoint_id();

  std::map<std::string, std::vector<long>> rows_by_category;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    rows_by_category[category_of.at(gold[i])].push_back(static_cast<long>(i));
  }
  for (const auto& [cat, labels] : effective) {
    auto rows = rows_by_category.find(cat);
    if (rows == rows_by_category.end()) continue;  // category absent from test set
    report.per_category[cat] =
        metrics_for(preds, gold, scores, protos.labels, rows->second, labels, gold);
  }

  std::vector<long> all_rows(gold.size());
  std::iota(all_rows.begin(), all_rows.end(), 0);
  report.overall =
      metrics_for(preds, gold, scores, protos.labels, all_rows, protos.labels, gold);
  return report;
}

std::string EvalReport::to_json() const {
  json j;
  j["seed"] = seed;
  j["dataset_hash"] = dataset_hash;
  j["checkpoint_id"] = checkpoint_id;
  auto emit = [](const CategoryMetrics& m) {
    json e{{"hit1", m.hit1}, {"hit3", m.hit3}, {"hit10", m.hit10},
           {"ndcg", m.ndcg}, {"cases", m.cases}};
    if (m.auc) e["auc"] = *m.auc;
    return e;
  };
  for (const auto& [cat, m] : per_category) j["per_category"][cat] = emit(m);
  j["overall"] = emit(overall);
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  auto emit = [&out](const std::string& cat, const CategoryMetrics& m) {
    out << cat << "\thit1\t" << m.hit1 << "\n";
    out << cat << "\thit3\t" << m.hit3 << "\n";
    out << cat << "\thit10\t" << m.hit10 << "\n";
    if (m.auc) out << cat << "\tauc\t" << *m.auc << "\n";
    out << cat << "\tndcg\t" << m.ndcg << "\n";
  };
  for (const auto& [cat, m] : per_category) emit(cat, m);
  emit("overall", overall);
  return out.str();
}

namespace {

std::string category_name(int c) { return "c" + std::to_string(c); }

std::string disease_label(int c, int t) {
  return "dzc" + std::to_string(c) + "t" + std::to_string(t);
}

std::string tag_keyword(int c, int t, int m) {
  return "kwc" + std::to_string(c) + "t" + std::to_string(t) + "m" + std::to_string(m);
}

std::string shared_keyword(int c, int k) {
  return "ckc" + std::to_string(c) + "m" + std::to_string(k);
}

constexpr int kTagKeywords = 6;
constexpr int kSharedKeywords = 2;
constexpr int kBackgroundWords = 40;

}  // namespace

SyntheticBundle generate_synthetic(const SyntheticSpec& spec) {
  if (spec.categories < 1 || spec.tags_per_category < 1 || spec.train_per_tag < 0 ||
      spec.valid_per_tag < 0 || spec.test_per_tag < 0) {
    throw InvalidInput("generate_synthetic: counts must be positive");
  }
  SyntheticBundle bundle;
  rng::Stream rng(spec.seed, "data");

  std::vector<std::string> background;
  for (int b = 0; b < kBackgroundWords; ++b) background.push_back("bg" + std::to_string(b));

  for (int c = 0; c < spec.categories; ++c) {
    std::vector<std::string>& cat_labels = bundle.categories[category_name(c)];
    for (int t = 0; t < spec.tags_per_category; ++t) {
      const std::string dz = disease_label(c, t);
      cat_labels.push_back(dz);

      // reference description with plantable triplets
      std::ostringstream desc;
      desc << dz << " includes " << tag_keyword(c, t, 0) << ". ";
      desc << dz << " includes " << tag_keyword(c, t, 1) << ". ";
      desc << dz << " includes " << tag_keyword(c, t, 2) << ". ";
      desc << tag_keyword(c, t, 0) << " causes " << tag_keyword(c, t, 3) << ". ";
      desc << tag_keyword(c, t, 1) << " causes " << tag_keyword(c, t, 4) << ". ";
      desc << tag_keyword(c, t, 2) << " leads to " << tag_keyword(c, t, 5) << ". ";
      desc << dz << " includes " << shared_keyword(c, 0) << ". ";
      desc << shared_keyword(c, 0) << " causes " << shared_keyword(c, 1) << ".";
      bundle.corpus.push_back({dz, desc.str()});

      auto gold = kg::rule_based_extract(dz, desc.str());
      for (auto& triple : gold.triplets) bundle.gold_facts.push_back(std::move(triple));
    }
  }

  // recorded-mock transcripts reproduce the gold facts verbatim
  for (const auto& entry : bundle.corpus) {
    std::ostringstream response;
    for (const auto& t : bundle.gold_facts) {
      if (t.source_disease == entry.label) {
        response << t.head << " | " << t.relation << " | " << t.tail << "\n";
      }
    }
    std::string prompt = kg::extraction_prompt(entry.label, entry.description);
    bundle.transcripts[kg::RecordedMockClient::transcript_name(prompt)] = response.str();
  }
  {
    std::set<std::string> relations;
    for (const auto& t : bundle.gold_facts) relations.insert(t.relation);
    for (const auto& rel : relations) {
      std::string prompt = kg::definition_prompt(rel);
      bundle.transcripts[kg::RecordedMockClient::transcript_name(prompt)] =
          rel + " | " + kg::template_definition(rel) + "\n";
    }
  }

  // patient records: keyword-bearing narratives plus correlated
  // demographics and clinical profile
  auto make_record = [&](int c, int t, const std::string& split, int i) {
    patient::PatientRecord r;
    const std::string dz = disease_label(c, t);
    r.id = "r_" + dz + "_" + split + "_" + std::to_string(i);
    r.label = dz;

    int sentences = static_cast<int>(rng.uniform_int(2, 4));
    std::ostringstream narr;
    for (int s = 0; s < sentences; ++s) {
      int words = static_cast<int>(rng.uniform_int(4, 6));
      for (int w = 0; w < words; ++w) {
        if (w > 0) narr << " ";
        if (rng.bernoulli(spec.keyword_signal_strength)) {
          if (spec.shared_keyword_fraction > 0.0 &&
              rng.bernoulli(spec.shared_keyword_fraction)) {
            narr << shared_keyword(c, static_cast<int>(rng.index(kSharedKeywords)));
          } else {
            narr << tag_keyword(c, t, static_cast<int>(rng.index(kTagKeywords)));
          }
        } else {
          narr << background[rng.index(background.size())];
        }
      }
      narr << ".";
      if (s + 1 < sentences) narr << " ";
    }
    r.narrative = narr.str();

    r.gender = rng.bernoulli(c % 2 == 0 ? 0.7 : 0.3) ? "F" : "M";
    r.age = 15 + 10 * c + static_cast<int>(rng.uniform_int(0, 14));
    for (int f = 0; f < 4; ++f) {
      double base = static_cast<double>((c * 3 + f * 7) % 10) / 10.0;
      double v = std::clamp(base + 0.1 * rng.normal(), 0.0, 1.0);
      r.clinical_profile["p" + std::to_string(f)] = v;
    }
    return r;
  };

  for (int c = 0; c < spec.categories; ++c) {
    for (int t = 0; t < spec.tags_per_category; ++t) {
      for (int i = 0; i < spec.train_per_tag; ++i)
        bundle.train.push_back(make_record(c, t, "train", i));
      for (int i = 0; i < spec.valid_per_tag; ++i)
        bundle.valid.push_back(make_record(c, t, "valid", i));
      for (int i = 0; i < spec.test_per_tag; ++i)
        bundle.test.push_back(make_record(c, t, "test", i));
    }
  }
  return bundle;
}

CategoryMap load_categories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open categories file: " + path);
  json j = json::parse(in);
  return j.get<CategoryMap>();
}

void save_categories(const std::string& path, const CategoryMap& categories) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write categories file: " + path);
  out << json(categories).dump(2);
}

ExperimentKind experiment_kind_from(const std::string& name) {
  if (name == "data_scaling") return ExperimentKind::data_scaling;
  if (name == "single_class_imbalance") return ExperimentKind::single_class_imbalance;
  if (name == "lambda_sweep") return ExperimentKind::lambda_sweep;
  if (name == "ablation") return ExperimentKind::ablation;
  throw ConfigError("unknown experiment kind: " + name);
}

std::vector<patient::PatientRecord> subsample_all_labels(
    const std::vector<patient::PatientRecord>& records, double fraction,
    std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_label[records[i].label.value_or("")].push_back(i);
  }
  rng::Stream rng(seed, "subsample");
  std::set<std::size_t> keep;
  for (auto& [label, idx] : by_label) {
    rng.shuffle(idx);
    std::size_t k = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(idx.size())));
    for (std::size_t i = 0; i < k && i < idx.size(); ++i) keep.insert(idx[i]);
  }
  std::vector<patient::PatientRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep.count(i)) out.push_back(records[i]);
  }
  return out;
}

std::vector<patient::PatientRecord> subsample_category(
    const std::vector<patient::PatientRecord>& records,
    const std::vector<std::string>& category_labels, double fraction, std::uint64_t seed) {
  std::set<std::string> target(category_labels.begin(), category_labels.end());
  std::vector<patient::PatientRecord> in_cat, rest;
  for (const auto& r : records) {
    (r.label && target.count(*r.label) ? in_cat : rest).push_back(r);
  }
  auto kept = subsample_all_labels(in_cat, fraction, seed);
  // keep original interleaving stable: untouched records first is fine
  // for training since batches reshuffle, but keep deterministic order
  std::vector<patient::PatientRecord> out = rest;
  out.insert(out.end(), kept.begin(), kept.end());
  return out;
}

model::DataSchema schema_from(const std::vector<patient::PatientRecord>& records,
                              const std::vector<std::string>& labels) {
  std::set<std::string> genders;
  std::set<std::string> fields;
  for (const auto& r : records) {
    genders.insert(r.gender);
    for (const auto& [k, v] : r.clinical_profile) fields.insert(k);
  }
  model::DataSchema schema;
  schema.gender_categories.assign(genders.begin(), genders.end());
  schema.clinical_fields.assign(fields.begin(), fields.end());
  schema.labels = labels;
  return schema;
}

std::string dataset_hash_of(const std::vector<patient::PatientRecord>& records) {
  std::ostringstream all;
  for (const auto& r : records) {
    all << r.id << "\x1f" << r.narrative << "\x1f" << r.gender << "\x1f" << r.age
        << "\x1f" << r.label.value_or("") << "\x1e";
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(rng::fnv1a64(all.str())));
  return std::string(buf);
}

std::vector<ExperimentSetting> run_experiment(
    const ExperimentPlan& plan, const SyntheticBundle& data,
    const fusion::UnifiedGraph& graph, const model::Hyper& base_hyper,
    const text::Encoder& encoder, const std::string& dataset_hash) {
  std::vector<std::string> labels;
  for (int id : graph.disease_node_ids()) {
    labels.push_back(graph.nodes[static_cast<std::size_t>(id)].canonical_label);
  }

  auto run_one = [&](const std::string& name,
                     const std::vector<patient::PatientRecord>& train_records,
                     const model::Hyper& hyper) {
    model::DataSchema schema = schema_from(data.train, labels);
    model::ModelState init = model::ModelState::init(hyper, schema, graph.corpus_hash);
    train::TrainResult tr = train::train(train_records, data.valid, init, graph, encoder);
    EvalReport report = evaluate(data.test, tr.best_state, graph, encoder,
                                 data.categories, dataset_hash);
    return ExperimentSetting{name, std::move(report)};
  };

  std::vector<ExperimentSetting> out;
  switch (plan.kind) {
    case ExperimentKind::data_scaling: {
      std::vector<double> fractions = plan.proportions;
      if (fractions.empty()) {
        for (int p = 10; p <= 100; p += 10) fractions.push_back(p / 100.0);
      }
      for (double f : fractions) {
        auto subset = subsample_all_labels(data.train, f, base_hyper.seed);
        out.push_back(run_one("scale_" + std::to_string(static_cast<int>(f * 100 + 0.5)),
                              subset, base_hyper));
      }
      break;
    }
    case ExperimentKind::single_class_imbalance: {
      std::string target = plan.target_category;
      if (target.empty()) target = data.categories.begin()->first;
      auto cat_it = data.categories.find(target);
      if (cat_it == data.categories.end()) {
        throw ConfigError("unknown target category: " + target);
      }
      std::vector<double> fractions = plan.proportions;
      if (fractions.empty()) fractions = {0.0, 0.3, 0.5, 0.7, 1.0};
      for (double f : fractions) {
        auto subset = subsample_category(data.train, cat_it->second, f, base_hyper.seed);
        out.push_back(
            run_one("imbalance_" + target + "_" +
                        std::to_string(static_cast<int>(f * 100 + 0.5)),
                    subset, base_hyper));
      }
      break;
    }
    case ExperimentKind::lambda_sweep: {
      std::vector<double> lambdas = plan.lambdas;
      if (lambdas.empty()) lambdas = {0.0, 0.25, 0.5, 1.0};
      for (double l : lambdas) {
        model::Hyper hyper = base_hyper;
        hyper.lambda = l;
        std::ostringstream name;
        name << "lambda_" << l;
        out.push_back(run_one(name.str(), data.train, hyper));
      }
      break;
    }
    case ExperimentKind::ablation: {
      out.push_back(run_one("full", data.train, base_hyper));
      model::Hyper no_sem = base_hyper;
      no_sem.lambda = 0.0;
      out.push_back(run_one("no_semantic_consistency", data.train, no_sem));
      model::Hyper random_proto = base_hyper;
      random_proto.prototype_mode = "random";
      out.push_back(run_one("random_prototypes", data.train, random_proto));
      break;
    }
  }
  return out;
}

}  // namespace kpi::eval
