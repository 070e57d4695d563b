#include "kpi/patient_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace kpi::patient {

namespace {

using nlohmann::json;

// 2-head self-attention over a handful of segment tokens followed by an
// output projection; block names the pe.seg / pe.fuse parameter group.
std::vector<ad::Var> segment_attention(ad::Tape& tape, const std::vector<ad::Var>& tokens,
                                       const model::TapeParams& params,
                                       const std::string& block) {
  const int heads = model::kSegmentHeads;
  const long d = tokens[0].rows();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d / heads));

  std::vector<ad::Var> attended;
  std::vector<std::vector<ad::Var>> q(heads), k(heads), v(heads);
  for (int h = 0; h < heads; ++h) {
    ad::Var wq = params.at(block + ".wq.h" + std::to_string(h));
    ad::Var wk = params.at(block + ".wk.h" + std::to_string(h));
    ad::Var wv = params.at(block + ".wv.h" + std::to_string(h));
    for (const ad::Var& tok : tokens) {
      q[h].push_back(tape.matmul(wq, tok));
      k[h].push_back(tape.matmul(wk, tok));
      v[h].push_back(tape.matmul(wv, tok));
    }
  }
  ad::Var wout = params.at(block + ".wout");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::vector<ad::Var> head_outs;
    for (int h = 0; h < heads; ++h) {
      std::vector<ad::Var> scores;
      for (std::size_t j = 0; j < tokens.size(); ++j) {
        scores.push_back(tape.scale(tape.dot(q[h][i], k[h][j]), inv_sqrt));
      }
      ad::Var alpha = tape.softmax(tape.concat_rows(scores));
      head_outs.push_back(tape.weighted_sum(v[h], alpha));
    }
    attended.push_back(tape.matmul(wout, tape.concat_rows(head_outs)));
  }
  return attended;
}

ad::Var layer_norm_affine(ad::Tape& tape, ad::Var x, ad::Var gain, ad::Var bias) {
  return tape.add(tape.cwise_mul(tape.layer_norm(x), gain), bias);
}

}  // namespace

int age_bucket(int age) {
  int b = age / 10;
  return std::clamp(b, 0, model::kAgeBuckets - 1);
}

std::vector<std::string> split_sentences(const std::string& narrative) {
  std::vector<std::string> sentences;
  std::string cur;
  auto flush = [&] {
    std::size_t b = cur.find_first_not_of(" \t\r\n");
    if (b != std::string::npos) {
      std::size_t e = cur.find_last_not_of(" \t\r\n");
      sentences.push_back(cur.substr(b, e - b + 1));
    }
    cur.clear();
  };
  for (char c : narrative) {
    if (c == '.' || c == '?' || c == '!' || c == ';' || c == '\n') {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  if (sentences.empty()) {
    std::size_t b = narrative.find_first_not_of(" \t\r\n");
    if (b != std::string::npos) {
      std::size_t e = narrative.find_last_not_of(" \t\r\n");
      sentences.push_back(narrative.substr(b, e - b + 1));
    }
  }
  return sentences;
}

ad::Var encode_narrative_t(ad::Tape& tape, const std::string& narrative,
                           const text::Encoder& base_encoder,
                           const model::TapeParams& params) {
  auto sentences = split_sentences(narrative);
  if (sentences.empty()) {
    throw InvalidInput("encode_narrative: no sentence after splitting");
  }
  ad::Var aw = params.at("adapter.weight");
  ad::Var ab = params.at("adapter.bias");
  std::vector<ad::Var> sentence_vecs;
  sentence_vecs.reserve(sentences.size());
  for (const auto& s : sentences) {
    ad::Var base = tape.leaf(base_encoder.encode_text(s));
    sentence_vecs.push_back(text::adapter_apply_t(tape, base, aw, ab));
  }
  return text::gated_aggregate_t(tape, sentence_vecs, params.at("gate.sentences"));
}

ad::Var encode_structured_t(ad::Tape& tape, const PatientRecord& record,
                            const model::TapeParams& params,
                            const model::ModelState& state) {
  if (record.age < 0) throw InvalidInput("encode_structured: negative age");
  const int d = state.hyper.dim;

  ad::Var h_g = tape.take_row(params.at("demo.gender"), state.gender_index(record.gender));
  ad::Var h_a = tape.take_row(params.at("demo.age"), age_bucket(record.age));

  // clinical profile in schema order, zero-padded to D; unknown fields in
  // the record are ignored, missing schema fields impute 0
  Eigen::VectorXd profile = Eigen::VectorXd::Zero(d);
  const auto& fields = state.schema.clinical_fields;
  if (static_cast<int>(fields.size()) > d) {
    throw InvalidInput("clinical profile wider than embedding dimension");
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    auto it = record.clinical_profile.find(fields[i]);
    if (it != record.clinical_profile.end()) {
      if (!std::isfinite(it->second)) {
        throw InvalidInput("clinical profile value not finite: " + fields[i]);
      }
      profile[static_cast<long>(i)] = it->second;
    }
  }
  ad::Var h_c = tape.leaf(profile);

  auto attended = segment_attention(tape, {h_g, h_a, h_c}, params, "pe.seg");
  ad::Var cat = tape.concat_rows(attended);
  return layer_norm_affine(tape, cat, params.at("pe.seg.ln_gain"),
                           params.at("pe.seg.ln_bias"));
}

ad::Var fuse_patient_t(ad::Tape& tape, ad::Var h_tilde_s, ad::Var h_narr,
                       const model::TapeParams& params) {
  ad::Var tok_s = tape.matmul(params.at("pe.fuse.squash"), h_tilde_s);
  auto attended = segment_attention(tape, {tok_s, h_narr}, params, "pe.fuse");
  ad::Var cat = tape.concat_rows(attended);
  ad::Var h_hat = layer_norm_affine(tape, cat, params.at("pe.fuse.ln_gain"),
                                    params.at("pe.fuse.ln_bias"));
  return tape.matmul(params.at("pe.out.weight"), h_hat);
}

ad::Var patient_embedding_t(ad::Tape& tape, const PatientRecord& record,
                            const text::Encoder& base_encoder,
                            const model::TapeParams& params,
                            const model::ModelState& state) {
  ad::Var h_narr = encode_narrative_t(tape, record.narrative, base_encoder, params);
  ad::Var h_tilde_s = encode_structured_t(tape, record, params, state);
  return fuse_patient_t(tape, h_tilde_s, h_narr, params);
}

Eigen::VectorXd patient_embedding(const PatientRecord& record,
                                  const text::Encoder& base_encoder,
                                  const model::ModelState& state) {
  ad::Tape tape;
  model::TapeParams params = model::make_tape_params(tape, state);
  return patient_embedding_t(tape, record, base_encoder, params, state).value();
}

std::vector<PatientRecord> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open records file: " + path);
  std::vector<PatientRecord> records;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json j = json::parse(line);
    PatientRecord r;
    r.id = j.at("id").get<std::string>();
    r.narrative = j.at("narrative").get<std::string>();
    r.gender = j.at("gender").get<std::string>();
    r.age = j.at("age").get<int>();
    if (j.contains("clinical_profile")) {
      r.clinical_profile = j.at("clinical_profile").get<std::map<std::string, double>>();
    }
    if (j.contains("label") && !j.at("label").is_null()) {
      r.label = j.at("label").get<std::string>();
    }
    if (r.narrative.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw InvalidInput("record " + r.id + " (line " + std::to_string(line_no) +
                         "): empty narrative");
    }
    if (r.age < 0) {
      throw InvalidInput("record " + r.id + ": negative age");
    }
    records.push_back(std::move(r));
  }
  return records;
}

void save_records(const std::string& path, const std::vector<PatientRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write records file: " + path);
  for (const auto& r : records) {
    json j{{"id", r.id},
           {"narrative", r.narrative},
           {"gender", r.gender},
           {"age", r.age},
           {"clinical_profile", r.clinical_profile}};
    if (r.label) j["label"] = *r.label;
    out << j.dump() << "\n";
  }
}

}  // namespace kpi::patient
