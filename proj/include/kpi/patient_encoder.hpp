#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kpi/autodiff.hpp"
#include "kpi/tape_params.hpp"
#include "kpi/text_encoding.hpp"

namespace kpi::patient {

struct PatientRecord {
  std::string id;
  std::string narrative;
  std::string gender;
  int age = 0;
  std::map<std::string, double> clinical_profile;  // normalized to [0,1]
  std::optional<std::string> label;
};

std::vector<PatientRecord> load_records(const std::string& path);
void save_records(const std::string& path, const std::vector<PatientRecord>& records);

// Split on . ? ! ; and newline; whole narrative if no delimiter fires.
std::vector<std::string> split_sentences(const std::string& narrative);

// h_narr: per-sentence mean-pooled vectors through the trainable adapter,
// aggregated by the gated mean/max blend.
ad::Var encode_narrative_t(ad::Tape& tape, const std::string& narrative,
                           const text::Encoder& base_encoder,
                           const model::TapeParams& params);

// h~_s: gender/age table rows and the zero-padded clinical profile as
// three segment tokens, refined by 2-head self-attention, re-concatenated
// and layer-normalized.
ad::Var encode_structured_t(ad::Tape& tape, const PatientRecord& record,
                            const model::TapeParams& params,
                            const model::ModelState& state);

// h_p = W_o psi(zeta([squash(h~_s); h_narr]))
ad::Var fuse_patient_t(ad::Tape& tape, ad::Var h_tilde_s, ad::Var h_narr,
                       const model::TapeParams& params);

// Full text-path forward; never reads record.label.
ad::Var patient_embedding_t(ad::Tape& tape, const PatientRecord& record,
                            const text::Encoder& base_encoder,
                            const model::TapeParams& params,
                            const model::ModelState& state);
Eigen::VectorXd patient_embedding(const PatientRecord& record,
                                  const text::Encoder& base_encoder,
                                  const model::ModelState& state);

int age_bucket(int age);

}  // namespace kpi::patient
