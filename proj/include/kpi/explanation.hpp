#pragma once

#include <string>
#include <vector>

#include "kpi/chat_client.hpp"
#include "kpi/patient_encoder.hpp"
#include "kpi/retrieval.hpp"
#include "kpi/training.hpp"

namespace kpi::expl {

struct ExplanationRequest {
  patient::PatientRecord record;  // label-free at explanation time
  train::Prediction prediction;
  retrieval::PatientSubgraph subgraph;  // centered at the top-1 label
};

struct Explanation {
  std::string text;
  std::vector<retrieval::AttributedTriple> supporting_triples;  // attention desc
  std::string generator;  // "llm" | "template"
};

// Deterministic prompt: narrative verbatim, predicted label, top_n
// triples rendered as `head —relation→ tail (attention=a)`.
std::string build_prompt(const ExplanationRequest& request,
                         const fusion::UnifiedGraph& graph, int top_n);

// Live/mock client text when available, deterministic template fallback
// otherwise; never fails.
Explanation explain(const ExplanationRequest& request, const fusion::UnifiedGraph& graph,
                    kg::ChatClient* client, int top_n);

}  // namespace kpi::expl
