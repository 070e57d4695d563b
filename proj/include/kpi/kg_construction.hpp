#pragma once

#include <string>
#include <vector>

#include "kpi/chat_client.hpp"
#include "kpi/errors.hpp"

namespace kpi::kg {

struct KnowledgeTriplet {
  std::string head;
  std::string relation;
  std::string tail;
  std::string source_disease;

  bool operator==(const KnowledgeTriplet&) const = default;
};

struct RelationDefinition {
  std::string relation;
  std::string definition;
};

struct DiseaseDescription {
  std::string label;
  std::string description;
};

// Prompt builders are pure functions so the synthetic generator can
// precompute the recorded-mock transcripts for its own corpus.
std::string extraction_prompt(const std::string& disease, const std::string& description);
std::string definition_prompt(const std::string& relation);

struct ExtractionOutcome {
  std::vector<KnowledgeTriplet> triplets;
  int malformed_lines = 0;
  bool empty_warning = false;  // zero parseable triplets (non-fatal)
};

// Parses `head | relation | tail` lines; total, never throws on content.
ExtractionOutcome parse_triplet_lines(const std::string& response,
                                      const std::string& disease);

ExtractionOutcome extract_triplets(ChatClient& client, const std::string& disease,
                                   const std::string& description);

// Offline path: `X causes/leads to/includes/results in Y` over sentences.
ExtractionOutcome rule_based_extract(const std::string& disease,
                                     const std::string& description);

// Disease-independent template definition for a relation surface.
std::string template_definition(const std::string& relation);

// One definition per distinct relation surface (lexicographic prompt
// order); malformed responses fall back to the template definition.
std::vector<RelationDefinition> define_relations(
    ChatClient& client, const std::vector<KnowledgeTriplet>& triplets);
std::vector<RelationDefinition> template_definitions(
    const std::vector<KnowledgeTriplet>& triplets);

struct KgBuildResult {
  std::vector<KnowledgeTriplet> triplets;
  std::vector<RelationDefinition> definitions;
  std::vector<std::string> knowledge_poor;  // diseases with zero triplets
  int malformed_total = 0;
  int scrubbed_definitions = 0;
};

// client == nullptr selects the offline rule-based path.
KgBuildResult build_knowledge(ChatClient* client,
                              const std::vector<DiseaseDescription>& corpus);

// file formats (JSON lines)
std::vector<DiseaseDescription> load_corpus(const std::string& path);
void save_corpus(const std::string& path, const std::vector<DiseaseDescription>& corpus);
std::vector<KnowledgeTriplet> load_triplets(const std::string& path);
void save_triplets(const std::string& path, const std::vector<KnowledgeTriplet>& triplets);
std::vector<RelationDefinition> load_definitions(const std::string& path);
void save_definitions(const std::string& path, const std::vector<RelationDefinition>& defs);

}  // namespace kpi::kg
