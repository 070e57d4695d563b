#include "kpi/kg_construction.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace kpi::kg {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

}  // namespace

std::string extraction_prompt(const std::string& disease, const std::string& description) {
  std::ostringstream p;
  p << "You are given a reference description of the condition \"" << disease << "\".\n"
    << "Extract the medically relevant facts it states as knowledge triplets.\n"
    << "Entities must be concise noun phrases; relations must be short verb phrases.\n"
    << "Output one triplet per line, formatted exactly as: head | relation | tail\n"
    << "Do not output anything else.\n\n"
    << "Description:\n"
    << description << "\n";
  return p.str();
}

std::string definition_prompt(const std::string& relation) {
  std::ostringstream p;
  p << "Give a concise, disease-independent definition of the relation type \""
    << relation << "\" as used between medical entities.\n"
    << "Remove any disease-specific content.\n"
    << "Output exactly one line formatted as: " << relation << " | definition\n";
  return p.str();
}

ExtractionOutcome parse_triplet_lines(const std::string& response,
                                      const std::string& disease) {
  ExtractionOutcome out;
  for (const std::string& raw : split_lines(response)) {
    std::string line = trim(raw);
    if (line.empty()) continue;
    auto parts = split_on(line, '|');
    if (parts.size() != 3) {
      ++out.malformed_lines;
      continue;
    }
    KnowledgeTriplet t{trim(parts[0]), trim(parts[1]), trim(parts[2]), disease};
    if (t.head.empty() || t.relation.empty() || t.tail.empty() || t.head == t.tail) {
      ++out.malformed_lines;
      continue;
    }
    out.triplets.push_back(std::move(t));
  }
  out.empty_warning = out.triplets.empty();
  return out;
}

ExtractionOutcome extract_triplets(ChatClient& client, const std::string& disease,
                                   const std::string& description) {
  if (trim(description).empty()) {
    throw InvalidInput("extract_triplets: empty description for " + disease);
  }
  std::string response = client.complete(extraction_prompt(disease, description));
  return parse_triplet_lines(response, disease);
}

ExtractionOutcome rule_based_extract(const std::string& disease,
                                     const std::string& description) {
  if (trim(description).empty()) {
    throw InvalidInput("rule_based_extract: empty description for " + disease);
  }
  // longest connectives first so "results in" is not read as "in"
  static const std::vector<std::string> connectives = {
      " results in ", " leads to ", " includes ", " causes "};
  ExtractionOutcome out;
  std::string sentence;
  auto flush = [&](const std::string& s) {
    std::string sent = trim(s);
    if (sent.empty()) return;
    for (const std::string& conn : connectives) {
      auto pos = sent.find(conn);
      if (pos == std::string::npos) continue;
      KnowledgeTriplet t{trim(sent.substr(0, pos)), trim(conn),
                         trim(sent.substr(pos + conn.size())), disease};
      if (!t.head.empty() && !t.tail.empty() && t.head != t.tail) {
        out.triplets.push_back(std::move(t));
      }
      return;
    }
  };
  for (char c : description) {
    if (c == '.' || c == '?' || c == '!' || c == ';' || c == '\n') {
      flush(sentence);
      sentence.clear();
    } else {
      sentence.push_back(c);
    }
  }
  flush(sentence);
  out.empty_warning = out.triplets.empty();
  return out;
}

std::string template_definition(const std::string& relation) {
  static const std::map<std::string, std::string> known = {
      {"causes", "One finding brings about another."},
      {"leads to", "An initial state progresses toward an outcome."},
      {"includes", "A broader concept contains a narrower one."},
      {"results in", "An action or condition produces a consequence."},
  };
  auto it = known.find(relation);
  if (it != known.end()) return it->second;
  return "Describes how " + relation + " connects findings.";
}

namespace {

std::vector<std::string> distinct_relations(const std::vector<KnowledgeTriplet>& triplets) {
  if (triplets.empty()) {
    throw InvalidInput("define_relations: empty triplet list");
  }
  std::set<std::string> rels;
  for (const auto& t : triplets) rels.insert(t.relation);
  return {rels.begin(), rels.end()};
}

}  // namespace

std::vector<RelationDefinition> define_relations(
    ChatClient& client, const std::vector<KnowledgeTriplet>& triplets) {
  std::vector<RelationDefinition> defs;
  for (const std::string& rel : distinct_relations(triplets)) {
    std::string response = client.complete(definition_prompt(rel));
    std::string definition;
    for (const std::string& raw : split_lines(response)) {
      std::string line = trim(raw);
      if (line.empty()) continue;
      auto parts = split_on(line, '|');
      if (parts.size() != 2) continue;
      if (trim(parts[0]) != rel) continue;
      definition = trim(parts[1]);
      if (!definition.empty()) break;
    }
    if (definition.empty()) definition = template_definition(rel);
    defs.push_back({rel, definition});
  }
  return defs;
}

std::vector<RelationDefinition> template_definitions(
    const std::vector<KnowledgeTriplet>& triplets) {
  std::vector<RelationDefinition> defs;
  for (const std::string& rel : distinct_relations(triplets)) {
    defs.push_back({rel, template_definition(rel)});
  }
  return defs;
}

KgBuildResult build_knowledge(ChatClient* client,
                              const std::vector<DiseaseDescription>& corpus) {
  if (corpus.empty()) throw InvalidInput("build_knowledge: empty corpus");
  KgBuildResult result;
  for (const auto& entry : corpus) {
    ExtractionOutcome out = client
                                ? extract_triplets(*client, entry.label, entry.description)
                                : rule_based_extract(entry.label, entry.description);
    result.malformed_total += out.malformed_lines;
    if (out.empty_warning) result.knowledge_poor.push_back(entry.label);
    for (auto& t : out.triplets) result.triplets.push_back(std::move(t));
  }
  if (result.triplets.empty()) {
    throw ExtractionUnavailable("build_knowledge: no triplets extracted from corpus");
  }
  result.definitions = client ? define_relations(*client, result.triplets)
                              : template_definitions(result.triplets);

  // definitions must stay disease-independent: scrub corpus labels
  for (auto& def : result.definitions) {
    for (const auto& entry : corpus) {
      std::size_t pos;
      while ((pos = def.definition.find(entry.label)) != std::string::npos) {
        def.definition.replace(pos, entry.label.size(), "the condition");
        ++result.scrubbed_definitions;
      }
    }
  }
  return result;
}

std::vector<DiseaseDescription> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);
  std::vector<DiseaseDescription> corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line);
    corpus.push_back({j.at("label").get<std::string>(),
                      j.at("description").get<std::string>()});
  }
  if (corpus.empty()) throw InvalidInput("corpus file is empty: " + path);
  return corpus;
}

void save_corpus(const std::string& path, const std::vector<DiseaseDescription>& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file: " + path);
  for (const auto& d : corpus) {
    out << json{{"label", d.label}, {"description", d.description}}.dump() << "\n";
  }
}

std::vector<KnowledgeTriplet> load_triplets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open triplets file: " + path);
  std::vector<KnowledgeTriplet> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line);
    out.push_back({j.at("head").get<std::string>(), j.at("relation").get<std::string>(),
                   j.at("tail").get<std::string>(),
                   j.at("source_disease").get<std::string>()});
  }
  return out;
}

void save_triplets(const std::string& path, const std::vector<KnowledgeTriplet>& triplets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write triplets file: " + path);
  for (const auto& t : triplets) {
    out << json{{"head", t.head},
                {"relation", t.relation},
                {"tail", t.tail},
                {"source_disease", t.source_disease}}
               .dump()
        << "\n";
  }
}

std::vector<RelationDefinition> load_definitions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open relation definitions file: " + path);
  std::vector<RelationDefinition> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line);
    out.push_back({j.at("relation").get<std::string>(),
                   j.at("definition").get<std::string>()});
  }
  return out;
}

void save_definitions(const std::string& path, const std::vector<RelationDefinition>& defs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write relation definitions file: " + path);
  for (const auto& d : defs) {
    out << json{{"relation", d.relation}, {"definition", d.definition}}.dump() << "\n";
  }
}

}  // namespace kpi::kg
