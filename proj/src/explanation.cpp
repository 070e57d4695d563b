#include "kpi/explanation.hpp"

#include <cstdio>
#include <sstream>

namespace kpi::expl {

namespace {

std::string format_alpha(double a) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", a);
  return buf;
}

std::vector<retrieval::AttributedTriple> top_triples(const ExplanationRequest& request,
                                                     const fusion::UnifiedGraph& graph,
                                                     int top_n) {
  auto triples = retrieval::subgraph_triples(request.subgraph, graph);
  if (top_n >= 0 && static_cast<std::size_t>(top_n) < triples.size()) {
    triples.resize(static_cast<std::size_t>(top_n));
  }
  return triples;
}

void check_request(const ExplanationRequest& request, const fusion::UnifiedGraph& graph) {
  if (request.subgraph.nodes.empty()) {
    throw InvalidInput("explanation: empty subgraph");
  }
  if (request.prediction.ranked_labels.empty()) {
    throw InvalidInput("explanation: empty prediction");
  }
  const auto& center =
      graph.nodes[static_cast<std::size_t>(request.subgraph.center)].canonical_label;
  if (center != request.prediction.ranked_labels.front()) {
    throw InvalidInput("explanation: subgraph center does not match the top-1 label");
  }
}

}  // namespace

std::string build_prompt(const ExplanationRequest& request,
                         const fusion::UnifiedGraph& graph, int top_n) {
  check_request(request, graph);
  auto triples = top_triples(request, graph, top_n);

  std::ostringstream p;
  p << "A ranking model predicted the most likely condition for the patient below.\n"
    << "Explain the prediction for the patient in plain, clinically grounded language.\n"
    << "Cite only the graph evidence listed; do not invent facts.\n\n"
    << "Patient narrative:\n"
    << request.record.narrative << "\n\n"
    << "Predicted condition: " << request.prediction.ranked_labels.front() << "\n\n"
    << "Knowledge-graph evidence, strongest attention first:\n";
  for (const auto& t : triples) {
    double a = std::max(t.alpha_head, t.alpha_tail);
    p << "- " << t.head << " —" << t.relation << "→ " << t.tail
      << " (attention=" << format_alpha(a) << ")\n";
  }
  return p.str();
}

Explanation explain(const ExplanationRequest& request, const fusion::UnifiedGraph& graph,
                    kg::ChatClient* client, int top_n) {
  check_request(request, graph);
  Explanation out;
  out.supporting_triples = top_triples(request, graph, top_n);

  if (client) {
    try {
      out.text = client->complete(build_prompt(request, graph, top_n));
      out.generator = "llm";
      if (!out.text.empty()) return out;
    } catch (const ExtractionUnavailable&) {
      // fall through to the template
    }
  }

  std::ostringstream t;
  t << "Predicted condition: " << request.prediction.ranked_labels.front() << ". ";
  t << "The prediction ranks this condition first for the reported narrative. ";
  if (out.supporting_triples.empty()) {
    t << "No related knowledge-graph facts were retrieved for this case.";
  } else {
    t << "Retrieved knowledge-graph facts supporting it: ";
    for (std::size_t i = 0; i < out.supporting_triples.size(); ++i) {
      const auto& tr = out.supporting_triples[i];
      if (i > 0) t << "; ";
      t << tr.head << " " << tr.relation << " " << tr.tail << " (attention "
        << format_alpha(std::max(tr.alpha_head, tr.alpha_tail)) << ")";
    }
    t << ".";
  }
  out.text = t.str();
  out.generator = "template";
  return out;
}

}  // namespace kpi::expl
