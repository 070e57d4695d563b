#pragma once

#include <map>
#include <string>
#include <vector>

#include "kpi/errors.hpp"

namespace kpi::kw {

// TF-IDF tokens: lowercase, split on non-alphanumeric runs, drop
// single-character tokens and stop words.
std::vector<std::string> tokenize(const std::string& text);

struct CorpusStats {
  long doc_count = 0;
  std::map<std::string, long> doc_frequency;  // keys are the vocabulary

  void save(const std::string& path, const std::string& corpus_hash) const;
  // returns empty optional-ish stats when the cache is missing or stale
  static bool load(const std::string& path, const std::string& corpus_hash,
                   CorpusStats& out);
};

CorpusStats build_stats(const std::vector<std::string>& narratives);

// tf(k) = count(k) / |tokens|, idf(k) = ln(|P| / (df(k) + 1)); a term
// absent from the narrative scores 0; scores may be negative.
double tfidf(const std::string& term, const std::string& narrative,
             const CorpusStats& stats);

struct KeywordSet {
  std::vector<std::pair<std::string, double>> terms;  // descending score
  double theta = 0.0;
  bool fallback = false;  // top-3 fallback fired
};

// Terms of the narrative scoring strictly above theta; when none
// qualify, falls back to the narrative's top-3 scoring terms.
KeywordSet extract_keywords(const std::string& narrative, const CorpusStats& stats,
                            double theta);

}  // namespace kpi::kw
