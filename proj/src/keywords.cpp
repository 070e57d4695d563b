#include "kpi/keywords.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace kpi::kw {

namespace {

const std::set<std::string>& stop_words() {
  static const std::set<std::string> words = {
      "a",    "an",   "and",  "are",  "as",   "at",   "be",   "but", "by",
      "for",  "from", "had",  "has",  "have", "i",    "in",   "is",  "it",
      "my",   "no",   "not",  "now",  "of",   "on",   "or",   "so",  "that",
      "the",  "then", "this", "to",   "very", "was",  "with", "yet"};
  return words;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 2 && !stop_words().count(cur)) tokens.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

CorpusStats build_stats(const std::vector<std::string>& narratives) {
  if (narratives.empty()) throw InvalidInput("build_stats: empty corpus");
  CorpusStats stats;
  stats.doc_count = static_cast<long>(narratives.size());
  for (const auto& doc : narratives) {
    std::set<std::string> seen;
    for (const auto& tok : tokenize(doc)) seen.insert(tok);
    for (const auto& tok : seen) ++stats.doc_frequency[tok];
  }
  return stats;
}

double tfidf(const std::string& term, const std::string& narrative,
             const CorpusStats& stats) {
  auto tokens = tokenize(narrative);
  if (tokens.empty()) return 0.0;  // no tokens, every term is absent
  long count = static_cast<long>(std::count(tokens.begin(), tokens.end(), term));
  if (count == 0) return 0.0;
  double tf = static_cast<double>(count) / static_cast<double>(tokens.size());
  auto it = stats.doc_frequency.find(term);
  long df = it == stats.doc_frequency.end() ? 0 : it->second;
  double idf = std::log(static_cast<double>(stats.doc_count) /
                        static_cast<double>(df + 1));
  return tf * idf;
}

KeywordSet extract_keywords(const std::string& narrative, const CorpusStats& stats,
                            double theta) {
  KeywordSet out;
  out.theta = theta;

  auto tokens = tokenize(narrative);
  std::set<std::string> distinct(tokens.begin(), tokens.end());

  std::vector<std::pair<std::string, double>> scored;
  for (const auto& term : distinct) {
    scored.emplace_back(term, tfidf(term, narrative, stats));
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  for (const auto& ts : scored) {
    if (ts.second > theta) out.terms.push_back(ts);
  }
  if (out.terms.empty() && !scored.empty()) {
    out.fallback = true;
    for (std::size_t i = 0; i < scored.size() && i < 3; ++i) {
      out.terms.push_back(scored[i]);
    }
  }
  return out;
}

void CorpusStats::save(const std::string& path, const std::string& corpus_hash) const {
  nlohmann::json j;
  j["corpus_hash"] = corpus_hash;
  j["doc_count"] = doc_count;
  j["doc_frequency"] = doc_frequency;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write stats cache: " + path);
  out << j.dump();
}

bool CorpusStats::load(const std::string& path, const std::string& corpus_hash,
                       CorpusStats& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || j.value("corpus_hash", "") != corpus_hash) return false;
  out.doc_count = j.at("doc_count").get<long>();
  out.doc_frequency = j.at("doc_frequency").get<std::map<std::string, long>>();
  return true;
}

}  // namespace kpi::kw
