#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "kpi/keywords.hpp"
#include "kpi/rng.hpp"

using namespace kpi;

namespace {

const std::vector<std::string> kThreeDocs = {"fever cough", "fever", "rash"};

// independent recount oracle: retokenize, recount terms and documents
double tfidf_oracle(const std::string& term, const std::string& narrative,
                    const std::vector<std::string>& corpus) {
  auto tokens = kw::tokenize(narrative);
  if (tokens.empty()) return 0.0;
  long c = 0;
  for (const auto& t : tokens) {
    if (t == term) ++c;
  }
  if (c == 0) return 0.0;
  long df = 0;
  for (const auto& doc : corpus) {
    auto dt = kw::tokenize(doc);
    if (std::find(dt.begin(), dt.end(), term) != dt.end()) ++df;
  }
  double tf = static_cast<double>(c) / static_cast<double>(tokens.size());
  return tf * std::log(static_cast<double>(corpus.size()) / static_cast<double>(df + 1));
}

}  // namespace

TEST_CASE("build_stats counts binary document frequency") {
  auto stats = kw::build_stats(kThreeDocs);
  CHECK(stats.doc_count == 3);
  CHECK(stats.doc_frequency.at("fever") == 2);
  CHECK(stats.doc_frequency.at("cough") == 1);
  CHECK(stats.doc_frequency.at("rash") == 1);

  // duplicates inside one document count once
  auto dup = kw::build_stats({"fever fever fever"});
  CHECK(dup.doc_frequency.at("fever") == 1);

  auto one = kw::build_stats({"fever cough"});
  for (const auto& [term, df] : one.doc_frequency) CHECK(df == 1);

  CHECK_THROWS_AS(kw::build_stats({}), InvalidInput);
}

TEST_CASE("tfidf hand values") {
  auto stats = kw::build_stats(kThreeDocs);

  // tf = 1/2, idf = ln(3/2)
  double got = kw::tfidf("cough", kThreeDocs[0], stats);
  CHECK(got == doctest::Approx(0.5 * std::log(1.5)).epsilon(1e-12));
  CHECK(got == doctest::Approx(0.202733).epsilon(1e-5));

  // absent term scores zero
  CHECK(kw::tfidf("rash", kThreeDocs[0], stats) == 0.0);

  // term in every document: idf = ln(3/4) < 0
  auto everywhere = kw::build_stats({"fever a", "fever b", "fever c"});
  CHECK(kw::tfidf("fever", "fever aa", everywhere) < 0.0);
}

TEST_CASE("tfidf matches the brute-force oracle on random corpora") {
  rng::Stream rng(41, "tfidf");
  std::vector<std::string> vocab = {"fever",  "cough", "rash",  "chills",
                                    "nausea", "ache",  "tired", "dizzy"};
  for (int it = 0; it < 100; ++it) {
    int docs = static_cast<int>(rng.uniform_int(1, 6));
    std::vector<std::string> corpus;
    for (int d = 0; d < docs; ++d) {
      int len = static_cast<int>(rng.uniform_int(1, 10));
      std::string doc;
      for (int w = 0; w < len; ++w) {
        if (w > 0) doc += " ";
        doc += vocab[rng.index(vocab.size())];
      }
      corpus.push_back(doc);
    }
    auto stats = kw::build_stats(corpus);
    for (const auto& term : vocab) {
      for (const auto& doc : corpus) {
        double got = kw::tfidf(term, doc, stats);
        double want = tfidf_oracle(term, doc, corpus);
        CHECK(std::abs(got - want) <= 1e-12);
      }
    }
  }
}

TEST_CASE("term frequencies sum to one over narrative terms") {
  rng::Stream rng(43, "tfsum");
  std::vector<std::string> vocab = {"fever", "cough", "rash", "chills", "ache"};
  for (int it = 0; it < 20; ++it) {
    std::vector<std::string> corpus;
    for (int d = 0; d < 3; ++d) {
      std::string doc;
      int len = static_cast<int>(rng.uniform_int(2, 8));
      for (int w = 0; w < len; ++w) {
        if (w > 0) doc += " ";
        doc += vocab[rng.index(vocab.size())];
      }
      corpus.push_back(doc);
    }
    auto stats = kw::build_stats(corpus);
    const std::string& narrative = corpus[0];
    auto tokens = kw::tokenize(narrative);
    std::set<std::string> distinct(tokens.begin(), tokens.end());
    double tf_sum = 0.0;
    for (const auto& term : distinct) {
      long c = std::count(tokens.begin(), tokens.end(), term);
      tf_sum += static_cast<double>(c) / static_cast<double>(tokens.size());
    }
    CHECK(tf_sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("extract_keywords thresholding and fallback") {
  auto stats = kw::build_stats(kThreeDocs);

  // fever in doc 1: tf=1/2, idf=ln(3/3)=0 -> 0 <= 0.1; cough qualifies
  auto set = kw::extract_keywords(kThreeDocs[0], stats, 0.1);
  REQUIRE(set.terms.size() == 1);
  CHECK(set.terms[0].first == "cough");
  CHECK_FALSE(set.fallback);

  // threshold above every score fires the top-3 fallback
  auto fb = kw::extract_keywords(kThreeDocs[0], stats, 10.0);
  CHECK(fb.fallback);
  CHECK(fb.terms.size() == 2);  // doc has only two distinct terms
  CHECK(fb.terms[0].first == "cough");

  // permissive threshold keeps every term
  auto all = kw::extract_keywords(kThreeDocs[0], stats, -1.0);
  CHECK(all.terms.size() == 2);

  // scores sorted descending
  for (std::size_t i = 1; i < all.terms.size(); ++i) {
    CHECK(all.terms[i - 1].second >= all.terms[i].second);
  }
}

TEST_CASE("keyword sets nest as theta grows") {
  rng::Stream rng(47, "nest");
  std::vector<std::string> vocab = {"fever", "cough", "rash", "chills", "ache", "sore"};
  for (int it = 0; it < 20; ++it) {
    std::vector<std::string> corpus;
    for (int d = 0; d < 4; ++d) {
      std::string doc;
      int len = static_cast<int>(rng.uniform_int(3, 9));
      for (int w = 0; w < len; ++w) {
        if (w > 0) doc += " ";
        doc += vocab[rng.index(vocab.size())];
      }
      corpus.push_back(doc);
    }
    auto stats = kw::build_stats(corpus);
    auto loose = kw::extract_keywords(corpus[0], stats, 0.01);
    auto tight = kw::extract_keywords(corpus[0], stats, 0.2);
    if (!loose.fallback && !tight.fallback) {
      std::set<std::string> loose_terms, tight_terms;
      for (const auto& [t, s] : loose.terms) loose_terms.insert(t);
      for (const auto& [t, s] : tight.terms) tight_terms.insert(t);
      for (const auto& t : tight_terms) CHECK(loose_terms.count(t) == 1);
    }
  }
}

TEST_CASE("tokenizer drops short tokens and stop words") {
  auto toks = kw::tokenize("The a I fever, and COUGH-like pain!");
  CHECK(toks == std::vector<std::string>{"fever", "cough", "like", "pain"});
}

TEST_CASE("stats cache round-trips and is keyed by corpus hash") {
  auto stats = kw::build_stats(kThreeDocs);
  auto path = std::filesystem::temp_directory_path() / "kpi_stats_cache.json";
  stats.save(path.string(), "hash1");

  kw::CorpusStats loaded;
  CHECK(kw::CorpusStats::load(path.string(), "hash1", loaded));
  CHECK(loaded.doc_count == stats.doc_count);
  CHECK(loaded.doc_frequency == stats.doc_frequency);

  kw::CorpusStats stale;
  CHECK_FALSE(kw::CorpusStats::load(path.string(), "other", stale));
  std::filesystem::remove(path);
}
