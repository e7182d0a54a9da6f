#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pronref/corpus.hpp"
#include "pronref/refclass.hpp"

namespace pronref {

struct FeatureConfig {
  std::size_t window = 20;
  bool use_unigrams = true;
  bool use_bigrams = true;
  bool use_trigrams = false;
  bool tfidf = true;
  bool lemmatise = true;
  bool remove_stopwords = false;
  std::size_t select_k = 300;
  bool include_wordform = true;
  bool include_ner = false;
  /// Used when remove_stopwords is set; compared after case folding.
  std::set<std::string> stopwords;

  bool operator==(const FeatureConfig&) const = default;
};

/// Throws UsageError for settings the featurizer cannot honour.
void validate(const FeatureConfig& config);

/// One word per line; blank lines and '#' comments are skipped.
std::set<std::string> load_stopwords(const std::filesystem::path& path);

/// What the featurizer sees of an instance.
struct FeatureExample {
  std::string instance_id;
  std::string form;
  std::vector<Token> left;
  std::vector<Token> right;
};

FeatureExample make_example(const PronounInstance& instance, const Segment& segment, std::size_t window);

/// Side-tagged n-gram counts ("L:..." / "R:..."). Punctuation tokens are
/// skipped; terms are case folded.
std::map<std::string, std::size_t> extract_terms(const FeatureExample& example, const FeatureConfig& config);

/// Selected n-gram terms. Column i holds terms[i]; terms are sorted.
struct Vocabulary {
  std::vector<std::string> terms;
  std::vector<std::size_t> df;
  std::vector<double> chi2;
  std::size_t n_docs = 0;
  bool fitted = false;

  std::size_t size() const { return terms.size(); }
  /// Column of a term or npos.
  std::size_t column(const std::string& term) const;
  double idf(std::size_t column) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// Chi-squared statistic of a 2x2 table [[a, b], [c, d]]; 0 when a margin
/// is empty.
double chi2_2x2(double a, double b, double c, double d);

/// Per-term chi-squared score: the maximum over one-vs-rest class tables of
/// term presence counts.
std::map<std::string, double> chi2_scores(std::span<const FeatureExample> examples, std::span<const RefClass> labels,
                                          const FeatureConfig& config);

Vocabulary fit_vocabulary(std::span<const FeatureExample> examples, std::span<const RefClass> labels,
                          const FeatureConfig& config);

/// Sparse feature vector: n-gram columns [0, vocab size) followed by the
/// word-form block. Indices are strictly increasing.
struct FeatureVector {
  std::vector<std::size_t> index;
  std::vector<double> value;
  std::size_t dim = 0;

  bool operator==(const FeatureVector&) const = default;
};

/// Word-form block: each inventory form lower-case and capitalized, plus
/// one slot for anything else.
const std::vector<std::string>& wordform_columns();
std::size_t wordform_slot(const std::string& form);

std::size_t feature_dim(const Vocabulary& vocab, const FeatureConfig& config);
std::vector<std::string> feature_names(const Vocabulary& vocab, const FeatureConfig& config);

FeatureVector transform(const FeatureExample& example, const Vocabulary& vocab, const FeatureConfig& config);

void write_vocabulary_tsv(std::ostream& out, const Vocabulary& vocab);
Vocabulary read_vocabulary_tsv(std::istream& in);

/// svmlight lines "<label> <index>:<value> ...", 1-based indices.
void write_svmlight(std::ostream& out, std::span<const FeatureVector> vectors, std::span<const RefClass> labels);

}  // namespace pronref
