#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance suite. They favour directness over speed.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pronref/annotation.hpp"
#include "pronref/corpus.hpp"
#include "pronref/depmatch.hpp"
#include "pronref/features.hpp"
#include "pronref/random.hpp"
#include "pronref/weaksup.hpp"

namespace oracle {

using namespace pronref;

/// Nominal alpha from explicit pair enumeration: units are value lists.
double alpha_by_pairs(const std::vector<std::vector<int>>& units);

/// Records for the units above: annotator "c<i>" gives units[u][i].
std::vector<AnnotationRecord> records_from_units(const std::vector<std::vector<int>>& units);

/// All matches of a pattern found by trying every injective token tuple in
/// lexicographic order; keeps the first tuple per anchor.
std::vector<Match> enumerate_matches(const Pattern& pattern, const Segment& segment);

/// Random single-sentence segment with a valid tree of `n` tokens.
Segment random_segment(Rng& rng, std::size_t n);
/// Random valid pattern with 1..max_nodes nodes.
Pattern random_pattern(Rng& rng, std::size_t max_nodes);

/// Pearson chi-squared from observed and expected cell counts.
double pearson_chi2(double a, double b, double c, double d);

/// Terms of an example recomputed without the library: side-tagged n-grams
/// over lower-cased lemmas (or forms), punctuation dropped.
std::map<std::string, std::size_t> terms_of(const FeatureExample& example, const FeatureConfig& config);

/// Labeled feature examples over a small vocabulary skewed per class.
struct ToyCorpus {
  std::vector<FeatureExample> examples;
  std::vector<RefClass> labels;
};

ToyCorpus toy_feature_corpus(std::uint64_t seed, std::size_t n);

/// One-vs-rest chi-squared per term, maximized over the classes present.
std::map<std::string, double> brute_chi2(const ToyCorpus& toy, const FeatureConfig& config);

/// L2-normalized tf-idf n-gram block of one example, keyed by column.
std::map<std::size_t, double> tfidf_by_hand(const FeatureExample& example, const std::vector<std::string>& terms,
                                            const std::map<std::string, std::size_t>& df, std::size_t n_docs,
                                            const FeatureConfig& config);

/// Planted-parameter synthetic matrix.
struct Planted {
  LabelMatrix matrix;
  std::vector<RefClass> truth;
  std::vector<double> accuracy;
  std::vector<double> propensity;
  ClassVector priors{};
};

Planted planted_matrix(std::uint64_t seed, std::size_t rows, std::size_t lfs, double acc_lo, double acc_hi,
                       double prop_lo, double prop_hi);

/// Segment with one sentence per entry; each token is "form/lemma/UPOS/head/deprel"
/// with 1-based heads (0 = root).
Segment parse_segment(const std::string& doc_id, int segment_index, const std::vector<std::string>& sentences,
                      const std::string& speaker = "S", Party party = Party::Other);

/// One row of the published word-form majority table.
struct MajorityRow {
  std::string form;
  RefClass label;
  std::size_t majority;
  std::size_t support;
  std::size_t distinct;
};

const std::vector<MajorityRow>& majority_table_rows();

/// Labeled forms reproducing every row: `majority` instances of the row's
/// class, the rest spread over distinct-1 other classes without beating it.
std::vector<std::pair<std::string, RefClass>> majority_table_instances();

std::filesystem::path fixture(const std::string& name);
std::filesystem::path data_file(const std::string& name);

std::string read_file(const std::filesystem::path& path);

}  // namespace oracle
