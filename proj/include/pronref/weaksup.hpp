#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pronref/corpus.hpp"
#include "pronref/depmatch.hpp"
#include "pronref/refclass.hpp"

namespace pronref {

inline constexpr std::int8_t kAbstain = -1;

/// Instances x labeling functions (one per pattern). A cell holds the
/// pattern's class index when the pattern matched the instance, kAbstain
/// otherwise.
struct LabelMatrix {
  std::vector<std::string> instance_ids;
  std::vector<std::string> lf_names;
  std::vector<RefClass> lf_labels;
  std::vector<std::int8_t> cells;  // row-major
  /// Extracted instances left out because every LF abstained.
  std::size_t excluded = 0;

  std::size_t rows() const { return instance_ids.size(); }
  std::size_t cols() const { return lf_names.size(); }
  std::int8_t at(std::size_t r, std::size_t c) const { return cells[r * cols() + c]; }
  std::span<const std::int8_t> row(std::size_t r) const { return {cells.data() + r * cols(), cols()}; }
};

/// Applies every pattern to the segments. Throws DataError when a segment
/// belongs to one of `test_docs`.
LabelMatrix build_matrix(std::span<const Pattern> patterns, std::span<const Segment> segments,
                         const std::set<std::string>& test_docs = {});

/// Same, from an existing hit table over `instances`.
LabelMatrix matrix_from_hits(std::span<const Pattern> patterns, const HitTable& hits,
                             std::span<const PronounInstance> instances);

void write_matrix_tsv(std::ostream& out, const LabelMatrix& matrix);
LabelMatrix read_matrix_tsv(std::istream& in);

enum class SilverSource { Majority, LabelModel };

struct SilverLabel {
  std::string instance_id;
  ClassVector posterior{};
  RefClass hard_label = RefClass::Board;
  SilverSource source = SilverSource::Majority;
};

/// Plurality over non-abstain votes; the posterior is the vote share. Ties go
/// to the class with more votes corpus-wide, then to canonical order.
std::vector<SilverLabel> majority_vote(const LabelMatrix& matrix);

/// Corpus-wide share of votes per class.
ClassVector vote_shares(const LabelMatrix& matrix);

struct LabelModelOptions {
  int max_iter = 100;
  double tol = 1e-6;
  /// Initialization is deterministic; the seed is recorded for provenance.
  std::uint64_t seed = 42;
};

/// Generative model with one accuracy and one propensity per LF: each LF
/// votes with probability `propensity`, votes the true class with
/// probability `accuracy` and otherwise one of the other eight classes
/// uniformly.
struct LabelModelParams {
  std::vector<std::string> lf_names;
  std::vector<RefClass> lf_labels;
  ClassVector priors{};
  std::vector<double> accuracy;
  std::vector<double> propensity;
  std::vector<double> log_likelihood_trace;
  int iterations = 0;
  bool converged = false;
  LabelModelOptions options;
};

inline constexpr double kParamFloor = 0.01;
inline constexpr double kParamCeil = 0.99;

/// Fits by EM. Needs at least two LFs and one row.
LabelModelParams fit_label_model(const LabelMatrix& matrix, const LabelModelOptions& options = {});

/// Marginal log-likelihood of the matrix under `params`.
double log_likelihood(const LabelMatrix& matrix, const LabelModelParams& params);

/// Full generative posterior P(y | votes) of one row.
ClassVector model_posterior(std::span<const std::int8_t> votes, const LabelModelParams& params);

/// Silver label of one row: the model posterior renormalized over the
/// classes that received a vote (the priors when every LF abstains). Ties go
/// to the higher prior, then to canonical order.
SilverLabel predict_row(const std::string& instance_id, std::span<const std::int8_t> votes,
                        const LabelModelParams& params);

std::vector<SilverLabel> predict_silver(const LabelMatrix& matrix, const LabelModelParams& params);

void write_params_json(std::ostream& out, const LabelModelParams& params);
LabelModelParams read_params_json(std::istream& in);

void write_silver_jsonl(std::ostream& out, std::span<const SilverLabel> silver, const LabelMatrix& matrix);
std::vector<SilverLabel> read_silver_jsonl(std::istream& in);

/// Keeps at most `cap` labels per hard class, sampled uniformly without
/// replacement. Output keeps input order.
std::vector<SilverLabel> downsample(std::span<const SilverLabel> silver, std::size_t cap, std::uint64_t seed);

struct ReviewRow {
  RefClass label = RefClass::Board;
  std::string instance_id;
  double confidence = 0.0;
  std::string left;
  std::string pronoun;
  std::string right;
};

/// Up to `n_per_class` randomly chosen labels per class with their context,
/// grouped by class in canonical order.
std::vector<ReviewRow> sample_for_review(std::span<const SilverLabel> silver, std::size_t n_per_class,
                                         std::uint64_t seed, const SegmentIndex& segments,
                                         std::size_t context_width = 20);

/// Tab-separated sheet with an empty verdict column for the reviewer.
void write_review_sheet(std::ostream& out, std::span<const ReviewRow> rows);

}  // namespace pronref
