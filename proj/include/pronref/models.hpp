#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pronref/corpus.hpp"
#include "pronref/depmatch.hpp"
#include "pronref/features.hpp"
#include "pronref/refclass.hpp"
#include "pronref/weaksup.hpp"

namespace pronref {

/// A predicted label; std::nullopt stands for NONE.
struct Prediction {
  std::string instance_id;
  std::optional<RefClass> label;

  bool operator==(const Prediction&) const = default;
};

// ---------------------------------------------------------------------------
// Word-form majority

struct FormEntry {
  RefClass label = RefClass::Board;
  ClassCounts counts{};
  std::size_t support() const;
  std::size_t distinct_labels() const;
};

struct MajorityModel {
  std::map<std::string, FormEntry> forms;       // case-sensitive
  std::map<std::string, FormEntry> folded;      // case-folded backoff
  ClassCounts global_counts{};
  RefClass global_majority = RefClass::Board;

  RefClass predict(const std::string& form) const;
};

/// Plurality label per surface form. Ties go to the globally more frequent
/// class, then to canonical order.
MajorityModel fit_majority(std::span<const std::string> forms, std::span<const RefClass> labels);

/// Table of form, majority class, (majority count/support) and number of
/// distinct labels, ordered by support descending; the total row holds the
/// training accuracy of the decision rule.
void write_majority_table(std::ostream& out, const MajorityModel& model);

void write_majority_json(std::ostream& out, const MajorityModel& model);
MajorityModel read_majority_json(std::istream& in);

// ---------------------------------------------------------------------------
// Rule-based

/// Instances with at least one pattern hit get the label model's hard label
/// over their votes; the others get NONE. Pattern names must equal the
/// params' labeling functions.
std::vector<Prediction> predict_rule_based(std::span<const Pattern> patterns, const LabelModelParams& params,
                                           std::span<const PronounInstance> instances, const SegmentIndex& segments);

// ---------------------------------------------------------------------------
// Linear one-vs-rest hinge model

struct LinearHyper {
  double lambda = 1e-4;
  int epochs = 50;
  std::uint64_t seed = 42;

  bool operator==(const LinearHyper&) const = default;
};

struct LinearModel {
  std::size_t dim = 0;
  std::array<bool, kNumClasses> trained{};
  std::vector<std::vector<double>> weights;  // kNumClasses x dim
  ClassVector bias{};
  LinearHyper hyper;
  double t0 = 0.0;
  /// Regularized objective after each epoch.
  std::vector<double> loss_trace;

  ClassVector scores(const FeatureVector& x) const;
  /// Argmax over trained classes; ties go to canonical order.
  RefClass predict(const FeatureVector& x) const;
};

/// Stochastic subgradient descent on the L2-regularized hinge loss, one
/// binary problem per class, all sharing one sample order per epoch. Step
/// size 1/(lambda (t + t0)).
LinearModel fit_linear(std::span<const FeatureVector> x, std::span<const RefClass> y, const LinearHyper& hyper = {});

/// Weights as TSV (one row per feature, one column per class, first row
/// the bias) and the remaining state as JSON.
void write_linear_weights_tsv(std::ostream& out, const LinearModel& model, std::span<const std::string> feature_names);
void write_linear_json(std::ostream& out, const LinearModel& model);
LinearModel read_linear_model(std::istream& json_in, std::istream& weights_in);

}  // namespace pronref
