#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pronref/corpus.hpp"
#include "pronref/depmatch.hpp"
#include "pronref/features.hpp"
#include "pronref/models.hpp"
#include "pronref/refclass.hpp"
#include "pronref/weaksup.hpp"

namespace pronref {

using LabelMap = std::map<std::string, RefClass>;

struct ClassScore {
  std::size_t gold = 0;  // support
  std::size_t hits = 0;  // predictions of this class
  std::size_t tp = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t none = 0;  // NONE predictions
  double accuracy = 0.0;
  double micro_precision = 0.0;  // over non-NONE predictions
  std::array<ClassScore, kNumClasses> per_class{};
  ConfusionMatrix confusion{};  // rows gold, columns predicted; NONE left out
  /// Free-form key/value context (model, regime, notes).
  std::vector<std::pair<std::string, std::string>> meta;
};

/// Every gold instance needs exactly one prediction; predictions for
/// unknown instances are errors. NONE counts as wrong.
EvalReport score(const LabelMap& gold, std::span<const Prediction> predictions);

void write_report_json(std::ostream& out, const EvalReport& report);
/// Class / #Gold / #Hits / TP / Prec / Rec / F1 table in percent, with a
/// total row carrying the accuracy.
void write_report_table(std::ostream& out, const EvalReport& report);

/// JSONL {instance_id, label}; label is a class name or null for NONE
/// ("NONE" is accepted on input).
void write_predictions_jsonl(std::ostream& out, std::span<const Prediction> predictions);
std::vector<Prediction> read_predictions_jsonl(std::istream& in);

// ---------------------------------------------------------------------------
// Folds

struct FoldPlan {
  std::size_t k = 5;
  std::uint64_t seed = 42;
  bool stratified = true;
};

struct FoldAssignment {
  std::size_t k = 0;
  std::map<std::string, std::size_t> fold;  // instance_id -> fold

  std::size_t fold_of(const std::string& instance_id) const;
};

/// Stratified: each class's instances, sorted by id and shuffled, are dealt
/// to folds in turn, continuing across classes in canonical order. Classes
/// smaller than k are warned about.
FoldAssignment make_folds(const LabelMap& gold, const FoldPlan& plan);

/// JSONL {instance_id, fold} ordered by instance id.
void write_folds_jsonl(std::ostream& out, const FoldAssignment& folds);
FoldAssignment read_folds_jsonl(std::istream& in);

// ---------------------------------------------------------------------------
// Cross-validation

enum class ModelKind { Majority, Rule, Linear };
enum class Regime { T1, T2, T3 };

std::optional<ModelKind> parse_model_kind(std::string_view name);
std::string_view to_string(ModelKind m);
std::optional<Regime> parse_regime(std::string_view name);
std::string_view to_string(Regime r);

struct CVInputs {
  std::span<const PronounInstance> gold_instances;
  const LabelMap* gold_labels = nullptr;
  const SegmentIndex* gold_segments = nullptr;
  /// Silver labels and their corpus; used by T2/T3.
  std::span<const SilverLabel> silver;
  const SegmentIndex* silver_segments = nullptr;
  /// Needed by the rule model.
  std::span<const Pattern> patterns;
  const LabelModelParams* params = nullptr;
};

struct CVOptions {
  ModelKind model = ModelKind::Linear;
  Regime regime = Regime::T1;
  FeatureConfig features;
  LinearHyper linear;
  std::size_t silver_cap = 300;
  std::uint64_t silver_seed = 42;
  /// Called with (fold, instance_id) for every gold label read while
  /// training the model for `fold`.
  std::function<void(std::size_t, const std::string&)> on_train_label;
};

struct CVResult {
  std::vector<Prediction> predictions;  // pooled, in gold instance order
  EvalReport report;
  Regime effective_regime = Regime::T1;
  std::size_t silver_used = 0;
};

/// Trains on k-1 folds, predicts the held-out fold, pools all predictions
/// and scores them once. For these models T3 runs as T2; the report says so.
CVResult cross_validate(const CVInputs& inputs, const FoldAssignment& folds, const CVOptions& options);

}  // namespace pronref
