#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pronref/refclass.hpp"

namespace pronref {

struct AnnotationRecord {
  std::string instance_id;
  std::string annotator_id;
  RefClass label = RefClass::Board;
};

/// Reads {instance_id, annotator, label} lines.
std::vector<AnnotationRecord> read_annotations_jsonl(std::istream& in);
void write_annotations_jsonl(std::ostream& out, std::span<const AnnotationRecord> records);

/// Throws DataError if an annotator labeled the same instance twice.
void check_single_label(std::span<const AnnotationRecord> records);

/// Per-instance labels of one annotator.
std::map<std::string, RefClass> labels_of(std::span<const AnnotationRecord> records,
                                          const std::string& annotator);

/// Sorted distinct annotator ids.
std::vector<std::string> annotators(std::span<const AnnotationRecord> records);

/// Value-by-value coincidence counts o_ck over pairable units (units with at
/// least two values); each ordered pair inside a unit of m values adds
/// 1/(m-1).
struct CoincidenceMatrix {
  std::array<std::array<double, kNumClasses>, kNumClasses> o{};
  std::size_t pairable_units = 0;
  double total() const;
};

CoincidenceMatrix coincidences(std::span<const AnnotationRecord> records);

/// Nominal Krippendorff's alpha for any number of annotators. Units with
/// fewer than two annotations are ignored. Throws DataError when nothing is
/// pairable; returns 1.0 with a warning when only one value occurs.
double krippendorff_alpha(std::span<const AnnotationRecord> records);

/// Share of units with at least two annotations on which all annotations agree.
double percent_agreement(std::span<const AnnotationRecord> records);

struct PairwiseF1 {
  ClassVector f1{};
  ClassCounts support_a{};  // reference annotator's counts
  ClassCounts support_b{};
  double micro_f1 = 0.0;
  std::size_t shared = 0;
};

/// F1 = 2TP/(2TP+FP+FN) per class over the instances both annotators
/// labeled, with `annotator_a` as reference.
PairwiseF1 pairwise_f1(std::span<const AnnotationRecord> records, const std::string& annotator_a,
                       const std::string& annotator_b);

/// Cell (i, j) counts shared instances labeled class j by `a` and class i by `b`.
ConfusionMatrix confusion(std::span<const AnnotationRecord> records, const std::string& a,
                          const std::string& b);

enum class Provenance { Agreed, Resolved };

struct GoldRecord {
  std::string instance_id;
  RefClass label = RefClass::Board;
  Provenance provenance = Provenance::Agreed;
};

/// Merges two annotation passes. Agreeing instances keep the shared label,
/// all others need an entry in `resolutions`; missing ones are listed in the
/// thrown DataError. Output is sorted by instance_id.
std::vector<GoldRecord> adjudicate(std::span<const AnnotationRecord> records_a,
                                   std::span<const AnnotationRecord> records_b,
                                   const std::map<std::string, RefClass>& resolutions);

std::vector<GoldRecord> read_gold_jsonl(std::istream& in);
void write_gold_jsonl(std::ostream& out, std::span<const GoldRecord> gold);
/// Reads {instance_id, label} lines (extra keys ignored).
std::map<std::string, RefClass> read_label_map_jsonl(std::istream& in);

struct AgreementReport {
  double alpha = 0.0;
  double percent_agreement = 0.0;
  PairwiseF1 f1;
  ConfusionMatrix confusion{};
  std::optional<ClassCounts> gold_support;
  std::string annotator_a;
  std::string annotator_b;
};

AgreementReport agreement_report(std::span<const AnnotationRecord> records, const std::string& a,
                                 const std::string& b, std::span<const GoldRecord> gold = {});

void write_agreement_json(std::ostream& out, const AgreementReport& report);
/// Class / F1 / support table followed by the confusion matrix.
void write_agreement_table(std::ostream& out, const AgreementReport& report);

}  // namespace pronref
