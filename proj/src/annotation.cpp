#include "pronref/annotation.hpp"

#include <algorithm>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>

#include "pronref/error.hpp"
#include "pronref/log.hpp"
#include "pronref/text.hpp"

namespace pronref {
namespace {

using nlohmann::json;

// instance_id -> labels in record order
std::map<std::string, std::vector<RefClass>> units_of(std::span<const AnnotationRecord> records) {
  std::map<std::string, std::vector<RefClass>> units;
  for (const auto& r : records) units[r.instance_id].push_back(r.label);
  return units;
}

template <typename F>
void for_each_jsonl(std::istream& in, const char* what, F&& f) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError(std::string(what) + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(std::string(what) + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string_view to_string(Provenance p) { return p == Provenance::Agreed ? "agreed" : "resolved"; }

}  // namespace

std::vector<AnnotationRecord> read_annotations_jsonl(std::istream& in) {
  std::vector<AnnotationRecord> out;
  for_each_jsonl(in, "annotations", [&](const json& j) {
    out.push_back({j.at("instance_id").get<std::string>(), j.at("annotator").get<std::string>(),
                   ref_class_from_string(j.at("label").get<std::string>())});
  });
  check_single_label(out);
  return out;
}

void write_annotations_jsonl(std::ostream& out, std::span<const AnnotationRecord> records) {
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["instance_id"] = r.instance_id;
    j["annotator"] = r.annotator_id;
    j["label"] = std::string(to_string(r.label));
    out << j.dump() << '\n';
  }
}

void check_single_label(std::span<const AnnotationRecord> records) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : records) {
    if (!seen.emplace(r.instance_id, r.annotator_id).second)
      throw DataError("annotator '" + r.annotator_id + "' labeled " + r.instance_id + " more than once");
  }
}

std::map<std::string, RefClass> labels_of(std::span<const AnnotationRecord> records,
                                          const std::string& annotator) {
  std::map<std::string, RefClass> out;
  for (const auto& r : records) {
    if (r.annotator_id == annotator) out[r.instance_id] = r.label;
  }
  return out;
}

std::vector<std::string> annotators(std::span<const AnnotationRecord> records) {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.annotator_id);
  return {ids.begin(), ids.end()};
}

// ---------------------------------------------------------------------------
// Krippendorff's alpha

double CoincidenceMatrix::total() const {
  double n = 0.0;
  for (const auto& row : o)
    for (double v : row) n += v;
  return n;
}

CoincidenceMatrix coincidences(std::span<const AnnotationRecord> records) {
  check_single_label(records);
  CoincidenceMatrix cm;
  for (const auto& [id, values] : units_of(records)) {
    const std::size_t m = values.size();
    if (m < 2) continue;
    ++cm.pairable_units;
    const double w = 1.0 / static_cast<double>(m - 1);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (i != j) cm.o[index_of(values[i])][index_of(values[j])] += w;
      }
    }
  }
  return cm;
}

double krippendorff_alpha(std::span<const AnnotationRecord> records) {
  const auto cm = coincidences(records);
  if (cm.pairable_units == 0) throw DataError("insufficient data: no instance has two annotations");

  std::array<double, kNumClasses> n_c{};
  double n = 0.0;
  double disagree = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      n_c[c] += cm.o[c][k];
      if (c != k) disagree += cm.o[c][k];
    }
    n += n_c[c];
  }
  double expected = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    for (std::size_t k = 0; k < kNumClasses; ++k)
      if (c != k) expected += n_c[c] * n_c[k];

  const double d_o = disagree / n;
  const double d_e = expected / (n * (n - 1.0));
  if (d_e == 0.0) {
    log::warn("Krippendorff's alpha: a single label occurs everywhere, alpha defined as 1");
    return 1.0;
  }
  return 1.0 - d_o / d_e;
}

double percent_agreement(std::span<const AnnotationRecord> records) {
  check_single_label(records);
  std::size_t pairable = 0, agreeing = 0;
  for (const auto& [id, values] : units_of(records)) {
    if (values.size() < 2) continue;
    ++pairable;
    if (std::all_of(values.begin(), values.end(), [&](RefClass v) { return v == values.front(); })) ++agreeing;
  }
  if (pairable == 0) throw DataError("insufficient data: no instance has two annotations");
  return static_cast<double>(agreeing) / static_cast<double>(pairable);
}

// ---------------------------------------------------------------------------
// Pairwise statistics

ConfusionMatrix confusion(std::span<const AnnotationRecord> records, const std::string& a,
                          const std::string& b) {
  check_single_label(records);
  auto la = labels_of(records, a);
  auto lb = labels_of(records, b);
  ConfusionMatrix cm{};
  for (const auto& [id, label_a] : la) {
    auto it = lb.find(id);
    if (it == lb.end()) continue;
    ++cm[index_of(it->second)][index_of(label_a)];
  }
  return cm;
}

PairwiseF1 pairwise_f1(std::span<const AnnotationRecord> records, const std::string& annotator_a,
                       const std::string& annotator_b) {
  const auto cm = confusion(records, annotator_a, annotator_b);
  PairwiseF1 out;
  std::size_t tp_total = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::size_t row = 0, col = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      row += cm[c][k];
      col += cm[k][c];
      out.shared += cm[c][k];
    }
    const std::size_t tp = cm[c][c];
    tp_total += tp;
    out.support_a[c] = col;
    out.support_b[c] = row;
    // 2TP + FP + FN = column total + row total
    out.f1[c] = row + col == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(row + col);
  }
  out.micro_f1 = out.shared == 0 ? 0.0 : static_cast<double>(tp_total) / static_cast<double>(out.shared);
  return out;
}

// ---------------------------------------------------------------------------
// Adjudication and gold files

std::vector<GoldRecord> adjudicate(std::span<const AnnotationRecord> records_a,
                                   std::span<const AnnotationRecord> records_b,
                                   const std::map<std::string, RefClass>& resolutions) {
  check_single_label(records_a);
  check_single_label(records_b);
  std::map<std::string, RefClass> la, lb;
  for (const auto& r : records_a) la[r.instance_id] = r.label;
  for (const auto& r : records_b) lb[r.instance_id] = r.label;

  std::set<std::string> ids;
  for (const auto& [id, _] : la) ids.insert(id);
  for (const auto& [id, _] : lb) ids.insert(id);

  std::vector<GoldRecord> gold;
  std::vector<std::string> missing;
  for (const auto& id : ids) {
    auto ia = la.find(id);
    auto ib = lb.find(id);
    if (ia != la.end() && ib != lb.end() && ia->second == ib->second) {
      gold.push_back({id, ia->second, Provenance::Agreed});
    } else if (auto r = resolutions.find(id); r != resolutions.end()) {
      gold.push_back({id, r->second, Provenance::Resolved});
    } else {
      missing.push_back(id);
    }
  }
  if (!missing.empty())
    throw DataError("missing resolution for " + std::to_string(missing.size()) +
                    " disagreeing instance(s): " + join(missing, ", "));
  return gold;
}

std::vector<GoldRecord> read_gold_jsonl(std::istream& in) {
  std::vector<GoldRecord> out;
  std::set<std::string> seen;
  for_each_jsonl(in, "gold", [&](const json& j) {
    GoldRecord g;
    g.instance_id = j.at("instance_id").get<std::string>();
    g.label = ref_class_from_string(j.at("label").get<std::string>());
    g.provenance = j.value("provenance", "agreed") == "resolved" ? Provenance::Resolved : Provenance::Agreed;
    if (!seen.insert(g.instance_id).second) throw DataError("duplicate gold instance " + g.instance_id);
    out.push_back(std::move(g));
  });
  return out;
}

void write_gold_jsonl(std::ostream& out, std::span<const GoldRecord> gold) {
  for (const auto& g : gold) {
    nlohmann::ordered_json j;
    j["instance_id"] = g.instance_id;
    j["label"] = std::string(to_string(g.label));
    j["provenance"] = std::string(to_string(g.provenance));
    out << j.dump() << '\n';
  }
}

std::map<std::string, RefClass> read_label_map_jsonl(std::istream& in) {
  std::map<std::string, RefClass> out;
  for_each_jsonl(in, "labels", [&](const json& j) {
    auto id = j.at("instance_id").get<std::string>();
    if (!out.emplace(id, ref_class_from_string(j.at("label").get<std::string>())).second)
      throw DataError("duplicate instance " + id);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reports

AgreementReport agreement_report(std::span<const AnnotationRecord> records, const std::string& a,
                                 const std::string& b, std::span<const GoldRecord> gold) {
  AgreementReport r;
  r.annotator_a = a;
  r.annotator_b = b;
  r.alpha = krippendorff_alpha(records);
  r.percent_agreement = percent_agreement(records);
  r.f1 = pairwise_f1(records, a, b);
  r.confusion = confusion(records, a, b);
  if (!gold.empty()) {
    ClassCounts support{};
    for (const auto& g : gold) ++support[index_of(g.label)];
    r.gold_support = support;
  }
  return r;
}

void write_agreement_json(std::ostream& out, const AgreementReport& report) {
  nlohmann::ordered_json j;
  j["annotator_a"] = report.annotator_a;
  j["annotator_b"] = report.annotator_b;
  j["alpha"] = report.alpha;
  j["percent_agreement"] = report.percent_agreement;
  j["micro_f1"] = report.f1.micro_f1;
  j["shared_instances"] = report.f1.shared;
  nlohmann::ordered_json per_class;
  for (RefClass c : kAllClasses) {
    nlohmann::ordered_json e;
    e["f1"] = report.f1.f1[index_of(c)];
    e["count_a"] = report.f1.support_a[index_of(c)];
    e["count_b"] = report.f1.support_b[index_of(c)];
    if (report.gold_support) e["support"] = (*report.gold_support)[index_of(c)];
    per_class[std::string(to_string(c))] = e;
  }
  j["per_class"] = per_class;
  j["confusion_rows"] = report.annotator_b;
  j["confusion_columns"] = report.annotator_a;
  j["confusion"] = report.confusion;
  out << j.dump(2) << '\n';
}

void write_agreement_table(std::ostream& out, const AgreementReport& report) {
  out << "alpha\t" << format_fixed(report.alpha, 4) << '\n'
      << "percent_agreement\t" << format_fixed(100.0 * report.percent_agreement, 1) << '\n'
      << '\n'
      << "class\tF1\tsupport\n";
  std::size_t total_support = 0;
  for (RefClass c : kAllClasses) {
    std::size_t support = report.gold_support ? (*report.gold_support)[index_of(c)]
                                              : report.f1.support_a[index_of(c)];
    total_support += support;
    out << to_string(c) << '\t' << format_fixed(100.0 * report.f1.f1[index_of(c)], 1) << '\t' << support
        << '\n';
  }
  out << "Total\t" << format_fixed(100.0 * report.f1.micro_f1, 1) << '\t' << total_support << "\n\n";

  out << report.annotator_b << " \\ " << report.annotator_a;
  for (RefClass c : kAllClasses) out << '\t' << to_string(c);
  out << '\n';
  for (RefClass r : kAllClasses) {
    out << to_string(r);
    for (RefClass c : kAllClasses) out << '\t' << report.confusion[index_of(r)][index_of(c)];
    out << '\n';
  }
}

}  // namespace pronref
