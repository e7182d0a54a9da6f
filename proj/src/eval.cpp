#include "pronref/eval.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>

#include "pronref/error.hpp"
#include "pronref/log.hpp"
#include "pronref/random.hpp"
#include "pronref/text.hpp"

namespace pronref {
namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

double ratio(std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; }

std::string percent(double v) { return format_fixed(100.0 * v, 0); }

}  // namespace

EvalReport score(const LabelMap& gold, std::span<const Prediction> predictions) {
  EvalReport r;
  r.n = gold.size();
  std::set<std::string> seen;
  for (const auto& p : predictions) {
    auto it = gold.find(p.instance_id);
    if (it == gold.end()) throw DataError("prediction for unknown instance '" + p.instance_id + "'");
    if (!seen.insert(p.instance_id).second) throw DataError("duplicate prediction for '" + p.instance_id + "'");
    const std::size_t g = index_of(it->second);
    ++r.per_class[g].gold;
    if (!p.label) {
      ++r.none;
      continue;
    }
    const std::size_t y = index_of(*p.label);
    ++r.per_class[y].hits;
    ++r.confusion[g][y];
    if (g == y) {
      ++r.per_class[g].tp;
      ++r.correct;
    }
  }
  if (seen.size() != gold.size()) {
    for (const auto& [id, label] : gold)
      if (!seen.count(id)) throw DataError("no prediction for gold instance '" + id + "'");
  }
  std::size_t hits = 0;
  for (auto& c : r.per_class) {
    c.precision = ratio(c.tp, c.hits);
    c.recall = ratio(c.tp, c.gold);
    c.f1 = c.precision + c.recall > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
    hits += c.hits;
  }
  r.accuracy = ratio(r.correct, r.n);
  r.micro_precision = ratio(r.correct, hits);
  return r;
}

void write_report_json(std::ostream& out, const EvalReport& r) {
  ordered_json j;
  for (const auto& [k, v] : r.meta) j[k] = v;
  j["n"] = r.n;
  j["correct"] = r.correct;
  j["none"] = r.none;
  j["accuracy"] = r.accuracy;
  j["micro_precision"] = r.micro_precision;
  ordered_json per = ordered_json::object();
  for (RefClass c : kAllClasses) {
    const auto& s = r.per_class[index_of(c)];
    per[std::string(to_string(c))] = {{"gold", s.gold},       {"hits", s.hits}, {"tp", s.tp},
                                      {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
  }
  j["per_class"] = per;
  std::vector<std::string> labels;
  for (RefClass c : kAllClasses) labels.emplace_back(to_string(c));
  j["confusion"] = {{"rows", "gold"}, {"labels", labels}, {"matrix", r.confusion}};
  out << j.dump(2) << '\n';
}

void write_report_table(std::ostream& out, const EvalReport& r) {
  for (const auto& [k, v] : r.meta) out << "# " << k << ": " << v << '\n';
  out << "Class\t#Gold\t#Hits\tTP\tPrec\tRec\tF1\n";
  std::size_t hits = 0;
  for (RefClass c : kAllClasses) {
    const auto& s = r.per_class[index_of(c)];
    hits += s.hits;
    out << to_string(c) << '\t' << s.gold << '\t' << s.hits << '\t' << s.tp << '\t' << percent(s.precision) << '\t'
        << percent(s.recall) << '\t' << percent(s.f1) << '\n';
  }
  out << "Total\t" << r.n << '\t' << hits << '\t' << r.correct << "\tAcc = " << format_fixed(100.0 * r.accuracy, 1)
      << "%\n";
}

void write_predictions_jsonl(std::ostream& out, std::span<const Prediction> predictions) {
  for (const auto& p : predictions) {
    ordered_json j;
    j["instance_id"] = p.instance_id;
    j["label"] = p.label ? json(std::string(to_string(*p.label))) : json(nullptr);
    out << j.dump() << '\n';
  }
}

std::vector<Prediction> read_predictions_jsonl(std::istream& in) {
  std::vector<Prediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      Prediction p;
      p.instance_id = j.at("instance_id").get<std::string>();
      const auto& label = j.at("label");
      if (!label.is_null()) {
        auto name = label.get<std::string>();
        if (ascii_upper(name) != "NONE") p.label = ref_class_from_string(name);
      }
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw DataError("predictions line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t FoldAssignment::fold_of(const std::string& instance_id) const {
  auto it = fold.find(instance_id);
  if (it == fold.end()) throw DataError("instance '" + instance_id + "' has no fold");
  return it->second;
}

FoldAssignment make_folds(const LabelMap& gold, const FoldPlan& plan) {
  if (plan.k < 2) throw UsageError("cross-validation needs k >= 2");
  if (gold.size() < plan.k)
    throw DataError(std::to_string(gold.size()) + " instances cannot fill " + std::to_string(plan.k) + " folds");
  Rng rng(plan.seed);
  std::vector<std::string> order;
  order.reserve(gold.size());
  if (plan.stratified) {
    std::array<std::vector<std::string>, kNumClasses> by_class;
    for (const auto& [id, label] : gold) by_class[index_of(label)].push_back(id);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      auto& ids = by_class[c];
      if (!ids.empty() && ids.size() < plan.k)
        log::warn("class " + std::string(to_string(class_at(c))) + " has " + std::to_string(ids.size()) +
                  " instances, fewer than " + std::to_string(plan.k) + " folds");
      rng.shuffle(std::span<std::string>(ids));
      order.insert(order.end(), ids.begin(), ids.end());
    }
  } else {
    for (const auto& [id, label] : gold) order.push_back(id);
    rng.shuffle(std::span<std::string>(order));
  }
  FoldAssignment a;
  a.k = plan.k;
  for (std::size_t i = 0; i < order.size(); ++i) a.fold[order[i]] = i % plan.k;
  return a;
}

void write_folds_jsonl(std::ostream& out, const FoldAssignment& folds) {
  for (const auto& [id, f] : folds.fold) {
    ordered_json j;
    j["instance_id"] = id;
    j["fold"] = f;
    out << j.dump() << '\n';
  }
}

FoldAssignment read_folds_jsonl(std::istream& in) {
  FoldAssignment a;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      auto id = j.at("instance_id").get<std::string>();
      auto f = j.at("fold").get<std::size_t>();
      if (!a.fold.emplace(id, f).second) throw DataError("duplicate instance '" + id + "'");
      a.k = std::max(a.k, f + 1);
    } catch (const std::exception& e) {
      throw DataError("fold file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return a;
}

// ---------------------------------------------------------------------------

std::optional<ModelKind> parse_model_kind(std::string_view name) {
  if (name == "majority") return ModelKind::Majority;
  if (name == "rule") return ModelKind::Rule;
  if (name == "linear") return ModelKind::Linear;
  return std::nullopt;
}

std::string_view to_string(ModelKind m) {
  switch (m) {
    case ModelKind::Majority: return "majority";
    case ModelKind::Rule: return "rule";
    case ModelKind::Linear: return "linear";
  }
  return "?";
}

std::optional<Regime> parse_regime(std::string_view name) {
  const auto up = ascii_upper(name);
  if (up == "T1") return Regime::T1;
  if (up == "T2") return Regime::T2;
  if (up == "T3") return Regime::T3;
  return std::nullopt;
}

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::T1: return "T1";
    case Regime::T2: return "T2";
    case Regime::T3: return "T3";
  }
  return "?";
}

namespace {

struct TrainItem {
  const PronounInstance* instance;  // gold instance or owned silver instance
  const Segment* segment;
  RefClass label;
};

}  // namespace

CVResult cross_validate(const CVInputs& in, const FoldAssignment& folds, const CVOptions& opt) {
  if (!in.gold_labels) throw UsageError("cross-validation needs gold labels");
  if (!in.gold_segments) throw UsageError("cross-validation needs the gold corpus");
  if (folds.k < 2) throw DataError("fold assignment has fewer than two folds");
  const LabelMap& gold = *in.gold_labels;

  for (const auto& inst : in.gold_instances) {
    if (!gold.count(inst.instance_id)) throw DataError("gold instance '" + inst.instance_id + "' has no label");
    folds.fold_of(inst.instance_id);
  }
  if (gold.size() != in.gold_instances.size())
    throw DataError("gold labels and gold instances differ (" + std::to_string(gold.size()) + " vs " +
                    std::to_string(in.gold_instances.size()) + ")");

  CVResult result;
  result.effective_regime = opt.regime == Regime::T3 ? Regime::T2 : opt.regime;
  if (opt.model == ModelKind::Rule) result.effective_regime = Regime::T1;

  // Silver augmentation, shared by every fold.
  std::vector<PronounInstance> silver_instances;
  std::vector<RefClass> silver_labels;
  std::vector<const Segment*> silver_segs;
  if (result.effective_regime == Regime::T2 && !in.silver.empty()) {
    for (const auto& s : in.silver)
      if (gold.count(s.instance_id)) throw DataError("silver instance '" + s.instance_id + "' is also a gold instance");
    if (!in.silver_segments) throw UsageError("T2 needs the silver corpus");
    for (const auto& s : downsample(in.silver, opt.silver_cap, opt.silver_seed)) {
      auto inst = parse_instance_id(s.instance_id);
      if (!inst) throw DataError("malformed silver instance id '" + s.instance_id + "'");
      const Segment& seg = in.silver_segments->at(*inst);
      inst->form = seg.token(inst->flat_token_index).form;
      silver_instances.push_back(std::move(*inst));
      silver_labels.push_back(s.hard_label);
      silver_segs.push_back(&seg);
    }
  }
  result.silver_used = silver_instances.size();

  std::map<std::string, Prediction> pooled;
  if (opt.model == ModelKind::Rule) {
    if (!in.params) throw UsageError("the rule model needs fitted label model parameters");
    for (auto& p : predict_rule_based(in.patterns, *in.params, in.gold_instances, *in.gold_segments))
      pooled[p.instance_id] = std::move(p);
  } else {
    if (opt.model == ModelKind::Linear) validate(opt.features);
    for (std::size_t f = 0; f < folds.k; ++f) {
      std::vector<TrainItem> train;
      std::vector<const PronounInstance*> test;
      for (const auto& inst : in.gold_instances) {
        if (folds.fold_of(inst.instance_id) == f) {
          test.push_back(&inst);
        } else {
          if (opt.on_train_label) opt.on_train_label(f, inst.instance_id);
          train.push_back({&inst, &in.gold_segments->at(inst), gold.at(inst.instance_id)});
        }
      }
      if (test.empty()) continue;
      for (std::size_t i = 0; i < silver_instances.size(); ++i)
        train.push_back({&silver_instances[i], silver_segs[i], silver_labels[i]});
      if (train.empty()) throw DataError("fold " + std::to_string(f) + " has no training data");

      if (opt.model == ModelKind::Majority) {
        std::vector<std::string> forms;
        std::vector<RefClass> labels;
        for (const auto& t : train) {
          forms.push_back(t.segment->token(t.instance->flat_token_index).form);
          labels.push_back(t.label);
        }
        auto model = fit_majority(forms, labels);
        for (const auto* inst : test) {
          const auto& form = in.gold_segments->at(*inst).token(inst->flat_token_index).form;
          pooled[inst->instance_id] = {inst->instance_id, model.predict(form)};
        }
      } else {
        std::vector<FeatureExample> examples;
        std::vector<RefClass> labels;
        for (const auto& t : train) {
          examples.push_back(make_example(*t.instance, *t.segment, opt.features.window));
          labels.push_back(t.label);
        }
        auto vocab = fit_vocabulary(examples, labels, opt.features);
        std::vector<FeatureVector> x;
        x.reserve(examples.size());
        for (const auto& e : examples) x.push_back(transform(e, vocab, opt.features));
        auto model = fit_linear(x, labels, opt.linear);
        for (const auto* inst : test) {
          auto e = make_example(*inst, in.gold_segments->at(*inst), opt.features.window);
          pooled[inst->instance_id] = {inst->instance_id, model.predict(transform(e, vocab, opt.features))};
        }
      }
    }
  }

  result.predictions.reserve(in.gold_instances.size());
  for (const auto& inst : in.gold_instances) result.predictions.push_back(pooled.at(inst.instance_id));
  result.report = score(gold, result.predictions);
  result.report.meta = {{"model", std::string(to_string(opt.model))},
                        {"regime", std::string(to_string(opt.regime))},
                        {"folds", std::to_string(folds.k)},
                        {"silver_used", std::to_string(result.silver_used)}};
  if (opt.regime == Regime::T3 && opt.model != ModelKind::Rule)
    result.report.meta.emplace_back("note", "T3 runs as T2 for this model (no pretraining stage)");
  if (opt.model == ModelKind::Rule && opt.regime != Regime::T1)
    result.report.meta.emplace_back("note", "the rule model is not trained; regime has no effect");
  return result;
}

}  // namespace pronref
