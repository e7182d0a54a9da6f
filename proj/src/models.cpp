#include "pronref/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>

#include "pronref/error.hpp"
#include "pronref/random.hpp"
#include "pronref/text.hpp"

namespace pronref {
namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

RefClass plurality(const ClassCounts& counts, const ClassCounts& global) {
  std::size_t best = 0;
  for (std::size_t y = 1; y < kNumClasses; ++y) {
    if (counts[y] > counts[best] || (counts[y] == counts[best] && global[y] > global[best])) best = y;
  }
  return class_at(best);
}

ordered_json counts_json(const ClassCounts& c) {
  ordered_json j = ordered_json::object();
  for (RefClass r : kAllClasses)
    if (c[index_of(r)]) j[std::string(to_string(r))] = c[index_of(r)];
  return j;
}

ClassCounts counts_from_json(const json& j) {
  ClassCounts c{};
  for (const auto& [k, v] : j.items()) c[index_of(ref_class_from_string(k))] = v.get<std::size_t>();
  return c;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void rebuild_folded(MajorityModel& m) {
  m.folded.clear();
  for (const auto& [form, entry] : m.forms) {
    auto& f = m.folded[fold_case(form)];
    for (std::size_t y = 0; y < kNumClasses; ++y) f.counts[y] += entry.counts[y];
  }
  for (auto& [form, entry] : m.folded) entry.label = plurality(entry.counts, m.global_counts);
}

}  // namespace

std::size_t FormEntry::support() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

std::size_t FormEntry::distinct_labels() const {
  return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
}

RefClass MajorityModel::predict(const std::string& form) const {
  if (auto it = forms.find(form); it != forms.end()) return it->second.label;
  if (auto it = folded.find(fold_case(form)); it != folded.end()) return it->second.label;
  return global_majority;
}

MajorityModel fit_majority(std::span<const std::string> forms, std::span<const RefClass> labels) {
  if (forms.size() != labels.size()) throw DataError("forms and labels differ in length");
  if (forms.empty()) throw DataError("majority baseline needs at least one training instance");
  MajorityModel m;
  for (std::size_t i = 0; i < forms.size(); ++i) {
    ++m.forms[forms[i]].counts[index_of(labels[i])];
    ++m.global_counts[index_of(labels[i])];
  }
  m.global_majority = class_at(argmax_canonical([&] {
    ClassVector v{};
    for (std::size_t y = 0; y < kNumClasses; ++y) v[y] = static_cast<double>(m.global_counts[y]);
    return v;
  }()));
  for (auto& [form, entry] : m.forms) entry.label = plurality(entry.counts, m.global_counts);
  rebuild_folded(m);
  return m;
}

void write_majority_table(std::ostream& out, const MajorityModel& model) {
  std::vector<std::pair<std::string, const FormEntry*>> rows;
  for (const auto& [form, entry] : model.forms) rows.emplace_back(form, &entry);
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.second->support() > b.second->support(); });
  out << "wform\tclass\tsupport\tDL\n";
  std::size_t correct = 0, total = 0;
  for (const auto& [form, e] : rows) {
    const std::size_t hit = e->counts[index_of(e->label)];
    correct += hit;
    total += e->support();
    out << form << '\t' << to_string(e->label) << "\t(" << hit << '/' << e->support() << ")\t" << e->distinct_labels()
        << '\n';
  }
  const double acc = total ? 100.0 * static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  out << "Total\t\t(" << correct << '/' << total << ")\tAcc=" << format_fixed(acc, 1) << "%\n";
}

void write_majority_json(std::ostream& out, const MajorityModel& model) {
  ordered_json j;
  j["model"] = "majority";
  j["global_majority"] = std::string(to_string(model.global_majority));
  j["global_counts"] = counts_json(model.global_counts);
  ordered_json forms = ordered_json::object();
  for (const auto& [form, e] : model.forms) {
    forms[form] = {{"label", std::string(to_string(e.label))},
                   {"distinct_labels", e.distinct_labels()},
                   {"counts", counts_json(e.counts)}};
  }
  j["forms"] = forms;
  out << j.dump(2) << '\n';
}

MajorityModel read_majority_json(std::istream& in) {
  try {
    json j = json::parse(in);
    if (j.value("model", "") != "majority") throw DataError("not a majority model file");
    MajorityModel m;
    m.global_majority = ref_class_from_string(j.at("global_majority").get<std::string>());
    m.global_counts = counts_from_json(j.at("global_counts"));
    for (const auto& [form, e] : j.at("forms").items()) {
      auto& entry = m.forms[form];
      entry.counts = counts_from_json(e.at("counts"));
      entry.label = ref_class_from_string(e.at("label").get<std::string>());
    }
    rebuild_folded(m);
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("majority model: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

std::vector<Prediction> predict_rule_based(std::span<const Pattern> patterns, const LabelModelParams& params,
                                           std::span<const PronounInstance> instances, const SegmentIndex& segments) {
  if (patterns.size() != params.lf_names.size())
    throw DataError("pattern inventory does not match the label model's labeling functions");
  std::map<std::string, std::size_t> column;
  for (std::size_t j = 0; j < patterns.size(); ++j) {
    if (patterns[j].name != params.lf_names[j])
      throw DataError("pattern '" + patterns[j].name + "' does not match labeling function '" + params.lf_names[j] +
                      "'");
    column[patterns[j].name] = j;
  }

  std::map<std::string, std::vector<std::int8_t>> votes;
  std::set<SegmentKey> seen;
  for (const auto& inst : instances) {
    if (!seen.insert(inst.segment_key()).second) continue;
    const Segment& seg = segments.at(inst);
    for (const auto& p : patterns) {
      for (const auto& m : match(p, seg)) {
        auto& row = votes[m.instance_id];
        if (row.empty()) row.assign(patterns.size(), kAbstain);
        row[column.at(m.pattern_name)] = static_cast<std::int8_t>(index_of(m.label));
      }
    }
  }

  std::vector<Prediction> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    auto it = votes.find(inst.instance_id);
    if (it == votes.end()) {
      out.push_back({inst.instance_id, std::nullopt});
    } else {
      out.push_back({inst.instance_id, predict_row(inst.instance_id, it->second, params).hard_label});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double sparse_dot(const std::vector<double>& w, const FeatureVector& x) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.index.size(); ++k) s += w[x.index[k]] * x.value[k];
  return s;
}

void check_dim(const FeatureVector& x, std::size_t dim) {
  if (x.dim != dim)
    throw DataError("feature vector has dimension " + std::to_string(x.dim) + ", model expects " + std::to_string(dim));
}

}  // namespace

ClassVector LinearModel::scores(const FeatureVector& x) const {
  check_dim(x, dim);
  ClassVector s{};
  for (std::size_t c = 0; c < kNumClasses; ++c) s[c] = sparse_dot(weights[c], x) + bias[c];
  return s;
}

RefClass LinearModel::predict(const FeatureVector& x) const {
  const ClassVector s = scores(x);
  std::size_t best = kNumClasses;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (!trained[c]) continue;
    if (best == kNumClasses || s[c] > s[best]) best = c;
  }
  if (best == kNumClasses) throw DataError("linear model has no trained class");
  return class_at(best);
}

LinearModel fit_linear(std::span<const FeatureVector> x, std::span<const RefClass> y, const LinearHyper& hyper) {
  if (x.size() != y.size()) throw DataError("training vectors and labels differ in length");
  if (x.empty()) throw DataError("linear model needs training data");
  if (hyper.lambda <= 0.0) throw UsageError("linear.lambda must be positive");
  if (hyper.epochs < 1) throw UsageError("linear.epochs must be positive");

  LinearModel m;
  m.hyper = hyper;
  m.dim = x[0].dim;
  for (const auto& v : x) check_dim(v, m.dim);
  for (auto label : y) m.trained[index_of(label)] = true;
  if (std::count(m.trained.begin(), m.trained.end(), true) < 2)
    throw DataError("linear model needs at least two classes in the training data");

  const double lambda = hyper.lambda;
  const double typw = std::sqrt(1.0 / std::sqrt(lambda));
  m.t0 = 1.0 / (typw * lambda);

  std::vector<std::vector<double>> v(kNumClasses, std::vector<double>(m.dim, 0.0));
  std::array<double, kNumClasses> scale;
  scale.fill(1.0);
  ClassVector bias{};

  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  Rng rng(hyper.seed);
  double t = 0.0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i : order) {
      const double eta = 1.0 / (lambda * (t + m.t0));
      const double decay = 1.0 - eta * lambda;
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (!m.trained[c]) continue;
        const double target = index_of(y[i]) == c ? 1.0 : -1.0;
        const double p = scale[c] * sparse_dot(v[c], x[i]) + bias[c];
        if (decay > 0.0) {
          scale[c] *= decay;
        } else {
          std::fill(v[c].begin(), v[c].end(), 0.0);
          scale[c] = 1.0;
        }
        if (p * target <= 1.0) {
          const double step = eta * target;
          for (std::size_t k = 0; k < x[i].index.size(); ++k) v[c][x[i].index[k]] += step * x[i].value[k] / scale[c];
          bias[c] += step;
        }
        if (scale[c] < 1e-9) {
          for (double& w : v[c]) w *= scale[c];
          scale[c] = 1.0;
        }
      }
      t += 1.0;
    }
    double loss = 0.0, reg = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (!m.trained[c]) continue;
      double sq = 0.0;
      for (double w : v[c]) sq += w * w;
      reg += 0.5 * lambda * sq * scale[c] * scale[c];
      for (std::size_t i = 0; i < n; ++i) {
        const double target = index_of(y[i]) == c ? 1.0 : -1.0;
        loss += std::max(0.0, 1.0 - target * (scale[c] * sparse_dot(v[c], x[i]) + bias[c]));
      }
    }
    m.loss_trace.push_back(loss / static_cast<double>(n) + reg);
  }

  m.weights.assign(kNumClasses, std::vector<double>(m.dim, 0.0));
  for (std::size_t c = 0; c < kNumClasses; ++c)
    for (std::size_t k = 0; k < m.dim; ++k) m.weights[c][k] = v[c][k] * scale[c];
  m.bias = bias;
  return m;
}

void write_linear_weights_tsv(std::ostream& out, const LinearModel& model, std::span<const std::string> names) {
  if (names.size() != model.dim) throw DataError("feature names do not match the model dimension");
  out << "feature";
  for (RefClass c : kAllClasses) out << '\t' << to_string(c);
  out << "\n__bias__";
  for (double b : model.bias) out << '\t' << fmt17(b);
  out << '\n';
  for (std::size_t k = 0; k < model.dim; ++k) {
    out << names[k];
    for (std::size_t c = 0; c < kNumClasses; ++c) out << '\t' << fmt17(model.weights[c][k]);
    out << '\n';
  }
}

void write_linear_json(std::ostream& out, const LinearModel& model) {
  ordered_json j;
  j["model"] = "linear";
  j["dim"] = model.dim;
  std::vector<std::string> trained;
  for (RefClass c : kAllClasses)
    if (model.trained[index_of(c)]) trained.emplace_back(to_string(c));
  j["trained_classes"] = trained;
  j["lambda"] = model.hyper.lambda;
  j["epochs"] = model.hyper.epochs;
  j["seed"] = model.hyper.seed;
  j["t0"] = model.t0;
  j["loss_trace"] = model.loss_trace;
  out << j.dump(2) << '\n';
}

LinearModel read_linear_model(std::istream& json_in, std::istream& weights_in) {
  LinearModel m;
  try {
    json j = json::parse(json_in);
    if (j.value("model", "") != "linear") throw DataError("not a linear model file");
    m.dim = j.at("dim").get<std::size_t>();
    for (const auto& c : j.at("trained_classes")) m.trained[index_of(ref_class_from_string(c.get<std::string>()))] = true;
    m.hyper.lambda = j.at("lambda").get<double>();
    m.hyper.epochs = j.at("epochs").get<int>();
    m.hyper.seed = j.at("seed").get<std::uint64_t>();
    m.t0 = j.value("t0", 0.0);
    m.loss_trace = j.value("loss_trace", std::vector<double>{});
  } catch (const json::exception& e) {
    throw DataError(std::string("linear model: ") + e.what());
  }
  m.weights.assign(kNumClasses, std::vector<double>(m.dim, 0.0));
  std::string line;
  std::size_t row = 0;
  std::getline(weights_in, line);  // header
  while (std::getline(weights_in, line)) {
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    if (cols.size() != kNumClasses + 1) throw DataError("weights row " + std::to_string(row) + " has wrong width");
    try {
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        const double w = std::stod(cols[c + 1]);
        if (row == 0) {
          m.bias[c] = w;
        } else if (row - 1 < m.dim) {
          m.weights[c][row - 1] = w;
        }
      }
    } catch (const std::exception&) {
      throw DataError("weights row " + std::to_string(row) + ": malformed number");
    }
    ++row;
  }
  if (row != m.dim + 1)
    throw DataError("weights file has " + std::to_string(row) + " rows, expected " + std::to_string(m.dim + 1));
  return m;
}

}  // namespace pronref
