#include <doctest.h>

#include <set>
#include <sstream>

#include "oracles.hpp"
#include "pronref/error.hpp"
#include "pronref/log.hpp"
#include "pronref/models.hpp"
#include "pronref/text.hpp"

using namespace pronref;
using oracle::parse_segment;

namespace {

FeatureVector dense(std::vector<double> values) {
  FeatureVector v;
  v.dim = values.size();
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] != 0.0) {
      v.index.push_back(i);
      v.value.push_back(values[i]);
    }
  return v;
}

struct Toy {
  std::vector<FeatureVector> x;
  std::vector<RefClass> y;
};

// Three well separated clusters in the positive quadrant plus a constant feature.
Toy separable(std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Toy t;
  const RefClass labels[3] = {RefClass::Country, RefClass::Parl, RefClass::Party};
  for (int i = 0; i < 60; ++i) {
    const std::size_t c = static_cast<std::size_t>(i % 3);
    std::vector<double> v(4, 0.0);
    v[c] = 1.0 + 0.2 * rng.uniform();
    v[(c + 1) % 3] = 0.2 * rng.uniform();
    v[3] = 1.0;
    for (auto& e : v) e *= scale;
    t.x.push_back(dense(v));
    t.y.push_back(labels[c]);
  }
  return t;
}

std::size_t correct(const LinearModel& m, const Toy& t) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < t.x.size(); ++i) ok += m.predict(t.x[i]) == t.y[i];
  return ok;
}

}  // namespace

TEST_CASE("majority model reproduces the published decision rule") {
  const auto data = oracle::majority_table_instances();
  std::vector<std::string> forms;
  std::vector<RefClass> labels;
  for (const auto& [f, l] : data) {
    forms.push_back(f);
    labels.push_back(l);
  }
  CHECK(forms.size() == 1165);
  auto m = fit_majority(forms, labels);
  for (const auto& row : oracle::majority_table_rows()) {
    CAPTURE(row.form);
    const auto& e = m.forms.at(row.form);
    CHECK(e.label == row.label);
    CHECK(e.support() == row.support);
    CHECK(e.counts[index_of(e.label)] == row.majority);
    CHECK(e.distinct_labels() == row.distinct);
  }
  // "Uns" is a one-to-one tie; the globally more frequent class wins.
  const auto& uns = m.forms.at("Uns");
  CHECK(uns.counts[index_of(RefClass::Parl)] == uns.counts[index_of(RefClass::Board)]);
  CHECK(m.global_counts[index_of(RefClass::Parl)] > m.global_counts[index_of(RefClass::Board)]);

  std::size_t hits = 0;
  for (std::size_t i = 0; i < forms.size(); ++i) hits += m.predict(forms[i]) == labels[i];
  CHECK(hits == 426);
  CHECK(format_fixed(100.0 * 426 / 1165, 1) == "36.6");
  CHECK(format_fixed(100.0 * 426 / 1163, 1) == "36.6");

  std::ostringstream table;
  write_majority_table(table, m);
  const auto text = table.str();
  CHECK(text.find("wir\tPARL\t(185/600)\t9\n") != std::string::npos);
  CHECK(text.find("Uns\tPARL\t(1/2)\t2\n") != std::string::npos);
  CHECK(text.find("Total\t\t(426/1165)\tAcc=36.6%") != std::string::npos);
  CHECK(text.find("wir\tPARL") < text.find("unser\tCOUNTRY"));
}

TEST_CASE("majority backoff chain") {
  std::vector<std::string> forms = {"Unsre", "wir", "wir", "Wir"};
  std::vector<RefClass> labels = {RefClass::Country, RefClass::Parl, RefClass::Parl, RefClass::Party};
  auto m = fit_majority(forms, labels);
  CHECK(m.predict("Unsre") == RefClass::Country);
  CHECK(m.predict("Wir") == RefClass::Party);
  CHECK(m.predict("WIR") == RefClass::Parl);
  CHECK(m.predict("unsre") == RefClass::Country);
  CHECK(m.predict("unseren") == RefClass::Parl);
  CHECK(m.global_majority == RefClass::Parl);
  CHECK_THROWS_AS(fit_majority({}, {}), DataError);
}

TEST_CASE("majority ties fall back to canonical order") {
  std::vector<std::string> forms = {"uns", "uns"};
  std::vector<RefClass> labels = {RefClass::Union, RefClass::Generic};
  auto m = fit_majority(forms, labels);
  CHECK(m.predict("uns") == RefClass::Generic);
  CHECK(m.global_majority == RefClass::Generic);
}

TEST_CASE("property: majority training accuracy equals the sum of plurality counts") {
  Rng rng(6);
  const auto& inv = pronoun_inventory();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> forms;
    std::vector<RefClass> labels;
    const std::size_t n = 1 + rng.below(60);
    for (std::size_t i = 0; i < n; ++i) {
      forms.push_back(inv[rng.below(4)]);
      labels.push_back(class_at(rng.below(4)));
    }
    auto m = fit_majority(forms, labels);
    std::size_t expected = 0, got = 0;
    for (const auto& [form, e] : m.forms) expected += e.counts[index_of(e.label)];
    for (std::size_t i = 0; i < n; ++i) got += m.predict(forms[i]) == labels[i];
    CHECK(got == expected);
  }
}

TEST_CASE("majority JSON round trip") {
  auto data = oracle::majority_table_instances();
  std::vector<std::string> forms;
  std::vector<RefClass> labels;
  for (const auto& [f, l] : data) {
    forms.push_back(f);
    labels.push_back(l);
  }
  auto m = fit_majority(forms, labels);
  std::ostringstream out;
  write_majority_json(out, m);
  std::istringstream in(out.str());
  auto back = read_majority_json(in);
  CHECK(back.global_majority == m.global_majority);
  for (const auto& [form, e] : m.forms) CHECK(back.predict(form) == e.label);
  CHECK(back.predict("UNSEREM") == m.predict("UNSEREM"));
}

TEST_CASE("linear model separates a toy set") {
  auto toy = separable(1);
  auto m = fit_linear(toy.x, toy.y);
  CHECK(correct(m, toy) == toy.x.size());
  CHECK(m.trained[index_of(RefClass::Parl)]);
  CHECK_FALSE(m.trained[index_of(RefClass::Board)]);
  CHECK(m.loss_trace.size() == 50);
  CHECK(m.loss_trace.back() < m.loss_trace.front());
  for (std::size_t e = 5; e < m.loss_trace.size(); ++e) CHECK(m.loss_trace[e] <= m.loss_trace[e - 5] + 1e-9);
}

TEST_CASE("linear model is deterministic") {
  auto toy = separable(2);
  auto a = fit_linear(toy.x, toy.y);
  auto b = fit_linear(toy.x, toy.y);
  CHECK(a.weights == b.weights);
  CHECK(a.bias == b.bias);
  CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("duplicated features get equal weights") {
  auto toy = separable(3);
  for (auto& v : toy.x) {
    std::vector<double> d(5, 0.0);
    for (std::size_t k = 0; k < v.index.size(); ++k) d[v.index[k]] = v.value[k];
    d[4] = d[0];
    v = dense(d);
  }
  auto m = fit_linear(toy.x, toy.y);
  for (std::size_t c = 0; c < kNumClasses; ++c) CHECK(std::abs(m.weights[c][0] - m.weights[c][4]) < 1e-6);
}

TEST_CASE("rescaled inputs with rescaled lambda give the same training labels") {
  auto toy = separable(4);
  auto big = separable(4, 10.0);
  LinearHyper h;
  LinearHyper hb;
  hb.lambda = h.lambda * 100.0;
  auto m = fit_linear(toy.x, toy.y, h);
  auto mb = fit_linear(big.x, big.y, hb);
  for (std::size_t i = 0; i < toy.x.size(); ++i) CHECK(m.predict(toy.x[i]) == mb.predict(big.x[i]));
}

TEST_CASE("linear prediction rules") {
  LinearModel m;
  m.dim = 3;
  m.trained.fill(true);
  m.weights.assign(kNumClasses, std::vector<double>(3, 0.0));
  CHECK(m.predict(dense({0, 0, 0})) == RefClass::Board);
  m.bias[index_of(RefClass::Union)] = 0.5;
  CHECK(m.predict(dense({0, 0, 0})) == RefClass::Union);
  m.weights[index_of(RefClass::Generic)][1] = 1.0;
  CHECK(m.predict(dense({0, 1, 0})) == RefClass::Generic);
  CHECK_THROWS_AS(m.predict(dense({0, 1})), DataError);
}

TEST_CASE("linear fit errors") {
  auto toy = separable(5);
  std::vector<RefClass> one(toy.y.size(), RefClass::Parl);
  CHECK_THROWS_AS(fit_linear(toy.x, one), DataError);
  CHECK_THROWS_AS(fit_linear({}, {}), DataError);
  LinearHyper bad;
  bad.epochs = 0;
  CHECK_THROWS_AS(fit_linear(toy.x, toy.y, bad), UsageError);
}

TEST_CASE("linear model files round trip") {
  auto toy = separable(6);
  auto m = fit_linear(toy.x, toy.y);
  std::vector<std::string> names = {"a", "b", "c", "const"};
  std::ostringstream weights, meta;
  write_linear_weights_tsv(weights, m, names);
  write_linear_json(meta, m);
  std::istringstream win(weights.str()), jin(meta.str());
  auto back = read_linear_model(jin, win);
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);
  CHECK(back.trained == m.trained);
  CHECK(back.hyper == m.hyper);
  for (const auto& x : toy.x) CHECK(back.predict(x) == m.predict(x));
}

TEST_CASE("rule-based predictions cover exactly the matched anchors") {
  auto patterns = load_patterns(oracle::data_file("patterns/reconstructed-v1.yaml"));
  auto corpus = ingest(oracle::fixture("gold.conllu"), CorpusFormat::Conllu).segments;
  auto train = ingest(oracle::fixture("unlabelled.conllu"), CorpusFormat::Conllu).segments;
  auto matrix = build_matrix(patterns, train);
  log::WarningCapture quiet;
  auto params = fit_label_model(matrix);

  auto instances = extract_instances(corpus);
  SegmentIndex index(corpus);
  auto preds = predict_rule_based(patterns, params, instances, index);
  REQUIRE(preds.size() == instances.size());

  auto hits = match_all(patterns, corpus);
  std::set<std::string> anchors;
  for (const auto& m : hits.matches) anchors.insert(m.instance_id);
  std::set<std::string> labeled;
  for (const auto& p : preds)
    if (p.label) labeled.insert(p.instance_id);
  CHECK(labeled == anchors);
  CHECK_FALSE(anchors.empty());

  // A single-class hit keeps its pattern's label.
  std::map<std::string, std::set<RefClass>> classes;
  for (const auto& m : hits.matches) classes[m.instance_id].insert(m.label);
  for (const auto& p : preds)
    if (p.label && classes.at(p.instance_id).size() == 1) CHECK(*p.label == *classes.at(p.instance_id).begin());

  auto none = parse_segment("z", 0, {"Heute/heute/ADV/2/advmod regnet/regnen/VERB/0/root es/es/PRON/2/expl "
                                     "bei/bei/ADP/5/case uns/wir/PRON/2/obl"});
  none.sentences[0][4].form = "unsre";
  std::vector<Segment> zs = {none};
  auto zi = extract_instances(zs);
  SegmentIndex zindex(zs);
  auto zp = predict_rule_based(patterns, params, zi, zindex);
  REQUIRE(zp.size() == 1);
  CHECK_FALSE(zp[0].label.has_value());

  std::vector<Pattern> fewer(patterns.begin(), patterns.begin() + 3);
  CHECK_THROWS_AS(predict_rule_based(fewer, params, zi, zindex), DataError);
}
