#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "pronref/error.hpp"
#include "pronref/log.hpp"
#include "pronref/weaksup.hpp"

using namespace pronref;
using oracle::parse_segment;

namespace {

constexpr std::int8_t A = kAbstain;

std::int8_t v(RefClass c) { return static_cast<std::int8_t>(index_of(c)); }

LabelMatrix matrix_of(const std::vector<std::vector<std::int8_t>>& rows) {
  LabelMatrix m;
  const std::size_t cols = rows.empty() ? 0 : rows[0].size();
  for (std::size_t j = 0; j < cols; ++j) {
    m.lf_names.push_back("lf" + std::to_string(j));
    m.lf_labels.push_back(RefClass::Board);
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    m.instance_ids.push_back("d:0:" + std::to_string(r));
    m.cells.insert(m.cells.end(), rows[r].begin(), rows[r].end());
  }
  return m;
}

LabelModelParams hand_params(std::vector<double> accuracy) {
  LabelModelParams p;
  for (std::size_t j = 0; j < accuracy.size(); ++j) {
    p.lf_names.push_back("lf" + std::to_string(j));
    p.lf_labels.push_back(RefClass::Board);
    p.propensity.push_back(0.5);
  }
  p.accuracy = std::move(accuracy);
  p.priors.fill(1.0 / kNumClasses);
  return p;
}

double accuracy_against(const std::vector<SilverLabel>& silver, const std::vector<RefClass>& truth) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < silver.size(); ++i) ok += silver[i].hard_label == truth[i];
  return static_cast<double>(ok) / static_cast<double>(silver.size());
}

double sum(const ClassVector& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

std::vector<SilverLabel> silver_of(RefClass label, std::size_t n, const std::string& doc) {
  std::vector<SilverLabel> out;
  for (std::size_t i = 0; i < n; ++i) {
    SilverLabel s;
    s.instance_id = doc + ":" + std::to_string(i) + ":0";
    s.hard_label = label;
    s.posterior[index_of(label)] = 1.0;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("majority vote examples") {
  const auto P = v(RefClass::Party), G = v(RefClass::Govern), C = v(RefClass::Country), L = v(RefClass::Parl);
  auto m = matrix_of({{P, P, G}, {C, A, A}, {L, P, A}, {L, L, A}});
  auto mv = majority_vote(m);
  REQUIRE(mv.size() == 4);
  CHECK(mv[0].hard_label == RefClass::Party);
  CHECK(mv[0].posterior[index_of(RefClass::Party)] == doctest::Approx(2.0 / 3.0));
  CHECK(mv[0].posterior[index_of(RefClass::Govern)] == doctest::Approx(1.0 / 3.0));
  CHECK(mv[1].hard_label == RefClass::Country);
  CHECK(mv[1].posterior[index_of(RefClass::Country)] == 1.0);
  // PARL has 3 votes corpus-wide, PARTY has 3 as well, so canonical order decides.
  CHECK(mv[2].hard_label == RefClass::Parl);
  for (const auto& s : mv) CHECK(s.source == SilverSource::Majority);
}

TEST_CASE("majority vote ties follow corpus-wide vote counts") {
  const auto P = v(RefClass::Party), L = v(RefClass::Parl);
  auto m = matrix_of({{L, P}, {P, A}, {P, A}});
  CHECK(majority_vote(m)[0].hard_label == RefClass::Party);
  auto n = matrix_of({{L, P}, {L, A}, {L, A}});
  CHECK(majority_vote(n)[0].hard_label == RefClass::Parl);
}

TEST_CASE("hand-computed posterior for conflicting votes") {
  auto params = hand_params({0.9, 0.6});
  std::vector<std::int8_t> votes = {v(RefClass::Party), v(RefClass::Govern)};
  auto s = predict_row("x:0:0", votes, params);
  // P(PARTY) ~ 0.9 * 0.4/8, P(GOVERN) ~ 0.1/8 * 0.6.
  const double party = 0.9 * 0.4 / 8.0, govern = 0.1 / 8.0 * 0.6;
  CHECK(s.hard_label == RefClass::Party);
  CHECK(std::abs(s.posterior[index_of(RefClass::Party)] - party / (party + govern)) < 1e-12);
  CHECK(std::abs(s.posterior[index_of(RefClass::Govern)] - govern / (party + govern)) < 1e-12);

  auto full = model_posterior(votes, params);
  const double other = 0.1 / 8.0 * 0.4 / 8.0;
  const double z = party + govern + 7 * other;
  CHECK(std::abs(full[index_of(RefClass::Party)] - party / z) < 1e-12);
  CHECK(std::abs(full[index_of(RefClass::Board)] - other / z) < 1e-12);
}

TEST_CASE("all-abstain rows get the priors") {
  auto params = hand_params({0.9, 0.6});
  params.priors = {0.3, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.05, 0.05};
  auto s = predict_row("x:0:0", std::vector<std::int8_t>{A, A}, params);
  CHECK(s.posterior == params.priors);
  CHECK(s.hard_label == RefClass::Board);
}

TEST_CASE("unanimous votes decide") {
  auto params = hand_params({0.6, 0.6, 0.6});
  auto s = predict_row("x:0:0", std::vector<std::int8_t>{v(RefClass::Union), A, v(RefClass::Union)}, params);
  CHECK(s.hard_label == RefClass::Union);
  CHECK(s.posterior[index_of(RefClass::Union)] == 1.0);
}

TEST_CASE("single LF plus a silent LF equals majority vote") {
  const auto C = v(RefClass::Country), P = v(RefClass::Party);
  auto m = matrix_of({{C, A}, {P, A}, {C, A}, {C, A}});
  log::WarningCapture capture;
  auto params = fit_label_model(m);
  CHECK(capture.contains("never fires"));
  CHECK(params.propensity[1] == kParamFloor);
  auto lm = predict_silver(m, params);
  auto mv = majority_vote(m);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    CHECK(lm[r].hard_label == mv[r].hard_label);
    for (std::size_t y = 0; y < kNumClasses; ++y) CHECK(std::abs(lm[r].posterior[y] - mv[r].posterior[y]) < 1e-12);
  }
}

TEST_CASE("label model needs two LFs") {
  auto m = matrix_of({{v(RefClass::Parl)}});
  CHECK_THROWS_AS(fit_label_model(m), DataError);
}

TEST_CASE("property: EM log-likelihood is monotone and params stay in range") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto planted = oracle::planted_matrix(seed, 500, 2 + seed % 5, 0.55, 0.95, 0.2, 0.9);
    auto params = fit_label_model(planted.matrix);
    const auto& trace = params.log_likelihood_trace;
    REQUIRE(trace.size() >= 2);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] >= trace[i - 1] - 1e-9);
    CHECK(std::abs(trace.back() - log_likelihood(planted.matrix, params)) < 1e-6);
    CHECK(std::abs(sum(params.priors) - 1.0) < 1e-9);
    for (double p : params.priors) CHECK(p >= kParamFloor - 1e-15);
    for (double a : params.accuracy) CHECK((a >= kParamFloor && a <= kParamCeil));
    for (double p : params.propensity) CHECK((p >= kParamFloor && p <= kParamCeil));
  }
}

TEST_CASE("planted accuracies are recovered") {
  auto planted = oracle::planted_matrix(7, 2000, 2, 0.0, 0.0, 0.8, 0.8);
  // Override with the documented pair (0.9, 0.6) by regenerating the votes.
  Rng rng(99);
  const double acc[2] = {0.9, 0.6};
  for (std::size_t r = 0; r < planted.matrix.rows(); ++r) {
    const std::size_t y = index_of(planted.truth[r]);
    for (std::size_t j = 0; j < 2; ++j) {
      std::int8_t cell = A;
      if (rng.uniform() < 0.8) {
        if (rng.uniform() < acc[j]) {
          cell = static_cast<std::int8_t>(y);
        } else {
          std::size_t wrong = rng.below(kNumClasses - 1);
          if (wrong >= y) ++wrong;
          cell = static_cast<std::int8_t>(wrong);
        }
      }
      planted.matrix.cells[r * 2 + j] = cell;
    }
  }
  auto params = fit_label_model(planted.matrix);
  CHECK(params.accuracy[0] > params.accuracy[1]);
  CHECK(std::abs(params.accuracy[0] - 0.9) < 0.05);
  CHECK(std::abs(params.accuracy[1] - 0.6) < 0.1);
  auto lm = predict_silver(planted.matrix, params);
  auto mv = majority_vote(planted.matrix);
  CHECK(accuracy_against(lm, planted.truth) > accuracy_against(mv, planted.truth));
}

TEST_CASE("label model beats majority vote on planted matrices") {
  std::vector<double> lm_acc, mv_acc;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    auto planted = oracle::planted_matrix(seed, 2000, 6, 0.55, 0.95, 0.3, 0.9);
    auto params = fit_label_model(planted.matrix);
    lm_acc.push_back(accuracy_against(predict_silver(planted.matrix, params), planted.truth));
    mv_acc.push_back(accuracy_against(majority_vote(planted.matrix), planted.truth));
    CHECK(lm_acc.back() >= mv_acc.back() - 0.005);
  }
  std::vector<double> diff(10);
  for (std::size_t i = 0; i < 10; ++i) diff[i] = lm_acc[i] - mv_acc[i];
  std::sort(diff.begin(), diff.end());
  CHECK((diff[4] + diff[5]) / 2.0 > 0.0);
}

TEST_CASE("property: permuting LF columns leaves posteriors unchanged") {
  auto planted = oracle::planted_matrix(5, 800, 5, 0.55, 0.95, 0.3, 0.9);
  const std::vector<std::size_t> perm = {3, 0, 4, 2, 1};
  LabelMatrix permuted = planted.matrix;
  for (std::size_t j = 0; j < perm.size(); ++j) permuted.lf_names[j] = planted.matrix.lf_names[perm[j]];
  for (std::size_t r = 0; r < permuted.rows(); ++r)
    for (std::size_t j = 0; j < perm.size(); ++j)
      permuted.cells[r * 5 + j] = planted.matrix.at(r, perm[j]);
  auto a = predict_silver(planted.matrix, fit_label_model(planted.matrix));
  auto b = predict_silver(permuted, fit_label_model(permuted));
  for (std::size_t r = 0; r < a.size(); ++r) {
    CHECK(a[r].hard_label == b[r].hard_label);
    for (std::size_t y = 0; y < kNumClasses; ++y) CHECK(std::abs(a[r].posterior[y] - b[r].posterior[y]) < 1e-9);
  }
}

TEST_CASE("property: duplicating a row keeps its hard label") {
  auto planted = oracle::planted_matrix(21, 1000, 4, 0.55, 0.95, 0.3, 0.9);
  auto base = predict_silver(planted.matrix, fit_label_model(planted.matrix));
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t r = rng.below(planted.matrix.rows());
    LabelMatrix dup = planted.matrix;
    dup.instance_ids.push_back(dup.instance_ids[r] + "-copy");
    auto row = planted.matrix.row(r);
    dup.cells.insert(dup.cells.end(), row.begin(), row.end());
    auto silver = predict_silver(dup, fit_label_model(dup));
    CHECK(silver[r].hard_label == base[r].hard_label);
    CHECK(silver.back().hard_label == base[r].hard_label);
  }
}

TEST_CASE("property: without conflicts the label model agrees with majority vote") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<std::int8_t>> rows;
    for (int r = 0; r < 60; ++r) {
      const auto c = static_cast<std::int8_t>(rng.below(kNumClasses));
      std::vector<std::int8_t> row(4, A);
      for (auto& cell : row)
        if (rng.below(2)) cell = c;
      row[rng.below(4)] = c;
      rows.push_back(row);
    }
    auto m = matrix_of(rows);
    auto lm = predict_silver(m, fit_label_model(m));
    auto mv = majority_vote(m);
    for (std::size_t r = 0; r < m.rows(); ++r) CHECK(lm[r].hard_label == mv[r].hard_label);
  }
}

TEST_CASE("property: silver posteriors sum to one") {
  auto planted = oracle::planted_matrix(44, 300, 3, 0.55, 0.95, 0.1, 0.5);
  auto params = fit_label_model(planted.matrix);
  for (const auto& s : predict_silver(planted.matrix, params)) CHECK(std::abs(sum(s.posterior) - 1.0) < 1e-9);
  for (const auto& s : majority_vote(planted.matrix)) CHECK(std::abs(sum(s.posterior) - 1.0) < 1e-9);
}

TEST_CASE("build matrix from patterns") {
  auto patterns = compile_patterns(R"(
- name: party_next
  label: PARTY
  nodes:
    - {id: a, anchor: true}
    - {id: p, lemma_in: [liberal]}
  edges:
    - {from: a, to: p, op: IMM_RIGHT}
- name: parl_subject
  label: PARL
  nodes:
    - {id: a, anchor: true}
    - {id: v, lemma_in: [beraten]}
  edges:
    - {from: a, to: v, op: HEAD}
)");
  std::vector<Segment> none = {parse_segment("n", 0, {"wir/wir/PRON/2/nsubj gehen/gehen/VERB/0/root"}),
                               parse_segment("n", 1, {"uns/wir/PRON/0/root"})};
  auto empty = build_matrix(patterns, none);
  CHECK(empty.rows() == 0);
  CHECK(empty.excluded == 2);

  std::vector<Segment> one = {parse_segment("o", 0, {"wir/wir/PRON/0/root Liberale/liberal/NOUN/1/appos"})};
  auto m1 = build_matrix(patterns, one);
  REQUIRE(m1.rows() == 1);
  CHECK(m1.cols() == 2);
  CHECK(m1.at(0, 0) == v(RefClass::Party));
  CHECK(m1.at(0, 1) == A);

  std::vector<Segment> both = {
      parse_segment("c", 0, {"wir/wir/PRON/4/nsubj Liberale/liberal/NOUN/1/appos das/das/PRON/4/obj "
                             "beraten/beraten/VERB/0/root"})};
  auto m2 = build_matrix(patterns, both);
  REQUIRE(m2.rows() == 1);
  CHECK(m2.at(0, 0) == v(RefClass::Party));
  CHECK(m2.at(0, 1) == v(RefClass::Parl));

  CHECK_THROWS_AS(build_matrix(patterns, both, {"c"}), DataError);
  CHECK_NOTHROW(build_matrix(patterns, both, {"other"}));
}

TEST_CASE("matrix, params and silver files round trip") {
  auto patterns = compile_patterns("- {name: any, label: GENERIC, nodes: [{id: a, anchor: true}]}\n"
                                   "- {name: first, label: PARL, nodes: [{id: a, anchor: true, form_regex: Wir}]}\n");
  std::vector<Segment> segs = {parse_segment("r", 0, {"Wir/wir/PRON/2/nsubj sehen/sehen/VERB/0/root uns/wir/PRON/2/obj"})};
  auto m = build_matrix(patterns, segs);
  std::ostringstream tsv;
  write_matrix_tsv(tsv, m);
  std::istringstream tin(tsv.str());
  auto back = read_matrix_tsv(tin);
  CHECK(back.instance_ids == m.instance_ids);
  CHECK(back.lf_names == m.lf_names);
  CHECK(back.lf_labels == m.lf_labels);
  CHECK(back.cells == m.cells);

  auto params = fit_label_model(m);
  std::ostringstream pj;
  write_params_json(pj, params);
  std::istringstream pin(pj.str());
  auto pback = read_params_json(pin);
  CHECK(pback.lf_names == params.lf_names);
  CHECK(pback.accuracy == params.accuracy);
  CHECK(pback.priors == params.priors);
  CHECK(pback.log_likelihood_trace == params.log_likelihood_trace);

  auto silver = predict_silver(m, params);
  std::ostringstream sj;
  write_silver_jsonl(sj, silver, m);
  std::istringstream sin(sj.str());
  auto sback = read_silver_jsonl(sin);
  REQUIRE(sback.size() == silver.size());
  for (std::size_t i = 0; i < silver.size(); ++i) {
    CHECK(sback[i].instance_id == silver[i].instance_id);
    CHECK(sback[i].hard_label == silver[i].hard_label);
    CHECK(sback[i].posterior == silver[i].posterior);
  }
  CHECK(sj.str().find("\"votes\":{\"any\":\"GENERIC\"") != std::string::npos);
}

TEST_CASE("matrix TSV rejects a vote that differs from its LF's class") {
  std::istringstream in("instance_id\tparty_a\n# label\tPARTY\nd:0:0\tPARL\n");
  CHECK_THROWS_AS(read_matrix_tsv(in), DataError);
}

TEST_CASE("downsample") {
  auto silver = silver_of(RefClass::Country, 8795, "c");
  auto small = silver_of(RefClass::Board, 12, "b");
  silver.insert(silver.end(), small.begin(), small.end());
  auto kept = downsample(silver, 300, 42);
  ClassCounts counts{};
  for (const auto& s : kept) ++counts[index_of(s.hard_label)];
  CHECK(counts[index_of(RefClass::Country)] == 300);
  CHECK(counts[index_of(RefClass::Board)] == 12);

  auto again = downsample(silver, 300, 42);
  REQUIRE(again.size() == kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) CHECK(again[i].instance_id == kept[i].instance_id);
  auto other = downsample(silver, 300, 43);
  bool differs = false;
  for (std::size_t i = 0; i < kept.size(); ++i) differs = differs || other[i].instance_id != kept[i].instance_id;
  CHECK(differs);

  CHECK(downsample(silver, 0, 1).empty());
}

TEST_CASE("review sampling") {
  std::vector<Segment> segs;
  for (int i = 0; i < 307; ++i)
    segs.push_back(parse_segment("g", i, {"Man/man/PRON/2/nsubj sagt/sagen/VERB/0/root uns/wir/PRON/2/obj "
                                          "alles/alles/PRON/2/obj"}));
  for (int i = 0; i < 7; ++i)
    segs.push_back(parse_segment("b", i, {"wir/wir/PRON/2/nsubj tagen/tagen/VERB/0/root"}));
  std::vector<SilverLabel> silver;
  for (int i = 0; i < 307; ++i) silver.push_back(silver_of(RefClass::Generic, 1, "g")[0]);
  for (int i = 0; i < 307; ++i) silver[static_cast<std::size_t>(i)].instance_id = "g:" + std::to_string(i) + ":2";
  auto board = silver_of(RefClass::Board, 7, "b");
  silver.insert(silver.end(), board.begin(), board.end());
  SegmentIndex index(segs);

  auto rows = sample_for_review(silver, 25, 42, index);
  std::size_t generic = 0, boards = 0;
  for (const auto& r : rows) {
    generic += r.label == RefClass::Generic;
    boards += r.label == RefClass::Board;
  }
  CHECK(generic == 25);
  CHECK(boards == 7);
  CHECK(rows.front().label == RefClass::Board);
  for (const auto& r : rows)
    if (r.label == RefClass::Generic) {
      CHECK(r.left == "Man sagt");
      CHECK(r.pronoun == "uns");
      CHECK(r.right == "alles");
    }

  auto same = sample_for_review(silver, 25, 42, index);
  std::ostringstream a, b;
  write_review_sheet(a, rows);
  write_review_sheet(b, same);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("class\tinstance_id", 0) == 0);
}
