#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "pronref/text.hpp"

#ifndef PRONREF_FIXTURE_DIR
#error "PRONREF_FIXTURE_DIR must be defined"
#endif

namespace oracle {

double alpha_by_pairs(const std::vector<std::vector<int>>& units) {
  // Pairable values only.
  std::vector<int> all;
  double observed = 0.0;
  for (const auto& u : units) {
    if (u.size() < 2) continue;
    double mismatches = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < u.size(); ++j)
        if (i != j && u[i] != u[j]) mismatches += 1.0;
    observed += mismatches / static_cast<double>(u.size() - 1);
    all.insert(all.end(), u.begin(), u.end());
  }
  const double n = static_cast<double>(all.size());
  double expected = 0.0;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = 0; j < all.size(); ++j)
      if (i != j && all[i] != all[j]) expected += 1.0;
  const double d_o = observed / n;
  const double d_e = expected / (n * (n - 1.0));
  if (d_e == 0.0) return 1.0;
  return 1.0 - d_o / d_e;
}

std::vector<AnnotationRecord> records_from_units(const std::vector<std::vector<int>>& units) {
  std::vector<AnnotationRecord> out;
  for (std::size_t u = 0; u < units.size(); ++u)
    for (std::size_t i = 0; i < units[u].size(); ++i)
      out.push_back({"u" + std::to_string(u), "c" + std::to_string(i), class_at(static_cast<std::size_t>(units[u][i]))});
  return out;
}

namespace {

const std::vector<std::string> kInventory = {"wir",     "uns",     "unser",   "unsre",  "unsere",
                                             "unserem", "unseren", "unserer", "unseres", "unsrem",
                                             "unsren",  "unsrer",  "unsres",  "unsre"};

bool in_inventory(const std::string& form) {
  return std::find(kInventory.begin(), kInventory.end(), fold_case(form)) != kInventory.end();
}

bool regex_ok(const std::string& source, const std::string& form) {
  if (source.rfind("(?i)", 0) == 0) {
    std::regex re(source.substr(4), std::regex::ECMAScript | std::regex::icase);
    return std::regex_match(form, re) || std::regex_match(fold_case(form), re);
  }
  return std::regex_match(form, std::regex(source));
}

bool node_ok(const NodeSpec& n, const Token& t) {
  if (n.anchor && !in_inventory(t.form)) return false;
  if (n.form_regex && !regex_ok(*n.form_regex, t.form)) return false;
  if (n.lemma_in) {
    bool any = false;
    for (const auto& l : *n.lemma_in) any = any || fold_case(l) == fold_case(t.lemma);
    if (!any) return false;
  }
  if (n.upos_in && std::find(n.upos_in->begin(), n.upos_in->end(), t.upos) == n.upos_in->end()) return false;
  return true;
}

bool rel_ok(const std::optional<std::vector<std::string>>& allowed, const std::string& deprel) {
  if (!allowed) return true;
  for (const auto& a : *allowed)
    if (deprel == a || deprel.rfind(a + ":", 0) == 0) return true;
  return false;
}

bool edge_ok(const EdgeSpec& e, const Sentence& s, std::size_t f, std::size_t t) {
  switch (e.op) {
    case EdgeOp::Child: return s[t].head && *s[t].head == static_cast<int>(f) && rel_ok(e.deprel_in, s[t].deprel);
    case EdgeOp::Head: return s[f].head && *s[f].head == static_cast<int>(t) && rel_ok(e.deprel_in, s[f].deprel);
    case EdgeOp::ImmRight: return t == f + 1;
    case EdgeOp::ImmLeft: return f == t + 1;
    case EdgeOp::Right: return t > f;
  }
  return false;
}

std::size_t node_pos(const Pattern& p, const std::string& id) {
  for (std::size_t i = 0; i < p.nodes.size(); ++i)
    if (p.nodes[i].id == id) return i;
  return p.nodes.size();
}

}  // namespace

std::vector<Match> enumerate_matches(const Pattern& pattern, const Segment& segment) {
  std::vector<Match> out;
  const std::size_t k = pattern.nodes.size();
  std::size_t anchor = 0;
  for (std::size_t i = 0; i < k; ++i)
    if (pattern.nodes[i].anchor) anchor = i;
  std::size_t offset = 0;
  for (const auto& s : segment.sentences) {
    const std::size_t n = s.size();
    std::map<std::size_t, std::vector<std::size_t>> first;  // anchor position -> binding
    std::vector<std::size_t> tuple(k, 0);
    std::size_t total = 1;
    for (std::size_t i = 0; i < k; ++i) total *= n;
    for (std::size_t code = 0; code < total; ++code) {
      // Decode in lexicographic order: node 0 is the most significant digit.
      std::size_t c = code;
      for (std::size_t i = k; i-- > 0;) {
        tuple[i] = c % n;
        c /= n;
      }
      std::vector<std::size_t> sorted = tuple;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) continue;
      bool ok = true;
      for (std::size_t i = 0; i < k && ok; ++i) ok = node_ok(pattern.nodes[i], s[tuple[i]]);
      for (const auto& e : pattern.edges) {
        if (!ok) break;
        ok = edge_ok(e, s, tuple[node_pos(pattern, e.from)], tuple[node_pos(pattern, e.to)]);
      }
      if (ok && !first.count(tuple[anchor])) first[tuple[anchor]] = tuple;
    }
    for (const auto& [pos, binding] : first) {
      Match m;
      m.pattern_name = pattern.name;
      m.label = pattern.label;
      m.anchor = offset + pos;
      m.instance_id = segment.doc_id + ":" + std::to_string(segment.segment_index) + ":" + std::to_string(m.anchor);
      for (std::size_t i = 0; i < k; ++i) m.bindings.emplace_back(pattern.nodes[i].id, offset + binding[i]);
      out.push_back(std::move(m));
    }
    offset += n;
  }
  return out;
}

Segment random_segment(Rng& rng, std::size_t n) {
  static const std::vector<std::pair<std::string, std::string>> words = {
      {"wir", "wir"},     {"Wir", "wir"},       {"uns", "wir"},     {"unsere", "unser"}, {"Unser", "unser"},
      {"werden", "werden"}, {"schaffen", "schaffen"}, {"Land", "Land"}, {"Grüne", "Grüne"}, {"in", "in"},
      {"der", "der"},     {"EU", "EU"},         {"Antrag", "Antrag"}, {"beide", "beide"}, {"Ärzte", "Arzt"}};
  static const std::vector<std::string> upos = {"PRON", "VERB", "NOUN", "ADP", "DET"};
  static const std::vector<std::string> rels = {"nsubj", "nsubj:pass", "obj", "sb", "det", "det:poss", "nmod"};
  Segment seg;
  seg.doc_id = "r";
  seg.segment_index = 0;
  Sentence s(n);
  const std::size_t root = static_cast<std::size_t>(rng.below(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = words[rng.below(words.size())];
    s[i].index = static_cast<int>(i);
    s[i].form = w.first;
    s[i].lemma = w.second;
    s[i].upos = upos[rng.below(upos.size())];
    s[i].deprel = rels[rng.below(rels.size())];
  }
  // Attach tokens one by one to an already attached token: always a tree.
  std::vector<std::size_t> attached{root};
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i)
    if (i != root) order.push_back(i);
  rng.shuffle(std::span<std::size_t>(order));
  for (auto i : order) {
    s[i].head = static_cast<int>(attached[rng.below(attached.size())]);
    attached.push_back(i);
  }
  s[root].deprel = "root";
  seg.sentences.push_back(std::move(s));
  return seg;
}

Pattern random_pattern(Rng& rng, std::size_t max_nodes) {
  static const std::vector<std::string> regexes = {"(?i)wir|uns", "[A-Z].*", "(?i)ärzte", "werden|in", ".*e"};
  static const std::vector<std::vector<std::string>> lemmas = {
      {"werden"}, {"schaffen", "Land"}, {"der", "in"}, {"grüne"}, {"wir"}, {"ARZT"}};
  static const std::vector<std::vector<std::string>> tags = {{"PRON"}, {"VERB", "NOUN"}, {"ADP", "DET"}};
  static const std::vector<std::vector<std::string>> rels = {{"nsubj"}, {"sb", "obj"}, {"det"}, {"nmod", "det:poss"}};
  static const std::vector<EdgeOp> ops = {EdgeOp::Child, EdgeOp::Head, EdgeOp::ImmRight, EdgeOp::ImmLeft,
                                          EdgeOp::Right};
  Pattern p;
  p.name = "p";
  p.label = class_at(static_cast<std::size_t>(rng.below(kNumClasses)));
  const std::size_t k = 1 + static_cast<std::size_t>(rng.below(max_nodes));
  const std::size_t anchor = static_cast<std::size_t>(rng.below(k));
  for (std::size_t i = 0; i < k; ++i) {
    NodeSpec n;
    n.id = "n" + std::to_string(i);
    n.anchor = i == anchor;
    if (rng.below(3) == 0) n.form_regex = regexes[rng.below(regexes.size())];
    if (rng.below(3) == 0) n.lemma_in = lemmas[rng.below(lemmas.size())];
    if (rng.below(4) == 0) n.upos_in = tags[rng.below(tags.size())];
    p.nodes.push_back(std::move(n));
  }
  for (std::size_t i = 1; i < k; ++i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    EdgeSpec e;
    e.op = ops[rng.below(ops.size())];
    if (rng.below(2)) {
      e.from = p.nodes[i].id;
      e.to = p.nodes[j].id;
    } else {
      e.from = p.nodes[j].id;
      e.to = p.nodes[i].id;
    }
    if ((e.op == EdgeOp::Child || e.op == EdgeOp::Head) && rng.below(2)) e.deprel_in = rels[rng.below(rels.size())];
    p.edges.push_back(std::move(e));
  }
  validate_pattern(p);
  return p;
}

double pearson_chi2(double a, double b, double c, double d) {
  const double n = a + b + c + d;
  const double obs[2][2] = {{a, b}, {c, d}};
  const double row[2] = {a + b, c + d};
  const double col[2] = {a + c, b + d};
  double chi = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double e = row[i] * col[j] / n;
      if (e == 0.0) return 0.0;
      chi += (obs[i][j] - e) * (obs[i][j] - e) / e;
    }
  return chi;
}

std::map<std::string, std::size_t> terms_of(const FeatureExample& example, const FeatureConfig& config) {
  std::map<std::string, std::size_t> out;
  auto side = [&](const std::vector<Token>& toks, const std::string& tag) {
    std::vector<std::string> w;
    for (const auto& t : toks) {
      if (t.upos == "PUNCT") continue;
      std::string key = (config.lemmatise && !t.lemma.empty() && t.lemma != "_") ? t.lemma : t.form;
      key = fold_case(key);
      if (config.remove_stopwords && config.stopwords.count(key)) continue;
      w.push_back(key);
    }
    const bool use[4] = {false, config.use_unigrams, config.use_bigrams, config.use_trigrams};
    for (std::size_t n = 1; n <= 3; ++n) {
      if (!use[n]) continue;
      for (std::size_t i = 0; i + n <= w.size(); ++i) {
        std::ostringstream term;
        term << tag;
        for (std::size_t k = 0; k < n; ++k) term << (k ? " " : "") << w[i + k];
        ++out[term.str()];
      }
    }
  };
  side(example.left, "L:");
  side(example.right, "R:");
  return out;
}

ToyCorpus toy_feature_corpus(std::uint64_t seed, std::size_t n) {
  static const std::vector<std::pair<std::string, std::string>> words = {
      {"Regierung", "Regierung"}, {"Land", "Land"}, {"Fraktion", "Fraktion"}, {"Haus", "Haus"},
      {"Europa", "_"},           {"müssen", "müssen"}, {"Wir", "wir"},       {"ÄRZTE", "Arzt"},
      {".", "."},                {"und", "und"},     {"die", "der"},        {"Antrag", "Antrag"}};
  const RefClass classes[3] = {RefClass::Govern, RefClass::Party, RefClass::Country};
  Rng rng(seed);
  ToyCorpus toy;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = rng.below(3);
    auto side = [&] {
      std::vector<Token> t;
      const std::size_t len = rng.below(7);
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t w = rng.below(3) == 0 ? y * 3 : rng.below(words.size());
        Token tok;
        tok.form = words[w].first;
        tok.lemma = words[w].second;
        tok.upos = tok.form == "." ? "PUNCT" : "X";
        t.push_back(tok);
      }
      return t;
    };
    FeatureExample e;
    e.instance_id = "t:" + std::to_string(i) + ":0";
    e.left = side();
    e.right = side();
    e.form = rng.below(2) ? "wir" : "Uns";
    toy.examples.push_back(std::move(e));
    toy.labels.push_back(classes[y]);
  }
  return toy;
}

std::map<std::string, double> brute_chi2(const ToyCorpus& toy, const FeatureConfig& config) {
  std::map<std::string, std::map<RefClass, std::size_t>> with;
  std::map<RefClass, std::size_t> docs;
  for (std::size_t i = 0; i < toy.examples.size(); ++i) {
    ++docs[toy.labels[i]];
    for (const auto& [term, count] : terms_of(toy.examples[i], config)) ++with[term][toy.labels[i]];
  }
  const double n = static_cast<double>(toy.examples.size());
  std::map<std::string, double> out;
  for (const auto& [term, per_class] : with) {
    double df = 0.0;
    for (const auto& [c, k] : per_class) df += static_cast<double>(k);
    double best = 0.0;
    for (const auto& [c, nc] : docs) {
      const double a = per_class.count(c) ? static_cast<double>(per_class.at(c)) : 0.0;
      best = std::max(best, pearson_chi2(a, df - a, static_cast<double>(nc) - a, n - static_cast<double>(nc) - (df - a)));
    }
    out[term] = best;
  }
  return out;
}

std::map<std::size_t, double> tfidf_by_hand(const FeatureExample& example, const std::vector<std::string>& terms,
                                            const std::map<std::string, std::size_t>& df, std::size_t n_docs,
                                            const FeatureConfig& config) {
  std::map<std::size_t, double> out;
  double norm = 0.0;
  for (const auto& [term, count] : terms_of(example, config)) {
    const auto it = std::find(terms.begin(), terms.end(), term);
    if (it == terms.end()) continue;
    const double idf =
        std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(df.at(term)))) + 1.0;
    const double w = static_cast<double>(count) * idf;
    out[static_cast<std::size_t>(it - terms.begin())] = w;
    norm += w * w;
  }
  if (norm > 0.0)
    for (auto& [col, w] : out) w /= std::sqrt(norm);
  return out;
}

Planted planted_matrix(std::uint64_t seed, std::size_t rows, std::size_t lfs, double acc_lo, double acc_hi,
                       double prop_lo, double prop_hi) {
  Rng rng(seed);
  Planted p;
  double total = 0.0;
  for (auto& x : p.priors) {
    x = 0.5 + rng.uniform();
    total += x;
  }
  for (auto& x : p.priors) x /= total;
  for (std::size_t j = 0; j < lfs; ++j) {
    p.accuracy.push_back(rng.uniform(acc_lo, acc_hi));
    p.propensity.push_back(rng.uniform(prop_lo, prop_hi));
    p.matrix.lf_names.push_back("lf" + std::to_string(j));
    p.matrix.lf_labels.push_back(RefClass::Board);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double u = rng.uniform();
    std::size_t y = 0;
    while (y + 1 < kNumClasses && u >= p.priors[y]) u -= p.priors[y++];
    p.truth.push_back(class_at(y));
    p.matrix.instance_ids.push_back("i" + std::to_string(r));
    for (std::size_t j = 0; j < lfs; ++j) {
      std::int8_t v = kAbstain;
      if (rng.uniform() < p.propensity[j]) {
        if (rng.uniform() < p.accuracy[j]) {
          v = static_cast<std::int8_t>(y);
        } else {
          std::size_t wrong = static_cast<std::size_t>(rng.below(kNumClasses - 1));
          if (wrong >= y) ++wrong;
          v = static_cast<std::int8_t>(wrong);
        }
      }
      p.matrix.cells.push_back(v);
    }
  }
  return p;
}

Segment parse_segment(const std::string& doc_id, int segment_index, const std::vector<std::string>& sentences,
                      const std::string& speaker, Party party) {
  Segment seg;
  seg.doc_id = doc_id;
  seg.segment_index = segment_index;
  seg.speaker = speaker;
  seg.party = party;
  seg.date = "2020-01-01";
  for (const auto& line : sentences) {
    Sentence s;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) {
      auto parts = split(tok, '/');
      if (parts.size() != 5) throw std::runtime_error("bad token " + tok);
      Token t;
      t.index = static_cast<int>(s.size());
      t.form = parts[0];
      t.lemma = parts[1];
      t.upos = parts[2];
      const int head = std::stoi(parts[3]);
      if (head > 0) t.head = head - 1;
      t.deprel = parts[4];
      s.push_back(std::move(t));
    }
    seg.sentences.push_back(std::move(s));
  }
  return seg;
}

const std::vector<MajorityRow>& majority_table_rows() {
  static const std::vector<MajorityRow> rows = {
      {"wir", RefClass::Parl, 185, 600, 9},       {"unser", RefClass::Country, 24, 26, 2},
      {"Wir", RefClass::Country, 65, 240, 9},     {"unserem", RefClass::Country, 28, 32, 4},
      {"uns", RefClass::Country, 56, 163, 8},     {"unsere", RefClass::Country, 25, 42, 6},
      {"unserer", RefClass::Country, 19, 31, 7},  {"unseren", RefClass::Country, 7, 11, 4},
      {"Uns", RefClass::Parl, 1, 2, 2},           {"Unser", RefClass::Country, 4, 5, 2},
      {"Unsere", RefClass::Country, 3, 4, 2},     {"unseres", RefClass::Country, 6, 6, 1},
      {"unsre", RefClass::Country, 1, 1, 1},      {"Unsre", RefClass::Country, 2, 2, 1},
  };
  return rows;
}

std::vector<std::pair<std::string, RefClass>> majority_table_instances() {
  std::vector<std::pair<std::string, RefClass>> out;
  for (const auto& row : majority_table_rows()) {
    for (std::size_t i = 0; i < row.majority; ++i) out.emplace_back(row.form, row.label);
    std::vector<RefClass> others;
    for (auto c : kAllClasses)
      if (c != row.label && others.size() + 1 < row.distinct) others.push_back(c);
    // One each, then round robin below the majority count (a tie only when
    // the majority count is one).
    const std::size_t cap = row.majority > 1 ? row.majority - 1 : 1;
    std::vector<std::size_t> counts(others.size(), 1);
    std::size_t left = row.support - row.majority - others.size();
    for (std::size_t k = 0; left > 0; k = (k + 1) % others.size()) {
      if (counts[k] < cap) {
        ++counts[k];
        --left;
      }
    }
    for (std::size_t k = 0; k < others.size(); ++k)
      for (std::size_t i = 0; i < counts[k]; ++i) out.emplace_back(row.form, others[k]);
  }
  return out;
}

std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(PRONREF_FIXTURE_DIR) / name; }
std::filesystem::path data_file(const std::string& name) { return std::filesystem::path(PRONREF_DATA_DIR) / name; }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace oracle
