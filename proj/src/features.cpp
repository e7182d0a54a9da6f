#include "pronref/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "pronref/error.hpp"
#include "pronref/log.hpp"
#include "pronref/text.hpp"

namespace pronref {
namespace {

std::string token_key(const Token& t, const FeatureConfig& config) {
  const bool use_lemma = config.lemmatise && !t.lemma.empty() && t.lemma != "_";
  return fold_case(use_lemma ? t.lemma : t.form);
}

std::vector<std::string> side_keys(const std::vector<Token>& tokens, const FeatureConfig& config) {
  std::vector<std::string> keys;
  for (const auto& t : tokens) {
    if (t.upos == "PUNCT") continue;
    std::string key = token_key(t, config);
    if (config.remove_stopwords && config.stopwords.count(key)) continue;
    keys.push_back(std::move(key));
  }
  return keys;
}

void add_ngrams(std::map<std::string, std::size_t>& counts, const std::vector<std::string>& keys,
                std::string_view tag, std::size_t n) {
  if (keys.size() < n) return;
  for (std::size_t i = 0; i + n <= keys.size(); ++i) {
    std::string term(tag);
    for (std::size_t k = 0; k < n; ++k) {
      if (k) term += ' ';
      term += keys[i + k];
    }
    ++counts[term];
  }
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void validate(const FeatureConfig& config) {
  if (config.select_k < 1) throw UsageError("features.select_k must be at least 1");
  if (config.include_ner) throw UsageError("named-entity features are not supported");
  if (!config.use_unigrams && !config.use_bigrams && !config.use_trigrams && !config.include_wordform)
    throw UsageError("feature configuration enables no feature block");
}

std::set<std::string> load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read stopword list " + path.string());
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto w = trim(line);
    if (w.empty() || w.front() == '#') continue;
    words.insert(fold_case(w));
  }
  return words;
}

FeatureExample make_example(const PronounInstance& instance, const Segment& segment, std::size_t window) {
  auto ctx = context_window(instance, segment, window);
  return {instance.instance_id, segment.token(instance.flat_token_index).form, std::move(ctx.left),
          std::move(ctx.right)};
}

std::map<std::string, std::size_t> extract_terms(const FeatureExample& example, const FeatureConfig& config) {
  std::map<std::string, std::size_t> counts;
  const auto left = side_keys(example.left, config);
  const auto right = side_keys(example.right, config);
  for (auto [keys, tag] : {std::pair{&left, "L:"}, std::pair{&right, "R:"}}) {
    if (config.use_unigrams) add_ngrams(counts, *keys, tag, 1);
    if (config.use_bigrams) add_ngrams(counts, *keys, tag, 2);
    if (config.use_trigrams) add_ngrams(counts, *keys, tag, 3);
  }
  return counts;
}

std::size_t Vocabulary::column(const std::string& term) const {
  auto it = std::lower_bound(terms.begin(), terms.end(), term);
  return it != terms.end() && *it == term ? static_cast<std::size_t>(it - terms.begin()) : npos;
}

double Vocabulary::idf(std::size_t c) const {
  return std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(df.at(c)))) + 1.0;
}

double chi2_2x2(double a, double b, double c, double d) {
  const double n = a + b + c + d;
  const double denom = (a + b) * (c + d) * (a + c) * (b + d);
  if (denom == 0.0) return 0.0;
  const double diff = a * d - b * c;
  return n * diff * diff / denom;
}

namespace {

struct PresenceStats {
  std::map<std::string, ClassCounts> by_class;  // documents containing the term, per class
  ClassCounts class_docs{};
  std::size_t n = 0;
};

PresenceStats presence(std::span<const FeatureExample> examples, std::span<const RefClass> labels,
                       const FeatureConfig& config) {
  if (examples.size() != labels.size()) throw DataError("feature examples and labels differ in length");
  PresenceStats s;
  s.n = examples.size();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const std::size_t y = index_of(labels[i]);
    ++s.class_docs[y];
    for (const auto& [term, count] : extract_terms(examples[i], config)) ++s.by_class[term][y];
  }
  return s;
}

double max_chi2(const ClassCounts& with_term, const PresenceStats& s) {
  std::size_t df = 0;
  for (auto v : with_term) df += v;
  double best = 0.0;
  for (std::size_t y = 0; y < kNumClasses; ++y) {
    if (s.class_docs[y] == 0) continue;
    const double a = static_cast<double>(with_term[y]);
    const double b = static_cast<double>(df) - a;
    const double c = static_cast<double>(s.class_docs[y]) - a;
    const double d = static_cast<double>(s.n - s.class_docs[y]) - b;
    best = std::max(best, chi2_2x2(a, b, c, d));
  }
  return best;
}

}  // namespace

std::map<std::string, double> chi2_scores(std::span<const FeatureExample> examples, std::span<const RefClass> labels,
                                          const FeatureConfig& config) {
  const auto s = presence(examples, labels, config);
  std::map<std::string, double> out;
  for (const auto& [term, counts] : s.by_class) out[term] = max_chi2(counts, s);
  return out;
}

Vocabulary fit_vocabulary(std::span<const FeatureExample> examples, std::span<const RefClass> labels,
                          const FeatureConfig& config) {
  validate(config);
  const auto s = presence(examples, labels, config);

  struct Scored {
    const std::string* term;
    double chi2;
    std::size_t df;
  };
  std::vector<Scored> scored;
  scored.reserve(s.by_class.size());
  for (const auto& [term, counts] : s.by_class) {
    std::size_t df = 0;
    for (auto v : counts) df += v;
    scored.push_back({&term, max_chi2(counts, s), df});
  }
  if (scored.size() < config.select_k && (config.use_unigrams || config.use_bigrams || config.use_trigrams)) {
    log::warn("only " + std::to_string(scored.size()) + " distinct n-gram terms, fewer than select_k = " +
              std::to_string(config.select_k) + "; keeping all");
  }
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& x, const Scored& y) {
    if (x.chi2 != y.chi2) return x.chi2 > y.chi2;
    return *x.term < *y.term;
  });
  if (scored.size() > config.select_k) scored.resize(config.select_k);
  std::sort(scored.begin(), scored.end(), [](const Scored& x, const Scored& y) { return *x.term < *y.term; });

  Vocabulary v;
  v.n_docs = s.n;
  v.fitted = true;
  for (const auto& sc : scored) {
    v.terms.push_back(*sc.term);
    v.df.push_back(sc.df);
    v.chi2.push_back(sc.chi2);
  }
  return v;
}

const std::vector<std::string>& wordform_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c;
    for (const auto& f : pronoun_inventory()) {
      c.push_back(f);
      std::string cap = f;
      cap[0] = static_cast<char>(cap[0] - 'a' + 'A');
      c.push_back(cap);
    }
    c.push_back("other");
    return c;
  }();
  return cols;
}

std::size_t wordform_slot(const std::string& form) {
  const auto& cols = wordform_columns();
  for (std::size_t i = 0; i + 1 < cols.size(); ++i)
    if (cols[i] == form) return i;
  return cols.size() - 1;
}

std::size_t feature_dim(const Vocabulary& vocab, const FeatureConfig& config) {
  return vocab.size() + (config.include_wordform ? wordform_columns().size() : 0);
}

std::vector<std::string> feature_names(const Vocabulary& vocab, const FeatureConfig& config) {
  std::vector<std::string> names = vocab.terms;
  if (config.include_wordform)
    for (const auto& c : wordform_columns()) names.push_back("W:" + c);
  return names;
}

FeatureVector transform(const FeatureExample& example, const Vocabulary& vocab, const FeatureConfig& config) {
  if (!vocab.fitted) throw UsageError("vocabulary is not fitted");
  FeatureVector v;
  v.dim = feature_dim(vocab, config);
  for (const auto& [term, count] : extract_terms(example, config)) {
    const std::size_t col = vocab.column(term);
    if (col == Vocabulary::npos) continue;
    double w = static_cast<double>(count);
    if (config.tfidf) w *= vocab.idf(col);
    v.index.push_back(col);
    v.value.push_back(w);
  }
  // extract_terms iterates in term order and columns are term-sorted, so
  // indices are already increasing.
  if (config.tfidf) {
    double norm = 0.0;
    for (double x : v.value) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& x : v.value) x /= norm;
  }
  if (config.include_wordform) {
    v.index.push_back(vocab.size() + wordform_slot(example.form));
    v.value.push_back(1.0);
  }
  return v;
}

void write_vocabulary_tsv(std::ostream& out, const Vocabulary& vocab) {
  out << "# n_docs\t" << vocab.n_docs << "\nterm\tindex\tdf\tchi2\n";
  for (std::size_t i = 0; i < vocab.size(); ++i)
    out << vocab.terms[i] << '\t' << i << '\t' << vocab.df[i] << '\t' << fmt17(vocab.chi2[i]) << '\n';
}

Vocabulary read_vocabulary_tsv(std::istream& in) {
  Vocabulary v;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    try {
      if (cols[0] == "# n_docs") {
        v.n_docs = std::stoull(cols.at(1));
      } else if (!header) {
        if (cols[0] != "term") throw DataError("missing header");
        header = true;
      } else {
        if (cols.size() != 4) throw DataError("expected 4 columns");
        if (std::stoull(cols[1]) != v.terms.size()) throw DataError("column indices out of order");
        if (!v.terms.empty() && !(v.terms.back() < cols[0])) throw DataError("terms not sorted");
        v.terms.push_back(cols[0]);
        v.df.push_back(std::stoull(cols[2]));
        v.chi2.push_back(std::stod(cols[3]));
      }
    } catch (const DataError& e) {
      throw DataError("vocabulary line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception&) {
      throw DataError("vocabulary line " + std::to_string(line_no) + ": malformed number");
    }
  }
  if (!header) throw DataError("empty vocabulary file");
  v.fitted = true;
  return v;
}

void write_svmlight(std::ostream& out, std::span<const FeatureVector> vectors, std::span<const RefClass> labels) {
  if (vectors.size() != labels.size()) throw DataError("vectors and labels differ in length");
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    out << index_of(labels[i]);
    for (std::size_t k = 0; k < vectors[i].index.size(); ++k)
      out << ' ' << vectors[i].index[k] + 1 << ':' << fmt17(vectors[i].value[k]);
    out << '\n';
  }
}

}  // namespace pronref
