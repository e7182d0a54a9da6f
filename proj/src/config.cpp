#include "pronref/config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <toml.hpp>

#include "pronref/error.hpp"

namespace pronref {
namespace {

class TableReader {
 public:
  TableReader(const toml::table& root, std::string name) : name_(std::move(name)) {
    const toml::node* node = root.get(name_);
    if (node && !node->is_table()) throw UsageError("config: [" + name_ + "] must be a table");
    table_ = node ? node->as_table() : nullptr;
  }

  bool get(std::string_view key, std::string& out) {
    const auto* n = find(key);
    if (!n) return false;
    if (!n->is_string()) fail(key, "a string");
    out = *n->value<std::string>();
    return true;
  }
  void get(std::string_view key, bool& out) {
    if (const auto* n = find(key)) {
      if (!n->is_boolean()) fail(key, "a boolean");
      out = *n->value<bool>();
    }
  }
  void get(std::string_view key, double& out) {
    if (const auto* n = find(key)) {
      if (!n->is_floating_point() && !n->is_integer()) fail(key, "a number");
      out = *n->value<double>();
    }
  }
  template <typename Int>
    requires std::is_integral_v<Int>
  void get_int(std::string_view key, Int& out, std::int64_t min) {
    if (const auto* n = find(key)) {
      if (!n->is_integer()) fail(key, "an integer");
      const auto v = *n->value<std::int64_t>();
      if (v < min) throw UsageError("config: " + name_ + "." + std::string(key) + " must be at least " +
                                    std::to_string(min));
      out = static_cast<Int>(v);
    }
  }
  template <typename T, typename Parse>
  void get_enum(std::string_view key, T& out, Parse parse, std::string_view allowed) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    auto v = parse(s);
    if (!v) throw UsageError("config: " + name_ + "." + std::string(key) + " must be one of " + std::string(allowed));
    out = *v;
  }

  /// Throws on keys that were never requested.
  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_)
      if (!seen_.count(std::string(k.str())))
        throw UsageError("config: unknown key " + name_ + "." + std::string(k.str()));
  }

 private:
  const toml::node* find(std::string_view key) {
    seen_.insert(std::string(key));
    return table_ ? table_->get(key) : nullptr;
  }
  [[noreturn]] void fail(std::string_view key, std::string_view what) const {
    throw UsageError("config: " + name_ + "." + std::string(key) + " must be " + std::string(what));
  }

  std::string name_;
  const toml::table* table_ = nullptr;
  std::set<std::string> seen_;
};

void resolve(std::string& path, const std::filesystem::path& base) {
  if (path.empty() || base.empty()) return;
  std::filesystem::path p(path);
  if (p.is_relative()) path = (base / p).lexically_normal().string();
}

std::optional<SilverSource> parse_source(std::string_view s) {
  if (s == "majority") return SilverSource::Majority;
  if (s == "label_model") return SilverSource::LabelModel;
  return std::nullopt;
}

}  // namespace

PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config: " << e.description() << " at line " << e.source().begin.line << ", column "
        << e.source().begin.column;
    throw UsageError(msg.str());
  }
  static const std::set<std::string> tables = {"paths", "features", "label_model", "linear", "cv",
                                               "silver", "review", "analysis", "agreement"};
  for (const auto& [k, v] : root)
    if (!tables.count(std::string(k.str()))) throw UsageError("config: unknown table [" + std::string(k.str()) + "]");

  PipelineConfig c;
  {
    TableReader t(root, "paths");
    auto& p = c.paths;
    for (auto [key, field] : {std::pair{"corpus", &p.corpus}, {"gold_corpus", &p.gold_corpus},
                              {"annotations", &p.annotations}, {"resolutions", &p.resolutions},
                              {"gold", &p.gold}, {"patterns", &p.patterns}, {"test_docs", &p.test_docs},
                              {"matrix", &p.matrix}, {"params", &p.params}, {"silver", &p.silver},
                              {"model", &p.model}, {"predictions", &p.predictions}, {"folds", &p.folds},
                              {"stopwords", &p.stopwords}, {"output_dir", &p.output_dir}}) {
      if (t.get(key, *field)) resolve(*field, base_dir);
    }
    t.get_enum("corpus_format", p.corpus_format, parse_corpus_format, "conllu, debate-xml, jsonl");
    t.get_enum("gold_format", p.gold_format, parse_corpus_format, "conllu, debate-xml, jsonl");
    t.finish();
  }
  {
    TableReader t(root, "features");
    auto& f = c.features;
    t.get_int("window", f.window, 0);
    t.get("unigrams", f.use_unigrams);
    t.get("bigrams", f.use_bigrams);
    t.get("trigrams", f.use_trigrams);
    t.get("tfidf", f.tfidf);
    t.get("lemmatise", f.lemmatise);
    t.get("stopwords", f.remove_stopwords);
    t.get_int("select_k", f.select_k, 1);
    t.get("wordform", f.include_wordform);
    t.get("ner", f.include_ner);
    t.finish();
  }
  {
    TableReader t(root, "label_model");
    t.get_int("max_iter", c.label_model.max_iter, 1);
    t.get("tol", c.label_model.tol);
    t.get_int("seed", c.label_model.seed, 0);
    t.finish();
  }
  {
    TableReader t(root, "linear");
    t.get("lambda", c.linear.lambda);
    t.get_int("epochs", c.linear.epochs, 1);
    t.get_int("seed", c.linear.seed, 0);
    t.finish();
    if (c.linear.lambda <= 0.0) throw UsageError("config: linear.lambda must be positive");
  }
  {
    TableReader t(root, "cv");
    t.get_int("folds", c.cv.k, 2);
    t.get_int("seed", c.cv.seed, 0);
    t.get("stratified", c.cv.stratified);
    t.get_enum("model", c.model, parse_model_kind, "majority, rule, linear");
    t.get_enum("regime", c.regime, parse_regime, "T1, T2, T3");
    t.finish();
  }
  {
    TableReader t(root, "silver");
    t.get_int("cap", c.silver_cap, 0);
    t.get_int("seed", c.silver_seed, 0);
    t.get_enum("aggregation", c.aggregation, parse_source, "majority, label_model");
    t.finish();
  }
  {
    TableReader t(root, "review");
    t.get_int("per_class", c.review_per_class, 0);
    t.get_int("seed", c.review_seed, 0);
    t.get_int("context", c.review_context, 0);
    t.finish();
  }
  {
    TableReader t(root, "analysis");
    t.get_enum("group_by", c.group_by, parse_group_by, "party, speaker");
    t.get("standardize", c.standardize);
    t.finish();
  }
  {
    TableReader t(root, "agreement");
    t.get("annotator_a", c.annotator_a);
    t.get("annotator_b", c.annotator_b);
    t.finish();
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

std::string canonical_config(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  const auto& p = c.paths;
  j["paths"] = {{"corpus", p.corpus},
                {"corpus_format", to_string(p.corpus_format)},
                {"gold_corpus", p.gold_corpus},
                {"gold_format", to_string(p.gold_format)},
                {"annotations", p.annotations},
                {"resolutions", p.resolutions},
                {"gold", p.gold},
                {"patterns", p.patterns},
                {"test_docs", p.test_docs},
                {"matrix", p.matrix},
                {"params", p.params},
                {"silver", p.silver},
                {"model", p.model},
                {"predictions", p.predictions},
                {"folds", p.folds},
                {"stopwords", p.stopwords},
                {"output_dir", p.output_dir}};
  const auto& f = c.features;
  j["features"] = {{"window", f.window},     {"unigrams", f.use_unigrams}, {"bigrams", f.use_bigrams},
                   {"trigrams", f.use_trigrams}, {"tfidf", f.tfidf},        {"lemmatise", f.lemmatise},
                   {"stopwords", f.remove_stopwords}, {"select_k", f.select_k}, {"wordform", f.include_wordform},
                   {"ner", f.include_ner}};
  j["label_model"] = {{"max_iter", c.label_model.max_iter}, {"tol", c.label_model.tol}, {"seed", c.label_model.seed}};
  j["linear"] = {{"lambda", c.linear.lambda}, {"epochs", c.linear.epochs}, {"seed", c.linear.seed}};
  j["cv"] = {{"folds", c.cv.k},
             {"seed", c.cv.seed},
             {"stratified", c.cv.stratified},
             {"model", to_string(c.model)},
             {"regime", to_string(c.regime)}};
  j["silver"] = {{"cap", c.silver_cap},
                 {"seed", c.silver_seed},
                 {"aggregation", c.aggregation == SilverSource::Majority ? "majority" : "label_model"}};
  j["review"] = {{"per_class", c.review_per_class}, {"seed", c.review_seed}, {"context", c.review_context}};
  j["analysis"] = {{"group_by", c.group_by == GroupBy::Party ? "party" : "speaker"}, {"standardize", c.standardize}};
  j["agreement"] = {{"annotator_a", c.annotator_a}, {"annotator_b", c.annotator_b}};
  return j.dump();
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

std::string config_hash(const PipelineConfig& config) { return sha256_hex(canonical_config(config)); }

}  // namespace pronref
