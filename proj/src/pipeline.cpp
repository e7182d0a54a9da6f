#include "pronref/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <sstream>

#include "pronref/analysis.hpp"
#include "pronref/annotation.hpp"
#include "pronref/error.hpp"
#include "pronref/log.hpp"
#include "pronref/text.hpp"

namespace pronref {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Run context

RunContext::RunContext(std::string command, const PipelineConfig& config, fs::path dir)
    : command_(std::move(command)), config_hash_(config_hash(config)), dir_(std::move(dir)) {
  seeds_ = {{"label_model", config.label_model.seed}, {"linear", config.linear.seed}, {"cv", config.cv.seed},
            {"silver", config.silver_seed},           {"review", config.review_seed}};
  std::error_code ec;
  if (!fs::exists(dir_)) {
    fs::create_directories(dir_, ec);
    if (ec) throw DataError("cannot create run directory " + dir_.string() + ": " + ec.message());
    created_dir_ = true;
  } else if (!fs::is_directory(dir_)) {
    throw DataError(dir_.string() + " exists and is not a directory");
  }
}

RunContext::~RunContext() {
  if (!done_) rollback();
}

fs::path RunContext::default_dir(const PipelineConfig& config) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  return fs::path(config.paths.output_dir) / (std::string(stamp) + "-" + config_hash(config).substr(0, 12));
}

void RunContext::add_input(const std::string& path) {
  if (std::find(inputs_.begin(), inputs_.end(), path) == inputs_.end()) inputs_.push_back(path);
}

fs::path RunContext::output(const std::string& name) {
  if (std::find(outputs_.begin(), outputs_.end(), name) == outputs_.end()) outputs_.push_back(name);
  return dir_ / name;
}

void RunContext::commit() {
  ordered_json j;
  j["command"] = command_;
  j["version"] = std::string(kVersion);
  j["config_hash"] = config_hash_;
  ordered_json seeds = ordered_json::object();
  for (const auto& [k, v] : seeds_) seeds[k] = v;
  j["seeds"] = seeds;
  j["inputs"] = ordered_json::array();
  for (const auto& in : inputs_) j["inputs"].push_back({{"path", in}, {"sha256", sha256_file(in)}});
  j["outputs"] = ordered_json::array();
  for (const auto& out : outputs_) j["outputs"].push_back({{"file", out}, {"sha256", sha256_file(dir_ / out)}});
  std::ofstream f(dir_ / "manifest.json", std::ios::binary);
  f << j.dump(2) << '\n';
  if (!f) throw DataError("cannot write manifest in " + dir_.string());
  done_ = true;
}

void RunContext::rollback() {
  std::error_code ec;
  for (const auto& out : outputs_) fs::remove(dir_ / out, ec);
  fs::remove(dir_ / "manifest.json", ec);
  if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
  done_ = true;
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

struct Required {
  explicit Required(std::string_view s) : stage(s) {}

  std::string_view stage;
  std::vector<std::pair<std::string_view, const std::string*>> paths;

  Required& need(std::string_view key, const std::string& value) {
    paths.emplace_back(key, &value);
    return *this;
  }
  /// Checks presence and readability of every path before any work starts.
  void check() const {
    for (const auto& [key, value] : paths) {
      if (value->empty()) {
        std::string flag = key == "model" ? "model-dir" : key == "predictions" ? "pred" : std::string(key);
        std::replace(flag.begin(), flag.end(), '_', '-');
        throw UsageError(std::string(stage) + " needs paths." + std::string(key) + " (--" + flag + ")");
      }
      if (!fs::exists(*value)) throw DataError("paths." + std::string(key) + ": no such file " + *value);
    }
  }
};

std::ifstream open_in(RunContext& ctx, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  ctx.add_input(path);
  return in;
}

class Output {
 public:
  Output(RunContext& ctx, const std::string& name) : path_(ctx.output(name)), out_(path_, std::ios::binary) {
    if (!out_) throw DataError("cannot write " + path_.string());
  }
  ~Output() noexcept(false) {
    out_.flush();
    if (!out_ && std::uncaught_exceptions() == 0) throw DataError("write failed: " + path_.string());
  }
  std::ostream& operator*() { return out_; }

 private:
  fs::path path_;
  std::ofstream out_;
};

std::vector<Segment> load_corpus(RunContext& ctx, const std::string& path, CorpusFormat format,
                                 std::ostream* rejected = nullptr) {
  ctx.add_input(path);
  auto result = ingest(path, format);
  for (const auto& r : result.rejected) {
    log::warn("rejected " + r.doc_id + ":" + std::to_string(r.segment_index) + ": " + r.message);
    if (rejected) *rejected << r.doc_id << '\t' << r.segment_index << '\t' << r.message << '\n';
  }
  return std::move(result.segments);
}

LabelMap load_gold(RunContext& ctx, const std::string& path) {
  auto in = open_in(ctx, path);
  auto gold = read_label_map_jsonl(in);
  if (gold.empty()) throw DataError("gold file " + path + " has no labels");
  return gold;
}

/// Gold-labeled instances of the corpus; every gold id must occur.
std::vector<PronounInstance> gold_instances(std::span<const Segment> segments, const LabelMap& gold) {
  std::vector<PronounInstance> out;
  std::set<std::string> found;
  std::size_t unlabeled = 0;
  for (auto& inst : extract_instances(segments)) {
    if (gold.count(inst.instance_id)) {
      found.insert(inst.instance_id);
      out.push_back(std::move(inst));
    } else {
      ++unlabeled;
    }
  }
  for (const auto& [id, label] : gold)
    if (!found.count(id)) throw DataError("gold instance '" + id + "' does not occur in the gold corpus");
  if (unlabeled) log::warn(std::to_string(unlabeled) + " corpus instances have no gold label and are ignored");
  return out;
}

std::vector<Pattern> load_pattern_file(RunContext& ctx, const std::string& path) {
  ctx.add_input(path);
  return load_patterns(path);
}

LabelModelParams load_params(RunContext& ctx, const std::string& path) {
  auto in = open_in(ctx, path);
  return read_params_json(in);
}

std::vector<SilverLabel> load_silver(RunContext& ctx, const std::string& path) {
  auto in = open_in(ctx, path);
  return read_silver_jsonl(in);
}

FeatureConfig resolved_features(RunContext& ctx, const PipelineConfig& cfg) {
  FeatureConfig f = cfg.features;
  if (f.remove_stopwords) {
    if (cfg.paths.stopwords.empty()) throw UsageError("features.stopwords is set but paths.stopwords is empty");
    ctx.add_input(cfg.paths.stopwords);
    f.stopwords = load_stopwords(cfg.paths.stopwords);
  }
  validate(f);
  return f;
}

std::string class_counts_line(const ClassCounts& counts) {
  std::vector<std::string> parts;
  for (RefClass c : kAllClasses)
    if (counts[index_of(c)]) parts.push_back(std::string(to_string(c)) + "=" + std::to_string(counts[index_of(c)]));
  return parts.empty() ? "none" : join(parts, " ");
}

ordered_json features_json(const FeatureConfig& f) {
  return {{"window", f.window},         {"unigrams", f.use_unigrams}, {"bigrams", f.use_bigrams},
          {"trigrams", f.use_trigrams}, {"tfidf", f.tfidf},          {"lemmatise", f.lemmatise},
          {"stopwords", f.remove_stopwords}, {"select_k", f.select_k}, {"wordform", f.include_wordform}};
}

FeatureConfig features_from_json(const nlohmann::json& j, const FeatureConfig& base) {
  FeatureConfig f = base;
  f.window = j.at("window").get<std::size_t>();
  f.use_unigrams = j.at("unigrams").get<bool>();
  f.use_bigrams = j.at("bigrams").get<bool>();
  f.use_trigrams = j.at("trigrams").get<bool>();
  f.tfidf = j.at("tfidf").get<bool>();
  f.lemmatise = j.at("lemmatise").get<bool>();
  f.remove_stopwords = j.at("stopwords").get<bool>();
  f.select_k = j.at("select_k").get<std::size_t>();
  f.include_wordform = j.at("wordform").get<bool>();
  return f;
}

// ---------------------------------------------------------------------------
// Stages

using StageFn = std::function<void(const PipelineConfig&, RunContext&, std::ostream&)>;

void stage_ingest(const PipelineConfig& cfg, RunContext& ctx, std::ostream& summary) {
  Required("ingest").need("corpus", cfg.paths.corpus).check();
  std::ostringstream rejected;
  auto segments = load_corpus(ctx, cfg.paths.corpus, cfg.paths.corpus_format, &rejected);
  {
    Output out(ctx, "segments.jsonl");
    write_segments_jsonl(*out, segments);
  }
  {
    Output out(ctx, "rejected.tsv");
    *out << "doc_id\tsegment\tmessage\n" << rejected.str();
  }
  std::size_t tokens = 0;
  for (const auto& s : segments) tokens += s.token_count();
  const std::string rejected_text = rejected.str();
  const auto n_rejected = static_cast<std::size_t>(std::count(rejected_text.begin(), rejected_text.end(), '\n'));
  summary << "segments: " << segments.size() << "\ntokens: " << tokens << "\nrejected: " << n_rejected << '\n';
}

void stage_extract(const PipelineConfig& cfg, RunContext& ctx, std::ostream& summary) {
  Required("extract").need("corpus", cfg.paths.corpus).check();
  auto segments = load_corpus(ctx, cfg.paths.corpus, cfg.paths.corpus_format);
  auto instances = extract_instances(segments);
  {
    Output out(ctx, "instances.jsonl");
    write_instances_jsonl(*out, instances);
  }
  std::map<std::string, std::size_t> forms;
  for (const auto& i : instances) ++forms[i.form];
  summary << "instances: " << instances.size() << '\n';
  for (const auto& [form, n] : forms) summary << "  " << form << '\t' << n << '\n';
}

void stage_stats(const PipelineConfig& cfg, RunContext& ctx, std::ostream& summary) {
  Required("stats").need("corpus", cfg.paths.corpus).check();
  auto segments = load_corpus(ctx, cfg.paths.corpus, cfg.paths.corpus_format);
  auto instances = extract_instances(segments);
  for (auto [group_by, name] : {std::pair{GroupBy::Party, "stats_party.tsv"}, {GroupBy::Speaker, "stats_speaker.tsv"}}) {
    auto stats = corpus_stats(segments, instances, group_by);
    Output out(ctx, name);
    write_stats_tsv(*out, stats);
    if (group_by == GroupBy::Party) write_stats_tsv(summary, stats);
  }
}

void stage_agreement(const PipelineConfig& cfg, RunContext& ctx, std::ostream& summary) {
  Required req("agreement");
  req.need("annotations", cfg.paths.annotations);
  if (!cfg.paths.resolutions.empty()) req.need("resolutions", cfg.paths.resolutions);
  req.check();
  auto in = open_in(ctx, cfg.paths.annotations);
  auto records = read_annotations_jsonl(in);
  check_single_label(records);
  auto names = annotators(records);
  std::string a = cfg.annotator_a, b = cfg.annotator_b;
  if (a.empty() || b.empty()) {
    if (names.size() < 2) throw DataError("agreement needs two annotators, found " + std::to_string(names.size()));
    if (a.empty()) a = names[0];
    if (b.empty()) b = names[a == names[0] ? 1 : 0];
  }
  std::vector<GoldRecord> gold;
  if (!cfg.paths.resolutions.empty()) {
    auto rin = open_in(ctx, cfg.paths.resolutions);
    auto resolutions = read_label_map_jsonl(rin);
    std::vector<AnnotationRecord> ra, rb;
    for (const auto& r : records) {
      if (r.annotator_id == a) ra.push_back(r);
      if (r.annotator_id == b) rb.push_back(r);
    }
    gold = adjudicate(ra, rb, resolutions);
    Output out(ctx, "gold.jsonl");
    write_gold_jsonl(*out, gold);
  }
  auto report = agreement_report(records, a, b, gold);
  {
    Output out(ctx, "agreement.json");
    write_agreement_json(*out, report);
  }
  {
    Output out(ctx, "agreement.tsv");
    write_agreement_table(*out, report);
  }
  summary << "annotators: " << a << ", " << b << "\nalpha: " << format_fixed(report.alpha, 4)
          << "\npercent_agreement: " << format_fixed(100.0 * report.percent_agreement, 2) << "%\n";
  if (!gold.empty()) summary << "gold: " << gold.size() << '\n';
}

std::set<std::string> load_test_docs(RunContext& ctx, const std::string& path) {
  std::set<std::string> docs;
  if (path.empty()) return docs;
  auto in = open_in(ctx, path);
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (!t.empty() && t.front() != '#') docs.emplace(t);
  }
  return docs;
}

void stage_lf_apply(const PipelineConfig& cfg, RunContext& ctx, std::ostream& summary) {
  Required req("lf-apply");
  req.need("corpus", cfg.paths.corpus).need("patterns", cfg.paths.patterns);
  if (!cfg.paths.test_docs.empty()) req.need("test_docs", cfg.paths.test_docs);
  req.check();
  auto patterns = load_pattern_file(ctx, cfg.paths.patterns);
  auto test_docs = load_test_docs(ctx, cfg.paths.test_docs);
  auto segments = load_corpus(ctx, cfg.paths.corpus, cfg.paths.corpus_format);
  auto matrix = build_matrix(patterns, segments, test_docs);
  auto instances = extract_instances(segments);
  auto hits = match_all(patterns, segments);
  {
    Output out(ctx, "matrix.tsv");
    write_matrix_tsv(*out, matrix);
  }
  {
    Output out(ctx, "hits.tsv");
    write_hit_table(*out, hits);
  }
  summary << "instances: " << instances.size() << "\nrows: " << matrix.rows() << "\nexcluded: " << matrix.excluded
          << "\nlabeling functions: " << matrix.cols() << "\nhits: " << hits.total << '\n';
}

LabelMatrix load_matrix(RunContext& ctx, const std::string& path) {
  auto in = open_in(ctx, path);
  return read_matrix_tsv(in);
}

void stage_label_model(const PipelineConfig& cfg, RunContext& ctx, std::ostream& summary) {
  Required("label-model").need("matrix", cfg.paths.matrix).check();
  auto matrix = load_matrix(ctx, cfg.paths.matrix);
  auto params = fit_label_model(matrix, cfg.label_model);
  {
    Output out(ctx, "params.json");
    write_params_json(*out, params);
  }
  summary << "rows: " << matrix.rows() << "\niterations: " << params.iterations
          << "\nconverged: " << (params.converged ? "yes" : "no")
          << "\nlog_likelihood: " << format_fixed(params.log_likelihood_trace.back(), 4) << '\n';
}

void stage_silver(const PipelineConfig& cfg, RunContext& ctx, std::ostream& summary) {
  Required req("silver");
  req.need("matrix", cfg.paths.matrix);
  if (cfg.aggregation == SilverSource::LabelModel) req.need("params", cfg.paths.params);
  req.check();
  auto matrix = load_matrix(ctx, cfg.paths.matrix);
  std::vector<SilverLabel> silver;
  if (cfg.aggregation == SilverSource::Majority) {
    silver = majority_vote(matrix);
  } else {
    silver = predict_silver(matrix, load_params(ctx, cfg.paths.params));
  }
  {
    Output out(ctx, "silver.jsonl");
    write_silver_jsonl(*out, silver, matrix);
  }
  ClassCounts counts{};
  for (const auto& s : silver) ++counts[index_of(s.hard_label)];
  summary << "silver: " << silver.size() << "\nper class: " << class_counts_line(counts) << '\n';
}

void stage_sample_review(const PipelineConfig& cfg, RunContext& ctx, std::ostream& summary) {
  Required("sample-review").need("silver", cfg.paths.silver).need("corpus", cfg.paths.corpus).check();
  auto silver = load_silver(ctx, cfg.paths.silver);
  auto segments = load_corpus(ctx, cfg.paths.corpus, cfg.paths.corpus_format);
  SegmentIndex index(segments);
  auto rows = sample_for_review(silver, cfg.review_per_class, cfg.review_seed, index, cfg.review_context);
  {
    Output out(ctx, "review.tsv");
    write_review_sheet(*out, rows);
  }
  summary << "review rows: " << rows.size() << '\n';
}

void stage_export_pairs(const PipelineConfig& cfg, RunContext& ctx, std::ostream& summary) {
  Required req("export-pairs");
  req.need("gold_corpus", cfg.paths.gold_corpus);
  if (!cfg.paths.gold.empty()) req.need("gold", cfg.paths.gold);
  if (!cfg.paths.silver.empty()) req.need("silver", cfg.paths.silver).need("corpus", cfg.paths.corpus);
  req.check();
  auto segments = load_corpus(ctx, cfg.paths.gold_corpus, cfg.paths.gold_format);
  SegmentIndex index(segments);
  std::vector<PronounInstance> instances;
  std::map<std::string, std::string> labels;
  if (!cfg.paths.gold.empty()) {
    auto gold = load_gold(ctx, cfg.paths.gold);
    instances = gold_instances(segments, gold);
    for (const auto& [id, label] : gold) labels[id] = std::string(to_string(label));
    auto folds = make_folds(gold, cfg.cv);
    Output out(ctx, "folds.jsonl");
    write_folds_jsonl(*out, folds);
  } else {
    instances = extract_instances(segments);
  }
  {
    Output out(ctx, "pairs.jsonl");
    write_pairs_jsonl(*out, instances, index, labels);
  }
  summary << "pairs: " << instances.size() << '\n';
  if (!cfg.paths.silver.empty()) {
    auto silver = load_silver(ctx, cfg.paths.silver);
    auto silver_segments = load_corpus(ctx, cfg.paths.corpus, cfg.paths.corpus_format);
    SegmentIndex silver_index(silver_segments);
    std::vector<PronounInstance> silver_instances;
    std::map<std::string, std::string> silver_labels;
    for (const auto& s : silver) {
      if (labels.count(s.instance_id)) throw DataError("silver instance '" + s.instance_id + "' is also a gold instance");
      auto inst = parse_instance_id(s.instance_id);
      if (!inst) throw DataError("malformed silver instance id '" + s.instance_id + "'");
      silver_instances.push_back(*inst);
      silver_labels[s.instance_id] = std::string(to_string(s.hard_label));
    }
    Output out(ctx, "silver_pairs.jsonl");
    write_pairs_jsonl(*out, silver_instances, silver_index, silver_labels);
    summary << "silver pairs: " << silver_instances.size() << '\n';
  }
}

struct TrainingSet {
  std::vector<PronounInstance> instances;
  std::vector<const Segment*> segments;
  std::vector<RefClass> labels;
};

/// Gold plus, for T2/T3, downsampled silver.
TrainingSet training_set(const PipelineConfig& cfg, RunContext& ctx, std::vector<Segment>& gold_segments,
                         std::vector<Segment>& silver_segments) {
  gold_segments = load_corpus(ctx, cfg.paths.gold_corpus, cfg.paths.gold_format);
  auto gold = load_gold(ctx, cfg.paths.gold);
  SegmentIndex index(gold_segments);
  TrainingSet t;
  for (auto& inst : gold_instances(gold_segments, gold)) {
    t.segments.push_back(&index.at(inst));
    t.labels.push_back(gold.at(inst.instance_id));
    t.instances.push_back(std::move(inst));
  }
  if (cfg.regime != Regime::T1 && !cfg.paths.silver.empty()) {
    auto silver = load_silver(ctx, cfg.paths.silver);
    silver_segments = load_corpus(ctx, cfg.paths.corpus, cfg.paths.corpus_format);
    SegmentIndex sindex(silver_segments);
    for (const auto& s : silver)
      if (gold.count(s.instance_id)) throw DataError("silver instance '" + s.instance_id + "' is also a gold instance");
    for (const auto& s : downsample(silver, cfg.silver_cap, cfg.silver_seed)) {
      auto inst = parse_instance_id(s.instance_id);
      if (!inst) throw DataError("malformed silver instance id '" + s.instance_id + "'");
      const Segment& seg = sindex.at(*inst);
      inst->form = seg.token(inst->flat_token_index).form;
      t.segments.push_back(&seg);
      t.labels.push_back(s.hard_label);
      t.instances.push_back(std::move(*inst));
    }
  }
  return t;
}

void stage_train(const PipelineConfig& cfg, RunContext& ctx, std::ostream& summary) {
  if (cfg.model == ModelKind::Rule)
    throw UsageError("the rule model has no training step; run predict or cv with --model rule");
  Required req("train");
  req.need("gold_corpus", cfg.paths.gold_corpus).need("gold", cfg.paths.gold);
  if (cfg.regime != Regime::T1 && !cfg.paths.silver.empty())
    req.need("silver", cfg.paths.silver).need("corpus", cfg.paths.corpus);
  req.check();
  std::vector<Segment> gold_segments, silver_segments;
  auto t = training_set(cfg, ctx, gold_segments, silver_segments);
  if (cfg.model == ModelKind::Majority) {
    std::vector<std::string> forms;
    for (std::size_t i = 0; i < t.instances.size(); ++i)
      forms.push_back(t.segments[i]->token(t.instances[i].flat_token_index).form);
    auto model = fit_majority(forms, t.labels);
    {
      Output out(ctx, "model.json");
      write_majority_json(*out, model);
    }
    Output out(ctx, "majority.tsv");
    write_majority_table(*out, model);
    write_majority_table(summary, model);
  } else {
    const FeatureConfig features = resolved_features(ctx, cfg);
    std::vector<FeatureExample> examples;
    for (std::size_t i = 0; i < t.instances.size(); ++i)
      examples.push_back(make_example(t.instances[i], *t.segments[i], features.window));
    auto vocab = fit_vocabulary(examples, t.labels, features);
    std::vector<FeatureVector> x;
    for (const auto& e : examples) x.push_back(transform(e, vocab, features));
    auto model = fit_linear(x, t.labels, cfg.linear);
    {
      Output out(ctx, "model.json");
      write_linear_json(*out, model);
    }
    {
      Output out(ctx, "weights.tsv");
      write_linear_weights_tsv(*out, model, feature_names(vocab, features));
    }
    {
      Output out(ctx, "vocab.tsv");
      write_vocabulary_tsv(*out, vocab);
    }
    {
      Output out(ctx, "features.json");
      *out << features_json(features).dump(2) << '\n';
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < x.size(); ++i) correct += model.predict(x[i]) == t.labels[i];
    summary << "training instances: " << x.size() << "\nfeatures: " << vocab.size() << " n-grams + "
            << (features.include_wordform ? wordform_columns().size() : 0) << " word-form columns"
            << "\ntraining accuracy: " << format_fixed(100.0 * static_cast<double>(correct) / static_cast<double>(x.size()), 1)
            << "%\n";
  }
}

void stage_predict(const PipelineConfig& cfg, RunContext& ctx, std::ostream& summary) {
  Required req("predict");
  req.need("corpus", cfg.paths.corpus);
  if (cfg.model == ModelKind::Rule) {
    req.need("patterns", cfg.paths.patterns).need("params", cfg.paths.params);
  } else {
    req.need("model", cfg.paths.model);
  }
  req.check();
  auto segments = load_corpus(ctx, cfg.paths.corpus, cfg.paths.corpus_format);
  SegmentIndex index(segments);
  auto instances = extract_instances(segments);
  std::vector<Prediction> predictions;
  if (cfg.model == ModelKind::Rule) {
    auto patterns = load_pattern_file(ctx, cfg.paths.patterns);
    predictions = predict_rule_based(patterns, load_params(ctx, cfg.paths.params), instances, index);
  } else {
    const fs::path dir(cfg.paths.model);
    auto meta_in = open_in(ctx, (dir / "model.json").string());
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(meta_in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("model.json: ") + e.what());
    }
    const std::string kind = meta.value("model", "");
    if (kind == "majority") {
      std::istringstream text(meta.dump());
      auto model = read_majority_json(text);
      for (const auto& inst : instances)
        predictions.push_back({inst.instance_id, model.predict(index.at(inst).token(inst.flat_token_index).form)});
    } else if (kind == "linear") {
      std::istringstream json_text(meta.dump());
      auto weights_in = open_in(ctx, (dir / "weights.tsv").string());
      auto model = read_linear_model(json_text, weights_in);
      auto vocab_in = open_in(ctx, (dir / "vocab.tsv").string());
      auto vocab = read_vocabulary_tsv(vocab_in);
      auto feat_in = open_in(ctx, (dir / "features.json").string());
      FeatureConfig features;
      try {
        features = features_from_json(nlohmann::json::parse(feat_in), cfg.features);
      } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("features.json: ") + e.what());
      }
      if (features.remove_stopwords) features.stopwords = resolved_features(ctx, cfg).stopwords;
      for (const auto& inst : instances) {
        auto e = make_example(inst, index.at(inst), features.window);
        predictions.push_back({inst.instance_id, model.predict(transform(e, vocab, features))});
      }
    } else {
      throw DataError("unknown model kind '" + kind + "' in " + (dir / "model.json").string());
    }
  }
  {
    Output out(ctx, "predictions.jsonl");
    write_predictions_jsonl(*out, predictions);
  }
  ClassCounts counts{};
  std::size_t none = 0;
  for (const auto& p : predictions) p.label ? ++counts[index_of(*p.label)] : ++none;
  summary << "predictions: " << predictions.size() << "\nper class: " << class_counts_line(counts)
          << "\nNONE: " << none << '\n';
}

void stage_cv(const PipelineConfig& cfg, RunContext& ctx, std::ostream& summary) {
  Required req("cv");
  req.need("gold_corpus", cfg.paths.gold_corpus).need("gold", cfg.paths.gold);
  const bool use_silver = cfg.model != ModelKind::Rule && cfg.regime != Regime::T1 && !cfg.paths.silver.empty();
  if (use_silver) req.need("silver", cfg.paths.silver).need("corpus", cfg.paths.corpus);
  if (cfg.model == ModelKind::Rule) req.need("patterns", cfg.paths.patterns).need("params", cfg.paths.params);
  if (!cfg.paths.folds.empty()) req.need("folds", cfg.paths.folds);
  req.check();

  auto segments = load_corpus(ctx, cfg.paths.gold_corpus, cfg.paths.gold_format);
  SegmentIndex index(segments);
  auto gold = load_gold(ctx, cfg.paths.gold);
  auto instances = gold_instances(segments, gold);

  FoldAssignment folds;
  if (!cfg.paths.folds.empty()) {
    auto in = open_in(ctx, cfg.paths.folds);
    folds = read_folds_jsonl(in);
  } else {
    folds = make_folds(gold, cfg.cv);
  }

  CVInputs inputs;
  inputs.gold_instances = instances;
  inputs.gold_labels = &gold;
  inputs.gold_segments = &index;
  std::vector<SilverLabel> silver;
  std::vector<Segment> silver_segments;
  SegmentIndex silver_index;
  if (use_silver) {
    silver = load_silver(ctx, cfg.paths.silver);
    silver_segments = load_corpus(ctx, cfg.paths.corpus, cfg.paths.corpus_format);
    silver_index = SegmentIndex(silver_segments);
    inputs.silver = silver;
    inputs.silver_segments = &silver_index;
  } else if (cfg.regime != Regime::T1 && cfg.model != ModelKind::Rule) {
    log::warn("regime " + std::string(to_string(cfg.regime)) + " without paths.silver trains on gold only");
  }
  std::vector<Pattern> patterns;
  LabelModelParams params;
  if (cfg.model == ModelKind::Rule) {
    patterns = load_pattern_file(ctx, cfg.paths.patterns);
    params = load_params(ctx, cfg.paths.params);
    inputs.patterns = patterns;
    inputs.params = &params;
  }

  CVOptions options;
  options.model = cfg.model;
  options.regime = cfg.regime;
  if (cfg.model == ModelKind::Linear) options.features = resolved_features(ctx, cfg);
  options.linear = cfg.linear;
  options.silver_cap = cfg.silver_cap;
  options.silver_seed = cfg.silver_seed;

  auto result = cross_validate(inputs, folds, options);
  {
    Output out(ctx, "folds.jsonl");
    write_folds_jsonl(*out, folds);
  }
  {
    Output out(ctx, "predictions.jsonl");
    write_predictions_jsonl(*out, result.predictions);
  }
  {
    Output out(ctx, "report.json");
    write_report_json(*out, result.report);
  }
  {
    Output out(ctx, "report.tsv");
    write_report_table(*out, result.report);
  }
  write_report_table(summary, result.report);
}

void stage_score(const PipelineConfig& cfg, RunContext& ctx, std::ostream& summary) {
  Required("score").need("gold", cfg.paths.gold).need("predictions", cfg.paths.predictions).check();
  auto gold = load_gold(ctx, cfg.paths.gold);
  auto in = open_in(ctx, cfg.paths.predictions);
  auto predictions = read_predictions_jsonl(in);
  auto report = score(gold, predictions);
  {
    Output out(ctx, "report.json");
    write_report_json(*out, report);
  }
  {
    Output out(ctx, "report.tsv");
    write_report_table(*out, report);
  }
  write_report_table(summary, report);
}

void stage_analyze(const PipelineConfig& cfg, RunContext& ctx, std::ostream& summary) {
  Required("analyze").need("gold_corpus", cfg.paths.gold_corpus).need("gold", cfg.paths.gold).check();
  auto segments = load_corpus(ctx, cfg.paths.gold_corpus, cfg.paths.gold_format);
  auto gold = load_gold(ctx, cfg.paths.gold);
  gold_instances(segments, gold);
  auto profiles = build_profiles(gold, segments, cfg.group_by);
  {
    Output out(ctx, "profiles.csv");
    write_profiles_csv(*out, profiles);
  }
  auto result = pca(profiles, cfg.standardize);
  {
    Output out(ctx, "loadings.csv");
    write_loadings_csv(*out, result);
  }
  {
    Output out(ctx, "scores.csv");
    write_scores_csv(*out, result, profiles.groups);
  }
  {
    Output out(ctx, "eigenvalues.csv");
    write_eigenvalues_csv(*out, result);
  }
  emit_biplot(result, profiles.groups, ctx.output("biplot.svg"));
  summary << "groups: " << profiles.groups.size() << "\nPC1: " << format_fixed(100.0 * result.explained_variance_ratio[0], 1)
          << "%\nPC2: " << format_fixed(100.0 * result.explained_variance_ratio[1], 1) << "%\n";
}

const std::vector<std::pair<std::string, StageFn>>& stages() {
  static const std::vector<std::pair<std::string, StageFn>> s = {
      {"ingest", stage_ingest},           {"extract", stage_extract},
      {"stats", stage_stats},             {"agreement", stage_agreement},
      {"lf-apply", stage_lf_apply},       {"label-model", stage_label_model},
      {"silver", stage_silver},           {"sample-review", stage_sample_review},
      {"export-pairs", stage_export_pairs}, {"train", stage_train},
      {"predict", stage_predict},         {"cv", stage_cv},
      {"score", stage_score},             {"analyze", stage_analyze},
  };
  return s;
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : stages()) n.push_back(name);
    return n;
  }();
  return names;
}

void run_stage(const std::string& stage, const PipelineConfig& config, RunContext& ctx, std::ostream& summary) {
  for (const auto& [name, fn] : stages()) {
    if (name == stage) {
      fn(config, ctx, summary);
      return;
    }
  }
  throw UsageError("unknown subcommand '" + stage + "'");
}

}  // namespace pronref
