#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "pronref/config.hpp"
#include "pronref/error.hpp"
#include "pronref/pipeline.hpp"

namespace {

using namespace pronref;

struct Overrides {
  std::optional<std::string> corpus, corpus_format, gold_corpus, gold_format, annotations, resolutions, gold,
      patterns, test_docs, matrix, params, silver, model_dir, predictions, folds, stopwords, output_dir;
  std::optional<std::string> model, regime, aggregation, group_by, annotator_a, annotator_b;
  std::optional<std::size_t> k, cap, per_class, window, select_k;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, max_iter;
  std::optional<double> lambda, tol;
  bool standardize = false;
  bool no_stratify = false;
};

template <typename T>
void set_if(const std::optional<T>& v, T& field) {
  if (v) field = *v;
}

template <typename T, typename Parse>
void set_enum(const std::optional<std::string>& v, T& field, Parse parse, std::string_view flag) {
  if (!v) return;
  auto parsed = parse(*v);
  if (!parsed) throw UsageError("invalid value '" + *v + "' for --" + std::string(flag));
  field = *parsed;
}

void apply(const Overrides& o, PipelineConfig& c) {
  auto& p = c.paths;
  set_if(o.corpus, p.corpus);
  set_if(o.gold_corpus, p.gold_corpus);
  set_if(o.annotations, p.annotations);
  set_if(o.resolutions, p.resolutions);
  set_if(o.gold, p.gold);
  set_if(o.patterns, p.patterns);
  set_if(o.test_docs, p.test_docs);
  set_if(o.matrix, p.matrix);
  set_if(o.params, p.params);
  set_if(o.silver, p.silver);
  set_if(o.model_dir, p.model);
  set_if(o.predictions, p.predictions);
  set_if(o.folds, p.folds);
  set_if(o.stopwords, p.stopwords);
  set_if(o.output_dir, p.output_dir);
  set_enum(o.corpus_format, p.corpus_format, parse_corpus_format, "corpus-format");
  set_enum(o.gold_format, p.gold_format, parse_corpus_format, "gold-format");
  set_enum(o.model, c.model, parse_model_kind, "model");
  set_enum(o.regime, c.regime, parse_regime, "regime");
  set_enum(
      o.aggregation, c.aggregation,
      [](std::string_view s) -> std::optional<SilverSource> {
        if (s == "majority") return SilverSource::Majority;
        if (s == "label_model") return SilverSource::LabelModel;
        return std::nullopt;
      },
      "aggregation");
  set_enum(o.group_by, c.group_by, parse_group_by, "group-by");
  set_if(o.annotator_a, c.annotator_a);
  set_if(o.annotator_b, c.annotator_b);
  set_if(o.k, c.cv.k);
  set_if(o.cap, c.silver_cap);
  set_if(o.per_class, c.review_per_class);
  set_if(o.window, c.features.window);
  set_if(o.select_k, c.features.select_k);
  set_if(o.epochs, c.linear.epochs);
  set_if(o.max_iter, c.label_model.max_iter);
  set_if(o.lambda, c.linear.lambda);
  set_if(o.tol, c.label_model.tol);
  if (o.seed) {
    c.cv.seed = c.linear.seed = c.label_model.seed = c.silver_seed = c.review_seed = *o.seed;
  }
  if (o.standardize) c.standardize = true;
  if (o.no_stratify) c.cv.stratified = false;
}

void add_options(CLI::App& app, Overrides& o) {
  const std::string paths = "Paths";
  app.add_option("--corpus", o.corpus, "Unlabeled corpus")->group(paths);
  app.add_option("--corpus-format", o.corpus_format, "conllu, debate-xml or jsonl")->group(paths);
  app.add_option("--gold-corpus", o.gold_corpus, "Annotated corpus")->group(paths);
  app.add_option("--gold-format", o.gold_format, "conllu, debate-xml or jsonl")->group(paths);
  app.add_option("--annotations", o.annotations, "Annotation records (JSONL)")->group(paths);
  app.add_option("--resolutions", o.resolutions, "Adjudicated labels for disagreements (JSONL)")->group(paths);
  app.add_option("--gold", o.gold, "Gold labels (JSONL)")->group(paths);
  app.add_option("--patterns", o.patterns, "Pattern inventory (YAML)")->group(paths);
  app.add_option("--test-docs", o.test_docs, "Document ids excluded from weak supervision")->group(paths);
  app.add_option("--matrix", o.matrix, "Label matrix (TSV)")->group(paths);
  app.add_option("--params", o.params, "Label model parameters (JSON)")->group(paths);
  app.add_option("--silver", o.silver, "Silver labels (JSONL)")->group(paths);
  app.add_option("--model-dir", o.model_dir, "Directory written by train")->group(paths);
  app.add_option("--pred,--predictions", o.predictions, "Predictions (JSONL)")->group(paths);
  app.add_option("--folds", o.folds, "Fold assignment (JSONL)")->group(paths);
  app.add_option("--stopwords", o.stopwords, "Stopword list")->group(paths);
  app.add_option("--output-dir", o.output_dir, "Parent of run directories")->group(paths);

  const std::string settings = "Settings";
  app.add_option("--model", o.model, "majority, rule or linear")->group(settings);
  app.add_option("--regime", o.regime, "T1, T2 or T3")->group(settings);
  app.add_option("--aggregation", o.aggregation, "majority or label_model")->group(settings);
  app.add_option("--group-by", o.group_by, "party or speaker")->group(settings);
  app.add_option("--annotator-a", o.annotator_a)->group(settings);
  app.add_option("--annotator-b", o.annotator_b)->group(settings);
  app.add_option("--k", o.k, "Number of folds")->group(settings);
  app.add_option("--cap", o.cap, "Silver instances kept per class")->group(settings);
  app.add_option("--per-class", o.per_class, "Review rows per class")->group(settings);
  app.add_option("--window", o.window, "Context tokens per side")->group(settings);
  app.add_option("--select-k", o.select_k, "n-gram features kept")->group(settings);
  app.add_option("--epochs", o.epochs)->group(settings);
  app.add_option("--lambda", o.lambda)->group(settings);
  app.add_option("--max-iter", o.max_iter)->group(settings);
  app.add_option("--tol", o.tol)->group(settings);
  app.add_option("--seed", o.seed, "Sets every seed")->group(settings);
  app.add_flag("--standardize", o.standardize, "z-score profile columns before PCA")->group(settings);
  app.add_flag("--no-stratify", o.no_stratify, "Unstratified folds")->group(settings);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Referent disambiguation toolkit for German first-person-plural pronouns"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string run_dir;
  Overrides overrides;
  app.add_option("--config", config_path, "TOML configuration file");
  app.add_option("--run-dir", run_dir, "Write outputs here instead of a fresh run directory");
  add_options(app, overrides);

  static const std::map<std::string, std::string> help = {
      {"ingest", "Parse a corpus and write normalized segments"},
      {"extract", "List first-person-plural pronoun instances"},
      {"stats", "Per-party and per-speaker pronoun rates"},
      {"agreement", "Inter-annotator agreement and adjudicated gold"},
      {"lf-apply", "Apply the pattern inventory and build the label matrix"},
      {"label-model", "Fit the generative label model"},
      {"silver", "Aggregate votes into silver labels"},
      {"sample-review", "Draw silver labels for manual review"},
      {"export-pairs", "Export sentence pairs and folds for encoder training"},
      {"train", "Train the majority or linear model"},
      {"predict", "Label every instance of a corpus"},
      {"cv", "Cross-validate a model and score pooled predictions"},
      {"score", "Score a predictions file against gold labels"},
      {"analyze", "Class-rate profiles, PCA and biplot"},
  };
  for (const auto& name : stage_names()) app.add_subcommand(name, help.at(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    PipelineConfig config = config_path.empty() ? parse_config("") : load_config(config_path);
    apply(overrides, config);
    const std::filesystem::path dir = run_dir.empty() ? RunContext::default_dir(config) : std::filesystem::path(run_dir);
    RunContext ctx(stage, config, dir);
    std::ostringstream summary;
    run_stage(stage, config, ctx, summary);
    ctx.commit();
    std::cout << summary.str() << "run directory: " << ctx.dir().string() << '\n';
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "pronref " << stage << ": " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "pronref " << stage << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pronref " << stage << ": internal error: " << e.what() << '\n';
    return 3;
  }
}
