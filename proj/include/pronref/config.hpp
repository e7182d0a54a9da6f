#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "pronref/corpus.hpp"
#include "pronref/eval.hpp"
#include "pronref/features.hpp"
#include "pronref/models.hpp"
#include "pronref/weaksup.hpp"

namespace pronref {

struct PathsConfig {
  std::string corpus;  // unlabeled corpus
  CorpusFormat corpus_format = CorpusFormat::Conllu;
  std::string gold_corpus;  // annotated corpus
  CorpusFormat gold_format = CorpusFormat::Conllu;
  std::string annotations;
  std::string resolutions;
  std::string gold;
  std::string patterns;
  std::string test_docs;
  std::string matrix;
  std::string params;
  std::string silver;
  std::string model;
  std::string predictions;
  std::string folds;
  std::string stopwords;
  std::string output_dir = "runs";

  bool operator==(const PathsConfig&) const = default;
};

struct PipelineConfig {
  PathsConfig paths;
  FeatureConfig features;
  LabelModelOptions label_model;
  LinearHyper linear;
  FoldPlan cv;
  ModelKind model = ModelKind::Linear;
  Regime regime = Regime::T1;
  SilverSource aggregation = SilverSource::LabelModel;
  std::size_t silver_cap = 300;
  std::uint64_t silver_seed = 42;
  std::size_t review_per_class = 25;
  std::uint64_t review_seed = 42;
  std::size_t review_context = 20;
  GroupBy group_by = GroupBy::Speaker;
  bool standardize = false;
  std::string annotator_a;
  std::string annotator_b;
};

/// Parses TOML. Relative paths are resolved against `base_dir` when it is
/// non-empty. Unknown tables or keys are usage errors.
PipelineConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Deterministic JSON rendering of every setting.
std::string canonical_config(const PipelineConfig& config);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::string config_hash(const PipelineConfig& config);

}  // namespace pronref
