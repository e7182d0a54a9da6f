#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pronref {

enum class Party { AfD, CduCsu, Fdp, Gruene, Linke, Spd, Fraktionslos, Other };

std::string_view to_string(Party p);
std::optional<Party> parse_party(std::string_view name);
/// Maps unknown party strings to Party::Other and emits a warning.
Party party_or_other(std::string_view name);

/// One token of a dependency-parsed sentence. `index` and `head` are
/// 0-based and sentence-local; the root has no head.
struct Token {
  int index = 0;
  std::string form;
  std::string lemma;
  std::string upos;
  std::optional<int> head;
  std::string deprel;

  bool operator==(const Token&) const = default;
};

using Sentence = std::vector<Token>;

/// Returns a diagnostic when the head indices do not form a single-rooted
/// tree, std::nullopt otherwise.
std::optional<std::string> validate_tree(const Sentence& sentence);

struct TokenLocation {
  std::size_t sentence = 0;
  std::size_t local = 0;
};

/// A paragraph of a speech: the unit instances and patterns live in.
struct Segment {
  std::string doc_id;
  int segment_index = 0;
  std::vector<Sentence> sentences;
  std::string speaker;
  Party party = Party::Other;
  std::string date;

  std::size_t token_count() const;
  /// Token at a flat index over the concatenated sentences.
  const Token& token(std::size_t flat) const;
  TokenLocation locate(std::size_t flat) const;
  std::size_t sentence_offset(std::size_t sentence) const;
  std::vector<std::string> forms() const;

  bool operator==(const Segment&) const = default;
};

struct SegmentKey {
  std::string doc_id;
  int segment_index = 0;
  auto operator<=>(const SegmentKey&) const = default;
};

enum class CorpusFormat { Conllu, DebateXml, Jsonl };

std::optional<CorpusFormat> parse_corpus_format(std::string_view name);
std::string_view to_string(CorpusFormat f);

/// A record dropped during ingestion, with the reason.
struct Rejection {
  std::string doc_id;
  int segment_index = 0;
  std::string message;
};

struct IngestResult {
  std::vector<Segment> segments;
  std::vector<Rejection> rejected;
};

/// Reads a corpus file. I/O failures throw DataError; malformed records are
/// reported in `rejected` and skipped.
IngestResult ingest(const std::filesystem::path& path, CorpusFormat format);

/// `default_doc_id` is used until a "# doc_id" comment appears.
IngestResult parse_conllu(std::istream& in, std::string_view default_doc_id = "doc");
IngestResult parse_segments_jsonl(std::istream& in);
IngestResult parse_debate_xml(std::istream& in);

void write_segments_jsonl(std::ostream& out, std::span<const Segment> segments);
void write_conllu(std::ostream& out, std::span<const Segment> segments);

// ---------------------------------------------------------------------------
// Pronoun instances

/// Lower-case first-person-plural inventory: wir, uns, unser, unsre and the
/// inflected unser-/unsr- forms.
const std::vector<std::string>& pronoun_inventory();

/// Whole-token, case-insensitive inventory test.
bool is_first_person_plural(std::string_view form);

struct PronounInstance {
  std::string instance_id;  // "doc_id:segment_index:flat_token_index"
  std::string form;         // original case
  std::string doc_id;
  int segment_index = 0;
  std::size_t flat_token_index = 0;

  SegmentKey segment_key() const { return {doc_id, segment_index}; }
  bool operator==(const PronounInstance&) const = default;
};

std::string make_instance_id(std::string_view doc_id, int segment_index, std::size_t flat_index);

/// Inverse of make_instance_id; doc ids may themselves contain ':'.
std::optional<PronounInstance> parse_instance_id(std::string_view instance_id);

/// All inventory tokens ordered by (doc_id, segment_index, flat index).
std::vector<PronounInstance> extract_instances(std::span<const Segment> segments);

void write_instances_jsonl(std::ostream& out, std::span<const PronounInstance> instances);
std::vector<PronounInstance> read_instances_jsonl(std::istream& in);

/// Lookup from (doc_id, segment_index) to segments held elsewhere; the
/// segments must outlive the index.
class SegmentIndex {
 public:
  SegmentIndex() = default;
  explicit SegmentIndex(std::span<const Segment> segments);

  const Segment* find(const SegmentKey& key) const;
  /// Throws DataError when the instance's segment is unknown.
  const Segment& at(const PronounInstance& instance) const;

 private:
  std::map<SegmentKey, const Segment*> by_key_;
};

struct ContextWindow {
  std::vector<Token> left;
  std::vector<Token> right;
};

/// Up to `width` tokens on each side of the pronoun, within its segment.
ContextWindow context_window(const PronounInstance& instance, const Segment& segment,
                             std::size_t width);

struct SentencePair {
  std::string s1;  // left context, empty for segment-initial pronouns
  std::string s2;  // pronoun plus right context
};

SentencePair split_pair(const PronounInstance& instance, const Segment& segment);

/// Pair export lines: {instance_id, s1, s2, label?}.
void write_pairs_jsonl(std::ostream& out, std::span<const PronounInstance> instances,
                       const SegmentIndex& index,
                       const std::map<std::string, std::string>& labels = {});

// ---------------------------------------------------------------------------
// Statistics

enum class GroupBy { Party, Speaker };

std::optional<GroupBy> parse_group_by(std::string_view name);
std::string group_name(const Segment& segment, GroupBy group_by);

struct GroupStats {
  std::string group;
  std::size_t tokens = 0;
  std::size_t instances = 0;
  std::size_t speakers = 0;
  std::optional<double> rate_per_1000;  // none when the group has no tokens
};

struct CorpusStats {
  GroupBy group_by = GroupBy::Party;
  std::vector<GroupStats> groups;  // sorted by group name
  GroupStats total;
};

CorpusStats corpus_stats(std::span<const Segment> segments,
                         std::span<const PronounInstance> instances, GroupBy group_by);

/// Rate rounded to one decimal, or "NONE".
std::string format_rate(const std::optional<double>& rate);

void write_stats_tsv(std::ostream& out, const CorpusStats& stats);

}  // namespace pronref
