#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pronref/corpus.hpp"
#include "pronref/error.hpp"
#include "pronref/refclass.hpp"

namespace pronref {

/// Constraints on one token. Absent constraints accept every token; the
/// anchor additionally has to be a first-person-plural form.
struct NodeSpec {
  std::string id;
  bool anchor = false;
  /// Whole-form regular expression (ECMAScript). A leading "(?i)" makes it
  /// case-insensitive; non-ASCII letters then also match via the folded form.
  std::optional<std::string> form_regex;
  /// Compared case-insensitively.
  std::optional<std::vector<std::string>> lemma_in;
  std::optional<std::vector<std::string>> upos_in;

  // Filled by validate_pattern.
  std::optional<std::regex> compiled_form;
  std::vector<std::string> folded_lemmas;
};

/// CHILD: `to` depends on `from`. HEAD: `to` is the head of `from`.
/// IMM_RIGHT / IMM_LEFT: `to` is the adjacent token. RIGHT: `to` is anywhere
/// right of `from`. All relations stay inside one sentence.
enum class EdgeOp { Child, Head, ImmRight, ImmLeft, Right };

std::optional<EdgeOp> parse_edge_op(std::string_view name);
std::string_view to_string(EdgeOp op);

struct EdgeSpec {
  std::string from;
  std::string to;
  EdgeOp op = EdgeOp::Child;
  /// Relation of the dependent in the arc (CHILD/HEAD only). An entry also
  /// matches subtyped relations, e.g. "nsubj" accepts "nsubj:pass".
  std::optional<std::vector<std::string>> deprel_in;
};

struct Pattern {
  std::string name;
  RefClass label = RefClass::Board;
  std::vector<NodeSpec> nodes;
  std::vector<EdgeSpec> edges;

  std::size_t anchor_index() const;
  std::size_t node_index(std::string_view id) const;
};

/// Compile error with the source position (1-based) when known.
class PatternError : public DataError {
 public:
  PatternError(const std::string& message, int line = 0, int column = 0);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// Checks the structural invariants (one anchor, declared ids, a connected
/// acyclic edge graph, deprel sets only on tree edges) and compiles regexes.
void validate_pattern(Pattern& pattern);

/// Parses a YAML pattern list (or a map with a `patterns` list). Names must
/// be unique across the set.
std::vector<Pattern> compile_patterns(std::string_view yaml_source);
std::vector<Pattern> load_patterns(const std::filesystem::path& path);

bool node_accepts(const NodeSpec& node, const Token& token);
/// Whether the relation holds between sentence-local positions.
bool edge_holds(const EdgeSpec& edge, const Sentence& sentence, std::size_t from, std::size_t to);

struct Match {
  std::string pattern_name;
  RefClass label = RefClass::Board;
  std::string instance_id;
  std::size_t anchor = 0;  // flat token index
  /// Node id -> flat token index, in node declaration order.
  std::vector<std::pair<std::string, std::size_t>> bindings;

  bool operator==(const Match&) const = default;
};

/// One match per anchor token (the lexicographically smallest binding in
/// node declaration order), ordered by anchor. Bindings are injective.
std::vector<Match> match(const Pattern& pattern, const Segment& segment);

struct PatternHits {
  std::string name;
  RefClass label = RefClass::Board;
  std::size_t count = 0;
};

struct HitTable {
  std::vector<PatternHits> per_pattern;  // in pattern order
  ClassCounts per_class{};
  std::size_t total = 0;
  /// Ordered by (doc_id, segment_index, anchor, pattern order).
  std::vector<Match> matches;
};

HitTable match_all(std::span<const Pattern> patterns, std::span<const Segment> segments);

/// Class / #patterns / #hits table, one row per class plus a total.
void write_hit_table(std::ostream& out, const HitTable& hits);

}  // namespace pronref
