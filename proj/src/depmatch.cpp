#include "pronref/depmatch.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <yaml-cpp/yaml.h>

#include "pronref/text.hpp"

namespace pronref {

PatternError::PatternError(const std::string& message, int line, int column)
    : DataError(line > 0 ? "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message
                         : message),
      line_(line),
      column_(column) {}

std::optional<EdgeOp> parse_edge_op(std::string_view name) {
  auto key = ascii_upper(name);
  if (key == "CHILD") return EdgeOp::Child;
  if (key == "HEAD") return EdgeOp::Head;
  if (key == "IMM_RIGHT") return EdgeOp::ImmRight;
  if (key == "IMM_LEFT") return EdgeOp::ImmLeft;
  if (key == "RIGHT") return EdgeOp::Right;
  return std::nullopt;
}

std::string_view to_string(EdgeOp op) {
  switch (op) {
    case EdgeOp::Child: return "CHILD";
    case EdgeOp::Head: return "HEAD";
    case EdgeOp::ImmRight: return "IMM_RIGHT";
    case EdgeOp::ImmLeft: return "IMM_LEFT";
    case EdgeOp::Right: return "RIGHT";
  }
  return "?";
}

std::size_t Pattern::anchor_index() const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].anchor) return i;
  throw PatternError("pattern '" + name + "' has no anchor");
}

std::size_t Pattern::node_index(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return i;
  throw PatternError("pattern '" + name + "' has no node '" + std::string(id) + "'");
}

// ---------------------------------------------------------------------------
// Validation

void validate_pattern(Pattern& p) {
  if (p.name.empty()) throw PatternError("pattern without a name");
  const std::string where = "pattern '" + p.name + "': ";
  if (p.nodes.empty()) throw PatternError(where + "no nodes");

  std::set<std::string> ids;
  std::size_t anchors = 0;
  for (auto& n : p.nodes) {
    if (n.id.empty()) throw PatternError(where + "node without id");
    if (!ids.insert(n.id).second) throw PatternError(where + "duplicate node id '" + n.id + "'");
    if (n.anchor) ++anchors;
    n.compiled_form.reset();
    if (n.form_regex) {
      std::string source = *n.form_regex;
      auto flags = std::regex::ECMAScript;
      if (source.rfind("(?i)", 0) == 0) {
        source.erase(0, 4);
        flags |= std::regex::icase;
      }
      try {
        n.compiled_form.emplace(source, flags);
      } catch (const std::regex_error& e) {
        throw PatternError(where + "invalid regex '" + *n.form_regex + "' for node '" + n.id + "': " + e.what());
      }
    }
    n.folded_lemmas.clear();
    if (n.lemma_in) {
      for (const auto& l : *n.lemma_in) n.folded_lemmas.push_back(fold_case(l));
      std::sort(n.folded_lemmas.begin(), n.folded_lemmas.end());
    }
  }
  if (anchors != 1)
    throw PatternError(where + "exactly one anchor node required, found " + std::to_string(anchors));

  // Union-find over nodes: every edge must join two components.
  std::vector<std::size_t> parent(p.nodes.size());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
  auto root = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : p.edges) {
    if (!ids.count(e.from)) throw PatternError(where + "edge refers to undeclared node '" + e.from + "'");
    if (!ids.count(e.to)) throw PatternError(where + "edge refers to undeclared node '" + e.to + "'");
    if (e.from == e.to) throw PatternError(where + "edge from '" + e.from + "' to itself");
    if (e.deprel_in && e.op != EdgeOp::Child && e.op != EdgeOp::Head)
      throw PatternError(where + "deprel_in is only valid on CHILD/HEAD edges");
    auto a = root(p.node_index(e.from));
    auto b = root(p.node_index(e.to));
    if (a == b) throw PatternError(where + "edge graph has a cycle through '" + e.from + "' and '" + e.to + "'");
    parent[a] = b;
  }
  if (p.edges.size() + 1 != p.nodes.size()) throw PatternError(where + "edge graph is disconnected");
}

// ---------------------------------------------------------------------------
// YAML loading

namespace {

PatternError yaml_error(const YAML::Node& node, const std::string& message) {
  auto mark = node.Mark();
  if (mark.is_null()) return PatternError(message);
  return PatternError(message, mark.line + 1, mark.column + 1);
}

std::vector<std::string> string_list(const YAML::Node& node, const std::string& key) {
  if (!node.IsSequence()) throw yaml_error(node, "'" + key + "' must be a list");
  std::vector<std::string> out;
  for (const auto& item : node) {
    if (!item.IsScalar()) throw yaml_error(item, "'" + key + "' entries must be strings");
    out.push_back(item.as<std::string>());
  }
  return out;
}

std::string scalar(const YAML::Node& map, const char* key) {
  auto v = map[key];
  if (!v) throw yaml_error(map, std::string("missing '") + key + "'");
  if (!v.IsScalar()) throw yaml_error(v, std::string("'") + key + "' must be a string");
  return v.as<std::string>();
}

void check_keys(const YAML::Node& map, std::initializer_list<std::string_view> allowed, const char* what) {
  if (!map.IsMap()) throw yaml_error(map, std::string(what) + " must be a mapping");
  for (const auto& kv : map) {
    auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw yaml_error(kv.first, std::string("unknown ") + what + " key '" + key + "'");
  }
}

Pattern pattern_from_yaml(const YAML::Node& y) {
  check_keys(y, {"name", "label", "nodes", "edges", "description"}, "pattern");
  Pattern p;
  p.name = scalar(y, "name");
  auto label = parse_ref_class(scalar(y, "label"));
  if (!label) throw yaml_error(y["label"], "unknown label '" + scalar(y, "label") + "'");
  p.label = *label;

  auto nodes = y["nodes"];
  if (!nodes || !nodes.IsSequence()) throw yaml_error(y, "pattern '" + p.name + "' needs a 'nodes' list");
  for (const auto& yn : nodes) {
    check_keys(yn, {"id", "anchor", "form_regex", "lemma_in", "upos_in"}, "node");
    NodeSpec n;
    n.id = scalar(yn, "id");
    if (yn["anchor"]) n.anchor = yn["anchor"].as<bool>();
    if (yn["form_regex"]) n.form_regex = scalar(yn, "form_regex");
    if (yn["lemma_in"]) n.lemma_in = string_list(yn["lemma_in"], "lemma_in");
    if (yn["upos_in"]) n.upos_in = string_list(yn["upos_in"], "upos_in");
    p.nodes.push_back(std::move(n));
  }

  if (auto edges = y["edges"]) {
    if (!edges.IsSequence()) throw yaml_error(edges, "'edges' must be a list");
    for (const auto& ye : edges) {
      check_keys(ye, {"from", "to", "op", "deprel_in"}, "edge");
      EdgeSpec e;
      e.from = scalar(ye, "from");
      e.to = scalar(ye, "to");
      auto op_name = scalar(ye, "op");
      auto op = parse_edge_op(op_name);
      if (!op) throw yaml_error(ye["op"], "unknown edge op '" + op_name + "'");
      e.op = *op;
      if (ye["deprel_in"]) e.deprel_in = string_list(ye["deprel_in"], "deprel_in");
      p.edges.push_back(std::move(e));
    }
  }

  try {
    validate_pattern(p);
  } catch (const PatternError& e) {
    throw yaml_error(y, e.what());
  }
  return p;
}

}  // namespace

std::vector<Pattern> compile_patterns(std::string_view yaml_source) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_source));
  } catch (const YAML::Exception& e) {
    throw PatternError(e.msg, e.mark.is_null() ? 0 : e.mark.line + 1, e.mark.is_null() ? 0 : e.mark.column + 1);
  }
  YAML::Node list = root;
  if (root.IsMap()) {
    list = root["patterns"];
    if (!list) throw yaml_error(root, "pattern file has no 'patterns' list");
  }
  if (root.IsNull()) return {};
  if (!list.IsSequence()) throw yaml_error(list, "pattern file must contain a list of patterns");

  std::vector<Pattern> out;
  std::set<std::string> names;
  try {
    for (const auto& y : list) {
      auto p = pattern_from_yaml(y);
      if (!names.insert(p.name).second) throw yaml_error(y, "duplicate pattern name '" + p.name + "'");
      out.push_back(std::move(p));
    }
  } catch (const YAML::Exception& e) {
    throw PatternError(e.msg, e.mark.is_null() ? 0 : e.mark.line + 1, e.mark.is_null() ? 0 : e.mark.column + 1);
  }
  return out;
}

std::vector<Pattern> load_patterns(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pattern file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return compile_patterns(buf.str());
  } catch (const PatternError& e) {
    throw PatternError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Matching

namespace {

bool in_list(const std::vector<std::string>& list, const std::string& value) {
  return std::find(list.begin(), list.end(), value) != list.end();
}

bool deprel_matches(const std::vector<std::string>& allowed, const std::string& deprel) {
  if (in_list(allowed, deprel)) return true;
  auto colon = deprel.find(':');
  return colon != std::string::npos && in_list(allowed, deprel.substr(0, colon));
}

}  // namespace

bool node_accepts(const NodeSpec& node, const Token& token) {
  if (node.anchor && !is_first_person_plural(token.form)) return false;
  if (node.form_regex) {
    if (!node.compiled_form) throw PatternError("node '" + node.id + "' used before validation");
    const bool icase = (node.compiled_form->flags() & std::regex::icase) != 0;
    if (!std::regex_match(token.form, *node.compiled_form) &&
        !(icase && std::regex_match(fold_case(token.form), *node.compiled_form)))
      return false;
  }
  if (node.lemma_in &&
      !std::binary_search(node.folded_lemmas.begin(), node.folded_lemmas.end(), fold_case(token.lemma)))
    return false;
  if (node.upos_in && !in_list(*node.upos_in, token.upos)) return false;
  return true;
}

bool edge_holds(const EdgeSpec& edge, const Sentence& sentence, std::size_t from, std::size_t to) {
  const auto& f = sentence[from];
  const auto& t = sentence[to];
  switch (edge.op) {
    case EdgeOp::Child:
      return t.head && static_cast<std::size_t>(*t.head) == from &&
             (!edge.deprel_in || deprel_matches(*edge.deprel_in, t.deprel));
    case EdgeOp::Head:
      return f.head && static_cast<std::size_t>(*f.head) == to &&
             (!edge.deprel_in || deprel_matches(*edge.deprel_in, f.deprel));
    case EdgeOp::ImmRight: return to == from + 1;
    case EdgeOp::ImmLeft: return to + 1 == from;
    case EdgeOp::Right: return to > from;
  }
  return false;
}

namespace {

struct Step {
  std::size_t edge;
  std::size_t known;
  std::size_t fresh;
  bool known_is_from;
};

// Breadth-first order over the edge tree starting at the anchor.
std::vector<Step> plan_steps(const Pattern& p) {
  std::vector<Step> steps;
  std::vector<bool> reached(p.nodes.size(), false);
  std::vector<std::size_t> queue{p.anchor_index()};
  reached[queue.front()] = true;
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const std::size_t cur = queue[q];
    for (std::size_t e = 0; e < p.edges.size(); ++e) {
      const auto from = p.node_index(p.edges[e].from);
      const auto to = p.node_index(p.edges[e].to);
      if (from == cur && !reached[to]) {
        steps.push_back({e, cur, to, true});
        reached[to] = true;
        queue.push_back(to);
      } else if (to == cur && !reached[from]) {
        steps.push_back({e, cur, from, false});
        reached[from] = true;
        queue.push_back(from);
      }
    }
  }
  return steps;
}

class Binder {
 public:
  Binder(const Pattern& p, const Sentence& s, const std::vector<Step>& steps)
      : p_(p), s_(s), steps_(steps), binding_(p.nodes.size()), used_(s.size(), false) {}

  std::optional<std::vector<std::size_t>> best(std::size_t anchor_node, std::size_t anchor_pos) {
    best_.reset();
    binding_[anchor_node] = anchor_pos;
    used_[anchor_pos] = true;
    extend(0);
    used_[anchor_pos] = false;
    return best_;
  }

 private:
  void extend(std::size_t k) {
    if (k == steps_.size()) {
      if (!best_ || binding_ < *best_) best_ = binding_;
      return;
    }
    const Step& st = steps_[k];
    const auto& edge = p_.edges[st.edge];
    const std::size_t known = binding_[st.known];
    for (std::size_t cand = 0; cand < s_.size(); ++cand) {
      if (used_[cand] || !node_accepts(p_.nodes[st.fresh], s_[cand])) continue;
      const bool ok = st.known_is_from ? edge_holds(edge, s_, known, cand) : edge_holds(edge, s_, cand, known);
      if (!ok) continue;
      binding_[st.fresh] = cand;
      used_[cand] = true;
      extend(k + 1);
      used_[cand] = false;
    }
  }

  const Pattern& p_;
  const Sentence& s_;
  const std::vector<Step>& steps_;
  std::vector<std::size_t> binding_;
  std::vector<bool> used_;
  std::optional<std::vector<std::size_t>> best_;
};

}  // namespace

std::vector<Match> match(const Pattern& pattern, const Segment& segment) {
  const auto steps = plan_steps(pattern);
  const std::size_t anchor_node = pattern.anchor_index();
  std::vector<Match> out;
  std::size_t offset = 0;
  for (const auto& sentence : segment.sentences) {
    Binder binder(pattern, sentence, steps);
    for (std::size_t pos = 0; pos < sentence.size(); ++pos) {
      if (!node_accepts(pattern.nodes[anchor_node], sentence[pos])) continue;
      auto best = binder.best(anchor_node, pos);
      if (!best) continue;
      Match m;
      m.pattern_name = pattern.name;
      m.label = pattern.label;
      m.anchor = offset + pos;
      m.instance_id = make_instance_id(segment.doc_id, segment.segment_index, m.anchor);
      for (std::size_t i = 0; i < pattern.nodes.size(); ++i)
        m.bindings.emplace_back(pattern.nodes[i].id, offset + (*best)[i]);
      out.push_back(std::move(m));
    }
    offset += sentence.size();
  }
  return out;
}

HitTable match_all(std::span<const Pattern> patterns, std::span<const Segment> segments) {
  HitTable table;
  for (const auto& p : patterns) table.per_pattern.push_back({p.name, p.label, 0});

  std::vector<const Segment*> ordered;
  for (const auto& s : segments) ordered.push_back(&s);
  std::stable_sort(ordered.begin(), ordered.end(), [](const Segment* a, const Segment* b) {
    return std::tie(a->doc_id, a->segment_index) < std::tie(b->doc_id, b->segment_index);
  });

  for (const Segment* seg : ordered) {
    std::vector<std::pair<std::size_t, Match>> found;  // (pattern index, match)
    for (std::size_t pi = 0; pi < patterns.size(); ++pi) {
      for (auto& m : match(patterns[pi], *seg)) found.emplace_back(pi, std::move(m));
    }
    std::stable_sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
      return std::tie(a.second.anchor, a.first) < std::tie(b.second.anchor, b.first);
    });
    for (auto& [pi, m] : found) {
      ++table.per_pattern[pi].count;
      ++table.per_class[index_of(m.label)];
      ++table.total;
      table.matches.push_back(std::move(m));
    }
  }
  return table;
}

void write_hit_table(std::ostream& out, const HitTable& hits) {
  ClassCounts patterns_per_class{};
  for (const auto& p : hits.per_pattern) ++patterns_per_class[index_of(p.label)];
  out << "class\tpatterns\thits\n";
  std::size_t total_patterns = 0;
  for (RefClass c : kAllClasses) {
    out << to_string(c) << '\t' << patterns_per_class[index_of(c)] << '\t' << hits.per_class[index_of(c)] << '\n';
    total_patterns += patterns_per_class[index_of(c)];
  }
  out << "Total\t" << total_patterns << '\t' << hits.total << "\n\npattern\tclass\thits\n";
  for (const auto& p : hits.per_pattern) out << p.name << '\t' << to_string(p.label) << '\t' << p.count << '\n';
}

}  // namespace pronref
