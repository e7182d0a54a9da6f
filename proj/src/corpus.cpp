#include "pronref/corpus.hpp"

#include <algorithm>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>

#include "pronref/error.hpp"
#include "pronref/log.hpp"
#include "pronref/text.hpp"

namespace pronref {

// ---------------------------------------------------------------------------
// Parties

std::string_view to_string(Party p) {
  switch (p) {
    case Party::AfD: return "AfD";
    case Party::CduCsu: return "CDU/CSU";
    case Party::Fdp: return "FDP";
    case Party::Gruene: return "GRÜNE";
    case Party::Linke: return "LINKE";
    case Party::Spd: return "SPD";
    case Party::Fraktionslos: return "fraktionslos";
    case Party::Other: return "OTHER";
  }
  return "OTHER";
}

std::optional<Party> parse_party(std::string_view name) {
  static const std::map<std::string, Party> aliases = {
      {"afd", Party::AfD},
      {"cdu/csu", Party::CduCsu},
      {"cdu", Party::CduCsu},
      {"csu", Party::CduCsu},
      {"fdp", Party::Fdp},
      {"grüne", Party::Gruene},
      {"gruene", Party::Gruene},
      {"die grünen", Party::Gruene},
      {"bündnis 90/die grünen", Party::Gruene},
      {"linke", Party::Linke},
      {"die linke", Party::Linke},
      {"die linke.", Party::Linke},
      {"spd", Party::Spd},
      {"fraktionslos", Party::Fraktionslos},
      {"other", Party::Other},
  };
  auto it = aliases.find(fold_case(trim(name)));
  if (it == aliases.end()) return std::nullopt;
  return it->second;
}

Party party_or_other(std::string_view name) {
  if (auto p = parse_party(name)) return *p;
  log::warn("unknown party '" + std::string(name) + "' mapped to OTHER");
  return Party::Other;
}

// ---------------------------------------------------------------------------
// Trees and segments

std::optional<std::string> validate_tree(const Sentence& sentence) {
  const int n = static_cast<int>(sentence.size());
  if (n == 0) return "empty sentence";
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    const Token& t = sentence[static_cast<std::size_t>(i)];
    if (t.index != i) return "token " + std::to_string(i) + " has index " + std::to_string(t.index);
    if (!t.head) {
      ++roots;
      continue;
    }
    if (*t.head == i) return "self-headed token " + std::to_string(i + 1) + " '" + t.form + "'";
    if (*t.head < 0 || *t.head >= n)
      return "token " + std::to_string(i + 1) + " has out-of-range head " + std::to_string(*t.head + 1);
  }
  if (roots == 0) return "no root token";
  if (roots > 1) return "multiple roots (" + std::to_string(roots) + ")";
  // Every token must reach the root without revisiting a node.
  for (int i = 0; i < n; ++i) {
    int cur = i;
    for (int steps = 0; sentence[static_cast<std::size_t>(cur)].head; ++steps) {
      if (steps > n) return "cycle through token " + std::to_string(i + 1);
      cur = *sentence[static_cast<std::size_t>(cur)].head;
    }
  }
  return std::nullopt;
}

std::size_t Segment::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

TokenLocation Segment::locate(std::size_t flat) const {
  std::size_t rest = flat;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    if (rest < sentences[s].size()) return {s, rest};
    rest -= sentences[s].size();
  }
  throw DataError("flat token index " + std::to_string(flat) + " out of range in " + doc_id + ":" +
                  std::to_string(segment_index));
}

const Token& Segment::token(std::size_t flat) const {
  auto loc = locate(flat);
  return sentences[loc.sentence][loc.local];
}

std::size_t Segment::sentence_offset(std::size_t sentence) const {
  std::size_t off = 0;
  for (std::size_t s = 0; s < sentence && s < sentences.size(); ++s) off += sentences[s].size();
  return off;
}

std::vector<std::string> Segment::forms() const {
  std::vector<std::string> out;
  out.reserve(token_count());
  for (const auto& s : sentences)
    for (const auto& t : s) out.push_back(t.form);
  return out;
}

std::optional<CorpusFormat> parse_corpus_format(std::string_view name) {
  if (name == "conllu") return CorpusFormat::Conllu;
  if (name == "debate-xml" || name == "xml") return CorpusFormat::DebateXml;
  if (name == "jsonl") return CorpusFormat::Jsonl;
  return std::nullopt;
}

std::string_view to_string(CorpusFormat f) {
  switch (f) {
    case CorpusFormat::Conllu: return "conllu";
    case CorpusFormat::DebateXml: return "debate-xml";
    case CorpusFormat::Jsonl: return "jsonl";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Instances

const std::vector<std::string>& pronoun_inventory() {
  static const std::vector<std::string> inventory = [] {
    std::set<std::string> forms = {"wir", "uns", "unser", "unsre"};
    for (const char* stem : {"unser", "unsr"}) {
      for (const char* suffix : {"e", "em", "en", "er", "es"}) forms.insert(std::string(stem) + suffix);
    }
    return std::vector<std::string>(forms.begin(), forms.end());
  }();
  return inventory;
}

bool is_first_person_plural(std::string_view form) {
  const auto& inv = pronoun_inventory();
  return std::binary_search(inv.begin(), inv.end(), fold_case(form));
}

std::string make_instance_id(std::string_view doc_id, int segment_index, std::size_t flat_index) {
  return std::string(doc_id) + ":" + std::to_string(segment_index) + ":" + std::to_string(flat_index);
}

std::optional<PronounInstance> parse_instance_id(std::string_view instance_id) {
  auto last = instance_id.rfind(':');
  if (last == std::string_view::npos || last == 0) return std::nullopt;
  auto mid = instance_id.rfind(':', last - 1);
  if (mid == std::string_view::npos) return std::nullopt;
  auto digits = [](std::string_view s) {
    return !s.empty() && s.find_first_not_of("0123456789") == std::string_view::npos;
  };
  auto seg = instance_id.substr(mid + 1, last - mid - 1);
  auto tok = instance_id.substr(last + 1);
  if (!digits(seg) || !digits(tok) || seg.size() > 9 || tok.size() > 18) return std::nullopt;
  PronounInstance inst;
  inst.instance_id = std::string(instance_id);
  inst.doc_id = std::string(instance_id.substr(0, mid));
  inst.segment_index = std::stoi(std::string(seg));
  inst.flat_token_index = static_cast<std::size_t>(std::stoull(std::string(tok)));
  return inst;
}

std::vector<PronounInstance> extract_instances(std::span<const Segment> segments) {
  std::vector<const Segment*> ordered;
  ordered.reserve(segments.size());
  for (const auto& s : segments) ordered.push_back(&s);
  std::stable_sort(ordered.begin(), ordered.end(), [](const Segment* a, const Segment* b) {
    return std::tie(a->doc_id, a->segment_index) < std::tie(b->doc_id, b->segment_index);
  });

  std::vector<PronounInstance> out;
  for (const Segment* seg : ordered) {
    std::size_t flat = 0;
    for (const auto& sentence : seg->sentences) {
      for (const auto& tok : sentence) {
        if (is_first_person_plural(tok.form)) {
          out.push_back({make_instance_id(seg->doc_id, seg->segment_index, flat), tok.form, seg->doc_id,
                         seg->segment_index, flat});
        }
        ++flat;
      }
    }
  }
  return out;
}

SegmentIndex::SegmentIndex(std::span<const Segment> segments) {
  for (const auto& s : segments) by_key_[{s.doc_id, s.segment_index}] = &s;
}

const Segment* SegmentIndex::find(const SegmentKey& key) const {
  auto it = by_key_.find(key);
  return it == by_key_.end() ? nullptr : it->second;
}

const Segment& SegmentIndex::at(const PronounInstance& instance) const {
  const Segment* s = find(instance.segment_key());
  if (!s) throw DataError("no segment for instance " + instance.instance_id);
  return *s;
}

ContextWindow context_window(const PronounInstance& instance, const Segment& segment,
                             std::size_t width) {
  const std::size_t n = segment.token_count();
  const std::size_t p = instance.flat_token_index;
  if (p >= n) throw DataError("instance " + instance.instance_id + " outside its segment");
  ContextWindow w;
  const std::size_t lo = p >= width ? p - width : 0;
  const std::size_t hi = std::min(n, p + 1 + width);
  for (std::size_t i = lo; i < p; ++i) w.left.push_back(segment.token(i));
  for (std::size_t i = p + 1; i < hi; ++i) w.right.push_back(segment.token(i));
  return w;
}

SentencePair split_pair(const PronounInstance& instance, const Segment& segment) {
  auto forms = segment.forms();
  const std::size_t p = instance.flat_token_index;
  if (p >= forms.size()) throw DataError("instance " + instance.instance_id + " outside its segment");
  std::span<const std::string> all(forms);
  return {join(all.first(p), " "), join(all.subspan(p), " ")};
}

void write_pairs_jsonl(std::ostream& out, std::span<const PronounInstance> instances,
                       const SegmentIndex& index, const std::map<std::string, std::string>& labels) {
  for (const auto& inst : instances) {
    auto pair = split_pair(inst, index.at(inst));
    nlohmann::ordered_json j;
    j["instance_id"] = inst.instance_id;
    j["s1"] = pair.s1;
    j["s2"] = pair.s2;
    if (auto it = labels.find(inst.instance_id); it != labels.end()) j["label"] = it->second;
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Statistics

std::optional<GroupBy> parse_group_by(std::string_view name) {
  if (name == "party") return GroupBy::Party;
  if (name == "speaker") return GroupBy::Speaker;
  return std::nullopt;
}

std::string group_name(const Segment& segment, GroupBy group_by) {
  return group_by == GroupBy::Party ? std::string(to_string(segment.party)) : segment.speaker;
}

namespace {

std::optional<double> rate_of(std::size_t count, std::size_t tokens) {
  if (tokens == 0) return std::nullopt;
  return static_cast<double>(count) * 1000.0 / static_cast<double>(tokens);
}

}  // namespace

CorpusStats corpus_stats(std::span<const Segment> segments,
                         std::span<const PronounInstance> instances, GroupBy group_by) {
  struct Acc {
    std::size_t tokens = 0, instances = 0;
    std::set<std::string> speakers;
  };
  std::map<std::string, Acc> acc;
  std::map<SegmentKey, std::string> group_of;
  std::set<std::string> all_speakers;
  for (const auto& seg : segments) {
    auto g = group_name(seg, group_by);
    auto& a = acc[g];
    a.tokens += seg.token_count();
    a.speakers.insert(seg.speaker);
    all_speakers.insert(seg.speaker);
    group_of[{seg.doc_id, seg.segment_index}] = g;
  }
  for (const auto& inst : instances) {
    auto it = group_of.find(inst.segment_key());
    if (it == group_of.end()) throw DataError("instance " + inst.instance_id + " has no segment");
    ++acc[it->second].instances;
  }

  CorpusStats stats;
  stats.group_by = group_by;
  stats.total.group = "Total";
  for (auto& [name, a] : acc) {
    GroupStats g{name, a.tokens, a.instances, a.speakers.size(), rate_of(a.instances, a.tokens)};
    stats.total.tokens += g.tokens;
    stats.total.instances += g.instances;
    stats.groups.push_back(std::move(g));
  }
  stats.total.speakers = all_speakers.size();
  stats.total.rate_per_1000 = rate_of(stats.total.instances, stats.total.tokens);
  return stats;
}

std::string format_rate(const std::optional<double>& rate) {
  return rate ? format_fixed(*rate, 1) : "NONE";
}

void write_stats_tsv(std::ostream& out, const CorpusStats& stats) {
  out << (stats.group_by == GroupBy::Party ? "party" : "speaker") << "\ttokens\tinstances\tspeakers\tper_1000\n";
  auto row = [&](const GroupStats& g) {
    out << g.group << '\t' << g.tokens << '\t' << g.instances << '\t' << g.speakers << '\t'
        << format_rate(g.rate_per_1000) << '\n';
  };
  for (const auto& g : stats.groups) row(g);
  row(stats.total);
}

}  // namespace pronref
