// Corpus readers and writers: CoNLL-U with segment metadata comments, the
// JSONL segment format and a minimal debate XML subset.

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <regex>
#include <set>
#include <sstream>

#include "pronref/corpus.hpp"
#include "pronref/error.hpp"
#include "pronref/text.hpp"

namespace pronref {
namespace {

using nlohmann::json;

bool valid_date(const std::string& date) {
  static const std::regex iso(R"(\d{4}-\d{2}-\d{2})");
  return date.empty() || std::regex_match(date, iso);
}

// Groups sentences into segments keyed by (doc_id, segment_index) and
// collects rejections. A segment with any bad sentence is dropped whole.
class SegmentBuilder {
 public:
  struct Meta {
    std::string doc_id;
    int segment_index = 0;
    std::string speaker;
    std::string party;
    std::string date;
  };

  void add_sentence(const Meta& meta, Sentence sentence) {
    SegmentKey key{meta.doc_id, meta.segment_index};
    if (!current_ || !(key == *current_)) open(meta, key);
    if (failed_.count(key)) return;
    if (auto problem = validate_tree(sentence)) {
      fail(key, *problem);
      return;
    }
    if (!partial_.back().second) return;
    partial_.back().first.sentences.push_back(std::move(sentence));
  }

  void reject(const Meta& meta, const std::string& message) {
    SegmentKey key{meta.doc_id, meta.segment_index};
    if (!current_ || !(key == *current_)) open(meta, key);
    fail(key, message);
  }

  void fail(const SegmentKey& key, const std::string& message) {
    if (failed_.insert(key).second) {
      result_.rejected.push_back({key.doc_id, key.segment_index,
                                  key.doc_id + ":" + std::to_string(key.segment_index) + ": " + message});
    }
    for (auto& [seg, ok] : partial_) {
      if (seg.doc_id == key.doc_id && seg.segment_index == key.segment_index) ok = false;
    }
  }

  IngestResult finish() {
    for (auto& [seg, ok] : partial_) {
      if (!ok) continue;
      if (seg.sentences.empty()) {
        fail({seg.doc_id, seg.segment_index}, "segment has no sentences");
        continue;
      }
      result_.segments.push_back(std::move(seg));
    }
    partial_.clear();
    return std::move(result_);
  }

 private:
  void open(const Meta& meta, const SegmentKey& key) {
    current_ = key;
    if (!seen_.insert(key).second) {
      fail(key, "duplicate segment index");
      return;
    }
    Segment seg;
    seg.doc_id = meta.doc_id;
    seg.segment_index = meta.segment_index;
    seg.speaker = meta.speaker;
    seg.party = meta.party.empty() ? Party::Other : party_or_other(meta.party);
    seg.date = meta.date;
    bool ok = true;
    if (!valid_date(meta.date)) ok = false;
    partial_.emplace_back(std::move(seg), ok);
    if (!ok) fail(key, "invalid date '" + meta.date + "'");
  }

  IngestResult result_;
  std::vector<std::pair<Segment, bool>> partial_;
  std::set<SegmentKey> seen_;
  std::set<SegmentKey> failed_;
  std::optional<SegmentKey> current_;
};

int parse_int(std::string_view text, const char* what) {
  std::string s(trim(text));
  std::size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(s, &used);
  } catch (const std::exception&) {
    throw DataError(std::string("invalid ") + what + " '" + s + "'");
  }
  if (used != s.size()) throw DataError(std::string("invalid ") + what + " '" + s + "'");
  return value;
}

}  // namespace

// ---------------------------------------------------------------------------
// CoNLL-U

IngestResult parse_conllu(std::istream& in, std::string_view default_doc_id) {
  SegmentBuilder builder;
  SegmentBuilder::Meta meta;
  meta.doc_id = std::string(default_doc_id);
  SegmentBuilder::Meta sentence_meta = meta;
  Sentence sentence;
  std::optional<std::string> sentence_error;
  std::string line;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (sentence.empty() && !sentence_error) return;
    if (sentence_error) {
      builder.reject(sentence_meta, *sentence_error);
    } else {
      builder.add_sentence(sentence_meta, std::move(sentence));
    }
    sentence.clear();
    sentence_error.reset();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      auto body = trim(std::string_view(line).substr(1));
      auto eq = body.find('=');
      if (eq == std::string_view::npos) continue;
      auto key = trim(body.substr(0, eq));
      std::string value(trim(body.substr(eq + 1)));
      if (key == "doc_id") {
        meta.doc_id = value;
        meta.segment_index = 0;
      } else if (key == "segment") {
        try {
          meta.segment_index = parse_int(value, "segment index");
        } catch (const DataError& e) {
          sentence_error = "line " + std::to_string(line_no) + ": " + e.what();
        }
      } else if (key == "speaker") {
        meta.speaker = value;
      } else if (key == "party") {
        meta.party = value;
      } else if (key == "date") {
        meta.date = value;
      }
      continue;
    }

    if (sentence.empty() && !sentence_error) sentence_meta = meta;
    if (sentence_error) continue;
    auto cols = split(line, '\t');
    if (cols.size() != 10) {
      sentence_error = "line " + std::to_string(line_no) + ": expected 10 columns, got " +
                       std::to_string(cols.size());
      continue;
    }
    // Multiword ranges and empty nodes carry no tree position.
    if (cols[0].find_first_of("-.") != std::string::npos) continue;
    try {
      int id = parse_int(cols[0], "token id");
      if (id != static_cast<int>(sentence.size()) + 1)
        throw DataError("token id " + cols[0] + " out of sequence");
      Token t;
      t.index = id - 1;
      t.form = cols[1];
      t.lemma = cols[2];
      t.upos = cols[3];
      int head = parse_int(cols[6], "head");
      if (head < 0) throw DataError("negative head");
      if (head > 0) t.head = head - 1;
      t.deprel = cols[7];
      sentence.push_back(std::move(t));
    } catch (const DataError& e) {
      sentence_error = "line " + std::to_string(line_no) + ": " + e.what();
    }
  }
  flush();
  return builder.finish();
}

void write_conllu(std::ostream& out, std::span<const Segment> segments) {
  for (const auto& seg : segments) {
    out << "# doc_id = " << seg.doc_id << '\n'
        << "# segment = " << seg.segment_index << '\n'
        << "# speaker = " << seg.speaker << '\n'
        << "# party = " << to_string(seg.party) << '\n';
    if (!seg.date.empty()) out << "# date = " << seg.date << '\n';
    for (const auto& sentence : seg.sentences) {
      for (const auto& t : sentence) {
        out << t.index + 1 << '\t' << t.form << '\t' << t.lemma << '\t' << t.upos << "\t_\t_\t"
            << (t.head ? *t.head + 1 : 0) << '\t' << t.deprel << "\t_\t_\n";
      }
      out << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// JSONL

IngestResult parse_segments_jsonl(std::istream& in) {
  SegmentBuilder builder;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    SegmentBuilder::Meta meta;
    meta.doc_id = "jsonl";
    meta.segment_index = static_cast<int>(line_no - 1);
    try {
      json j = json::parse(line);
      if (!j.is_object()) throw DataError("record is not an object");
      if (j.contains("doc_id")) meta.doc_id = j.at("doc_id").get<std::string>();
      if (j.contains("segment")) meta.segment_index = j.at("segment").get<int>();
      meta.speaker = j.value("speaker", "");
      meta.party = j.value("party", "");
      meta.date = j.value("date", "");

      std::vector<Sentence> sentences;
      if (j.contains("sentences")) {
        for (const auto& js : j.at("sentences")) {
          Sentence s;
          for (const auto& jt : js) {
            Token t;
            t.index = static_cast<int>(s.size());
            t.form = jt.at("form").get<std::string>();
            t.lemma = jt.value("lemma", "_");
            t.upos = jt.value("upos", "_");
            if (jt.contains("head") && !jt.at("head").is_null()) t.head = jt.at("head").get<int>();
            t.deprel = jt.value("deprel", "_");
            s.push_back(std::move(t));
          }
          sentences.push_back(std::move(s));
        }
      } else if (j.contains("text_tokens")) {
        // Unparsed token list: one flat sentence hanging off its first token.
        Sentence s;
        for (const auto& form : j.at("text_tokens")) {
          Token t;
          t.index = static_cast<int>(s.size());
          t.form = form.get<std::string>();
          t.lemma = "_";
          t.upos = "_";
          if (t.index > 0) t.head = 0;
          t.deprel = t.index == 0 ? "root" : "dep";
          s.push_back(std::move(t));
        }
        sentences.push_back(std::move(s));
      } else {
        throw DataError("record has neither 'sentences' nor 'text_tokens'");
      }
      if (sentences.empty()) {
        builder.reject(meta, "segment has no sentences");
      }
      for (auto& s : sentences) builder.add_sentence(meta, std::move(s));
    } catch (const std::exception& e) {
      builder.reject(meta, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return builder.finish();
}

void write_segments_jsonl(std::ostream& out, std::span<const Segment> segments) {
  for (const auto& seg : segments) {
    nlohmann::ordered_json j;
    j["doc_id"] = seg.doc_id;
    j["segment"] = seg.segment_index;
    j["speaker"] = seg.speaker;
    j["party"] = std::string(to_string(seg.party));
    j["date"] = seg.date;
    auto sentences = nlohmann::ordered_json::array();
    for (const auto& sentence : seg.sentences) {
      auto js = nlohmann::ordered_json::array();
      for (const auto& t : sentence) {
        nlohmann::ordered_json jt;
        jt["form"] = t.form;
        jt["lemma"] = t.lemma;
        jt["upos"] = t.upos;
        jt["head"] = t.head ? nlohmann::ordered_json(*t.head) : nlohmann::ordered_json(nullptr);
        jt["deprel"] = t.deprel;
        js.push_back(std::move(jt));
      }
      sentences.push_back(std::move(js));
    }
    j["sentences"] = std::move(sentences);
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Debate XML
//
//   <debate doc_id="..." date="YYYY-MM-DD">
//     <speech speaker="..." party="...">
//       <p><s><t form=".." lemma=".." upos=".." head="0" deprel="root"/>...</s></p>
//
// Heads are 1-based with 0 for the root, as in CoNLL-U. Paragraphs are
// numbered per debate in document order. A <corpus> root may hold several
// debates.

IngestResult parse_debate_xml(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw DataError(std::string("malformed debate XML: ") + e.what());
  }

  SegmentBuilder builder;
  auto attr = [](const pt::ptree& node, const char* name) {
    return node.get<std::string>(std::string("<xmlattr>.") + name, "");
  };

  auto read_debate = [&](const pt::ptree& debate) {
    SegmentBuilder::Meta meta;
    meta.doc_id = attr(debate, "doc_id");
    const std::string debate_date = attr(debate, "date");
    int paragraph = 0;
    for (const auto& [tag, speech] : debate) {
      if (tag != "speech") continue;
      meta.speaker = attr(speech, "speaker");
      meta.party = attr(speech, "party");
      auto speech_date = attr(speech, "date");
      meta.date = speech_date.empty() ? debate_date : speech_date;
      for (const auto& [ptag, para] : speech) {
        if (ptag != "p") continue;
        meta.segment_index = paragraph++;
        bool any = false;
        for (const auto& [stag, sent] : para) {
          if (stag != "s") continue;
          any = true;
          Sentence s;
          try {
            for (const auto& [ttag, tok] : sent) {
              if (ttag != "t") continue;
              Token t;
              t.index = static_cast<int>(s.size());
              t.form = attr(tok, "form");
              t.lemma = attr(tok, "lemma");
              t.upos = attr(tok, "upos");
              int head = parse_int(attr(tok, "head"), "head");
              if (head > 0) t.head = head - 1;
              t.deprel = attr(tok, "deprel");
              s.push_back(std::move(t));
            }
          } catch (const DataError& e) {
            builder.reject(meta, e.what());
            continue;
          }
          builder.add_sentence(meta, std::move(s));
        }
        if (!any) {
          builder.reject(meta, "segment has no sentences");
        }
      }
    }
  };

  for (const auto& [tag, node] : tree) {
    if (tag == "debate") {
      read_debate(node);
    } else if (tag == "corpus") {
      for (const auto& [inner, debate] : node)
        if (inner == "debate") read_debate(debate);
    }
  }
  return builder.finish();
}

IngestResult ingest(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  switch (format) {
    case CorpusFormat::Conllu: return parse_conllu(in, path.stem().string());
    case CorpusFormat::Jsonl: return parse_segments_jsonl(in);
    case CorpusFormat::DebateXml: return parse_debate_xml(in);
  }
  throw UsageError("unsupported corpus format");
}

// ---------------------------------------------------------------------------
// Instances

void write_instances_jsonl(std::ostream& out, std::span<const PronounInstance> instances) {
  for (const auto& inst : instances) {
    nlohmann::ordered_json j;
    j["instance_id"] = inst.instance_id;
    j["form"] = inst.form;
    j["doc_id"] = inst.doc_id;
    j["segment"] = inst.segment_index;
    j["token"] = inst.flat_token_index;
    out << j.dump() << '\n';
  }
}

std::vector<PronounInstance> read_instances_jsonl(std::istream& in) {
  std::vector<PronounInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      PronounInstance inst;
      inst.instance_id = j.at("instance_id").get<std::string>();
      inst.form = j.at("form").get<std::string>();
      inst.doc_id = j.at("doc_id").get<std::string>();
      inst.segment_index = j.at("segment").get<int>();
      inst.flat_token_index = j.at("token").get<std::size_t>();
      out.push_back(std::move(inst));
    } catch (const json::exception& e) {
      throw DataError("instances line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace pronref
