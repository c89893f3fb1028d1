#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphre/errors.hpp"

namespace graphre {

// half-open word-index range
struct EntitySpan {
  int start = 0;
  int end = 0;
  std::string label;
};

// head/tail are entity indices for RE datasets, 0-based word indices for
// dependency datasets
struct RelationTriple {
  int head = 0;
  int tail = 0;
  std::string label;
};

struct Document {
  std::string id;
  std::string text;
  std::vector<std::string> words;
  std::vector<EntitySpan> entities;
  std::vector<RelationTriple> triples;
  std::vector<std::string> word_tags;  // per-word tags when gold tags exist

  // dependency annotation (CoNLL-U only): raw column-7 heads (0 = root,
  // otherwise 1-based word index) and column-8 relations
  std::vector<int> dep_heads;
  std::vector<std::string> dep_rels;

  bool is_dependency() const { return !dep_heads.empty(); }
  int relation_count() const { return static_cast<int>(triples.size()); }
};

enum class DataFormat { conllu, json_triples };
enum class AnchorMode { last, first };

struct DatasetSpec {
  std::string name;
  DataFormat format = DataFormat::json_triples;
  std::vector<std::string> entity_labels;
  std::vector<std::string> relation_labels;  // excluding "none"
  bool tree_structured = false;
  bool oracle_tags = false;
  AnchorMode anchor = AnchorMode::last;
  int min_relations = 0;  // 0 = no filter
};

struct StatsRow {
  int min_k = 0;
  double mean_k = 0.0;
  int max_k = 0;
  double pct_k_le_5 = 0.0;
  double avg_chars = 0.0;
};

// ---- label bookkeeping ----

// Tag and relation label indexing shared by the model and the loaders.
// Relation index 0 is always "none". RE datasets get BIO word tags
// (O, B-x, I-x per entity class); dependency datasets use the raw tag
// strings (xPOS) as word classes.
struct LabelMaps {
  std::vector<std::string> tags;
  std::vector<std::string> relations;
  std::map<std::string, int> tag_index;
  std::map<std::string, int> rel_index;
  bool bio = false;

  int tag_count() const { return static_cast<int>(tags.size()); }
  int relation_count() const { return static_cast<int>(relations.size()); }

  int tag_of(const std::string& s) const {
    auto it = tag_index.find(s);
    if (it == tag_index.end()) throw integrity_error("unknown tag: " + s);
    return it->second;
  }
  int rel_of(const std::string& s) const {
    auto it = rel_index.find(s);
    if (it == rel_index.end()) throw integrity_error("unknown relation: " + s);
    return it->second;
  }

  static LabelMaps build(const DatasetSpec& spec) {
    if (spec.entity_labels.empty() || spec.relation_labels.empty())
      throw config_error("dataset " + spec.name + ": empty label set");
    LabelMaps m;
    m.bio = spec.format == DataFormat::json_triples;
    if (m.bio) {
      m.tags.push_back("O");
      for (const auto& e : spec.entity_labels) {
        m.tags.push_back("B-" + e);
        m.tags.push_back("I-" + e);
      }
    } else {
      m.tags = spec.entity_labels;
    }
    m.relations.push_back("none");
    for (const auto& r : spec.relation_labels) {
      if (r != "none") m.relations.push_back(r);
    }
    for (size_t i = 0; i < m.tags.size(); ++i) m.tag_index[m.tags[i]] = static_cast<int>(i);
    for (size_t i = 0; i < m.relations.size(); ++i)
      m.rel_index[m.relations[i]] = static_cast<int>(i);
    return m;
  }
};

// fills empty label sets from the documents, sorted for stable indices
inline void collect_labels(const std::vector<Document>& docs,
                           DatasetSpec& spec) {
  if (spec.entity_labels.empty()) {
    std::set<std::string> ents;
    for (const auto& d : docs) {
      if (spec.format == DataFormat::conllu)
        for (const auto& t : d.word_tags) ents.insert(t);
      else
        for (const auto& e : d.entities) ents.insert(e.label);
    }
    spec.entity_labels.assign(ents.begin(), ents.end());
  }
  if (spec.relation_labels.empty()) {
    std::set<std::string> rels;
    for (const auto& d : docs)
      for (const auto& t : d.triples) rels.insert(t.label);
    if (spec.format == DataFormat::conllu) rels.insert("root");
    spec.relation_labels.assign(rels.begin(), rels.end());
  }
}

// ---- integrity ----

inline void validate_document(const Document& doc, const DatasetSpec* spec) {
  const int n = static_cast<int>(doc.words.size());
  if (!doc.word_tags.empty() &&
      doc.word_tags.size() != doc.words.size())
    throw integrity_error("document " + doc.id + ": word_tags length " +
                          std::to_string(doc.word_tags.size()) + " != " +
                          std::to_string(n) + " words");
  for (const auto& e : doc.entities) {
    if (e.start < 0 || e.end > n || e.start >= e.end)
      throw integrity_error("document " + doc.id + ": entity span [" +
                            std::to_string(e.start) + "," +
                            std::to_string(e.end) + ") out of range");
    if (spec && !spec->entity_labels.empty() &&
        std::find(spec->entity_labels.begin(), spec->entity_labels.end(),
                  e.label) == spec->entity_labels.end())
      throw integrity_error("document " + doc.id + ": unknown entity label " +
                            e.label);
  }
  const int ref_limit = doc.is_dependency()
                            ? n
                            : static_cast<int>(doc.entities.size());
  for (const auto& t : doc.triples) {
    if (t.head < 0 || t.head >= ref_limit || t.tail < 0 || t.tail >= ref_limit)
      throw integrity_error("document " + doc.id + ": relation references " +
                            std::to_string(t.head) + "->" +
                            std::to_string(t.tail) + " with only " +
                            std::to_string(ref_limit) + " referents");
    if (t.head == t.tail)
      throw integrity_error("document " + doc.id + ": self-loop relation");
    if (spec && !spec->relation_labels.empty() &&
        std::find(spec->relation_labels.begin(), spec->relation_labels.end(),
                  t.label) == spec->relation_labels.end() &&
        t.label != "root")
      throw integrity_error("document " + doc.id +
                            ": unknown relation label " + t.label);
  }
}

// ---- CoNLL-U ----

// 10 tab-separated columns, blank-line sentence separation, `#` comments.
// Multiword-token ranges (1-2) and empty nodes (1.1) are skipped. Tags come
// from column 5 (xPOS), heads/relations from columns 7/8.
inline std::vector<Document> read_conllu(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  std::vector<Document> docs;

  std::vector<std::string> words, tags, rels;
  std::vector<int> heads;
  std::string sent_id, sent_text;
  int lineno = 0;
  int first_line = 0;

  auto flush = [&](void) {
    if (words.empty()) {
      sent_id.clear();
      sent_text.clear();
      return;
    }
    Document d;
    d.id = sent_id.empty()
               ? path + "#" + std::to_string(docs.size() + 1)
               : sent_id;
    d.words = words;
    d.word_tags = tags;
    d.dep_heads = heads;
    d.dep_rels = rels;
    if (!sent_text.empty()) {
      d.text = sent_text;
    } else {
      std::string t;
      for (size_t i = 0; i < words.size(); ++i) {
        if (i) t += ' ';
        t += words[i];
      }
      d.text = t;
    }
    const int n = static_cast<int>(words.size());
    for (int i = 0; i < n; ++i) {
      if (heads[i] < 0 || heads[i] > n)
        throw integrity_error(path + " line " + std::to_string(first_line) +
                              ": head index " + std::to_string(heads[i]) +
                              " out of range for " + std::to_string(n) +
                              "-word sentence");
      if (heads[i] > 0) d.triples.push_back({heads[i] - 1, i, rels[i]});
    }
    docs.push_back(std::move(d));
    words.clear();
    tags.clear();
    heads.clear();
    rels.clear();
    sent_id.clear();
    sent_text.clear();
  };

  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      auto eat_meta = [&](const char* key, std::string& out_val) {
        const std::string prefix = std::string("# ") + key + " = ";
        if (line.rfind(prefix, 0) == 0) out_val = line.substr(prefix.size());
      };
      eat_meta("sent_id", sent_id);
      eat_meta("text", sent_text);
      continue;
    }
    std::vector<std::string> cols;
    {
      size_t start = 0;
      while (true) {
        size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
          cols.push_back(line.substr(start));
          break;
        }
        cols.push_back(line.substr(start, tab - start));
        start = tab + 1;
      }
    }
    if (cols.size() != 10)
      throw parse_error(path + " line " + std::to_string(lineno) +
                        ": expected 10 columns, got " +
                        std::to_string(cols.size()));
    const std::string& idcol = cols[0];
    if (idcol.find('-') != std::string::npos) continue;  // multiword range
    if (idcol.find('.') != std::string::npos) continue;  // empty node
    if (words.empty()) first_line = lineno;
    int head = 0;
    try {
      size_t pos = 0;
      head = std::stoi(cols[6], &pos);
      if (pos != cols[6].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw parse_error(path + " line " + std::to_string(lineno) +
                        ": bad head field '" + cols[6] + "'");
    }
    words.push_back(cols[1]);
    tags.push_back(cols[4]);
    heads.push_back(head);
    rels.push_back(cols[7]);
  }
  flush();
  return docs;
}

// ---- canonical JSON triple format ----
//
// A JSON array of {"tokens": [...], "entities": [{"start","end","type"}],
// "relations": [{"head","tail","type"}]} with entity-index references.
// Optional "id" per document. See schemas/triples.schema.json.

inline std::vector<Document> read_json_triples(const std::string& path,
                                               const DatasetSpec* spec = nullptr) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(path + ": " + e.what());
  }
  if (!root.is_array()) throw parse_error(path + ": top level must be an array");

  std::vector<Document> docs;
  docs.reserve(root.size());
  for (size_t k = 0; k < root.size(); ++k) {
    const auto& j = root[k];
    Document d;
    d.id = j.contains("id") ? j.at("id").get<std::string>()
                            : path + "#" + std::to_string(k + 1);
    try {
      if (!j.contains("tokens") || !j.contains("entities") ||
          !j.contains("relations"))
        throw parse_error(path + ": document " + d.id +
                          " missing tokens/entities/relations");
      for (const auto& t : j.at("tokens")) d.words.push_back(t.get<std::string>());
      for (const auto& e : j.at("entities"))
        d.entities.push_back({e.at("start").get<int>(), e.at("end").get<int>(),
                              e.at("type").get<std::string>()});
      for (const auto& r : j.at("relations"))
        d.triples.push_back({r.at("head").get<int>(), r.at("tail").get<int>(),
                             r.at("type").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(path + ": document " + d.id + ": " + e.what());
    }
    std::string t;
    for (size_t i = 0; i < d.words.size(); ++i) {
      if (i) t += ' ';
      t += d.words[i];
    }
    d.text = t;
    validate_document(d, spec);
    docs.push_back(std::move(d));
  }
  return docs;
}

inline nlohmann::json document_to_json(const Document& d) {
  nlohmann::json j;
  j["id"] = d.id;
  j["tokens"] = d.words;
  j["entities"] = nlohmann::json::array();
  for (const auto& e : d.entities)
    j["entities"].push_back({{"start", e.start}, {"end", e.end}, {"type", e.label}});
  j["relations"] = nlohmann::json::array();
  for (const auto& t : d.triples)
    j["relations"].push_back({{"head", t.head}, {"tail", t.tail}, {"type", t.label}});
  return j;
}

inline void write_json_triples(const std::vector<Document>& docs,
                               const std::string& path) {
  nlohmann::json root = nlohmann::json::array();
  for (const auto& d : docs) root.push_back(document_to_json(d));
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << root.dump(1) << "\n";
}

// ---- graph encoding ----

struct EncodedGraph {
  std::string doc_id;
  int node_count = 0;              // |V| including virtual root at index 0
  std::vector<int> gold_heads;     // length |V|; entry 0 is 0 (unused)
  std::vector<int> gold_relations; // label indices, "none" = 0
  std::vector<int> gold_tags;      // tag indices; entry 0 unused
  std::vector<std::string> words;  // surface forms, length |V|-1
  bool dependency = false;

  // span map (RE datasets): gold spans plus anchor word per entity
  std::vector<EntitySpan> spans;
  std::vector<int> entity_anchor;  // word index of each entity's anchor
  int dropped_triples = 0;         // triples lost to tail-anchor conflicts
};

inline int span_anchor(const EntitySpan& e, AnchorMode mode) {
  return mode == AnchorMode::last ? e.end - 1 : e.start;
}

inline EncodedGraph encode_graph(const Document& doc, const DatasetSpec& spec,
                                 const LabelMaps& maps) {
  validate_document(doc, &spec);
  const int n = static_cast<int>(doc.words.size());
  EncodedGraph g;
  g.doc_id = doc.id;
  g.node_count = n + 1;
  g.words = doc.words;
  g.gold_heads.assign(n + 1, 0);
  g.gold_relations.assign(n + 1, 0);
  g.gold_tags.assign(n + 1, 0);
  g.dependency = spec.format == DataFormat::conllu;

  if (g.dependency) {
    for (int i = 0; i < n; ++i) {
      g.gold_heads[i + 1] = doc.dep_heads[i];  // column 7, root offset built in
      g.gold_relations[i + 1] = maps.rel_of(doc.dep_rels[i]);
      g.gold_tags[i + 1] = maps.tag_of(doc.word_tags[i]);
    }
    // gold head arrays must form a tree rooted at node 0
    for (int i = 1; i <= n; ++i) {
      int hops = 0, v = i;
      while (v != 0 && hops <= n) {
        v = g.gold_heads[v];
        ++hops;
      }
      if (v != 0)
        throw integrity_error("document " + doc.id +
                              ": gold heads contain a cycle");
    }
    return g;
  }

  // RE dataset: BIO tags from spans, triples anchored on span anchors
  std::vector<int> owner(n, -1);
  for (size_t e = 0; e < doc.entities.size(); ++e) {
    const auto& span = doc.entities[e];
    for (int w = span.start; w < span.end; ++w) {
      if (owner[w] != -1)
        throw integrity_error("document " + doc.id +
                              ": overlapping entity spans at word " +
                              std::to_string(w));
      owner[w] = static_cast<int>(e);
      const std::string prefix = (w == span.start) ? "B-" : "I-";
      g.gold_tags[w + 1] = maps.tag_of(prefix + span.label);
    }
  }
  g.spans = doc.entities;
  g.entity_anchor.resize(doc.entities.size());
  for (size_t e = 0; e < doc.entities.size(); ++e)
    g.entity_anchor[e] = span_anchor(doc.entities[e], spec.anchor);

  for (const auto& t : doc.triples) {
    const int tail_node = g.entity_anchor[t.tail] + 1;
    const int head_node = g.entity_anchor[t.head] + 1;
    if (g.gold_heads[tail_node] != 0 || g.gold_relations[tail_node] != 0) {
      ++g.dropped_triples;  // tail anchor already claimed by another triple
      continue;
    }
    g.gold_heads[tail_node] = head_node;
    g.gold_relations[tail_node] = maps.rel_of(t.label);
  }
  return g;
}

// BIO decode with repair: a span starts at B-x, or at I-x whose left
// neighbour is not part of the same class run. Returns spans sorted by start.
inline std::vector<EntitySpan> spans_from_bio(const std::vector<int>& tags,
                                              const LabelMaps& maps) {
  std::vector<EntitySpan> spans;
  const int n = static_cast<int>(tags.size());
  int i = 0;
  while (i < n) {
    const std::string& t = maps.tags[tags[i]];
    if (t == "O") {
      ++i;
      continue;
    }
    const std::string cls = t.substr(2);
    int j = i + 1;
    while (j < n) {
      const std::string& u = maps.tags[tags[j]];
      if (u.size() > 2 && u[0] == 'I' && u.substr(2) == cls)
        ++j;
      else
        break;
    }
    spans.push_back({i, j, cls});
    i = j;
  }
  return spans;
}

// ---- complexity statistics ----

// character count in Unicode code points (UTF-8 continuation bytes skipped)
inline std::int64_t char_length(const std::string& s) {
  std::int64_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

inline StatsRow complexity_stats(const std::vector<Document>& docs) {
  if (docs.empty()) throw usage_error("complexity_stats: empty document list");
  StatsRow row;
  row.min_k = docs[0].relation_count();
  row.max_k = row.min_k;
  std::int64_t sum_k = 0, le5 = 0, sum_chars = 0;
  for (const auto& d : docs) {
    const int k = d.relation_count();
    row.min_k = std::min(row.min_k, k);
    row.max_k = std::max(row.max_k, k);
    sum_k += k;
    if (k <= 5) ++le5;
    sum_chars += char_length(d.text);
  }
  const double n = static_cast<double>(docs.size());
  row.mean_k = static_cast<double>(sum_k) / n;
  row.pct_k_le_5 = 100.0 * static_cast<double>(le5) / n;
  row.avg_chars = static_cast<double>(sum_chars) / n;
  return row;
}

inline std::vector<Document> filter_min_relations(std::vector<Document> docs,
                                                  int min_k) {
  if (min_k <= 0) return docs;
  std::vector<Document> out;
  out.reserve(docs.size());
  for (auto& d : docs)
    if (d.relation_count() >= min_k) out.push_back(std::move(d));
  return out;
}

// ---- stats emission ----

inline std::string stats_csv(const std::vector<std::pair<std::string, StatsRow>>& rows) {
  std::ostringstream os;
  os << "dataset,min,mean,max,pct_k_le_5,avg_chars\n";
  os.setf(std::ios::fixed);
  os.precision(2);
  for (const auto& [name, r] : rows)
    os << name << ',' << r.min_k << ',' << r.mean_k << ',' << r.max_k << ','
       << r.pct_k_le_5 << ',' << r.avg_chars << '\n';
  return os.str();
}

inline std::string stats_table(const std::vector<std::pair<std::string, StatsRow>>& rows) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  size_t w = 7;
  for (const auto& [name, r] : rows) w = std::max(w, name.size());
  os << std::left;
  os.width(static_cast<std::streamsize>(w));
  os << "dataset";
  os << std::right << "  min     mean   max   k<=5 %  avg chars\n";
  for (const auto& [name, r] : rows) {
    os << std::left;
    os.width(static_cast<std::streamsize>(w));
    os << name << std::right << "  ";
    os.width(3);
    os << r.min_k << "  ";
    os.width(7);
    os << r.mean_k << "  ";
    os.width(4);
    os << r.max_k << "  ";
    os.width(6);
    os << r.pct_k_le_5 << "  ";
    os.width(9);
    os << r.avg_chars << '\n';
  }
  return os.str();
}

}  // namespace graphre
