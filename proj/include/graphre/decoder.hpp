#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "graphre/data.hpp"
#include "graphre/errors.hpp"
#include "graphre/scorer.hpp"
#include "graphre/triples.hpp"

namespace graphre {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class DecodeMode { greedy, mst };

struct ParseResult {
  std::vector<int> heads;      // length |V|, entry 0 unused
  std::vector<int> relations;  // label indices, length |V|
  DecodeMode mode = DecodeMode::greedy;
  bool valid_tree = false;
};

// true iff every non-root node reaches node 0 without cycles; with
// single_root, exactly one node may attach to the root
inline bool is_valid_tree(const std::vector<int>& heads, bool single_root) {
  const int n = static_cast<int>(heads.size());
  int root_children = 0;
  for (int i = 1; i < n; ++i) {
    if (heads[i] < 0 || heads[i] >= n || heads[i] == i) return false;
    if (heads[i] == 0) ++root_children;
    int v = i, hops = 0;
    while (v != 0 && hops <= n) {
      v = heads[v];
      ++hops;
    }
    if (v != 0) return false;
  }
  if (single_root && root_children != 1) return false;
  return true;
}

// relation for dependent i attached to head j: argmax_r s_rel[i][j][.]
inline int best_relation(const ScorePack& sp, int dep, int head) {
  const int n = sp.node_count;
  const int R = sp.s_rel.dim(2);
  const double* row =
      sp.s_rel.data().data() + (static_cast<size_t>(dep) * n + head) * R;
  int best = 0;
  for (int r = 1; r < R; ++r)
    if (row[r] > row[best]) best = r;
  return best;
}

// heads by per-row argmax of the edge scores; may be cyclic
inline ParseResult greedy_decode(const ScorePack& sp, bool single_root = false) {
  const int n = sp.node_count;
  ParseResult pr;
  pr.mode = DecodeMode::greedy;
  pr.heads.assign(n, 0);
  pr.relations.assign(n, 0);
  const auto& e = sp.s_edge.data();
  for (int i = 1; i < n; ++i) {
    const double* row = e.data() + static_cast<size_t>(i) * n;
    int best = 0;  // root column is always a candidate for non-root rows
    for (int j = 1; j < n; ++j)
      if (j != i && row[j] > row[best]) best = j;
    pr.heads[i] = best;
    pr.relations[i] = best_relation(sp, i, best);
  }
  pr.valid_tree = is_valid_tree(pr.heads, single_root);
  return pr;
}

// energy[i][j] = log-softmax_j(scale * s_edge[i])[j]
//              + max_r log-softmax_r(scale * s_rel[i][j])[r], diagonal -inf.
// The scaling squishes low scores and sharpens high ones so the log softmax
// approaches a hard adjacency matrix.
inline std::vector<double> build_energy(const ScorePack& sp, double scale = 10.0) {
  if (!(scale > 0)) throw usage_error("build_energy: scale must be positive");
  const int n = sp.node_count;
  const int R = sp.s_rel.dim(2);
  std::vector<double> energy(static_cast<size_t>(n) * n, kNegInf);
  const auto& e = sp.s_edge.data();
  const auto& rel = sp.s_rel.data();
  std::vector<double> row(n);
  for (int i = 0; i < n; ++i) {
    // log-softmax over candidate heads of node i
    double mx = kNegInf;
    for (int j = 0; j < n; ++j) {
      row[j] = i == j ? kNegInf : scale * e[static_cast<size_t>(i) * n + j];
      mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      // best-relation term: log-softmax over labels at (i, j)
      const double* rrow = rel.data() + (static_cast<size_t>(i) * n + j) * R;
      double rmx = rrow[0];
      for (int r = 1; r < R; ++r) rmx = std::max(rmx, rrow[r]);
      double rsum = 0.0;
      for (int r = 0; r < R; ++r) rsum += std::exp(scale * (rrow[r] - rmx));
      const double rel_term = -std::log(rsum);  // max_r log-softmax_r
      energy[static_cast<size_t>(i) * n + j] = (row[j] - lse) + rel_term;
    }
  }
  return energy;
}

namespace detail {

// Chu-Liu/Edmonds by recursive cycle contraction, maximizing total energy.
// w[dep * n + head]; node 0 is the root. Ties break toward lower head index.
inline std::vector<int> max_arborescence(const std::vector<double>& w, int n) {
  std::vector<int> best(n, 0);
  for (int v = 1; v < n; ++v) {
    int arg = -1;
    for (int u = 0; u < n; ++u) {
      if (u == v) continue;
      const double s = w[static_cast<size_t>(v) * n + u];
      if (s == kNegInf) continue;
      if (arg == -1 || s > w[static_cast<size_t>(v) * n + arg]) arg = u;
    }
    if (arg == -1)
      throw decode_error("mst: node " + std::to_string(v) +
                         " has no finite candidate head");
    best[v] = arg;
  }

  // find a cycle among the greedy best edges
  std::vector<int> color(n, 0);  // 0 unseen, 1 on stack, 2 done
  std::vector<int> cycle;
  color[0] = 2;
  for (int s = 1; s < n && cycle.empty(); ++s) {
    if (color[s]) continue;
    int v = s;
    std::vector<int> path;
    while (color[v] == 0) {
      color[v] = 1;
      path.push_back(v);
      v = best[v];
    }
    if (color[v] == 1) {  // found a new cycle through v
      auto it = std::find(path.begin(), path.end(), v);
      cycle.assign(it, path.end());
    }
    for (int p : path) color[p] = 2;
  }
  if (cycle.empty()) return best;

  std::vector<char> in_cycle(n, 0);
  for (int v : cycle) in_cycle[v] = 1;

  // contract: cycle -> one supernode, everything else keeps its order
  std::vector<int> to_new(n, -1);
  int m = 0;
  for (int v = 0; v < n; ++v)
    if (!in_cycle[v]) to_new[v] = m++;
  const int super = m++;
  std::vector<int> to_old(m - 1);
  for (int v = 0; v < n; ++v)
    if (!in_cycle[v]) to_old[to_new[v]] = v;

  std::vector<double> cw(static_cast<size_t>(m) * m, kNegInf);
  // remembered original endpoints for reconstruction
  std::vector<int> enter_dep(m, -1);   // per external head: cycle node entered
  std::vector<int> leave_head(m, -1);  // per external dep: cycle node used
  for (int v = 0; v < n; ++v) {
    for (int u = 0; u < n; ++u) {
      if (u == v) continue;
      const double s = w[static_cast<size_t>(v) * n + u];
      if (s == kNegInf) continue;
      if (!in_cycle[v] && !in_cycle[u]) {
        cw[static_cast<size_t>(to_new[v]) * m + to_new[u]] = s;
      } else if (in_cycle[v] && !in_cycle[u]) {
        // edge entering the cycle: reweight by the cycle edge it replaces
        const double adj = s - w[static_cast<size_t>(v) * n + best[v]];
        double& slot = cw[static_cast<size_t>(super) * m + to_new[u]];
        if (adj > slot) {
          slot = adj;
          enter_dep[to_new[u]] = v;
        }
      } else if (!in_cycle[v] && in_cycle[u]) {
        double& slot = cw[static_cast<size_t>(to_new[v]) * m + super];
        if (s > slot) {
          slot = s;
          leave_head[to_new[v]] = u;
        }
      }
    }
  }

  std::vector<int> sub = max_arborescence(cw, m);

  std::vector<int> heads(n, 0);
  for (int v2 = 1; v2 < m; ++v2) {
    if (v2 == super) continue;
    const int v = to_old[v2];
    heads[v] = sub[v2] == super ? leave_head[v2] : to_old[sub[v2]];
  }
  // cycle keeps its internal edges except where the chosen external edge
  // breaks in
  for (int v : cycle) heads[v] = best[v];
  const int entry_col = sub[super];
  const int broken = enter_dep[entry_col];
  heads[broken] = to_old[entry_col];
  return heads;
}

}  // namespace detail

inline double arborescence_energy(const std::vector<double>& energy,
                                  const std::vector<int>& heads) {
  const int n = static_cast<int>(heads.size());
  double total = 0.0;
  for (int v = 1; v < n; ++v)
    total += energy[static_cast<size_t>(v) * n + heads[v]];
  return total;
}

struct ArborescenceResult {
  std::vector<int> heads;
  double energy = kNegInf;
};

// exhaustive oracle for |V| <= 8; ties resolved toward the lexicographically
// smallest head array
inline ArborescenceResult brute_force_arborescence(
    const std::vector<double>& energy, int n) {
  if (n < 2) throw usage_error("brute_force_arborescence: need |V| >= 2");
  if (n > 8)
    throw usage_error("brute_force_arborescence: |V| > 8 is intractable");
  std::vector<int> heads(n, 0);
  ArborescenceResult best;
  std::vector<int> choice(n, 0);  // odometer over candidate heads
  auto candidate = [&](int v, int c) {  // c-th candidate head of v
    return c < v ? c : c + 1;           // skip self
  };
  const int options = n - 1;
  while (true) {
    for (int v = 1; v < n; ++v) heads[v] = candidate(v, choice[v]);
    if (is_valid_tree(heads, false)) {
      const double total = arborescence_energy(energy, heads);
      if (total != kNegInf && total > best.energy) {
        best.heads = heads;
        best.energy = total;
      }
    }
    int v = n - 1;
    while (v >= 1 && ++choice[v] == options) choice[v--] = 0;
    if (v < 1) break;
  }
  if (best.heads.empty())
    throw decode_error("brute_force_arborescence: no finite arborescence");
  return best;
}

// Maximum spanning arborescence over the energy matrix. For tree-structured
// datasets the single-root constraint is enforced exactly by fixing each
// candidate root edge in turn and keeping the best result.
inline ParseResult mst_decode(const ScorePack& sp, const DatasetSpec& spec,
                              double scale = 10.0) {
  const int n = sp.node_count;
  if (n < 2) throw usage_error("mst_decode: need |V| >= 2");
  std::vector<double> energy = build_energy(sp, scale);
  std::vector<int> heads;
  if (!spec.tree_structured) {
    heads = detail::max_arborescence(energy, n);
  } else {
    double best_total = kNegInf;
    for (int c = 1; c < n; ++c) {
      if (energy[static_cast<size_t>(c) * n] == kNegInf) continue;
      std::vector<double> e2 = energy;
      for (int i = 1; i < n; ++i)
        if (i != c) e2[static_cast<size_t>(i) * n] = kNegInf;  // no other root edge
      for (int j = 1; j < n; ++j)
        e2[static_cast<size_t>(c) * n + j] = kNegInf;  // fix c -> root
      std::vector<int> h;
      try {
        h = detail::max_arborescence(e2, n);
      } catch (const decode_error&) {
        continue;
      }
      const double total = arborescence_energy(e2, h);
      if (total > best_total) {
        best_total = total;
        heads = std::move(h);
      }
    }
    if (heads.empty()) throw decode_error("mst: no single-rooted arborescence");
  }
  ParseResult pr;
  pr.mode = DecodeMode::mst;
  pr.heads = std::move(heads);
  pr.relations.assign(n, 0);
  for (int i = 1; i < n; ++i)
    pr.relations[i] = best_relation(sp, i, pr.heads[i]);
  pr.valid_tree = is_valid_tree(pr.heads, spec.tree_structured);
  return pr;
}

inline ParseResult decode(const ScorePack& sp, const DatasetSpec& spec,
                          DecodeMode mode, double scale = 10.0) {
  return mode == DecodeMode::mst ? mst_decode(sp, spec, scale)
                                 : greedy_decode(sp, spec.tree_structured);
}

// ---- triple extraction ----

inline std::string join_words(const std::vector<std::string>& words, int start,
                              int end) {
  std::string out;
  for (int w = start; w < end; ++w) {
    if (w > start) out += ' ';
    out += words[w];
  }
  return out;
}

// Convert head/relation predictions to surface triples. For RE datasets
// entity spans are recovered from the (predicted or gold) BIO tags; the span
// containing each anchor word supplies the surface text. Root-attached and
// "none"-labelled edges are dropped.
inline TripleSet extract_triples(const ParseResult& pr,
                                 const EncodedGraph& graph,
                                 const DatasetSpec& spec, const LabelMaps& maps,
                                 const std::vector<int>& node_tags) {
  const int n = graph.node_count;
  if (static_cast<int>(pr.heads.size()) != n ||
      static_cast<int>(node_tags.size()) != n)
    throw usage_error("extract_triples: length mismatch");
  TripleSet out;

  if (spec.format == DataFormat::conllu) {
    for (int i = 1; i < n; ++i) {
      const int h = pr.heads[i];
      if (h == 0 || pr.relations[i] == 0) continue;
      out.insert(graph.words[h - 1], maps.relations[pr.relations[i]],
                 graph.words[i - 1], maps.tags[node_tags[h]],
                 maps.tags[node_tags[i]]);
    }
    return out;
  }

  std::vector<int> word_tags(node_tags.begin() + 1, node_tags.end());
  const auto spans = spans_from_bio(word_tags, maps);
  std::vector<int> span_of(graph.words.size(), -1);
  for (size_t s = 0; s < spans.size(); ++s)
    for (int w = spans[s].start; w < spans[s].end; ++w)
      span_of[w] = static_cast<int>(s);

  auto render = [&](int word, std::string& text, std::string& type) {
    const int s = span_of[word];
    if (s >= 0) {
      text = join_words(graph.words, spans[s].start, spans[s].end);
      type = spans[s].label;
    } else {  // anchor tagged O: fall back to the bare word
      text = graph.words[word];
      type.clear();
    }
  };

  for (int i = 1; i < n; ++i) {
    const int h = pr.heads[i];
    if (h == 0 || pr.relations[i] == 0) continue;
    std::string head_text, head_type, tail_text, tail_type;
    render(h - 1, head_text, head_type);
    render(i - 1, tail_text, tail_type);
    out.insert(head_text, maps.relations[pr.relations[i]], tail_text,
               head_type, tail_type);
  }
  return out;
}

// the document's annotated triples as surface text, for evaluation
inline TripleSet gold_triples(const Document& doc) {
  TripleSet out;
  if (doc.is_dependency()) {
    for (const auto& t : doc.triples)
      out.insert(doc.words[t.head], t.label, doc.words[t.tail],
                 doc.word_tags.empty() ? "" : doc.word_tags[t.head],
                 doc.word_tags.empty() ? "" : doc.word_tags[t.tail]);
    return out;
  }
  for (const auto& t : doc.triples) {
    const auto& h = doc.entities[t.head];
    const auto& d = doc.entities[t.tail];
    out.insert(join_words(doc.words, h.start, h.end), t.label,
               join_words(doc.words, d.start, d.end), h.label, d.label);
  }
  return out;
}

// ---- prediction dump ----

struct PredictionRecord {
  std::string id;
  std::vector<int> heads;             // per word, node space (0 = root)
  std::vector<std::string> relations; // per word, label strings
  TripleSet triples;
  bool valid_tree = false;
};

inline PredictionRecord make_prediction_record(const ParseResult& pr,
                                               const EncodedGraph& g,
                                               const LabelMaps& maps,
                                               const TripleSet& triples) {
  PredictionRecord rec;
  rec.id = g.doc_id;
  rec.valid_tree = pr.valid_tree;
  rec.triples = triples;
  for (int i = 1; i < g.node_count; ++i) {
    rec.heads.push_back(pr.heads[i]);
    rec.relations.push_back(maps.relations[pr.relations[i]]);
  }
  return rec;
}

inline void write_predictions_jsonl(const std::vector<PredictionRecord>& recs,
                                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  for (const auto& r : recs) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["heads"] = r.heads;
    j["relations"] = r.relations;
    j["triples"] = nlohmann::json::array();
    for (const auto& t : r.triples) {
      nlohmann::ordered_json item;
      item["head"] = t.head;
      item["rel"] = t.rel;
      item["tail"] = t.tail;
      if (!t.head_type.empty()) item["head_type"] = t.head_type;
      if (!t.tail_type.empty()) item["tail_type"] = t.tail_type;
      j["triples"].push_back(std::move(item));
    }
    j["valid_tree"] = r.valid_tree;
    out << j.dump() << "\n";
  }
  if (!out) throw io_error("write failed: " + path);
}

inline std::vector<PredictionRecord> read_predictions_jsonl(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  std::vector<PredictionRecord> recs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw parse_error(path + " line " + std::to_string(lineno) +
                        ": invalid JSON");
    PredictionRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      if (j.contains("heads")) r.heads = j["heads"].get<std::vector<int>>();
      if (j.contains("relations"))
        r.relations = j["relations"].get<std::vector<std::string>>();
      for (const auto& t : j.at("triples"))
        r.triples.insert(t.at("head").get<std::string>(),
                         t.at("rel").get<std::string>(),
                         t.at("tail").get<std::string>(),
                         t.value("head_type", ""), t.value("tail_type", ""));
      r.valid_tree = j.value("valid_tree", false);
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(path + " line " + std::to_string(lineno) + ": " +
                        e.what());
    }
    recs.push_back(std::move(r));
  }
  return recs;
}

// gold-score pack for round-trip checks: +margin on every gold edge/relation
inline ScorePack gold_score_pack(const EncodedGraph& g, int relation_count,
                                 double margin = 10.0) {
  const int n = g.node_count;
  ScorePack sp;
  sp.node_count = n;
  std::vector<double> e(static_cast<size_t>(n) * n, 0.0);
  std::vector<double> r(static_cast<size_t>(n) * n * relation_count, 0.0);
  for (int i = 0; i < n; ++i) e[static_cast<size_t>(i) * n + i] = kNegInf;
  for (int i = 1; i < n; ++i) {
    e[static_cast<size_t>(i) * n + g.gold_heads[i]] = margin;
    r[(static_cast<size_t>(i) * n + g.gold_heads[i]) * relation_count +
      g.gold_relations[i]] = margin;
  }
  sp.s_edge = Tensor::from({n, n}, std::move(e));
  sp.s_rel = Tensor::from({n, n, relation_count}, std::move(r));
  return sp;
}

}  // namespace graphre
