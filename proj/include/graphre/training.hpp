#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "graphre/data.hpp"
#include "graphre/decoder.hpp"
#include "graphre/embeddings.hpp"
#include "graphre/evaluation.hpp"
#include "graphre/scorer.hpp"
#include "graphre/tagger.hpp"

namespace graphre {

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 8;
  int max_steps = 3000;
  int eval_every = 500;
  double lambda1 = 0.1;  // forced to 0 under oracle tags
  double lambda2 = 1.0;
  double weight_decay = 0.0;
  double clip_norm = 0.0;  // 0 = no clipping
  std::uint64_t seed = 1;

  void validate() const {
    if (!(lr > 0) || batch_size < 1 || max_steps < 1 || eval_every < 1)
      throw config_error("train: lr/batch_size/max_steps/eval_every invalid");
    if (max_steps % eval_every != 0)
      throw config_error("train: eval_every must divide max_steps");
    if (lambda1 < 0 || !(lambda2 > 0))
      throw config_error("train: lambda1 >= 0 and lambda2 > 0 required");
    if (weight_decay < 0 || clip_norm < 0)
      throw config_error("train: weight_decay/clip_norm must be >= 0");
  }
};

struct Sample {
  Document doc;
  EncodedGraph graph;
};

inline std::vector<Sample> encode_dataset(const std::vector<Document>& docs,
                                          const DatasetSpec& spec,
                                          const LabelMaps& maps) {
  std::vector<Sample> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back({d, encode_graph(d, spec, maps)});
  return out;
}

struct ParserConfig {
  int d_f = 768;
  int tagger_d_h = 300;
  int d_tag = 100;
  ScorerConfig scorer;
  bool oracle_tags = false;
};

struct ForwardOut {
  TaggerOut tag;       // empty tensors under oracle tags
  Tensor tag_features; // |V| x d_tag
  ScorePack scores;
};

struct LossParts {
  Tensor tag;
  Tensor edge;
  Tensor rel;
  Tensor total;
};

// L = lambda1 * L_tag + lambda2 * (L_edge + L_rel + per-layer aux terms).
// L_tag is the mean cross-entropy over non-root words; L_edge sums, per
// dependent, the negative log-probability of its gold head over all
// candidate heads; L_rel does the same over labels at the gold head. Each
// aux GAT edge-score matrix contributes its own L_edge-style term against
// the gold heads.
inline LossParts compute_loss(const ScorePack& sp, const Tensor* tag_logits,
                              const EncodedGraph& g, double lambda1,
                              double lambda2) {
  const int n = g.node_count;
  if (sp.node_count != n)
    throw usage_error("compute_loss: score pack does not match graph");
  LossParts parts;

  if (tag_logits && lambda1 != 0.0) {
    Tensor lsm = log_softmax_last(*tag_logits);
    const int t_count = tag_logits->dim(1);
    std::vector<std::int64_t> idx;
    idx.reserve(n - 1);
    for (int i = 1; i < n; ++i)
      idx.push_back(static_cast<std::int64_t>(i) * t_count + g.gold_tags[i]);
    parts.tag = scale(mean_all(pick(lsm, idx)), -1.0);
  } else {
    parts.tag = Tensor::scalar(0.0);
  }

  auto head_loss = [&](const Tensor& edge_matrix) {
    Tensor lsm = log_softmax_last(edge_matrix);
    std::vector<std::int64_t> idx;
    idx.reserve(n - 1);
    for (int i = 1; i < n; ++i)
      idx.push_back(static_cast<std::int64_t>(i) * n + g.gold_heads[i]);
    return scale(sum_all(pick(lsm, idx)), -1.0);
  };

  parts.edge = head_loss(sp.s_edge);

  const int R = sp.s_rel.dim(2);
  std::vector<int> gold_rows;
  gold_rows.reserve(n - 1);
  for (int i = 1; i < n; ++i) gold_rows.push_back(i * n + g.gold_heads[i]);
  Tensor rel_rows = rows_gather(reshape(sp.s_rel, {n * n, R}), gold_rows);
  Tensor rel_lsm = log_softmax_last(rel_rows);
  std::vector<std::int64_t> rel_idx;
  rel_idx.reserve(n - 1);
  for (int i = 1; i < n; ++i)
    rel_idx.push_back(static_cast<std::int64_t>(i - 1) * R + g.gold_relations[i]);
  parts.rel = scale(sum_all(pick(rel_lsm, rel_idx)), -1.0);

  Tensor graph_loss = add(parts.edge, parts.rel);
  for (const auto& aux : sp.aux_edge) graph_loss = add(graph_loss, head_loss(aux));

  parts.total = add(scale(parts.tag, lambda1), scale(graph_loss, lambda2));
  return parts;
}

// Tagger, scorer, root embedding, and (when trainable) the lookup provider
// behind one parameter store.
class ParserModel {
 public:
  ParserModel(const ParserConfig& cfg,
              std::shared_ptr<EmbeddingProvider> provider,
              const LabelMaps& maps, std::uint64_t seed)
      : cfg_(cfg), provider_(std::move(provider)), maps_(maps), params_(seed) {
    if (provider_->dim() != cfg.d_f)
      throw config_error("model: provider dim " +
                         std::to_string(provider_->dim()) +
                         " != configured d_f " + std::to_string(cfg.d_f));
    cfg_.scorer.relation_count = maps_.relation_count();
    cfg_.scorer.d_tag = cfg.d_tag;
    cfg_.scorer.input_dim = cfg.d_tag + cfg.d_f;
    root_ = params_.add_xavier("embeddings.root", 1, cfg.d_f);
    provider_->register_parameters(params_);
    TaggerConfig tc;
    tc.d_f = cfg.d_f;
    tc.d_h = cfg.tagger_d_h;
    tc.d_tag = cfg.d_tag;
    tc.tag_count = maps_.tag_count();
    tagger_ = Tagger(params_, tc);
    scorer_ = Scorer(params_, cfg_.scorer);
  }

  const ParserConfig& config() const { return cfg_; }
  const LabelMaps& labels() const { return maps_; }
  ParameterStore& params() { return params_; }
  bool oracle_tags() const { return cfg_.oracle_tags; }

  ForwardOut run(const Sample& s) const {
    Tensor X = embed_document(*provider_, s.doc, root_);
    ForwardOut out;
    if (cfg_.oracle_tags) {
      out.tag_features = tagger_.tag_embed_gold(s.graph.gold_tags);
    } else {
      out.tag = tagger_.forward(X);
      out.tag_features = tagger_.tag_embed(out.tag.probs);
    }
    out.scores = scorer_.forward(concat({out.tag_features, X}, 1));
    return out;
  }

  // tag indices used downstream: argmax predictions, or gold under oracle
  std::vector<int> predicted_tags(const ForwardOut& fwd,
                                  const Sample& s) const {
    if (cfg_.oracle_tags) return s.graph.gold_tags;
    return argmax_last(fwd.tag.probs);
  }

  nlohmann::json config_json() const {
    nlohmann::json j;
    j["d_f"] = cfg_.d_f;
    j["tagger_d_h"] = cfg_.tagger_d_h;
    j["d_tag"] = cfg_.d_tag;
    j["oracle_tags"] = cfg_.oracle_tags;
    j["provider"] = provider_->kind();
    j["l_psi"] = cfg_.scorer.l_psi;
    j["l_phi"] = cfg_.scorer.l_phi;
    j["d_h"] = cfg_.scorer.d_h;
    j["d_edge"] = cfg_.scorer.d_edge;
    j["d_rel"] = cfg_.scorer.d_rel;
    j["top_k"] = cfg_.scorer.top_k;
    j["tags"] = maps_.tags;
    j["relations"] = maps_.relations;
    return j;
  }

  void save_checkpoint(const std::string& path,
                       const nlohmann::json& extra = {}) const {
    nlohmann::json j;
    j["format"] = "graphre-checkpoint-1";
    j["config"] = config_json();
    if (!extra.is_null() && !extra.empty()) j["run"] = extra;
    nlohmann::json params = nlohmann::json::object();
    for (const auto& p : params_.all()) {
      nlohmann::json q;
      q["shape"] = p->tensor.shape();
      q["data"] = p->tensor.data();
      params[p->name] = std::move(q);
    }
    j["parameters"] = std::move(params);
    std::ofstream out(path);
    if (!out) throw io_error("cannot write checkpoint " + path);
    out << j.dump() << "\n";
  }

  void load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open checkpoint " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(path + ": " + e.what());
    }
    if (j.value("format", "") != "graphre-checkpoint-1")
      throw parse_error(path + ": not a graphre checkpoint");
    if (j.at("config") != config_json())
      throw config_error(path +
                         ": checkpoint configuration does not match model");
    const auto& params = j.at("parameters");
    for (const auto& p : params_.all()) {
      if (!params.contains(p->name))
        throw config_error(path + ": missing parameter " + p->name);
      const auto& q = params.at(p->name);
      auto shape = q.at("shape").get<std::vector<int>>();
      if (shape != p->tensor.shape())
        throw config_error(path + ": parameter " + p->name + " has shape " +
                           shape_str(shape) + ", expected " +
                           shape_str(p->tensor.shape()));
      auto data = q.at("data").get<std::vector<double>>();
      p->tensor.data() = std::move(data);
      p->tensor.zero_grad();
    }
  }

 private:
  ParserConfig cfg_;
  std::shared_ptr<EmbeddingProvider> provider_;
  LabelMaps maps_;
  ParameterStore params_;
  Tensor root_;
  Tagger tagger_;
  Scorer scorer_;
};

// ---- evaluation pass over a split ----

struct SplitEval {
  double l_tag = 0.0, l_edge = 0.0, l_rel = 0.0, l_total = 0.0;
  EvalReport report;
};

inline SplitEval evaluate_split(const ParserModel& model,
                                const std::vector<Sample>& samples,
                                const DatasetSpec& spec, double lambda1,
                                double lambda2, DecodeMode mode,
                                double energy_scale = 10.0) {
  if (samples.empty()) throw usage_error("evaluate_split: empty split");
  SplitEval ev;
  std::vector<TripleSet> pred, gold;
  pred.reserve(samples.size());
  gold.reserve(samples.size());
  const LabelMaps& maps = model.labels();
  for (const auto& s : samples) {
    ForwardOut fwd = model.run(s);
    LossParts loss = compute_loss(fwd.scores,
                                  model.oracle_tags() ? nullptr : &fwd.tag.logits,
                                  s.graph, lambda1, lambda2);
    ev.l_tag += loss.tag.value();
    ev.l_edge += loss.edge.value();
    ev.l_rel += loss.rel.value();
    ev.l_total += loss.total.value();
    ParseResult pr = decode(fwd.scores, spec, mode, energy_scale);
    std::vector<int> tags = model.predicted_tags(fwd, s);
    pred.push_back(extract_triples(pr, s.graph, spec, maps, tags));
    gold.push_back(gold_triples(s.doc));
  }
  const double n = static_cast<double>(samples.size());
  ev.l_tag /= n;
  ev.l_edge /= n;
  ev.l_rel /= n;
  ev.l_total /= n;
  ev.report = full_report(pred, gold);
  return ev;
}

// ---- training loop ----

struct TrainResult {
  std::string metrics_csv;
  double best_dev_f1 = -1.0;
  int best_dev_step = 0;
  std::string best_checkpoint;  // path, when out_dir given
  std::string last_checkpoint;
};

namespace detail {
inline std::string fmt_metric(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os << std::setprecision(10) << v;
  return os.str();
}
}  // namespace detail

// Mini-batch training with per-eval dev scoring and best-checkpoint
// retention. Deterministic for a given seed: batch order, initialization,
// and update order are all fixed.
inline TrainResult train(ParserModel& model, const std::vector<Sample>& train_set,
                         const std::vector<Sample>& dev_set,
                         const DatasetSpec& spec, const TrainConfig& cfg,
                         const std::string& out_dir = "",
                         std::ostream* progress = nullptr) {
  cfg.validate();
  if (train_set.empty()) throw usage_error("train: empty training split");
  const double lambda1 = spec.oracle_tags ? 0.0 : cfg.lambda1;
  const DecodeMode dev_mode =
      spec.tree_structured ? DecodeMode::mst : DecodeMode::greedy;

  AdamWConfig opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;

  SplitMix64 rng(mix_seed(cfg.seed, 0xba7c4));
  std::vector<size_t> order(train_set.size());
  size_t cursor = order.size();  // forces a shuffle on first use
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto next_sample = [&]() -> const Sample& {
    if (cursor >= order.size()) {
      for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);
      cursor = 0;
    }
    return train_set[order[cursor++]];
  };

  std::ostringstream csv;
  csv << "step,split,L_tag,L_edge,L_rel,L,micro_P,micro_R,micro_F1\n";
  TrainResult result;
  double acc_tag = 0, acc_edge = 0, acc_rel = 0, acc_total = 0;
  int acc_batches = 0;

  for (int step = 1; step <= cfg.max_steps; ++step) {
    model.params().zero_grads();
    std::vector<Tensor> totals;
    double b_tag = 0, b_edge = 0, b_rel = 0;
    totals.reserve(cfg.batch_size);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Sample& s = next_sample();
      ForwardOut fwd = model.run(s);
      LossParts loss = compute_loss(
          fwd.scores, model.oracle_tags() ? nullptr : &fwd.tag.logits, s.graph,
          lambda1, cfg.lambda2);
      totals.push_back(loss.total);
      b_tag += loss.tag.value();
      b_edge += loss.edge.value();
      b_rel += loss.rel.value();
    }
    Tensor batch_loss = mean_all(concat(totals, 0));
    if (!std::isfinite(batch_loss.value()))
      throw numeric_error("train: non-finite loss at step " +
                          std::to_string(step));
    backward(batch_loss);
    if (cfg.clip_norm > 0) clip_grad_norm(model.params(), cfg.clip_norm);
    adamw_step(model.params(), opt);

    acc_tag += b_tag / cfg.batch_size;
    acc_edge += b_edge / cfg.batch_size;
    acc_rel += b_rel / cfg.batch_size;
    acc_total += batch_loss.value();
    ++acc_batches;

    if (step % cfg.eval_every == 0) {
      csv << step << ",train," << detail::fmt_metric(acc_tag / acc_batches)
          << ',' << detail::fmt_metric(acc_edge / acc_batches) << ','
          << detail::fmt_metric(acc_rel / acc_batches) << ','
          << detail::fmt_metric(acc_total / acc_batches) << ",,,\n";
      acc_tag = acc_edge = acc_rel = acc_total = 0;
      acc_batches = 0;

      if (!dev_set.empty()) {
        SplitEval ev =
            evaluate_split(model, dev_set, spec, lambda1, cfg.lambda2, dev_mode);
        csv << step << ",dev," << detail::fmt_metric(ev.l_tag) << ','
            << detail::fmt_metric(ev.l_edge) << ','
            << detail::fmt_metric(ev.l_rel) << ','
            << detail::fmt_metric(ev.l_total) << ','
            << detail::fmt_metric(ev.report.micro.precision) << ','
            << detail::fmt_metric(ev.report.micro.recall) << ','
            << detail::fmt_metric(ev.report.micro.f1) << "\n";
        if (progress)
          *progress << "step " << step << "  dev F1 "
                    << detail::fmt_metric(ev.report.micro.f1) << std::endl;
        if (!out_dir.empty()) {
          nlohmann::json run;
          run["step"] = step;
          run["seed"] = cfg.seed;
          run["dev_f1"] = ev.report.micro.f1;
          result.last_checkpoint = out_dir + "/checkpoint_last.json";
          model.save_checkpoint(result.last_checkpoint, run);
          if (ev.report.micro.f1 > result.best_dev_f1) {
            result.best_checkpoint = out_dir + "/checkpoint_best.json";
            model.save_checkpoint(result.best_checkpoint, run);
          }
        }
        if (ev.report.micro.f1 > result.best_dev_f1) {
          result.best_dev_f1 = ev.report.micro.f1;
          result.best_dev_step = step;
        }
      } else if (!out_dir.empty()) {
        result.last_checkpoint = out_dir + "/checkpoint_last.json";
        model.save_checkpoint(result.last_checkpoint);
      }
    }
  }

  result.metrics_csv = csv.str();
  if (!out_dir.empty()) {
    std::ofstream mf(out_dir + "/metrics.csv");
    if (!mf) throw io_error("cannot write metrics under " + out_dir);
    mf << result.metrics_csv;
  }
  return result;
}

}  // namespace graphre
