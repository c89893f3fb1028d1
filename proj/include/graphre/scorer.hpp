#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "graphre/layers.hpp"
#include "graphre/tensor.hpp"

namespace graphre {

struct ScorerConfig {
  int l_psi = 0;   // BiLSTM layers in {0..3}
  int l_phi = 0;   // GAT layers in {0..3}
  int d_h = 300;   // psi hidden per direction
  int d_edge = 256;
  int d_rel = 128;
  int d_tag = 100;
  int top_k = 3;
  int relation_count = 0;  // |R| including "none"
  int input_dim = 0;       // d_tag + d_f

  void validate() const {
    if (l_psi < 0 || l_psi > 3 || l_phi < 0 || l_phi > 3)
      throw config_error("scorer: l_psi and l_phi must be in {0,1,2,3}");
    if (d_h <= 0 || d_edge <= 0 || d_rel <= 0 || top_k < 1 ||
        relation_count <= 0 || input_dim <= 0)
      throw config_error("scorer: dimensions must be positive, top_k >= 1");
  }
};

// Score orientation used everywhere: s_edge[i][j] is the score of node j
// heading node i (row = dependent, column = candidate head).
struct ScorePack {
  Tensor s_edge;                // |V| x |V|, diagonal -inf
  Tensor s_rel;                 // |V| x |V| x |R|
  std::vector<Tensor> aux_edge; // one |V| x |V| matrix per GAT layer
  int node_count = 0;
};

// f(x1, x2; W) = x1^T W x2 + x1^T b with W (d x m x d) and b (d x m),
// W stored row-major as (d, m*d). Returns m scores.
inline Tensor biaffine(const Tensor& x1, const Tensor& x2, const Tensor& W,
                       const Tensor& b) {
  if (x1.rank() != 1 || x2.rank() != 1)
    throw config_error("biaffine: x1/x2 must be vectors");
  const int d1 = x1.dim(0), d2 = x2.dim(0);
  if (W.rank() != 2 || W.dim(0) != d1 || W.dim(1) % d2 != 0)
    throw config_error("biaffine: W shape " + shape_str(W.shape()) +
                       " incompatible with inputs " + std::to_string(d1) +
                       "/" + std::to_string(d2));
  const int m = W.dim(1) / d2;
  if (b.rank() != 2 || b.dim(0) != d1 || b.dim(1) != m)
    throw config_error("biaffine: b shape " + shape_str(b.shape()) +
                       " should be (" + std::to_string(d1) + "," +
                       std::to_string(m) + ")");
  Tensor r1 = reshape(x1, {1, d1});
  // x1^T W -> (1, m*d2) -> (m, d2); times x2 -> (m, 1)
  Tensor bilinear = matmul(reshape(matmul(r1, W), {m, d2}), reshape(x2, {d2, 1}));
  Tensor bias = transpose(matmul(r1, b));  // (m, 1)
  return reshape(add(bilinear, bias), {m});
}

// per-row top-k head candidates, diagonal excluded; ties break toward the
// lower column index
inline std::vector<std::vector<int>> topk_sparsify(
    const std::vector<double>& scores, int n, int k) {
  if (k < 1) throw usage_error("topk_sparsify: k must be >= 1");
  std::vector<std::vector<int>> adj(n);
  std::vector<int> cols;
  for (int i = 0; i < n; ++i) {
    cols.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) cols.push_back(j);
    const int keep = std::min<int>(k, n - 1);
    const double* row = scores.data() + static_cast<size_t>(i) * n;
    std::stable_sort(cols.begin(), cols.end(),
                     [row](int a, int b) { return row[a] > row[b]; });
    adj[i].assign(cols.begin(), cols.begin() + keep);
    std::sort(adj[i].begin(), adj[i].end());
  }
  return adj;
}

inline std::vector<std::vector<int>> topk_sparsify(const Tensor& scores, int k) {
  if (scores.rank() != 2 || scores.dim(0) != scores.dim(1))
    throw dimension_error("topk_sparsify: expected square matrix");
  return topk_sparsify(scores.data(), scores.dim(0), k);
}

// One GATv2-style attention layer over a sparse neighbourhood:
//   s(e_i, e_j) = a^T LeakyReLU(W_self e_i + W_neigh e_j)
//   alpha_ij    = Softmax over j in N(i)
//   e_i'        = LayerNorm(e_i + ELU(sum_j alpha_ij * W_neigh e_j))
struct GatLayer {
  Tensor Wself;   // (d x d)
  Tensor Wneigh;  // (d x d)
  Tensor attn;    // (d x 1)
  LayerNorm norm;
  int dim = 0;

  GatLayer() = default;
  GatLayer(ParameterStore& ps, const std::string& name, int d) : dim(d) {
    Wself = ps.add_xavier(name + ".Wself", d, d);
    Wneigh = ps.add_xavier(name + ".Wneigh", d, d);
    attn = ps.add_xavier(name + ".a", d, 1);
    norm = LayerNorm(ps, name + ".norm", d);
  }

  Tensor forward(const Tensor& E, const std::vector<std::vector<int>>& adj) const {
    const int n = E.dim(0);
    if (static_cast<int>(adj.size()) != n)
      throw dimension_error("gat: adjacency size mismatch");
    Tensor proj_self = matmul(E, Wself);
    Tensor proj_neigh = matmul(E, Wneigh);
    std::vector<Tensor> rows;
    rows.reserve(n);
    for (int i = 0; i < n; ++i) {
      if (adj[i].empty())
        throw numeric_error("gat: empty neighbourhood at node " +
                            std::to_string(i));
      Tensor neigh = rows_gather(proj_neigh, adj[i]);  // (k x d)
      Tensor self_row = reshape(rows_gather(proj_self, {i}), {dim});
      Tensor pre = leaky_relu(add_rowvec(neigh, self_row), 0.2);
      Tensor scores = reshape(matmul(pre, attn),
                              {1, static_cast<int>(adj[i].size())});
      Tensor alpha = softmax_last(scores);          // (1 x k)
      rows.push_back(matmul(alpha, neigh));         // (1 x d)
    }
    Tensor agg = concat(rows, 0);
    return norm.forward(add(E, elu(agg)));
  }
};

// Optional stacked BiLSTM, four MLP projections, biaffine scoring, and
// optional GAT refinement of the edge projections with top-k adjacency.
class Scorer {
 public:
  Scorer() = default;
  Scorer(ParameterStore& ps, const ScorerConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    psi_ = StackedBiLstm(ps, "scorer.psi", cfg.l_psi, cfg.input_dim, cfg.d_h);
    const int rep = cfg.l_psi > 0 ? 2 * cfg.d_h : cfg.input_dim;
    edge_head_ = Mlp(ps, "scorer.edge_head", rep, cfg.d_edge, cfg.d_edge);
    edge_dep_ = Mlp(ps, "scorer.edge_dep", rep, cfg.d_edge, cfg.d_edge);
    rel_head_ = Mlp(ps, "scorer.rel_head", rep, cfg.d_rel, cfg.d_rel);
    rel_dep_ = Mlp(ps, "scorer.rel_dep", rep, cfg.d_rel, cfg.d_rel);
    We_ = ps.add_xavier("scorer.edge_biaffine.W", cfg.d_edge, cfg.d_edge);
    be_ = ps.add_xavier("scorer.edge_biaffine.b", cfg.d_edge, 1);
    for (int r = 0; r < cfg.relation_count; ++r)
      Wr_.push_back(ps.add_xavier(
          "scorer.rel_biaffine.W" + std::to_string(r), cfg.d_rel, cfg.d_rel));
    br_ = ps.add_xavier("scorer.rel_biaffine.b", cfg.d_rel, cfg.relation_count);
    for (int l = 0; l < cfg.l_phi; ++l) {
      const std::string base = "scorer.gat" + std::to_string(l);
      Wa_.push_back(ps.add_xavier(base + ".aux_biaffine.W", cfg.d_edge, cfg.d_edge));
      ba_.push_back(ps.add_xavier(base + ".aux_biaffine.b", cfg.d_edge, 1));
      gat_head_.emplace_back(ps, base + ".head", cfg.d_edge);
      gat_dep_.emplace_back(ps, base + ".dep", cfg.d_edge);
    }
  }

  const ScorerConfig& config() const { return cfg_; }

  // features: (|V| x input_dim), row 0 the root
  ScorePack forward(const Tensor& features) const {
    if (features.rank() != 2 || features.dim(1) != cfg_.input_dim)
      throw config_error("scorer: input dim " +
                         std::to_string(features.dim(1)) + " != configured " +
                         std::to_string(cfg_.input_dim));
    const int n = features.dim(0);
    if (n < 2)
      throw usage_error("scorer: need at least one non-root word");
    Tensor H = cfg_.l_psi > 0 ? psi_.forward(features) : features;
    Tensor eh = edge_head_.forward(H);
    Tensor ed = edge_dep_.forward(H);
    Tensor rh = rel_head_.forward(H);
    Tensor rd = rel_dep_.forward(H);

    ScorePack sp;
    sp.node_count = n;
    for (int l = 0; l < cfg_.l_phi; ++l) {
      Tensor aux = edge_score_matrix(eh, ed, Wa_[l], ba_[l]);
      sp.aux_edge.push_back(aux);
      auto adj = topk_sparsify(aux, cfg_.top_k);
      eh = gat_head_[l].forward(eh, adj);
      ed = gat_dep_[l].forward(ed, adj);
    }
    sp.s_edge = edge_score_matrix(eh, ed, We_, be_);
    std::vector<Tensor> rel_slices;
    rel_slices.reserve(cfg_.relation_count);
    Tensor rdt = transpose(rd);
    for (int r = 0; r < cfg_.relation_count; ++r) {
      Tensor bilinear = transpose(matmul(matmul(rh, Wr_[r]), rdt));
      Tensor bias = reshape(matmul(rh, cols_slice(br_, r, r + 1)), {sp.node_count});
      rel_slices.push_back(add_rowvec(bilinear, bias));
    }
    sp.s_rel = stack_last(rel_slices);
    return sp;
  }

 private:
  // s[i][j] = eh_j^T W ed_i + eh_j^T b, diagonal masked to -inf
  static Tensor edge_score_matrix(const Tensor& eh, const Tensor& ed,
                                  const Tensor& W, const Tensor& b) {
    const int n = eh.dim(0);
    Tensor S = transpose(matmul(matmul(eh, W), transpose(ed)));
    Tensor bias = reshape(matmul(eh, b), {n});
    S = add_rowvec(S, bias);
    std::vector<char> diag(static_cast<size_t>(n) * n, 0);
    for (int i = 0; i < n; ++i) diag[static_cast<size_t>(i) * n + i] = 1;
    return masked_fill(S, diag, -std::numeric_limits<double>::infinity());
  }

  ScorerConfig cfg_;
  StackedBiLstm psi_;
  Mlp edge_head_, edge_dep_, rel_head_, rel_dep_;
  Tensor We_, be_;
  std::vector<Tensor> Wr_;
  Tensor br_;
  std::vector<Tensor> Wa_, ba_;
  std::vector<GatLayer> gat_head_, gat_dep_;
};

}  // namespace graphre
