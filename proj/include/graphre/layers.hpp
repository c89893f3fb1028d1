#pragma once

#include <string>
#include <utility>
#include <vector>

#include "graphre/optim.hpp"
#include "graphre/tensor.hpp"

namespace graphre {

struct Linear {
  Tensor W;  // (in x out)
  Tensor b;  // (out)

  Linear() = default;
  Linear(ParameterStore& ps, const std::string& name, int in, int out) {
    W = ps.add_xavier(name + ".W", in, out);
    b = ps.add_zeros(name + ".b", {out});
  }

  Tensor forward(const Tensor& x) const { return add_rowvec(matmul(x, W), b); }
};

// single hidden layer with ELU, linear output
struct Mlp {
  Linear hidden;
  Linear out;

  Mlp() = default;
  Mlp(ParameterStore& ps, const std::string& name, int in, int h, int o)
      : hidden(ps, name + ".hidden", in, h), out(ps, name + ".out", h, o) {}

  Tensor forward(const Tensor& x) const {
    return out.forward(elu(hidden.forward(x)));
  }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  LayerNorm(ParameterStore& ps, const std::string& name, int d) {
    gain = ps.add_constant(name + ".gain", {d}, 1.0);
    bias = ps.add_zeros(name + ".bias", {d});
  }

  Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

// standard 4-gate cell, gate order [input, forget, candidate, output];
// forget-gate bias starts at 1.0
struct LstmCell {
  Tensor Wx;  // (in x 4H)
  Tensor Wh;  // (H x 4H)
  Tensor b;   // (4H)
  int hidden = 0;

  LstmCell() = default;
  LstmCell(ParameterStore& ps, const std::string& name, int in, int h)
      : hidden(h) {
    Wx = ps.add_xavier(name + ".Wx", in, 4 * h);
    Wh = ps.add_xavier(name + ".Wh", h, 4 * h);
    std::vector<double> bias(static_cast<size_t>(4) * h, 0.0);
    for (int j = h; j < 2 * h; ++j) bias[j] = 1.0;
    b = ps.add(name + ".b", {4 * h}, std::move(bias));
  }

  // x_t: (1 x in), h/c: (1 x H) -> (h', c')
  std::pair<Tensor, Tensor> step(const Tensor& x_t, const Tensor& h,
                                 const Tensor& c) const {
    Tensor gates = add_rowvec(add(matmul(x_t, Wx), matmul(h, Wh)), b);
    Tensor ig = sigmoid(cols_slice(gates, 0, hidden));
    Tensor fg = sigmoid(cols_slice(gates, hidden, 2 * hidden));
    Tensor gg = tanh_t(cols_slice(gates, 2 * hidden, 3 * hidden));
    Tensor og = sigmoid(cols_slice(gates, 3 * hidden, 4 * hidden));
    Tensor c2 = add(mul(fg, c), mul(ig, gg));
    Tensor h2 = mul(og, tanh_t(c2));
    return {h2, c2};
  }

  // run over all rows of X in the given order; returns rows in input order
  std::vector<Tensor> run(const Tensor& X, bool reverse) const {
    const int n = X.dim(0);
    std::vector<Tensor> out(n);
    Tensor h = Tensor::zeros({1, hidden});
    Tensor c = Tensor::zeros({1, hidden});
    for (int k = 0; k < n; ++k) {
      const int t = reverse ? n - 1 - k : k;
      auto [h2, c2] = step(rows_gather(X, {t}), h, c);
      h = h2;
      c = c2;
      out[t] = h;
    }
    return out;
  }
};

struct BiLstm {
  LstmCell fwd;
  LstmCell bwd;

  BiLstm() = default;
  BiLstm(ParameterStore& ps, const std::string& name, int in, int h)
      : fwd(ps, name + ".fwd", in, h), bwd(ps, name + ".bwd", in, h) {}

  // X: (n x in) -> (n x 2H), forward half first
  Tensor forward(const Tensor& X) const {
    auto hf = fwd.run(X, false);
    auto hb = bwd.run(X, true);
    std::vector<Tensor> rows;
    rows.reserve(hf.size());
    for (size_t t = 0; t < hf.size(); ++t)
      rows.push_back(concat({hf[t], hb[t]}, 1));
    return concat(rows, 0);
  }
};

// L stacked BiLSTM layers; layer 0 maps in -> 2H, the rest 2H -> 2H.
// With zero layers forward() is the identity.
struct StackedBiLstm {
  std::vector<BiLstm> layers;

  StackedBiLstm() = default;
  StackedBiLstm(ParameterStore& ps, const std::string& name, int num_layers,
                int in, int h) {
    for (int l = 0; l < num_layers; ++l)
      layers.emplace_back(ps, name + ".l" + std::to_string(l),
                          l == 0 ? in : 2 * h, h);
  }

  Tensor forward(Tensor X) const {
    for (const auto& layer : layers) X = layer.forward(X);
    return X;
  }
};

}  // namespace graphre
