#pragma once

#include <string>
#include <vector>

#include "graphre/layers.hpp"
#include "graphre/tensor.hpp"

namespace graphre {

struct TaggerConfig {
  int d_f = 768;    // input feature dim
  int d_h = 300;    // BiLSTM hidden size per direction
  int tag_count = 0;  // |T|, 2*(entity classes)+1 under BIO
  int d_tag = 100;  // dense tag embedding dim

  void validate() const {
    if (d_f <= 0 || d_h <= 0 || tag_count <= 0 || d_tag <= 0)
      throw config_error("tagger: all dimensions must be positive");
  }
};

struct TaggerOut {
  Tensor hidden;  // |V| x 2d_h
  Tensor logits;  // |V| x |T|
  Tensor probs;   // softmax rows
};

// Single-layer BiLSTM plus classifier; predictions become dense tag
// embeddings through an argmax -> one-hot -> affine projection. The argmax
// blocks gradient, so the tagger learns only from its own loss term.
class Tagger {
 public:
  Tagger() = default;
  Tagger(ParameterStore& ps, const TaggerConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    lstm_ = BiLstm(ps, "tagger.lstm", cfg.d_f, cfg.d_h);
    classifier_ = Mlp(ps, "tagger.classifier", 2 * cfg.d_h, cfg.d_h,
                      cfg.tag_count);
    embed_ = Linear(ps, "tagger.tag_embed", cfg.tag_count, cfg.d_tag);
  }

  const TaggerConfig& config() const { return cfg_; }

  TaggerOut forward(const Tensor& X) const {
    if (X.rank() != 2 || X.dim(1) != cfg_.d_f)
      throw config_error("tagger: input dim " + std::to_string(X.dim(1)) +
                         " != configured d_f " + std::to_string(cfg_.d_f));
    TaggerOut out;
    out.hidden = lstm_.forward(X);
    out.logits = classifier_.forward(out.hidden);
    out.probs = softmax_last(out.logits);
    return out;
  }

  // argmax per row -> one-hot -> affine; ties break toward the lowest index
  Tensor tag_embed(const Tensor& probs) const {
    return embed_.forward(one_hot(argmax_last(probs), cfg_.tag_count));
  }

  // oracle path: gold tag indices bypass the tagger entirely
  Tensor tag_embed_gold(const std::vector<int>& gold_tags) const {
    return embed_.forward(one_hot(gold_tags, cfg_.tag_count));
  }

 private:
  TaggerConfig cfg_;
  BiLstm lstm_;
  Mlp classifier_;
  Linear embed_;
};

}  // namespace graphre
