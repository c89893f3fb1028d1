#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "graphre/data.hpp"
#include "graphre/errors.hpp"
#include "graphre/optim.hpp"
#include "graphre/rng.hpp"
#include "graphre/tensor.hpp"

namespace graphre {

// Frozen word-level features standing in for the paper's encoder backbone.
// Providers return the word rows only; the trainable root vector is owned by
// the model and prepended by embed_document.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dim() const = 0;
  virtual std::string kind() const = 0;
  // (|words| x d_f); constant unless the provider itself trains
  virtual Tensor word_features(const Document& doc) const = 0;
  virtual void register_parameters(ParameterStore&) {}
};

// row 0 is the learned root vector, rows 1..|V| the provider's word features
inline Tensor embed_document(const EmbeddingProvider& provider,
                             const Document& doc, const Tensor& root_vec) {
  if (doc.words.empty())
    throw usage_error("embed: document " + doc.id + " has no words");
  Tensor W = provider.word_features(doc);
  if (W.dim(1) != root_vec.dim(1))
    throw config_error("embed: provider dim " + std::to_string(W.dim(1)) +
                       " != configured d_f " + std::to_string(root_vec.dim(1)));
  return concat({root_vec, W}, 0);
}

// plain arithmetic mean of subword rows -> one word row
inline std::vector<double> average_rows(
    const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw usage_error("average_rows: no rows");
  std::vector<double> out(rows[0].size(), 0.0);
  for (const auto& r : rows) {
    if (r.size() != out.size())
      throw dimension_error("average_rows: ragged input");
    for (size_t i = 0; i < out.size(); ++i) out[i] += r[i];
  }
  for (auto& v : out) v /= static_cast<double>(rows.size());
  return out;
}

// ---- hash-random provider ----

// Each distinct word string maps deterministically to a fixed pseudo-random
// vector with unit-variance components. No state, so concurrent calls and
// repeated runs agree exactly.
class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  HashEmbeddingProvider(std::uint64_t seed, int d_f) : seed_(seed), d_f_(d_f) {
    if (d_f <= 0) throw config_error("hash embeddings: d_f must be positive");
  }

  int dim() const override { return d_f_; }
  std::string kind() const override { return "hash-random"; }

  std::vector<double> vector_for(const std::string& word) const {
    SplitMix64 g(mix_seed(seed_, fnv1a64(word)));
    std::vector<double> v(d_f_);
    for (auto& x : v) x = g.normal();
    return v;
  }

  Tensor word_features(const Document& doc) const override {
    std::vector<double> flat;
    flat.reserve(doc.words.size() * static_cast<size_t>(d_f_));
    for (const auto& w : doc.words) {
      auto v = vector_for(w);
      flat.insert(flat.end(), v.begin(), v.end());
    }
    return Tensor::from({static_cast<int>(doc.words.size()), d_f_},
                        std::move(flat));
  }

 private:
  std::uint64_t seed_;
  int d_f_;
};

// ---- precomputed store ----
//
// Binary layout (little-endian):
//   magic "GREMBED1" | u32 d_f | u32 record count
//   per record: u32 id length | id bytes | u32 row count | rows*d_f float32
// Rows are word-level features (subword averaging happens offline); the root
// row is never stored.

namespace detail {
inline void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw parse_error(path + ": truncated embedding store");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace detail

inline void write_embedding_store(
    const std::string& path, int d_f,
    const std::vector<std::pair<std::string, std::vector<float>>>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path);
  out.write("GREMBED1", 8);
  detail::put_u32(out, static_cast<std::uint32_t>(d_f));
  detail::put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& [id, rows] : records) {
    if (rows.size() % d_f != 0)
      throw dimension_error("embedding store: record " + id +
                            " is not a multiple of d_f");
    detail::put_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(rows.size() / d_f));
    out.write(reinterpret_cast<const char*>(rows.data()),
              static_cast<std::streamsize>(rows.size() * sizeof(float)));
  }
  if (!out) throw io_error("write failed: " + path);
}

class PrecomputedEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit PrecomputedEmbeddingProvider(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, "GREMBED1", 8) != 0)
      throw parse_error(path + ": not an embedding store (bad magic)");
    d_f_ = static_cast<int>(detail::get_u32(in, path));
    const std::uint32_t count = detail::get_u32(in, path);
    for (std::uint32_t r = 0; r < count; ++r) {
      const std::uint32_t idlen = detail::get_u32(in, path);
      std::string id(idlen, '\0');
      if (!in.read(id.data(), idlen))
        throw parse_error(path + ": truncated embedding store");
      const std::uint32_t rows = detail::get_u32(in, path);
      std::vector<float> buf(static_cast<size_t>(rows) * d_f_);
      if (!in.read(reinterpret_cast<char*>(buf.data()),
                   static_cast<std::streamsize>(buf.size() * sizeof(float))))
        throw parse_error(path + ": truncated embedding store");
      store_[id] = std::move(buf);
    }
  }

  int dim() const override { return d_f_; }
  std::string kind() const override { return "precomputed"; }

  Tensor word_features(const Document& doc) const override {
    auto it = store_.find(doc.id);
    if (it == store_.end())
      throw integrity_error("embedding store has no document id '" + doc.id +
                            "'");
    const auto& rows = it->second;
    if (rows.size() != doc.words.size() * static_cast<size_t>(d_f_))
      throw integrity_error("embedding store: document " + doc.id + " has " +
                            std::to_string(rows.size() / d_f_) +
                            " rows for " + std::to_string(doc.words.size()) +
                            " words");
    std::vector<double> flat(rows.begin(), rows.end());
    return Tensor::from({static_cast<int>(doc.words.size()), d_f_},
                        std::move(flat));
  }

 private:
  int d_f_ = 0;
  std::map<std::string, std::vector<float>> store_;
};

// ---- trainable lookup ----

// Vocabulary from the training split; unknown words share one UNK row.
// Used for end-to-end desk experiments without a precomputed store.
class LookupEmbeddingProvider final : public EmbeddingProvider {
 public:
  LookupEmbeddingProvider(const std::vector<Document>& train_docs, int d_f)
      : d_f_(d_f) {
    if (d_f <= 0) throw config_error("lookup embeddings: d_f must be positive");
    for (const auto& d : train_docs)
      for (const auto& w : d.words)
        if (!vocab_.count(w))
          vocab_[w] = static_cast<int>(vocab_.size()) + 1;  // 0 = UNK
  }

  int dim() const override { return d_f_; }
  std::string kind() const override { return "trainable-lookup"; }

  void register_parameters(ParameterStore& ps) override {
    table_ = ps.add_xavier("embeddings.lookup",
                           static_cast<int>(vocab_.size()) + 1, d_f_);
  }

  Tensor word_features(const Document& doc) const override {
    if (!table_.defined())
      throw usage_error("lookup embeddings used before register_parameters");
    std::vector<int> ids;
    ids.reserve(doc.words.size());
    for (const auto& w : doc.words) {
      auto it = vocab_.find(w);
      ids.push_back(it == vocab_.end() ? 0 : it->second);
    }
    return rows_gather(table_, ids);
  }

 private:
  int d_f_;
  std::map<std::string, int> vocab_;
  Tensor table_;
};

}  // namespace graphre
