#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kcforge/cache.hpp"
#include "kcforge/error.hpp"

namespace kcforge {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
};

inline bool operator==(const EmbeddingVector& a, const EmbeddingVector& b) {
  return a.values == b.values;
}

inline void validate(const EmbeddingVector& v) {
  if (v.values.empty()) {
    throw ValidationError("embedding vector is empty");
  }
  bool any_nonzero = false;
  for (double x : v.values) {
    if (!std::isfinite(x)) {
      throw ValidationError("embedding vector contains a non-finite entry");
    }
    any_nonzero = any_nonzero || x != 0.0;
  }
  if (!any_nonzero) {
    throw ValidationError("embedding vector is all zeros");
  }
}

inline double l2_norm(const EmbeddingVector& v) {
  double sum = 0.0;
  for (double x : v.values) {
    sum += x * x;
  }
  return std::sqrt(sum);
}

inline EmbeddingVector l2_normalized(const EmbeddingVector& v) {
  const double norm = l2_norm(v);
  if (norm == 0.0) {
    throw DomainError("cannot normalize a zero-norm vector");
  }
  EmbeddingVector out;
  out.values.reserve(v.values.size());
  for (double x : v.values) {
    out.values.push_back(x / norm);
  }
  return out;
}

// dot(u, v) / (|u| * |v|), clamped into [-1, 1] against rounding.
inline double cosine_similarity(const EmbeddingVector& u,
                                const EmbeddingVector& v) {
  if (u.dim() != v.dim()) {
    throw ContractError("cosine_similarity: dimension mismatch (" +
                        std::to_string(u.dim()) + " vs " +
                        std::to_string(v.dim()) + ")");
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    dot += u.values[i] * v.values[i];
  }
  const double nu = l2_norm(u);
  const double nv = l2_norm(v);
  if (nu == 0.0 || nv == 0.0) {
    throw DomainError("cosine_similarity: zero-norm input");
  }
  return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

// An embedding backend: one vector per input text, in input order.
class EmbeddingClient {
 public:
  virtual ~EmbeddingClient() = default;
  virtual std::vector<EmbeddingVector> embed(
      const std::vector<std::string>& inputs) = 0;
};

// Deterministic offline embedder: character n-grams hashed into a fixed-size
// signed-count vector, l2-normalized. Backs the test suite and all offline
// runs; similar strings share most n-grams and land close in cosine.
class LocalNgramEmbedder : public EmbeddingClient {
 public:
  explicit LocalNgramEmbedder(std::size_t dim = 256, std::size_t ngram = 3,
                              std::uint64_t seed = 0x6b63666f72676531ull)
      : dim_(dim), ngram_(ngram), seed_(seed) {
    if (dim_ == 0 || ngram_ == 0) {
      throw ValidationError("LocalNgramEmbedder: dim and ngram must be >= 1");
    }
  }

  std::vector<EmbeddingVector> embed(
      const std::vector<std::string>& inputs) override {
    std::vector<EmbeddingVector> out;
    out.reserve(inputs.size());
    for (const auto& text : inputs) {
      out.push_back(embed_one(text));
    }
    return out;
  }

  EmbeddingVector embed_one(const std::string& text) const {
    if (text.empty()) {
      throw ValidationError("cannot embed an empty string");
    }
    EmbeddingVector v;
    v.values.assign(dim_, 0.0);
    if (text.size() < ngram_) {
      bump(v, text);
    } else {
      for (std::size_t i = 0; i + ngram_ <= text.size(); ++i) {
        bump(v, text.substr(i, ngram_));
      }
    }
    bool any = false;
    for (double x : v.values) {
      any = any || x != 0.0;
    }
    if (!any) {
      v.values[0] = 1.0;  // signed counts cancelled out; keep the invariant
    }
    return l2_normalized(v);
  }

 private:
  void bump(EmbeddingVector& v, const std::string& gram) const {
    // FNV-1a over the seed then the bytes; top bit picks the sign.
    std::uint64_t h = 0xcbf29ce484222325ull ^ seed_;
    const auto mix = [&h](std::uint64_t byte) {
      h ^= byte;
      h *= 0x100000001b3ull;
    };
    for (int shift = 0; shift < 64; shift += 8) {
      mix((seed_ >> shift) & 0xff);
    }
    for (unsigned char c : gram) {
      mix(c);
    }
    const std::size_t index = static_cast<std::size_t>(h % dim_);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v.values[index] += sign;
  }

  std::size_t dim_;
  std::size_t ngram_;
  std::uint64_t seed_;
};

inline std::string embedding_cache_key(const std::string& model,
                                       const std::string& input) {
  nlohmann::json key = {{"kind", "embedding"}, {"model", model},
                        {"input", input}};
  return key.dump();
}

// Per-text cache in front of an embedding backend; only misses are forwarded,
// batched into one call.
class CachingEmbeddingClient : public EmbeddingClient {
 public:
  CachingEmbeddingClient(EmbeddingClient& inner, ResponseCache& cache,
                         std::string model)
      : inner_(inner), cache_(cache), model_(std::move(model)) {}

  std::vector<EmbeddingVector> embed(
      const std::vector<std::string>& inputs) override {
    std::vector<EmbeddingVector> out(inputs.size());
    std::vector<std::size_t> miss_indices;
    std::vector<std::string> misses;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto hit = cache_.lookup(embedding_cache_key(model_, inputs[i]));
      if (hit) {
        out[i] = decode(*hit);
      } else {
        miss_indices.push_back(i);
        misses.push_back(inputs[i]);
      }
    }
    if (!misses.empty()) {
      const auto fresh = inner_.embed(misses);
      if (fresh.size() != misses.size()) {
        throw ContractError("embedding backend returned " +
                            std::to_string(fresh.size()) + " vectors for " +
                            std::to_string(misses.size()) + " inputs");
      }
      for (std::size_t j = 0; j < misses.size(); ++j) {
        cache_.store(embedding_cache_key(model_, misses[j]),
                     encode(fresh[j]));
        out[miss_indices[j]] = fresh[j];
      }
    }
    return out;
  }

 private:
  static std::string encode(const EmbeddingVector& v) {
    return nlohmann::json(v.values).dump();
  }

  static EmbeddingVector decode(const std::string& payload) {
    EmbeddingVector v;
    try {
      v.values = nlohmann::json::parse(payload).get<std::vector<double>>();
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(std::string("corrupt cached embedding: ") + ex.what(),
                        payload);
    }
    return v;
  }

  EmbeddingClient& inner_;
  ResponseCache& cache_;
  std::string model_;
};

// One vector per label, all with the same dimension.
inline std::map<std::string, EmbeddingVector> embed_labels(
    const std::vector<std::string>& labels, EmbeddingClient& client) {
  if (labels.empty()) {
    throw ValidationError("embed_labels: no labels given");
  }
  std::map<std::string, EmbeddingVector> result;
  for (const auto& label : labels) {
    if (label.empty()) {
      throw ValidationError("embed_labels: empty label");
    }
    if (result.count(label)) {
      throw ValidationError("embed_labels: duplicate label '" + label + "'");
    }
    result[label] = {};
  }
  const auto vectors = client.embed(labels);
  if (vectors.size() != labels.size()) {
    throw ContractError("embedding backend returned " +
                        std::to_string(vectors.size()) + " vectors for " +
                        std::to_string(labels.size()) + " labels");
  }
  std::size_t dim = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    validate(vectors[i]);
    if (i == 0) {
      dim = vectors[i].dim();
    } else if (vectors[i].dim() != dim) {
      throw ContractError("embedding dimension mismatch: expected " +
                          std::to_string(dim) + ", got " +
                          std::to_string(vectors[i].dim()) + " for label '" +
                          labels[i] + "'");
    }
    result[labels[i]] = vectors[i];
  }
  return result;
}

}  // namespace kcforge
