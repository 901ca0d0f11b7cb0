#pragma once

#include <random>
#include <string>

#include "mmsurv/autodiff/graph.hpp"
#include "mmsurv/autodiff/ops.hpp"

// Small layer library shared by the fusion network and the volume encoder.
// Layers hold non-owning pointers into a ParameterStore.
namespace mmsurv::nn {

using Rng = std::mt19937_64;

// Symmetric uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
ad::Tensor fan_in_uniform(ad::Shape shape, std::size_t fan_in, Rng& rng);

struct Linear {
  ad::Parameter* weight = nullptr;  // in x out
  ad::Parameter* bias = nullptr;    // 1 x out, optional

  static Linear create(ad::ParameterStore& store, const std::string& name, std::size_t in,
                       std::size_t out, Rng& rng, bool with_bias = true);
  ad::Var operator()(ad::Graph& g, ad::Var x) const;
  std::size_t in_features() const { return weight->value.rows(); }
  std::size_t out_features() const { return weight->value.cols(); }
};

struct LayerNorm {
  ad::Parameter* gain = nullptr;
  ad::Parameter* bias = nullptr;
  double eps = 1e-5;

  static LayerNorm create(ad::ParameterStore& store, const std::string& name, std::size_t width);
  ad::Var operator()(ad::Graph& g, ad::Var x) const;
};

// Multi-head attention with separate query/key/value/output projections.
// Queries come from `query_src`, keys and values from `kv_src`; both are
// stacks of `batch` contiguous token blocks.
struct MultiHeadAttention {
  ad::Parameter* wq = nullptr;
  ad::Parameter* wk = nullptr;
  ad::Parameter* wv = nullptr;
  ad::Parameter* wo = nullptr;
  std::size_t heads = 1;

  static MultiHeadAttention create(ad::ParameterStore& store, const std::string& name,
                                   std::size_t width, std::size_t heads, Rng& rng);
  ad::Var operator()(ad::Graph& g, ad::Var query_src, ad::Var kv_src, std::size_t batch) const;
  std::size_t width() const { return wq->value.rows(); }
};

struct FeedForward {
  Linear up;
  Linear down;

  static FeedForward create(ad::ParameterStore& store, const std::string& name, std::size_t width,
                            std::size_t hidden, Rng& rng);
  ad::Var operator()(ad::Graph& g, ad::Var x) const;
};

// norm(query + attention(query, kv))
struct AttentionBlock {
  MultiHeadAttention attn;
  LayerNorm norm;

  static AttentionBlock create(ad::ParameterStore& store, const std::string& name,
                               std::size_t width, std::size_t heads, Rng& rng);
  ad::Var operator()(ad::Graph& g, ad::Var query_src, ad::Var kv_src, std::size_t batch) const;
};

// Post-norm transformer encoder block: self-attention then feed-forward,
// each wrapped in a residual connection and layer norm.
struct TransformerBlock {
  AttentionBlock self_attn;
  FeedForward ff;
  LayerNorm norm;

  static TransformerBlock create(ad::ParameterStore& store, const std::string& name,
                                 std::size_t width, std::size_t heads, std::size_t ff_hidden,
                                 Rng& rng);
  ad::Var operator()(ad::Graph& g, ad::Var x, std::size_t batch) const;
};

}  // namespace mmsurv::nn
