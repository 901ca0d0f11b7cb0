#include "mmsurv/autodiff/nn.hpp"

#include <cmath>

#include "mmsurv/errors.hpp"

namespace mmsurv::nn {

using ad::Graph;
using ad::Tensor;
using ad::Var;

Tensor fan_in_uniform(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Linear Linear::create(ad::ParameterStore& store, const std::string& name, std::size_t in,
                      std::size_t out, Rng& rng, bool with_bias) {
  Linear l;
  l.weight = &store.add(name + ".weight", fan_in_uniform({in, out}, in, rng));
  if (with_bias) l.bias = &store.add(name + ".bias", fan_in_uniform({1, out}, in, rng));
  return l;
}

Var Linear::operator()(Graph& g, Var x) const {
  Var y = ad::matmul(x, g.parameter(*weight));
  return bias ? ad::add_row(y, g.parameter(*bias)) : y;
}

LayerNorm LayerNorm::create(ad::ParameterStore& store, const std::string& name, std::size_t width) {
  LayerNorm n;
  n.gain = &store.add(name + ".gain", Tensor({1, width}, 1.0));
  n.bias = &store.add(name + ".bias", Tensor({1, width}, 0.0));
  return n;
}

Var LayerNorm::operator()(Graph& g, Var x) const {
  return ad::layer_norm(x, g.parameter(*gain), g.parameter(*bias), eps);
}

MultiHeadAttention MultiHeadAttention::create(ad::ParameterStore& store, const std::string& name,
                                              std::size_t width, std::size_t heads, Rng& rng) {
  if (heads == 0 || width % heads) {
    throw ConfigError("attention width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  MultiHeadAttention a;
  a.heads = heads;
  a.wq = &store.add(name + ".wq", fan_in_uniform({width, width}, width, rng));
  a.wk = &store.add(name + ".wk", fan_in_uniform({width, width}, width, rng));
  a.wv = &store.add(name + ".wv", fan_in_uniform({width, width}, width, rng));
  a.wo = &store.add(name + ".wo", fan_in_uniform({width, width}, width, rng));
  return a;
}

Var MultiHeadAttention::operator()(Graph& g, Var query_src, Var kv_src, std::size_t batch) const {
  Var q = ad::matmul(query_src, g.parameter(*wq));
  Var k = ad::matmul(kv_src, g.parameter(*wk));
  Var v = ad::matmul(kv_src, g.parameter(*wv));
  return ad::matmul(ad::attention(q, k, v, batch, heads), g.parameter(*wo));
}

FeedForward FeedForward::create(ad::ParameterStore& store, const std::string& name,
                                std::size_t width, std::size_t hidden, Rng& rng) {
  return {Linear::create(store, name + ".up", width, hidden, rng),
          Linear::create(store, name + ".down", hidden, width, rng)};
}

Var FeedForward::operator()(Graph& g, Var x) const { return down(g, ad::gelu(up(g, x))); }

AttentionBlock AttentionBlock::create(ad::ParameterStore& store, const std::string& name,
                                      std::size_t width, std::size_t heads, Rng& rng) {
  return {MultiHeadAttention::create(store, name + ".attn", width, heads, rng),
          LayerNorm::create(store, name + ".norm", width)};
}

Var AttentionBlock::operator()(Graph& g, Var query_src, Var kv_src, std::size_t batch) const {
  return norm(g, ad::add(query_src, attn(g, query_src, kv_src, batch)));
}

TransformerBlock TransformerBlock::create(ad::ParameterStore& store, const std::string& name,
                                          std::size_t width, std::size_t heads,
                                          std::size_t ff_hidden, Rng& rng) {
  return {AttentionBlock::create(store, name + ".self", width, heads, rng),
          FeedForward::create(store, name + ".ff", width, ff_hidden, rng),
          LayerNorm::create(store, name + ".ff_norm", width)};
}

Var TransformerBlock::operator()(Graph& g, Var x, std::size_t batch) const {
  Var h = self_attn(g, x, x, batch);
  return norm(g, ad::add(h, ff(g, h)));
}

}  // namespace mmsurv::nn
