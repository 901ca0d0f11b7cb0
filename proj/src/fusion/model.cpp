#include "mmsurv/fusion/model.hpp"

#include <cmath>

#include "mmsurv/errors.hpp"

namespace mmsurv::fusion {

using ad::Graph;
using ad::Tensor;
using ad::Var;

std::string to_string(Modality m) {
  switch (m) {
    case Modality::multimodal: return "multimodal";
    case Modality::clinical: return "clinical";
    case Modality::imaging: return "imaging";
  }
  return "unknown";
}

Modality modality_from_string(const std::string& s) {
  if (s == "multimodal") return Modality::multimodal;
  if (s == "clinical") return Modality::clinical;
  if (s == "imaging") return Modality::imaging;
  throw ConfigError("unknown modality '" + s + "' (expected multimodal, clinical or imaging)");
}

void ModelConfig::validate() const {
  if (width == 0 || heads == 0) throw ConfigError("model width and heads must be positive");
  if (width % heads) {
    throw ConfigError("model width " + std::to_string(width) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (clinical_tokens == 0) throw ConfigError("clinical token count must be positive");
  if (imaging_width == 0) throw ConfigError("imaging width must be positive");
  if (bins < 2) throw ConfigError("need at least two time bins");
  if (fusion_depth == 0) throw ConfigError("fusion depth must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(loss.lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(loss.sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

Var cross_attention(Graph& g, Var alpha, Var beta, const nn::MultiHeadAttention& w, std::size_t batch) {
  if (alpha.cols() != w.width() || beta.cols() != w.width()) {
    throw ShapeError("cross_attention: widths " + std::to_string(alpha.cols()) + " and " +
                     std::to_string(beta.cols()) + " do not match attention width " +
                     std::to_string(w.width()));
  }
  return w(g, alpha, beta, batch);
}

FusionModel::FusionModel(ModelConfig config, Modality modality) : config_(config), modality_(modality) {
  config_.validate();
  const bool wants_clinical = modality_ != Modality::imaging;
  const bool wants_imaging = modality_ != Modality::clinical;
  if (wants_clinical && config_.clinical_features == 0) {
    throw ConfigError("clinical feature count must be positive");
  }
  nn::Rng rng(config_.seed);
  const std::size_t d = config_.width;
  if (wants_clinical) {
    clin_in_ = nn::Linear::create(store_, "fusion.clinical.fc1", config_.clinical_features, d, rng);
    clin_out_ = nn::Linear::create(store_, "fusion.clinical.fc2", d, config_.clinical_tokens * d, rng);
  }
  if (wants_imaging) img_proj_ = nn::Linear::create(store_, "fusion.imaging.proj", config_.imaging_width, d, rng);
  if (modality_ == Modality::multimodal) {
    for (std::size_t r = 0; r < config_.fusion_depth; ++r) {
      const std::string tag = std::to_string(r);
      clin_from_img_.push_back(nn::AttentionBlock::create(store_, "fusion.cross" + tag + ".clinical", d,
                                                          config_.heads, rng));
      img_from_clin_.push_back(nn::AttentionBlock::create(store_, "fusion.cross" + tag + ".imaging", d,
                                                          config_.heads, rng));
    }
    final_ = nn::AttentionBlock::create(store_, "fusion.final", d, config_.heads, rng);
  } else {
    self_ = nn::AttentionBlock::create(store_, "fusion.self", d, config_.heads, rng);
  }
  pool_query_ = &store_.add("fusion.pool.query", nn::fan_in_uniform({1, d}, d, rng));
  head_hidden_ = nn::Linear::create(store_, "fusion.head.fc1", d, d, rng);
  head_out_ = nn::Linear::create(store_, "fusion.head.fc2", d, config_.bins, rng);
}

Var FusionModel::clinical_encode(Graph& g, Var x) const {
  if (!clin_in_.weight) throw ContractError("imaging-only model has no clinical encoder");
  if (x.cols() != config_.clinical_features) {
    throw ShapeError("clinical input has " + std::to_string(x.cols()) + " features, model expects " +
                     std::to_string(config_.clinical_features));
  }
  Var h = clin_out_(g, ad::gelu(clin_in_(g, x)));
  return ad::reshape(h, {x.rows() * config_.clinical_tokens, config_.width});
}

Var FusionModel::project_imaging(Graph& g, Var tokens) const {
  if (!img_proj_.weight) throw ContractError("clinical-only model has no imaging input");
  if (tokens.cols() != config_.imaging_width) {
    throw ShapeError("image tokens have width " + std::to_string(tokens.cols()) + ", model expects " +
                     std::to_string(config_.imaging_width));
  }
  return img_proj_(g, tokens);
}

std::pair<Var, Var> FusionModel::bidirectional_fuse(Graph& g, Var clinical, Var imaging,
                                                    std::size_t batch) const {
  if (clin_from_img_.empty()) throw ContractError("unimodal model has no cross-attention");
  for (std::size_t r = 0; r < clin_from_img_.size(); ++r) {
    Var c = clin_from_img_[r](g, clinical, imaging, batch);
    Var i = img_from_clin_[r](g, imaging, clinical, batch);
    clinical = c;
    imaging = i;
  }
  return {clinical, imaging};
}

Var FusionModel::final_attention(Graph& g, Var clinical, Var imaging, std::size_t batch) const {
  if (!final_.attn.wq) throw ContractError("unimodal model has no final attention");
  Var kv = ad::concat_seq(clinical, imaging, batch);
  return final_(g, config_.symmetric_final ? kv : clinical, kv, batch);
}

Var FusionModel::attention_pool(Graph& g, Var seq, std::size_t batch) const {
  if (seq.cols() != config_.width) throw ShapeError("attention_pool: width mismatch");
  Var q = ad::tile_rows(g.parameter(*pool_query_), batch);
  return ad::attention(q, seq, seq, batch, 1);
}

Var FusionModel::predict_logits(Graph& g, Var pooled) const {
  return head_out_(g, ad::gelu(head_hidden_(g, pooled)));
}

Var FusionModel::maybe_dropout(Graph& g, Var x, nn::Rng* rng) const {
  if (!rng || config_.dropout <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - config_.dropout);
  Tensor mask(x.shape());
  const double inv = 1.0 / (1.0 - config_.dropout);
  for (auto& m : mask.data()) m = keep(*rng) ? inv : 0.0;
  return ad::mul(x, g.constant(std::move(mask)));
}

Forward FusionModel::forward(Graph& g, const Inputs& in, nn::Rng* rng) const {
  const std::size_t b = in.batch;
  if (b == 0) throw ShapeError("forward: empty batch");
  Var seq;
  switch (modality_) {
    case Modality::multimodal: {
      if (!in.clinical || !in.imaging) throw ContractError("multimodal forward needs both modalities");
      Var c = maybe_dropout(g, clinical_encode(g, *in.clinical), rng);
      Var i = maybe_dropout(g, project_imaging(g, *in.imaging), rng);
      auto [cf, imf] = bidirectional_fuse(g, c, i, b);
      seq = final_attention(g, cf, imf, b);
      break;
    }
    case Modality::clinical: {
      if (!in.clinical) throw ContractError("clinical forward needs clinical input");
      Var c = maybe_dropout(g, clinical_encode(g, *in.clinical), rng);
      seq = self_(g, c, c, b);
      break;
    }
    case Modality::imaging: {
      if (!in.imaging) throw ContractError("imaging forward needs image tokens");
      Var i = maybe_dropout(g, project_imaging(g, *in.imaging), rng);
      seq = self_(g, i, i, b);
      break;
    }
  }
  Forward out;
  out.pooled = attention_pool(g, seq, b);
  out.logits = predict_logits(g, maybe_dropout(g, out.pooled, rng));
  return out;
}

}  // namespace mmsurv::fusion
