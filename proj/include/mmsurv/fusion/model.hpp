#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "mmsurv/autodiff/nn.hpp"
#include "mmsurv/survival/head.hpp"

namespace mmsurv::fusion {

enum class Modality { multimodal, clinical, imaging };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct ModelConfig {
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t clinical_tokens = 4;
  std::size_t clinical_features = 0;  // length of the preprocessed covariate vector
  std::size_t imaging_width = 64;     // width of the incoming image tokens
  std::size_t bins = survival::kDefaultBins;
  std::size_t fusion_depth = 1;       // bidirectional cross-attention rounds
  bool symmetric_final = false;       // imaging tokens also act as final queries
  double dropout = 0.0;
  survival::LossWeights loss;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

// A batch of patients in stacked-row layout: clinical covariates are
// batch x features, image tokens are (batch * tokens) x imaging_width.
struct Inputs {
  std::optional<ad::Var> clinical;
  std::optional<ad::Var> imaging;
  std::size_t batch = 1;
};

// Output of one forward pass.
struct Forward {
  ad::Var pooled;  // batch x width
  ad::Var logits;  // batch x bins
};

// The survival network for one input modality. Parameters live in the
// model's own store under the "fusion." prefix.
class FusionModel {
 public:
  FusionModel(ModelConfig config, Modality modality);

  const ModelConfig& config() const noexcept { return config_; }
  Modality modality() const noexcept { return modality_; }
  ad::ParameterStore& parameters() noexcept { return store_; }
  const ad::ParameterStore& parameters() const noexcept { return store_; }

  // batch x features -> (batch * clinical_tokens) x width.
  ad::Var clinical_encode(ad::Graph& g, ad::Var x) const;
  // (batch * n) x imaging_width -> (batch * n) x width.
  ad::Var project_imaging(ad::Graph& g, ad::Var tokens) const;
  // One or more rounds of residual cross-attention in both directions.
  std::pair<ad::Var, ad::Var> bidirectional_fuse(ad::Graph& g, ad::Var clinical, ad::Var imaging,
                                                 std::size_t batch) const;
  // Clinical queries over the per-patient concatenation [clinical; imaging].
  ad::Var final_attention(ad::Graph& g, ad::Var clinical, ad::Var imaging, std::size_t batch) const;
  // (batch * n) x width -> batch x width.
  ad::Var attention_pool(ad::Graph& g, ad::Var seq, std::size_t batch) const;
  // batch x width -> batch x bins.
  ad::Var predict_logits(ad::Graph& g, ad::Var pooled) const;

  // Dropout is applied only when `rng` is given and the configured rate is
  // positive.
  Forward forward(ad::Graph& g, const Inputs& in, nn::Rng* rng = nullptr) const;

 private:
  ad::Var maybe_dropout(ad::Graph& g, ad::Var x, nn::Rng* rng) const;

  ModelConfig config_;
  Modality modality_;
  ad::ParameterStore store_;

  nn::Linear clin_in_, clin_out_;
  nn::Linear img_proj_;
  std::vector<nn::AttentionBlock> clin_from_img_, img_from_clin_;
  nn::AttentionBlock final_;
  nn::AttentionBlock self_;  // unimodal variants
  ad::Parameter* pool_query_ = nullptr;
  nn::Linear head_hidden_, head_out_;
};

// Cross-attention of `alpha` queries over `beta` keys and values with the
// given projections; output keeps alpha's token count.
ad::Var cross_attention(ad::Graph& g, ad::Var alpha, ad::Var beta, const nn::MultiHeadAttention& w,
                        std::size_t batch);

}  // namespace mmsurv::fusion
