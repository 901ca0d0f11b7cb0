#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmsurv/autodiff/nn.hpp"
#include "mmsurv/volume/volume.hpp"

namespace mmsurv::volume {

enum class LossCombination {
  additive,             // recon + w * contrastive
  multiplicative,       // recon * (1 + w * contrastive)
  reconstruction_only,
  contrastive_only,
};

std::string to_string(LossCombination c);
LossCombination loss_combination_from_string(const std::string& s);

struct EncoderConfig {
  Dims dims;
  std::size_t patch = 4;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t blocks = 2;
  std::size_t ff_hidden = 128;
  std::size_t projection_width = 32;
  double temperature = 0.1;
  double contrastive_weight = 1.0;
  LossCombination combination = LossCombination::additive;
  double cutout_fraction = 0.25;
  std::size_t swaps = 8;
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::size_t steps = 200;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
  std::size_t tokens() const { return token_count(dims, patch); }
  std::size_t patch_values() const { return kChannels * patch * patch * patch; }
};

// Patch embedding with learned positional encodings, a stack of post-norm
// transformer blocks, a per-token reconstruction decoder and a pooled
// projection head for the contrastive task. Parameters are named "encoder.*".
class VolumeEncoder {
 public:
  explicit VolumeEncoder(EncoderConfig config);

  const EncoderConfig& config() const noexcept { return config_; }
  ad::ParameterStore& parameters() noexcept { return store_; }
  const ad::ParameterStore& parameters() const noexcept { return store_; }

  // Frozen parameters enter every graph as constants.
  void set_frozen(bool frozen);
  bool frozen() const noexcept { return frozen_; }

  // Stacked raw patches (batch * tokens) x patch_values -> token embeddings.
  ad::Var embed(ad::Graph& g, ad::Var patches, std::size_t batch) const;
  ad::Var encode_tokens(ad::Graph& g, ad::Var patches, std::size_t batch) const;
  // Tokens -> reconstructed patches.
  ad::Var decode(ad::Graph& g, ad::Var tokens) const;
  // Mean token -> MLP -> batch x projection_width.
  ad::Var project(ad::Graph& g, ad::Var tokens, std::size_t batch) const;

  // tokens x width encoding of one volume.
  ad::Tensor encode(const Volume& v) const;
  // Mean over tokens of encode(v).
  std::vector<double> pooled(const Volume& v) const;

 private:
  EncoderConfig config_;
  ad::ParameterStore store_;
  bool frozen_ = false;
  nn::Linear patch_embed_;
  ad::Parameter* positions_ = nullptr;
  std::vector<nn::TransformerBlock> blocks_;
  nn::Linear decoder_;
  nn::Linear proj_hidden_, proj_out_;
};

// Normalized-temperature cross-entropy. Rows [0, B) are the first views and
// rows [B, 2B) the second views of the same subjects; row i's positive is
// row (i + B) mod 2B. Embeddings are L2-normalized inside.
ad::Var contrastive_loss(ad::Var embeddings, double temperature);
double contrastive_loss(const ad::Tensor& embeddings, double temperature);

// Mean absolute error.
ad::Var reconstruction_loss(ad::Var decoded, ad::Var original);
double reconstruction_loss(const Volume& decoded, const Volume& original);

// Two augmented views of each listed subject, in patch space.
struct SslBatch {
  ad::Tensor views;      // (2B * tokens) x patch_values
  ad::Tensor originals;  // same layout, unaugmented
  std::size_t subjects = 0;
};

SslBatch make_ssl_batch(std::span<const Volume> volumes, std::span<const std::size_t> subjects,
                        const EncoderConfig& config, std::mt19937_64& rng);

struct SslLoss {
  ad::Var reconstruction;
  ad::Var contrastive;
  ad::Var total;
};

SslLoss ssl_loss(ad::Graph& g, const VolumeEncoder& enc, const SslBatch& batch);

struct PretrainResult {
  std::vector<double> curve;      // training loss per step
  double heldout_initial = 0.0;   // held-out loss before the first step
  double heldout_final = 0.0;
};

// Combined loss on fixed, seed-determined augmentations of `volumes`.
double heldout_ssl_loss(const VolumeEncoder& enc, std::span<const Volume> volumes, std::uint64_t seed);

// Adam over the encoder with batches drawn without replacement per epoch.
// Throws ConfigError when fewer than two subjects are available per batch.
PretrainResult ssl_pretrain(VolumeEncoder& enc, std::span<const Volume> training,
                            std::span<const Volume> heldout = {});

// Least-squares probe with intercept (tiny ridge for conditioning).
struct LinearProbe {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  double predict(std::span<const double> features) const;
};

LinearProbe fit_linear_probe(const std::vector<std::vector<double>>& features, std::span<const double> targets,
                             double ridge = 1e-6);
double r_squared(const LinearProbe& probe, const std::vector<std::vector<double>>& features,
                 std::span<const double> targets);

}  // namespace mmsurv::volume
