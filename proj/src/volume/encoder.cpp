#include "mmsurv/volume/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmsurv/autodiff/ops.hpp"
#include "mmsurv/autodiff/optim.hpp"
#include "mmsurv/errors.hpp"

namespace mmsurv::volume {

using ad::Graph;
using ad::Tensor;
using ad::Var;

std::string to_string(LossCombination c) {
  switch (c) {
    case LossCombination::additive: return "additive";
    case LossCombination::multiplicative: return "multiplicative";
    case LossCombination::reconstruction_only: return "reconstruction_only";
    case LossCombination::contrastive_only: return "contrastive_only";
  }
  return "unknown";
}

LossCombination loss_combination_from_string(const std::string& s) {
  for (auto c : {LossCombination::additive, LossCombination::multiplicative, LossCombination::reconstruction_only,
                 LossCombination::contrastive_only}) {
    if (to_string(c) == s) return c;
  }
  throw ConfigError("unknown SSL loss combination '" + s + "'");
}

void EncoderConfig::validate() const {
  if (patch == 0 || dims.voxels() == 0) throw ConfigError("encoder geometry must be positive");
  if (dims.depth % patch || dims.height % patch || dims.width % patch) {
    throw ConfigError("volume dimensions must be divisible by the patch size");
  }
  if (width == 0 || heads == 0 || width % heads) throw ConfigError("encoder width must be divisible by heads");
  if (blocks == 0 || ff_hidden == 0 || projection_width == 0) throw ConfigError("encoder sizes must be positive");
  if (!(temperature > 0.0)) throw ConfigError("contrastive temperature must be positive");
  if (!(contrastive_weight >= 0.0)) throw ConfigError("contrastive weight must be non-negative");
  if (!(cutout_fraction > 0.0 && cutout_fraction <= 0.5)) throw ConfigError("cutout fraction must lie in (0, 0.5]");
  if (swaps == 0 || 2 * swaps > tokens()) throw ConfigError("patch swap count must fit the patch grid");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 2) throw ConfigError("SSL batches need at least two subjects");
}

VolumeEncoder::VolumeEncoder(EncoderConfig config) : config_(config) {
  config_.validate();
  nn::Rng rng(config_.seed);
  const std::size_t d = config_.width;
  patch_embed_ = nn::Linear::create(store_, "encoder.patch_embed", config_.patch_values(), d, rng);
  positions_ = &store_.add("encoder.positions", nn::fan_in_uniform({config_.tokens(), d}, d, rng));
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    blocks_.push_back(nn::TransformerBlock::create(store_, "encoder.block" + std::to_string(b), d, config_.heads,
                                                   config_.ff_hidden, rng));
  }
  decoder_ = nn::Linear::create(store_, "encoder.decoder", d, config_.patch_values(), rng);
  proj_hidden_ = nn::Linear::create(store_, "encoder.proj.fc1", d, d, rng);
  proj_out_ = nn::Linear::create(store_, "encoder.proj.fc2", d, config_.projection_width, rng);
}

void VolumeEncoder::set_frozen(bool frozen) {
  store_.set_frozen("encoder.", frozen);
  frozen_ = frozen;
}

Var VolumeEncoder::embed(Graph& g, Var patches, std::size_t batch) const {
  if (patches.cols() != config_.patch_values() || patches.rows() != batch * config_.tokens()) {
    throw ShapeError("encoder: patch matrix " + ad::shape_to_string(patches.shape()) + " for batch " +
                     std::to_string(batch));
  }
  return ad::add(patch_embed_(g, patches), ad::tile_rows(g.parameter(*positions_), batch));
}

Var VolumeEncoder::encode_tokens(Graph& g, Var patches, std::size_t batch) const {
  Var h = embed(g, patches, batch);
  for (const auto& b : blocks_) h = b(g, h, batch);
  return h;
}

Var VolumeEncoder::decode(Graph& g, Var tokens) const { return decoder_(g, tokens); }

Var VolumeEncoder::project(Graph& g, Var tokens, std::size_t batch) const {
  return proj_out_(g, ad::gelu(proj_hidden_(g, ad::segment_mean(tokens, batch))));
}

Tensor VolumeEncoder::encode(const Volume& v) const {
  if (!(v.dims() == config_.dims)) throw ShapeError("encode: volume geometry differs from the encoder's");
  Graph g(false);
  return encode_tokens(g, g.constant(patchify(v, config_.patch)), 1).value();
}

std::vector<double> VolumeEncoder::pooled(const Volume& v) const {
  const Tensor t = encode(v);
  std::vector<double> out(t.cols(), 0.0);
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t j = 0; j < t.cols(); ++j) out[j] += t(r, j) / static_cast<double>(t.rows());
  return out;
}

Var contrastive_loss(Var embeddings, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("contrastive temperature must be positive");
  const std::size_t n = embeddings.rows();
  if (n < 4 || n % 2) throw ShapeError("contrastive loss needs two views of at least two subjects");
  Graph& g = embeddings.graph();
  Var z = ad::l2_normalize_rows(embeddings);
  Var sim = ad::scale(ad::matmul(z, ad::transpose(z)), 1.0 / temperature);
  Tensor mask({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) mask(i, i) = -1e9;
  Var logp = ad::log_softmax_rows(ad::add(sim, g.constant(std::move(mask))));
  std::vector<std::size_t> positives(n);
  const std::size_t b = n / 2;
  for (std::size_t i = 0; i < n; ++i) positives[i] = i * n + (i + b) % n;
  return ad::scale(ad::sum(ad::gather(logp, std::move(positives))), -1.0 / static_cast<double>(n));
}

double contrastive_loss(const Tensor& embeddings, double temperature) {
  Graph g;
  return contrastive_loss(g.constant(embeddings), temperature).value().item();
}

Var reconstruction_loss(Var decoded, Var original) {
  if (decoded.shape() != original.shape()) {
    throw ShapeError("reconstruction_loss: shapes " + ad::shape_to_string(decoded.shape()) + " and " +
                     ad::shape_to_string(original.shape()));
  }
  return ad::mean(ad::abs(ad::sub(decoded, original)));
}

double reconstruction_loss(const Volume& decoded, const Volume& original) {
  if (!(decoded.dims() == original.dims())) throw ShapeError("reconstruction_loss: volume shapes differ");
  long double total = 0.0L;
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    total += std::abs(static_cast<double>(decoded.data()[i]) - static_cast<double>(original.data()[i]));
  }
  return static_cast<double>(total / decoded.size());
}

namespace {

void append_rows(std::vector<double>& dst, const Tensor& t) { dst.insert(dst.end(), t.vec().begin(), t.vec().end()); }

}  // namespace

SslBatch make_ssl_batch(std::span<const Volume> volumes, std::span<const std::size_t> subjects,
                        const EncoderConfig& config, std::mt19937_64& rng) {
  if (subjects.size() < 2) throw ConfigError("SSL batches need at least two subjects");
  std::vector<double> views, originals;
  // all first views, then all second views
  for (int view = 0; view < 2; ++view) {
    for (std::size_t s : subjects) {
      const Volume& v = volumes[s];
      if (!(v.dims() == config.dims)) throw ShapeError("SSL batch: volume geometry differs from the encoder's");
      auto swapped = augment_patch_swap(v, rng, config.swaps, config.patch);
      auto cut = augment_cutout(swapped.volume, rng, config.cutout_fraction);
      append_rows(views, patchify(cut.volume, config.patch));
      append_rows(originals, patchify(v, config.patch));
    }
  }
  const std::size_t rows = 2 * subjects.size() * config.tokens();
  SslBatch b;
  b.views = Tensor({rows, config.patch_values()}, std::move(views));
  b.originals = Tensor({rows, config.patch_values()}, std::move(originals));
  b.subjects = subjects.size();
  return b;
}

SslLoss ssl_loss(Graph& g, const VolumeEncoder& enc, const SslBatch& batch) {
  const auto& cfg = enc.config();
  const std::size_t n = 2 * batch.subjects;
  Var tokens = enc.encode_tokens(g, g.constant(batch.views), n);
  SslLoss out;
  out.reconstruction = reconstruction_loss(enc.decode(g, tokens), g.constant(batch.originals));
  out.contrastive = contrastive_loss(enc.project(g, tokens, n), cfg.temperature);
  switch (cfg.combination) {
    case LossCombination::additive:
      out.total = cfg.contrastive_weight == 0.0
                      ? out.reconstruction
                      : ad::add(out.reconstruction, ad::scale(out.contrastive, cfg.contrastive_weight));
      break;
    case LossCombination::multiplicative:
      out.total = ad::mul(out.reconstruction, ad::add_scalar(ad::scale(out.contrastive, cfg.contrastive_weight), 1.0));
      break;
    case LossCombination::reconstruction_only: out.total = out.reconstruction; break;
    case LossCombination::contrastive_only: out.total = out.contrastive; break;
  }
  return out;
}

double heldout_ssl_loss(const VolumeEncoder& enc, std::span<const Volume> volumes, std::uint64_t seed) {
  if (volumes.size() < 2) throw ConfigError("held-out SSL loss needs at least two subjects");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> all(volumes.size());
  std::iota(all.begin(), all.end(), 0);
  const SslBatch batch = make_ssl_batch(volumes, all, enc.config(), rng);
  Graph g;
  return ssl_loss(g, enc, batch).total.value().item();
}

PretrainResult ssl_pretrain(VolumeEncoder& enc, std::span<const Volume> training, std::span<const Volume> heldout) {
  const auto& cfg = enc.config();
  const std::size_t b = std::min(cfg.batch_size, training.size());
  if (b < 2) throw ConfigError("SSL pretraining needs at least two subjects per batch");
  if (enc.frozen()) throw ContractError("cannot pretrain a frozen encoder");

  PretrainResult res;
  const std::uint64_t heldout_seed = cfg.seed ^ 0x5eedULL;
  if (heldout.size() >= 2) res.heldout_initial = heldout_ssl_loss(enc, heldout, heldout_seed);

  std::mt19937_64 rng(cfg.seed + 1);
  ad::Adam opt(enc.parameters().all(), {.learning_rate = cfg.learning_rate});
  std::vector<std::size_t> order(training.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (cursor + b > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    std::span<const std::size_t> subjects(order.data() + cursor, b);
    cursor += b;
    const SslBatch batch = make_ssl_batch(training, subjects, cfg, rng);
    Graph g;
    SslLoss loss = ssl_loss(g, enc, batch);
    res.curve.push_back(loss.total.value().item());
    g.backward(loss.total);
    opt.step();
  }
  if (heldout.size() >= 2) res.heldout_final = heldout_ssl_loss(enc, heldout, heldout_seed);
  return res;
}

double LinearProbe::predict(std::span<const double> features) const {
  if (static_cast<Eigen::Index>(features.size()) != coefficients.size()) throw ShapeError("probe: feature length");
  double y = intercept;
  for (std::size_t j = 0; j < features.size(); ++j) y += coefficients[static_cast<Eigen::Index>(j)] * features[j];
  return y;
}

LinearProbe fit_linear_probe(const std::vector<std::vector<double>>& features, std::span<const double> targets,
                             double ridge) {
  if (features.empty() || features.size() != targets.size()) throw ShapeError("probe: features and targets differ");
  const auto n = static_cast<Eigen::Index>(features.size());
  const auto p = static_cast<Eigen::Index>(features.front().size());
  // centre so the intercept is not shrunk
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(features[static_cast<std::size_t>(i)].size()) != p) throw ShapeError("probe: ragged features");
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = features[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    y[i] = targets[static_cast<std::size_t>(i)];
  }
  const Eigen::RowVectorXd mx = x.colwise().mean();
  const double my = y.mean();
  x.rowwise() -= mx;
  y.array() -= my;
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += ridge * std::max(1.0, gram.diagonal().mean());
  LinearProbe probe;
  probe.coefficients = gram.ldlt().solve(x.transpose() * y);
  probe.intercept = my - mx.dot(probe.coefficients);
  return probe;
}

double r_squared(const LinearProbe& probe, const std::vector<std::vector<double>>& features,
                 std::span<const double> targets) {
  if (features.size() != targets.size() || targets.size() < 2) throw ShapeError("r_squared: bad sizes");
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ss_res += std::pow(targets[i] - probe.predict(features[i]), 2);
    ss_tot += std::pow(targets[i] - mean, 2);
  }
  if (ss_tot <= 0.0) throw UndefinedMetricError("r_squared: constant targets");
  return 1.0 - ss_res / ss_tot;
}

}  // namespace mmsurv::volume
