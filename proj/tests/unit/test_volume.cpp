#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "mmsurv/autodiff/grad_check.hpp"
#include "mmsurv/autodiff/ops.hpp"
#include "mmsurv/autodiff/optim.hpp"
#include "mmsurv/errors.hpp"
#include "mmsurv/volume/encoder.hpp"
#include "mmsurv/volume/phantom.hpp"

using namespace mmsurv;
using namespace mmsurv::volume;
using ad::Graph;
using ad::Tensor;

namespace {

Volume random_volume(Dims d, std::mt19937_64& rng, double lo = 0.1, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Volume v(d);
  for (auto& x : v.data()) x = static_cast<float>(u(rng));
  return v;
}

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.dims = {8, 8, 8};
  c.patch = 4;
  c.width = 8;
  c.heads = 2;
  c.blocks = 1;
  c.ff_hidden = 8;
  c.projection_width = 4;
  c.swaps = 2;
  c.batch_size = 2;
  c.seed = 5;
  return c;
}

double mean_nonzero(std::span<const float> c) {
  double s = 0;
  std::size_t n = 0;
  for (float v : c)
    if (v != 0.0f) s += v, ++n;
  return s / static_cast<double>(n);
}

double sd_nonzero(std::span<const float> c) {
  const double m = mean_nonzero(c);
  double s = 0;
  std::size_t n = 0;
  for (float v : c)
    if (v != 0.0f) s += (v - m) * (v - m), ++n;
  return std::sqrt(s / static_cast<double>(n));
}

}  // namespace

TEST_CASE("volume construction") {
  CHECK_THROWS_AS(Volume(Dims{4, 4, 4}, std::vector<float>(10)), ShapeError);
  Volume v({2, 3, 4});
  CHECK(v.size() == 4 * 24);
  v.at(3, 1, 2, 3) = 7.0f;
  CHECK(v.channel(3)[(1 * 3 + 2) * 4 + 3] == 7.0f);
}

TEST_CASE("histogram standardization") {
  std::mt19937_64 rng(1);
  const Dims d{8, 8, 8};
  std::vector<Volume> train;
  for (int i = 0; i < 3; ++i) train.push_back(random_volume(d, rng));
  const Landmarks ref = fit_landmarks(train);

  SUBCASE("landmarks are the interpolated deciles of nonzero voxels") {
    std::vector<float> vals{0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    auto lm = channel_landmarks(vals);
    REQUIRE(kLandmarks == 9);
    for (std::size_t k = 0; k < kLandmarks; ++k) CHECK(std::abs(lm[k] - (2.0 + k)) < 1e-12);
  }
  SUBCASE("a volume already at the reference only gets z-normalized") {
    // a volume whose landmarks equal the reference: use the reference itself
    // when it is the only training volume
    std::vector<Volume> one{train[0]};
    auto out = preprocess_volume(train[0], fit_landmarks(one));
    for (std::size_t c = 0; c < kChannels; ++c) {
      CHECK(std::abs(mean_nonzero(out.channel(c))) < 1e-6);
      CHECK(std::abs(sd_nonzero(out.channel(c)) - 1.0) < 1e-6);
      // z-normalization of the raw intensities, computed directly
      const double m = mean_nonzero(train[0].channel(c)), s = sd_nonzero(train[0].channel(c));
      for (std::size_t i = 0; i < out.channel(c).size(); i += 37)
        CHECK(std::abs(out.channel(c)[i] - (train[0].channel(c)[i] - m) / s) < 1e-4);
    }
  }
  SUBCASE("affine copies standardize to the same output") {
    Volume affine = train[1];
    for (auto& x : affine.data()) x = 2.5f * x + 0.75f;
    auto a = preprocess_volume(train[1], ref), b = preprocess_volume(affine, ref);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.data()[i] - b.data()[i]) < 1e-5);
  }
  SUBCASE("background stays zero") {
    Volume v = train[2];
    v.at(0, 0, 0, 0) = 0.0f;
    CHECK(preprocess_volume(v, ref).at(0, 0, 0, 0) == 0.0f);
  }
  SUBCASE("constant volume is degenerate") {
    CHECK_THROWS_AS(preprocess_volume(Volume(d, 1.0f), ref), DegenerateInputError);
    CHECK_THROWS_AS(preprocess_volume(Volume(d, 0.0f), ref), DegenerateInputError);
  }
}

TEST_CASE("patchify") {
  std::mt19937_64 rng(2);
  const Volume v = random_volume({16, 16, 16}, rng);
  const Tensor p = patchify(v, 4);
  CHECK(p.rows() == 64);
  CHECK(p.cols() == 256);
  CHECK(unpatchify(p, v.dims(), 4) == v);
  // token 1 is the block at x = 4..7; its first entry is channel 0, voxel (0,0,4)
  CHECK(p(1, 0) == v.at(0, 0, 0, 4));
  CHECK(p(16, 64) == v.at(1, 4, 0, 0));
  CHECK_THROWS_AS(patchify(Volume({6, 8, 8}), 4), ShapeError);
  CHECK(token_count({8, 12, 16}, 4) == 2 * 3 * 4);
}

TEST_CASE("zero volume with zero positions embeds to the bias") {
  auto cfg = tiny_config();
  VolumeEncoder enc(cfg);
  enc.parameters().at("encoder.positions").value.fill(0.0);
  Graph g;
  auto tokens = enc.embed(g, g.constant(patchify(Volume(cfg.dims), cfg.patch)), 1).value();
  const auto& bias = enc.parameters().at("encoder.patch_embed.bias").value;
  for (std::size_t t = 0; t < tokens.rows(); ++t)
    for (std::size_t j = 0; j < tokens.cols(); ++j) CHECK(tokens(t, j) == bias[j]);
}

TEST_CASE("cutout") {
  std::mt19937_64 rng(3);
  const Volume v = random_volume({16, 16, 16}, rng);
  for (int draw = 0; draw < 50; ++draw) {
    auto [out, box] = augment_cutout(v, rng);
    CHECK(box.extent == std::array<std::size_t, 3>{4, 4, 4});
    std::size_t zeroed = 0;
    for (std::size_t c = 0; c < kChannels; ++c)
      for (std::size_t z = 0; z < 16; ++z)
        for (std::size_t y = 0; y < 16; ++y)
          for (std::size_t x = 0; x < 16; ++x) {
            if (box.contains(z, y, x)) {
              CHECK(out.at(c, z, y, x) == 0.0f);
              ++zeroed;
            } else {
              CHECK(out.at(c, z, y, x) == v.at(c, z, y, x));
            }
          }
    CHECK(zeroed == box.voxels() * kChannels);
  }
  CHECK_THROWS_AS(augment_cutout(v, rng, 0.6), ConfigError);
  CHECK_THROWS_AS(augment_cutout(v, rng, 0.0), ConfigError);
}

TEST_CASE("patch swap") {
  std::mt19937_64 rng(4);
  const Volume v = random_volume({16, 16, 16}, rng);
  auto res = augment_patch_swap(v, rng, 8, 4);
  CHECK(res.pairs.size() == 8);
  std::vector<std::size_t> used;
  for (auto [a, b] : res.pairs) used.insert(used.end(), {a, b});
  std::sort(used.begin(), used.end());
  CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());

  std::vector<float> before(v.data().begin(), v.data().end()), after(res.volume.data().begin(), res.volume.data().end());
  std::sort(before.begin(), before.end());
  std::sort(after.begin(), after.end());
  CHECK(before == after);
  CHECK_FALSE(res.volume == v);

  Volume twice = v;
  swap_blocks(twice, 4, 3, 40);
  swap_blocks(twice, 4, 3, 40);
  CHECK(twice == v);

  const Volume flat({16, 16, 16}, 0.5f);
  CHECK(augment_patch_swap(flat, rng, 8, 4).volume == flat);
  CHECK_THROWS_AS(augment_patch_swap(v, rng, 0, 4), ConfigError);
  CHECK_THROWS_AS(augment_patch_swap(v, rng, 33, 4), ConfigError);
}

TEST_CASE("contrastive loss examples") {
  SUBCASE("identical embeddings give log 3") {
    Tensor e({4, 3}, 0.0);
    for (std::size_t i = 0; i < 4; ++i) e(i, 0) = 1.0, e(i, 1) = 2.0;
    CHECK(std::abs(contrastive_loss(e, 0.1) - std::log(3.0)) < 1e-12);
  }
  SUBCASE("orthogonal subjects with identical siblings") {
    Tensor e({4, 2}, 0.0);
    e(0, 0) = e(2, 0) = 1.0;
    e(1, 1) = e(3, 1) = 3.0;
    // each anchor: positive similarity 1/0.1, the two negatives 0
    const double anchor = -std::log(std::exp(10.0) / (std::exp(10.0) + 2.0));
    CHECK(std::abs(contrastive_loss(e, 0.1) - anchor) < 1e-12);
  }
  SUBCASE("rotation invariance") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> z;
    Tensor e({6, 3});
    for (auto& x : e.data()) x = z(rng);
    const double th = 0.7;
    Tensor r = Tensor::matrix(3, 3, {std::cos(th), -std::sin(th), 0, std::sin(th), std::cos(th), 0, 0, 0, 1});
    Tensor rotated({6, 3}, 0.0);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t k = 0; k < 3; ++k) rotated(i, j) += e(i, k) * r(k, j);
    CHECK(std::abs(contrastive_loss(e, 0.2) - contrastive_loss(rotated, 0.2)) < 1e-9);
  }
  CHECK_THROWS_AS(contrastive_loss(Tensor({4, 2}, 1.0), 0.0), ConfigError);
  CHECK_THROWS_AS(contrastive_loss(Tensor({2, 2}, 1.0), 0.1), ShapeError);
}

TEST_CASE("reconstruction loss examples") {
  std::mt19937_64 rng(7);
  const Volume a = random_volume({8, 8, 8}, rng), b = random_volume({8, 8, 8}, rng);
  CHECK(reconstruction_loss(a, a) == 0.0);
  Volume shifted = a;
  for (auto& x : shifted.data()) x += 1.0f;
  CHECK(std::abs(reconstruction_loss(shifted, a) - 1.0) < 1e-6);
  double direct = 0;
  for (std::size_t i = 0; i < a.size(); ++i) direct += std::abs(double(a.data()[i]) - double(b.data()[i]));
  CHECK(std::abs(reconstruction_loss(a, b) - direct / a.size()) < 1e-12);
  Graph g;
  CHECK(std::abs(reconstruction_loss(g.constant(patchify(a, 4)), g.constant(patchify(b, 4))).value().item() -
                 direct / a.size()) < 1e-12);
  CHECK_THROWS_AS(reconstruction_loss(a, Volume({8, 8, 4})), ShapeError);
}

TEST_CASE("SSL combined loss gradient check") {
  std::mt19937_64 rng(8);
  auto cfg = tiny_config();
  VolumeEncoder enc(cfg);
  std::vector<Volume> vols;
  for (int i = 0; i < 2; ++i) vols.push_back(random_volume(cfg.dims, rng));
  std::vector<std::size_t> subjects{0, 1};
  for (auto mode : {LossCombination::additive, LossCombination::multiplicative}) {
    cfg.combination = mode;
    VolumeEncoder e(cfg);
    const SslBatch batch = make_ssl_batch(vols, subjects, cfg, rng);
    auto build = [&](Graph& g) { return ssl_loss(g, e, batch).total; };
    auto ps = e.parameters().all();
    // mean |.| has kinks; a small step keeps the difference on one side
    CHECK(ad::grad_check(build, ps, {.step = 1e-6, .max_coordinates = 300, .seed = 1}) < 1e-4);
  }
}

TEST_CASE("encode") {
  std::mt19937_64 rng(9);
  EncoderConfig cfg;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.ff_hidden = 16;
  VolumeEncoder enc(cfg);
  const Volume a = render_phantom(cfg.dims, random_phantom(cfg.dims, 2.0, 0.5, rng), rng);
  const Volume b = render_phantom(cfg.dims, random_phantom(cfg.dims, 4.5, 1.5, rng), rng);
  const Tensor ta = enc.encode(a);
  CHECK(ta.rows() == 64);
  CHECK(ta.cols() == 16);
  CHECK(ta == enc.encode(a));
  CHECK_FALSE(ta == enc.encode(b));
  CHECK(enc.pooled(a).size() == 16);
}

TEST_CASE("pretraining lowers the held-out loss") {
  std::mt19937_64 rng(10);
  EncoderConfig cfg;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.ff_hidden = 32;
  cfg.projection_width = 8;
  cfg.steps = 200;
  cfg.batch_size = 4;
  cfg.learning_rate = 3e-3;
  cfg.seed = 11;
  std::vector<Volume> train, held;
  for (int i = 0; i < 8; ++i) train.push_back(render_phantom(cfg.dims, random_phantom(cfg.dims, 1.5 + 0.4 * i, 1.0, rng), rng));
  for (int i = 0; i < 4; ++i) held.push_back(render_phantom(cfg.dims, random_phantom(cfg.dims, 2.0 + 0.6 * i, 1.0, rng), rng));
  VolumeEncoder enc(cfg);
  auto res = ssl_pretrain(enc, train, held);
  CHECK(res.curve.size() == 200);
  MESSAGE("held-out loss " << res.heldout_initial << " -> " << res.heldout_final);
  CHECK(res.heldout_final < res.heldout_initial);
  CHECK(std::all_of(res.curve.begin(), res.curve.end(), [](double v) { return v >= 0.0; }));
}

TEST_CASE("zero contrastive weight equals reconstruction-only training") {
  std::mt19937_64 rng(12);
  auto cfg = tiny_config();
  cfg.steps = 5;
  std::vector<Volume> vols;
  for (int i = 0; i < 3; ++i) vols.push_back(random_volume(cfg.dims, rng));
  cfg.contrastive_weight = 0.0;
  VolumeEncoder a(cfg);
  ssl_pretrain(a, vols);
  cfg.contrastive_weight = 1.0;
  cfg.combination = LossCombination::reconstruction_only;
  VolumeEncoder b(cfg);
  ssl_pretrain(b, vols);
  CHECK(a.parameters().snapshot() == b.parameters().snapshot());
}

TEST_CASE("pretraining rejects single-subject batches and frozen encoders") {
  std::mt19937_64 rng(13);
  auto cfg = tiny_config();
  std::vector<Volume> one{random_volume(cfg.dims, rng)};
  VolumeEncoder enc(cfg);
  CHECK_THROWS_AS(ssl_pretrain(enc, one), ConfigError);
  cfg.batch_size = 1;
  CHECK_THROWS_AS(VolumeEncoder{cfg}, ConfigError);
  std::vector<Volume> two{random_volume(tiny_config().dims, rng), random_volume(tiny_config().dims, rng)};
  enc.set_frozen(true);
  CHECK_THROWS_AS(ssl_pretrain(enc, two), ContractError);
}

TEST_CASE("frozen encoder receives no gradient") {
  std::mt19937_64 rng(14);
  auto cfg = tiny_config();
  VolumeEncoder enc(cfg);
  enc.set_frozen(true);
  const auto before = enc.parameters().snapshot();
  ad::ParameterStore head;
  nn::Rng init(1);
  auto lin = nn::Linear::create(head, "head", cfg.width, 1, init);
  std::vector<ad::Parameter*> all = head.all();
  for (auto* p : enc.parameters().all()) all.push_back(p);
  ad::Adam both(all, {.learning_rate = 0.05});
  const Volume v = random_volume(cfg.dims, rng);
  for (int step = 0; step < 10; ++step) {
    Graph g;
    auto tokens = enc.encode_tokens(g, g.constant(patchify(v, cfg.patch)), 1);
    auto loss = ad::sum(ad::square(lin(g, ad::segment_mean(tokens, 1))));
    g.backward(loss);
    both.step();
  }
  CHECK(enc.parameters().snapshot() == before);
}

TEST_CASE("linear probe") {
  std::vector<std::vector<double>> x{{1, 0}, {0, 1}, {1, 1}, {2, 1}, {0, 3}};
  std::vector<double> y;
  for (auto& r : x) y.push_back(2 * r[0] - r[1] + 0.5);
  auto probe = fit_linear_probe(x, y, 0.0);
  CHECK(std::abs(probe.intercept - 0.5) < 1e-10);
  CHECK(r_squared(probe, x, y) == doctest::Approx(1.0));
}

TEST_CASE("pretrained embeddings carry lesion size") {
  std::mt19937_64 rng(15);
  EncoderConfig cfg;
  cfg.width = 32;
  cfg.heads = 4;
  cfg.ff_hidden = 64;
  cfg.steps = 150;
  cfg.learning_rate = 2e-3;
  cfg.seed = 3;
  std::uniform_real_distribution<double> radius(1.5, 5.0), rim(0.5, 1.5);
  auto draw = [&](std::size_t n, std::vector<Volume>& vols, std::vector<double>& r) {
    for (std::size_t i = 0; i < n; ++i) {
      r.push_back(radius(rng));
      vols.push_back(render_phantom(cfg.dims, random_phantom(cfg.dims, r.back(), rim(rng), rng), rng));
    }
  };
  std::vector<Volume> train, test;
  std::vector<double> rtrain, rtest;
  draw(120, train, rtrain);
  draw(60, test, rtest);
  VolumeEncoder enc(cfg);
  ssl_pretrain(enc, train);
  std::vector<std::vector<double>> ftrain, ftest;
  for (const auto& v : train) ftrain.push_back(enc.pooled(v));
  for (const auto& v : test) ftest.push_back(enc.pooled(v));
  const double r2 = r_squared(fit_linear_probe(ftrain, rtrain), ftest, rtest);
  MESSAGE("linear probe R2 " << r2);
  CHECK(r2 > 0.5);
}
