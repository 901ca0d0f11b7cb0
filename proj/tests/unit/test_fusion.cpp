#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mmsurv/autodiff/grad_check.hpp"
#include "mmsurv/autodiff/ops.hpp"
#include "mmsurv/errors.hpp"
#include "mmsurv/fusion/model.hpp"

using namespace mmsurv;
using namespace mmsurv::fusion;
using ad::Graph;
using ad::Tensor;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

// Per-head softmax(Q K^T / sqrt(dk)) V, concatenated, then the output
// projection. Single patient.
Mat mha_oracle(const Mat& qs, const Mat& kvs, const Mat& wq, const Mat& wk, const Mat& wv, const Mat& wo,
               std::size_t heads) {
  const Mat q = mm(qs, wq), k = mm(kvs, wk), v = mm(kvs, wv);
  const std::size_t d = wq.size(), dk = d / heads;
  Mat out(q.size(), std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      std::vector<long double> s(k.size());
      long double mx = -1e300L, z = 0;
      for (std::size_t j = 0; j < k.size(); ++j) {
        long double dot = 0;
        for (std::size_t c = h * dk; c < (h + 1) * dk; ++c) dot += q[i][c] * k[j][c];
        s[j] = dot / std::sqrt(static_cast<long double>(dk));
        mx = std::max(mx, s[j]);
      }
      for (auto& x : s) z += (x = std::exp(x - mx));
      for (std::size_t j = 0; j < k.size(); ++j)
        for (std::size_t c = h * dk; c < (h + 1) * dk; ++c) out[i][c] += static_cast<double>(s[j] / z) * v[j][c];
    }
  }
  return mm(out, wo);
}

Mat layer_norm_oracle(const Mat& x) {
  Mat y = x;
  for (auto& row : y) {
    long double mu = 0, var = 0;
    for (double v : row) mu += v;
    mu /= row.size();
    for (double v : row) var += (v - mu) * (v - mu);
    var /= row.size();
    for (double& v : row) v = static_cast<double>((v - mu) / std::sqrt(var + 1e-5L));
  }
  return y;
}

Mat add(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

Tensor random_tensor(ad::Shape s, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> z(0.0, sd);
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = z(rng);
  return t;
}

void check_close(const Tensor& got, const Mat& want, double tol) {
  REQUIRE(got.rows() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i)
    for (std::size_t j = 0; j < want[i].size(); ++j) CHECK(std::abs(got(i, j) - want[i][j]) < tol);
}

ModelConfig small_config(std::size_t width = 8, std::size_t heads = 2) {
  ModelConfig c;
  c.width = width;
  c.heads = heads;
  c.clinical_features = 5;
  c.imaging_width = 6;
  c.seed = 3;
  return c;
}

void set_identity(ad::ParameterStore& s, const std::string& prefix, std::size_t d) {
  for (auto w : {".wq", ".wk", ".wv", ".wo"}) s.at(prefix + w).value = Tensor::identity(d);
}

}  // namespace

TEST_CASE("config validation") {
  auto c = small_config();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.clinical_tokens = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(modality_from_string("both"), ConfigError);
  CHECK(modality_from_string(to_string(Modality::imaging)) == Modality::imaging);
}

TEST_CASE("clinical_encode") {
  ModelConfig c;
  c.clinical_features = 7;
  FusionModel m(c, Modality::multimodal);
  std::mt19937_64 rng(1);
  Graph g;
  auto tokens = m.clinical_encode(g, g.constant(random_tensor({1, 7}, rng)));
  CHECK(tokens.rows() == 4);
  CHECK(tokens.cols() == 64);

  // zero input and zero weights leave only the second layer's bias
  for (auto* p : m.parameters().with_prefix("fusion.clinical")) {
    if (p->name.ends_with("weight")) p->value.fill(0.0);
  }
  Graph g2;
  auto z = m.clinical_encode(g2, g2.constant(Tensor({1, 7}, 0.0))).value();
  const auto& bias = m.parameters().at("fusion.clinical.fc2.bias").value;
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t j = 0; j < 64; ++j) CHECK(z(t, j) == bias[t * 64 + j]);

  Graph g3;
  CHECK_THROWS_AS(m.clinical_encode(g3, g3.constant(Tensor({1, 6}, 0.0))), ShapeError);
}

TEST_CASE("clinical_encode is deterministic") {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({3, 5}, rng);
  FusionModel a(small_config(), Modality::multimodal), b(small_config(), Modality::multimodal);
  Graph ga, gb;
  CHECK(a.clinical_encode(ga, ga.constant(x)).value() == b.clinical_encode(gb, gb.constant(x)).value());
}

TEST_CASE("cross_attention examples") {
  const std::size_t d = 6;
  std::mt19937_64 rng(4);
  ad::ParameterStore s;
  nn::Rng init(9);
  auto w = nn::MultiHeadAttention::create(s, "x", d, 1, init);
  set_identity(s, "x", d);

  SUBCASE("single key returns the value") {
    Graph g;
    const Tensor alpha = random_tensor({3, d}, rng), beta = random_tensor({1, d}, rng);
    auto out = cross_attention(g, g.constant(alpha), g.constant(beta), w, 1).value();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(out(i, j) - beta(0, j)) < 1e-14);
  }
  SUBCASE("identical keys give identical rows") {
    nn::Rng r2(10);
    auto w2 = nn::MultiHeadAttention::create(s, "y", d, 2, r2);
    Graph g;
    const Tensor alpha = random_tensor({4, d}, rng), u = random_tensor({1, d}, rng);
    auto beta = ad::tile_rows(g.constant(u), 5);
    auto out = cross_attention(g, g.constant(alpha), beta, w2, 1).value();
    for (std::size_t i = 1; i < 4; ++i)
      for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(out(i, j) - out(0, j)) < 1e-12);
  }
  SUBCASE("2 x d against 3 x d matches the direct equation") {
    Graph g;
    const Tensor alpha = random_tensor({2, d}, rng), beta = random_tensor({3, d}, rng);
    auto out = cross_attention(g, g.constant(alpha), g.constant(beta), w, 1).value();
    const Mat id = to_mat(Tensor::identity(d));
    check_close(out, mha_oracle(to_mat(alpha), to_mat(beta), id, id, id, id, 1), 1e-12);
  }
  SUBCASE("width mismatch") {
    Graph g;
    CHECK_THROWS_AS(cross_attention(g, g.constant(Tensor({2, d}, 1.0)), g.constant(Tensor({2, d + 1}, 1.0)), w, 1),
                    ShapeError);
  }
}

TEST_CASE("multi-head random projections match the oracle") {
  std::mt19937_64 rng(5);
  ad::ParameterStore s;
  nn::Rng init(5);
  auto w = nn::MultiHeadAttention::create(s, "m", 8, 4, init);
  const Tensor a = random_tensor({3, 8}, rng), b = random_tensor({5, 8}, rng);
  Graph g;
  auto out = cross_attention(g, g.constant(a), g.constant(b), w, 1).value();
  check_close(out,
              mha_oracle(to_mat(a), to_mat(b), to_mat(w.wq->value), to_mat(w.wk->value), to_mat(w.wv->value),
                         to_mat(w.wo->value), 4),
              1e-12);
}

TEST_CASE("bidirectional_fuse") {
  FusionModel m(small_config(), Modality::multimodal);
  std::mt19937_64 rng(6);
  const Tensor c = random_tensor({2 * 4, 8}, rng), i = random_tensor({2 * 7, 8}, rng);
  {
    Graph g;
    auto [cf, imf] = m.bidirectional_fuse(g, g.constant(c), g.constant(i), 2);
    CHECK(cf.rows() == 8);
    CHECK(imf.rows() == 14);
  }
  // all-zero image tokens and zero value projection: the residual passes through
  m.parameters().at("fusion.cross0.clinical.attn.wv").value.fill(0.0);
  Graph g;
  auto [cf, imf] = m.bidirectional_fuse(g, g.constant(c), g.constant(Tensor({14, 8}, 0.0)), 2);
  check_close(cf.value(), layer_norm_oracle(to_mat(c)), 1e-12);
}

TEST_CASE("bidirectional_fuse passes gradient to both modalities") {
  FusionModel m(small_config(), Modality::multimodal);
  std::mt19937_64 rng(7);
  ad::ParameterStore inputs;
  auto& c = inputs.add("c", random_tensor({4, 8}, rng));
  auto& i = inputs.add("i", random_tensor({3, 8}, rng));
  const Tensor readout = random_tensor({7, 8}, rng);
  auto build = [&](Graph& g) {
    auto [cf, imf] = m.bidirectional_fuse(g, g.parameter(c), g.parameter(i), 1);
    return ad::sum(ad::mul(ad::concat_rows(cf, imf), g.constant(readout)));
  };
  std::vector<ad::Parameter*> ps{&c, &i};
  CHECK(ad::grad_check(build, ps, {.step = 1e-5}) < 1e-4);
  CHECK(c.grad.vec() != std::vector<double>(32, 0.0));
  CHECK(i.grad.vec() != std::vector<double>(24, 0.0));
}

TEST_CASE("final_attention") {
  FusionModel m(small_config(), Modality::multimodal);
  std::mt19937_64 rng(8);
  const Tensor c = random_tensor({4, 8}, rng), i = random_tensor({6, 8}, rng);
  Graph g;
  auto out = m.final_attention(g, g.constant(c), g.constant(i), 1);
  CHECK(out.rows() == 4);
  CHECK(out.cols() == 8);
  CHECK(ad::concat_seq(g.constant(c), g.constant(i), 1).rows() == 10);

  // duplicated keys: the same weights renormalized, so self-attention over c
  const auto& a = m.parameters();
  const Mat wq = to_mat(a.at("fusion.final.attn.wq").value), wk = to_mat(a.at("fusion.final.attn.wk").value),
            wv = to_mat(a.at("fusion.final.attn.wv").value), wo = to_mat(a.at("fusion.final.attn.wo").value);
  Mat doubled = to_mat(c);
  for (const auto& row : to_mat(c)) doubled.push_back(row);
  Graph g2;
  auto same = m.final_attention(g2, g2.constant(c), g2.constant(c), 1).value();
  check_close(same, layer_norm_oracle(add(to_mat(c), mha_oracle(to_mat(c), doubled, wq, wk, wv, wo, 2))), 1e-12);
  check_close(same, layer_norm_oracle(add(to_mat(c), mha_oracle(to_mat(c), to_mat(c), wq, wk, wv, wo, 2))), 1e-12);
}

TEST_CASE("symmetric final attention keeps every token") {
  auto cfg = small_config();
  cfg.symmetric_final = true;
  FusionModel m(cfg, Modality::multimodal);
  Graph g;
  auto out = m.final_attention(g, g.constant(Tensor({8, 8}, 0.5)), g.constant(Tensor({6, 8}, 0.1)), 2);
  CHECK(out.rows() == 14);
}

TEST_CASE("attention_pool") {
  FusionModel m(small_config(), Modality::clinical);
  std::mt19937_64 rng(9);
  const Tensor one = random_tensor({1, 8}, rng);
  Graph g;
  CHECK(m.attention_pool(g, g.constant(one), 1).value() == one);

  auto same = ad::tile_rows(g.constant(one), 5);
  auto pooled = m.attention_pool(g, same, 1).value();
  for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(pooled(0, j) - one(0, j)) < 1e-14);

  const Tensor three = random_tensor({3, 8}, rng);
  const auto& q = m.parameters().at("fusion.pool.query").value;
  std::vector<double> w(3);
  double z = 0;
  for (std::size_t t = 0; t < 3; ++t) {
    double dot = 0;
    for (std::size_t j = 0; j < 8; ++j) dot += three(t, j) * q[j];
    z += (w[t] = std::exp(dot / std::sqrt(8.0)));
  }
  auto got = m.attention_pool(g, g.constant(three), 1).value();
  for (std::size_t j = 0; j < 8; ++j) {
    double want = 0;
    for (std::size_t t = 0; t < 3; ++t) want += w[t] / z * three(t, j);
    CHECK(std::abs(got(0, j) - want) < 1e-13);
  }
}

TEST_CASE("predict_logits") {
  FusionModel m(small_config(), Modality::clinical);
  std::mt19937_64 rng(10);
  Graph g;
  CHECK(m.predict_logits(g, g.constant(random_tensor({2, 8}, rng))).cols() == 5);
  m.parameters().at("fusion.head.fc1.weight").value.fill(0.0);
  m.parameters().at("fusion.head.fc2.weight").value.fill(0.0);
  auto out = m.predict_logits(g, g.constant(random_tensor({1, 8}, rng))).value();
  CHECK(out == m.parameters().at("fusion.head.fc2.bias").value);
}

TEST_CASE("clinical path gradient check") {
  for (auto mod : {Modality::clinical, Modality::multimodal}) {
    FusionModel m(small_config(), mod);
    std::mt19937_64 rng(11);
    const Tensor x = random_tensor({2, 5}, rng), img = random_tensor({2 * 3, 6}, rng);
    auto build = [&](Graph& g) {
      Inputs in{g.constant(x), std::nullopt, 2};
      if (mod == Modality::multimodal) in.imaging = g.constant(img);
      return ad::sum(ad::square(m.forward(g, in).logits));
    };
    auto ps = m.parameters().all();
    CHECK(ad::grad_check(build, ps, {.step = 1e-5}) < 1e-4);
  }
}

TEST_CASE("clinical-only with a single token") {
  auto cfg = small_config();
  cfg.clinical_tokens = 1;
  FusionModel m(cfg, Modality::clinical);
  std::mt19937_64 rng(12);
  const Tensor x = random_tensor({1, 5}, rng);
  Graph g;
  Inputs in{g.constant(x), std::nullopt, 1};
  auto fwd = m.forward(g, in);
  CHECK(fwd.pooled.cols() == 8);
  CHECK(fwd.logits.cols() == 5);
  // one key: attention output is c Wv Wo, pooling over one token is identity
  auto c = m.clinical_encode(g, g.constant(x)).value();
  const auto& p = m.parameters();
  auto want = layer_norm_oracle(
      add(to_mat(c), mm(mm(to_mat(c), to_mat(p.at("fusion.self.attn.wv").value)), to_mat(p.at("fusion.self.attn.wo").value))));
  check_close(fwd.pooled.value(), want, 1e-12);
}

TEST_CASE("imaging-only forward") {
  FusionModel m(small_config(), Modality::imaging);
  std::mt19937_64 rng(13);
  Graph g;
  Inputs in{std::nullopt, g.constant(random_tensor({3 * 4, 6}, rng)), 3};
  CHECK(m.forward(g, in).logits.rows() == 3);
  Inputs missing{std::nullopt, std::nullopt, 1};
  CHECK_THROWS_AS(m.forward(g, missing), ContractError);
}

TEST_CASE("attention outputs stay inside the value envelope") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    Graph g;
    auto q = g.constant(random_tensor({2 * 3, 8}, rng, 3.0));
    auto k = g.constant(random_tensor({2 * 5, 8}, rng, 3.0));
    const Tensor vt = random_tensor({2 * 5, 8}, rng);
    auto out = ad::attention(q, k, g.constant(vt), 2, 2).value();
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 8; ++j) {
          double lo = 1e300, hi = -1e300;
          for (std::size_t r = 0; r < 5; ++r) {
            lo = std::min(lo, vt(b * 5 + r, j));
            hi = std::max(hi, vt(b * 5 + r, j));
          }
          CHECK(out(b * 3 + i, j) >= lo - 1e-12);
          CHECK(out(b * 3 + i, j) <= hi + 1e-12);
        }
  }
}

TEST_CASE("token counts 1..8 on each side") {
  std::mt19937_64 rng(15);
  for (std::size_t nc = 1; nc <= 8; ++nc) {
    auto cfg = small_config();
    cfg.clinical_tokens = nc;
    FusionModel m(cfg, Modality::multimodal);
    for (std::size_t ni = 1; ni <= 8; ++ni) {
      Graph g;
      auto c = m.clinical_encode(g, g.constant(random_tensor({2, 5}, rng)));
      auto i = m.project_imaging(g, g.constant(random_tensor({2 * ni, 6}, rng)));
      CHECK(c.rows() == 2 * nc);
      auto [cf, imf] = m.bidirectional_fuse(g, c, i, 2);
      CHECK(cf.rows() == 2 * nc);
      CHECK(imf.rows() == 2 * ni);
      auto fin = m.final_attention(g, cf, imf, 2);
      CHECK(fin.rows() == 2 * nc);
      CHECK(m.attention_pool(g, fin, 2).rows() == 2);
    }
  }
}

TEST_CASE("imaging token order does not matter") {
  FusionModel m(small_config(), Modality::multimodal);
  std::mt19937_64 rng(16);
  const Tensor x = random_tensor({1, 5}, rng), img = random_tensor({6, 6}, rng);
  Tensor perm({6, 6});
  const std::vector<std::size_t> order{3, 0, 5, 1, 4, 2};
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t j = 0; j < 6; ++j) perm(r, j) = img(order[r], j);
  Graph g;
  auto c = m.clinical_encode(g, g.constant(x));
  auto [c1, i1] = m.bidirectional_fuse(g, c, m.project_imaging(g, g.constant(img)), 1);
  auto [c2, i2] = m.bidirectional_fuse(g, c, m.project_imaging(g, g.constant(perm)), 1);
  for (std::size_t k = 0; k < c1.value().size(); ++k) CHECK(std::abs(c1.value()[k] - c2.value()[k]) < 1e-12);
  auto l1 = m.forward(g, {g.constant(x), g.constant(img), 1}).logits.value();
  auto l2 = m.forward(g, {g.constant(x), g.constant(perm), 1}).logits.value();
  for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(l1[k] - l2[k]) < 1e-12);
}

TEST_CASE("multimodal forward is bit-identical across runs") {
  std::mt19937_64 rng(17);
  const Tensor x = random_tensor({4, 5}, rng), img = random_tensor({4 * 8, 6}, rng);
  FusionModel a(small_config(), Modality::multimodal), b(small_config(), Modality::multimodal);
  Graph ga, gb;
  auto la = a.forward(ga, {ga.constant(x), ga.constant(img), 4}).logits.value();
  auto lb = b.forward(gb, {gb.constant(x), gb.constant(img), 4}).logits.value();
  CHECK(la == lb);
}

TEST_CASE("batched forward equals per-patient forward") {
  FusionModel m(small_config(), Modality::multimodal);
  std::mt19937_64 rng(18);
  const Tensor x = random_tensor({3, 5}, rng), img = random_tensor({3 * 4, 6}, rng);
  Graph g;
  auto all = m.forward(g, {g.constant(x), g.constant(img), 3}).logits.value();
  for (std::size_t p = 0; p < 3; ++p) {
    Tensor xp({1, 5}), ip({4, 6});
    for (std::size_t j = 0; j < 5; ++j) xp(0, j) = x(p, j);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t j = 0; j < 6; ++j) ip(r, j) = img(p * 4 + r, j);
    auto one = m.forward(g, {g.constant(xp), g.constant(ip), 1}).logits.value();
    for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(one[k] - all(p, k)) < 1e-12);
  }
}

TEST_CASE("dropout only acts with an rng") {
  auto cfg = small_config();
  cfg.dropout = 0.5;
  FusionModel m(cfg, Modality::clinical);
  std::mt19937_64 rng(19);
  const Tensor x = random_tensor({2, 5}, rng);
  Graph g;
  auto a = m.forward(g, {g.constant(x), std::nullopt, 2}).logits.value();
  auto b = m.forward(g, {g.constant(x), std::nullopt, 2}).logits.value();
  CHECK(a == b);
  nn::Rng drop(1);
  auto c = m.forward(g, {g.constant(x), std::nullopt, 2}, &drop).logits.value();
  CHECK_FALSE(a == c);
}
