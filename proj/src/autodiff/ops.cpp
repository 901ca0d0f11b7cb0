#include "mmsurv/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "kernels.hpp"
#include "mmsurv/errors.hpp"

namespace mmsurv::ad {

namespace {

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_to_string(t.shape()));
  }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

// Elementwise unary op from value function and derivative-in-terms-of-(x, y).
template <class F, class D>
Var unary(const char* name, Var a, F f, D dfdx) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.graph().record(name, std::move(y), {a},
                          [a, dfdx](const Tensor& out, const Tensor& g, std::vector<Tensor*>& gi) {
                            const Tensor& xv = a.value();
                            Tensor& gx = *gi[0];
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              gx[i] += g[i] * dfdx(xv[i], out[i]);
                            }
                          });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("matmul", av);
  require_matrix("matmul", bv);
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_to_string(av.shape()) + " * " +
                     shape_to_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor c({m, n});
  kernels::gemm_nn(av.data().data(), bv.data().data(), c.data().data(), m, k, n);
  return a.graph().record(
      "matmul", std::move(c), {a, b},
      [a, b, m, k, n](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
        if (gi[0]) kernels::gemm_nt(g.data().data(), b.value().data().data(), gi[0]->data().data(), m, n, k);
        if (gi[1]) kernels::gemm_tn(a.value().data().data(), g.data().data(), gi[1]->data().data(), k, m, n);
      });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  require_matrix("transpose", x);
  const std::size_t r = x.rows(), c = x.cols();
  Tensor y({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y(j, i) = x(i, j);
  return a.graph().record("transpose", std::move(y), {a},
                          [r, c](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
                            Tensor& gx = *gi[0];
                            for (std::size_t i = 0; i < r; ++i)
                              for (std::size_t j = 0; j < c; ++j) gx(i, j) += g(j, i);
                          });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return a.graph().record("add", std::move(y), {a, b},
                          [](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
                            for (auto* t : gi) {
                              if (!t) continue;
                              for (std::size_t i = 0; i < g.size(); ++i) (*t)[i] += g[i];
                            }
                          });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return a.graph().record("sub", std::move(y), {a, b},
                          [](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
                            if (gi[0])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                            if (gi[1])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] -= g[i];
                          });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return a.graph().record("mul", std::move(y), {a, b},
                          [a, b](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
                            const Tensor& av = a.value();
                            const Tensor& bv = b.value();
                            if (gi[0])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * bv[i];
                            if (gi[1])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] += g[i] * av[i];
                          });
}

Var add_row(Var a, Var row) {
  const Tensor& x = a.value();
  const Tensor& r = row.value();
  require_matrix("add_row", x);
  if (r.size() != x.cols()) {
    throw ShapeError("add_row: row " + shape_to_string(r.shape()) + " does not broadcast over " +
                     shape_to_string(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y = x;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y(i, j) += r[j];
  return a.graph().record("add_row", std::move(y), {a, row},
                          [m, n](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
                            if (gi[0])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                            if (gi[1])
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) (*gi[1])[j] += g(i, j);
                          });
}

Var scale(Var a, double c) {
  Tensor y = a.value();
  for (auto& v : y.data()) v *= c;
  return a.graph().record("scale", std::move(y), {a},
                          [c](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
                            for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += c * g[i];
                          });
}

Var add_scalar(Var a, double c) {
  Tensor y = a.value();
  for (auto& v : y.data()) v += c;
  return a.graph().record("add_scalar", std::move(y), {a},
                          [](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
                            for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                          });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Var log(Var a, double floor) {
  return unary(
      "log", a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Var abs(Var a) {
  return unary("abs", a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Var gelu(Var a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [inv_sqrt_2pi](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Var softmax(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     shape_to_string(x.shape()));
  }
  if (!x.all_finite()) throw NumericError("softmax: non-finite input");
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];

  Tensor y(s);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = x[base];
      for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, x[base + l * inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const double e = std::exp(x[base + l * inner] - mx);
        y[base + l * inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < len; ++l) y[base + l * inner] /= z;
    }
  }
  return a.graph().record(
      "softmax", std::move(y), {a},
      [outer, inner, len](const Tensor& out, const Tensor& g, std::vector<Tensor*>& gi) {
        Tensor& gx = *gi[0];
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double dot = 0.0;
            for (std::size_t l = 0; l < len; ++l) dot += g[base + l * inner] * out[base + l * inner];
            for (std::size_t l = 0; l < len; ++l) {
              const std::size_t idx = base + l * inner;
              gx[idx] += out[idx] * (g[idx] - dot);
            }
          }
        }
      });
}

Var log_softmax_rows(Var a) {
  const Tensor& x = a.value();
  require_matrix("log_softmax_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = x(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x(i, j) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) y(i, j) = x(i, j) - lse;
  }
  return a.graph().record("log_softmax_rows", std::move(y), {a},
                          [m, n](const Tensor& out, const Tensor& g, std::vector<Tensor*>& gi) {
                            Tensor& gx = *gi[0];
                            for (std::size_t i = 0; i < m; ++i) {
                              double gs = 0.0;
                              for (std::size_t j = 0; j < n; ++j) gs += g(i, j);
                              for (std::size_t j = 0; j < n; ++j)
                                gx(i, j) += g(i, j) - std::exp(out(i, j)) * gs;
                            }
                          });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = x.value();
  require_matrix("layer_norm", xv);
  const std::size_t m = xv.rows(), n = xv.cols();
  if (n < 2) throw ShapeError("layer_norm: last axis must have length >= 2");
  if (gain.value().size() != n || bias.value().size() != n) {
    throw ShapeError("layer_norm: gain/bias length must equal " + std::to_string(n));
  }
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  auto stats = std::make_shared<std::vector<double>>(2 * m);  // mean, rstd per row
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xv(i, j) - mu) * (xv(i, j) - mu);
    var /= static_cast<double>(n);
    const double rstd = 1.0 / std::sqrt(var + eps);
    (*stats)[2 * i] = mu;
    (*stats)[2 * i + 1] = rstd;
    for (std::size_t j = 0; j < n; ++j) y(i, j) = (xv(i, j) - mu) * rstd * gv[j] + bv[j];
  }
  return x.graph().record(
      "layer_norm", std::move(y), {x, gain, bias},
      [x, gain, stats, m, n](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
        const Tensor& xv = x.value();
        const Tensor& gv = gain.value();
        std::vector<double> xhat(n), gxhat(n);
        for (std::size_t i = 0; i < m; ++i) {
          const double mu = (*stats)[2 * i], rstd = (*stats)[2 * i + 1];
          double mean_g = 0.0, mean_gx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            xhat[j] = (xv(i, j) - mu) * rstd;
            gxhat[j] = g(i, j) * gv[j];
            mean_g += gxhat[j];
            mean_gx += gxhat[j] * xhat[j];
            if (gi[1]) (*gi[1])[j] += g(i, j) * xhat[j];
            if (gi[2]) (*gi[2])[j] += g(i, j);
          }
          if (!gi[0]) continue;
          mean_g /= static_cast<double>(n);
          mean_gx /= static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j) {
            (*gi[0])(i, j) += rstd * (gxhat[j] - mean_g - xhat[j] * mean_gx);
          }
        }
      });
}

Var l2_normalize_rows(Var a, double eps) {
  const Tensor& x = a.value();
  require_matrix("l2_normalize_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  auto norms = std::make_shared<std::vector<double>>(m);
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x(i, j) * x(i, j);
    const double nrm = std::sqrt(s + eps);
    (*norms)[i] = nrm;
    for (std::size_t j = 0; j < n; ++j) y(i, j) = x(i, j) / nrm;
  }
  return a.graph().record("l2_normalize_rows", std::move(y), {a},
                          [norms, m, n](const Tensor& out, const Tensor& g, std::vector<Tensor*>& gi) {
                            Tensor& gx = *gi[0];
                            for (std::size_t i = 0; i < m; ++i) {
                              double dot = 0.0;
                              for (std::size_t j = 0; j < n; ++j) dot += out(i, j) * g(i, j);
                              for (std::size_t j = 0; j < n; ++j)
                                gx(i, j) += (g(i, j) - out(i, j) * dot) / (*norms)[i];
                            }
                          });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record("sum", Tensor::scalar(s), {a},
                          [](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
                            for (auto& v : gi[0]->data()) v += g[0];
                          });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return a.graph().record("reshape", std::move(y), {a},
                          [](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
                            for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                          });
}

Var gather(Var a, std::vector<std::size_t> indices) {
  const Tensor& x = a.value();
  if (indices.empty()) throw ShapeError("gather: empty index list");
  Tensor y({1, indices.size()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.size()) {
      throw ShapeError("gather: index " + std::to_string(indices[i]) + " out of range for " +
                       shape_to_string(x.shape()));
    }
    y[i] = x[indices[i]];
  }
  return a.graph().record("gather", std::move(y), {a},
                          [idx = std::move(indices)](const Tensor&, const Tensor& g,
                                                     std::vector<Tensor*>& gi) {
                            for (std::size_t i = 0; i < idx.size(); ++i) (*gi[0])[idx[i]] += g[i];
                          });
}

Var concat_rows(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("concat_rows", av);
  require_matrix("concat_rows", bv);
  if (av.cols() != bv.cols()) {
    throw ShapeError("concat_rows: width mismatch " + shape_to_string(av.shape()) + " vs " +
                     shape_to_string(bv.shape()));
  }
  std::vector<double> data(av.vec());
  data.insert(data.end(), bv.vec().begin(), bv.vec().end());
  const std::size_t na = av.size();
  Tensor y({av.rows() + bv.rows(), av.cols()}, std::move(data));
  return a.graph().record("concat_rows", std::move(y), {a, b},
                          [na](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
                            if (gi[0])
                              for (std::size_t i = 0; i < na; ++i) (*gi[0])[i] += g[i];
                            if (gi[1])
                              for (std::size_t i = na; i < g.size(); ++i) (*gi[1])[i - na] += g[i];
                          });
}

Var concat_seq(Var a, Var b, std::size_t batch) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("concat_seq", av);
  require_matrix("concat_seq", bv);
  if (av.cols() != bv.cols()) {
    throw ShapeError("concat_seq: width mismatch " + shape_to_string(av.shape()) + " vs " +
                     shape_to_string(bv.shape()));
  }
  if (batch == 0 || av.rows() % batch || bv.rows() % batch) {
    throw ShapeError("concat_seq: row counts not divisible by batch " + std::to_string(batch));
  }
  const std::size_t d = av.cols(), na = av.rows() / batch, nb = bv.rows() / batch;
  Tensor y({batch * (na + nb), d});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    std::copy_n(av.data().data() + bi * na * d, na * d, y.data().data() + bi * (na + nb) * d);
    std::copy_n(bv.data().data() + bi * nb * d, nb * d, y.data().data() + (bi * (na + nb) + na) * d);
  }
  return a.graph().record(
      "concat_seq", std::move(y), {a, b},
      [batch, d, na, nb](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
        for (std::size_t bi = 0; bi < batch; ++bi) {
          const double* src = g.data().data() + bi * (na + nb) * d;
          if (gi[0]) {
            double* dst = gi[0]->data().data() + bi * na * d;
            for (std::size_t i = 0; i < na * d; ++i) dst[i] += src[i];
          }
          if (gi[1]) {
            double* dst = gi[1]->data().data() + bi * nb * d;
            for (std::size_t i = 0; i < nb * d; ++i) dst[i] += src[na * d + i];
          }
        }
      });
}

Var tile_rows(Var a, std::size_t times) {
  const Tensor& x = a.value();
  require_matrix("tile_rows", x);
  if (times == 0) throw ShapeError("tile_rows: times must be positive");
  const std::size_t block = x.size();
  std::vector<double> data;
  data.reserve(block * times);
  for (std::size_t t = 0; t < times; ++t) data.insert(data.end(), x.vec().begin(), x.vec().end());
  Tensor y({x.rows() * times, x.cols()}, std::move(data));
  return a.graph().record("tile_rows", std::move(y), {a},
                          [block, times](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
                            for (std::size_t t = 0; t < times; ++t)
                              for (std::size_t i = 0; i < block; ++i) (*gi[0])[i] += g[t * block + i];
                          });
}

Var segment_mean(Var a, std::size_t batch) {
  const Tensor& x = a.value();
  require_matrix("segment_mean", x);
  if (batch == 0 || x.rows() % batch) {
    throw ShapeError("segment_mean: rows " + std::to_string(x.rows()) + " not divisible by batch " +
                     std::to_string(batch));
  }
  const std::size_t per = x.rows() / batch, d = x.cols();
  const double inv = 1.0 / static_cast<double>(per);
  Tensor y({batch, d});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t r = 0; r < per; ++r)
      for (std::size_t j = 0; j < d; ++j) y(b, j) += x(b * per + r, j) * inv;
  return a.graph().record("segment_mean", std::move(y), {a},
                          [per, d, inv, batch](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
                            Tensor& gx = *gi[0];
                            for (std::size_t b = 0; b < batch; ++b)
                              for (std::size_t r = 0; r < per; ++r)
                                for (std::size_t j = 0; j < d; ++j) gx(b * per + r, j) += g(b, j) * inv;
                          });
}

namespace {

struct AttentionDims {
  std::size_t batch, heads, nq, nk, d, dk;
  double scale;
};

AttentionDims attention_dims(const Tensor& q, const Tensor& k, std::size_t batch, std::size_t heads) {
  require_matrix("attention", q);
  require_matrix("attention", k);
  if (q.cols() != k.cols()) {
    throw ShapeError("attention: query width " + std::to_string(q.cols()) + " != key width " +
                     std::to_string(k.cols()));
  }
  if (batch == 0 || q.rows() % batch || k.rows() % batch) {
    throw ShapeError("attention: rows not divisible by batch " + std::to_string(batch));
  }
  if (heads == 0 || q.cols() % heads) {
    throw ShapeError("attention: width " + std::to_string(q.cols()) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  AttentionDims dm{batch, heads, q.rows() / batch, k.rows() / batch, q.cols(), q.cols() / heads, 0.0};
  dm.scale = 1.0 / std::sqrt(static_cast<double>(dm.dk));
  return dm;
}

// probs layout: [batch][head][nq][nk]
void attention_probs(const Tensor& q, const Tensor& k, const AttentionDims& dm,
                     std::vector<double>& probs) {
  probs.assign(dm.batch * dm.heads * dm.nq * dm.nk, 0.0);
  for (std::size_t b = 0; b < dm.batch; ++b) {
    for (std::size_t h = 0; h < dm.heads; ++h) {
      const std::size_t off = h * dm.dk;
      for (std::size_t i = 0; i < dm.nq; ++i) {
        double* p = probs.data() + ((b * dm.heads + h) * dm.nq + i) * dm.nk;
        const double* qi = q.data().data() + (b * dm.nq + i) * dm.d + off;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < dm.nk; ++j) {
          const double* kj = k.data().data() + (b * dm.nk + j) * dm.d + off;
          double s = 0.0;
          for (std::size_t c = 0; c < dm.dk; ++c) s += qi[c] * kj[c];
          p[j] = s * dm.scale;
          mx = std::max(mx, p[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < dm.nk; ++j) {
          p[j] = std::exp(p[j] - mx);
          z += p[j];
        }
        for (std::size_t j = 0; j < dm.nk; ++j) p[j] /= z;
      }
    }
  }
}

}  // namespace

std::vector<double> attention_weights(const Tensor& q, const Tensor& k, std::size_t batch,
                                      std::size_t heads) {
  const auto dm = attention_dims(q, k, batch, heads);
  std::vector<double> probs;
  attention_probs(q, k, dm, probs);
  return probs;
}

Var attention(Var q, Var k, Var v, std::size_t batch, std::size_t heads) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  const auto dm = attention_dims(qv, kv, batch, heads);
  if (vv.shape() != kv.shape()) {
    throw ShapeError("attention: value shape " + shape_to_string(vv.shape()) + " != key shape " +
                     shape_to_string(kv.shape()));
  }
  auto probs = std::make_shared<std::vector<double>>();
  attention_probs(qv, kv, dm, *probs);

  Tensor out({dm.batch * dm.nq, dm.d});
  for (std::size_t b = 0; b < dm.batch; ++b) {
    for (std::size_t h = 0; h < dm.heads; ++h) {
      const std::size_t off = h * dm.dk;
      for (std::size_t i = 0; i < dm.nq; ++i) {
        const double* p = probs->data() + ((b * dm.heads + h) * dm.nq + i) * dm.nk;
        double* o = out.data().data() + (b * dm.nq + i) * dm.d + off;
        for (std::size_t j = 0; j < dm.nk; ++j) {
          const double* vj = vv.data().data() + (b * dm.nk + j) * dm.d + off;
          const double pj = p[j];
          for (std::size_t c = 0; c < dm.dk; ++c) o[c] += pj * vj[c];
        }
      }
    }
  }

  return q.graph().record(
      "attention", std::move(out), {q, k, v},
      [q, k, v, dm, probs](const Tensor&, const Tensor& g, std::vector<Tensor*>& gi) {
        const Tensor& qv = q.value();
        const Tensor& kv = k.value();
        const Tensor& vv = v.value();
        std::vector<double> dp(dm.nk);
        for (std::size_t b = 0; b < dm.batch; ++b) {
          for (std::size_t h = 0; h < dm.heads; ++h) {
            const std::size_t off = h * dm.dk;
            for (std::size_t i = 0; i < dm.nq; ++i) {
              const double* p = probs->data() + ((b * dm.heads + h) * dm.nq + i) * dm.nk;
              const double* go = g.data().data() + (b * dm.nq + i) * dm.d + off;
              double dot = 0.0;
              for (std::size_t j = 0; j < dm.nk; ++j) {
                const std::size_t row = (b * dm.nk + j) * dm.d + off;
                const double* vj = vv.data().data() + row;
                double s = 0.0;
                for (std::size_t c = 0; c < dm.dk; ++c) s += go[c] * vj[c];
                dp[j] = s;
                dot += s * p[j];
                if (gi[2]) {
                  double* gv = gi[2]->data().data() + row;
                  for (std::size_t c = 0; c < dm.dk; ++c) gv[c] += p[j] * go[c];
                }
              }
              const double* qi = qv.data().data() + (b * dm.nq + i) * dm.d + off;
              double* gq = gi[0] ? gi[0]->data().data() + (b * dm.nq + i) * dm.d + off : nullptr;
              for (std::size_t j = 0; j < dm.nk; ++j) {
                const double ds = p[j] * (dp[j] - dot) * dm.scale;
                if (ds == 0.0) continue;
                const std::size_t row = (b * dm.nk + j) * dm.d + off;
                if (gq) {
                  const double* kj = kv.data().data() + row;
                  for (std::size_t c = 0; c < dm.dk; ++c) gq[c] += ds * kj[c];
                }
                if (gi[1]) {
                  double* gk = gi[1]->data().data() + row;
                  for (std::size_t c = 0; c < dm.dk; ++c) gk[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
}

}  // namespace mmsurv::ad
