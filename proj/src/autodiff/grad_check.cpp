#include "mmsurv/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mmsurv/errors.hpp"

namespace mmsurv::ad {

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw ShapeError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double err = std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double step) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f(x);
    x[i] = orig - step;
    const double down = f(x);
    x[i] = orig;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

double grad_check(const LossBuilder& build, std::span<Parameter* const> params,
                  GradCheckOptions options) {
  std::vector<std::pair<Parameter*, std::size_t>> coords;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) coords.emplace_back(p, i);
  }
  if (options.max_coordinates && coords.size() > options.max_coordinates) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coordinates);
  }

  for (auto* p : params) {
    if (p->frozen) throw ContractError("grad_check: parameter '" + p->name + "' is frozen");
    p->grad.fill(0.0);
  }
  std::vector<double> analytic;
  {
    Graph g;
    Var loss = build(g);
    g.backward(loss);
    for (auto [p, i] : coords) analytic.push_back(p->grad[i]);
  }

  auto eval = [&] {
    Graph g;
    return build(g).value().item();
  };
  std::vector<double> numeric;
  numeric.reserve(coords.size());
  for (auto [p, i] : coords) {
    const double orig = p->value[i];
    p->value[i] = orig + options.step;
    const double up = eval();
    p->value[i] = orig - options.step;
    const double down = eval();
    p->value[i] = orig;
    numeric.push_back((up - down) / (2.0 * options.step));
  }
  return max_relative_error(analytic, numeric);
}

}  // namespace mmsurv::ad
