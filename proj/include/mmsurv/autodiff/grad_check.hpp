#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mmsurv/autodiff/graph.hpp"

namespace mmsurv::ad {

struct GradCheckOptions {
  double step = 1e-3;
  // 0 checks every coordinate; otherwise a seeded random subset of this size.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

// Builds the scalar loss on a fresh graph from the current parameter values.
using LossBuilder = std::function<Var(Graph&)>;

// max over checked coordinates of |analytic - central| / max(1, |central|).
// Parameter values are restored before returning.
double grad_check(const LossBuilder& build, std::span<Parameter* const> params,
                  GradCheckOptions options = {});

// Central differences of a plain function of a vector.
std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double step);

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

}  // namespace mmsurv::ad
