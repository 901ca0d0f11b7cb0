#pragma once

#include <vector>

#include "mmsurv/autodiff/graph.hpp"

namespace mmsurv::ad {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment gradient descent over a fixed parameter list. Frozen
// parameters are skipped.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options = {});

  void step();
  long steps_taken() const noexcept { return t_; }
  const AdamOptions& options() const noexcept { return options_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamOptions options_;
  long t_ = 0;
};

}  // namespace mmsurv::ad
