#include "mmsurv/autodiff/optim.hpp"

#include <cmath>

#include "mmsurv/errors.hpp"

namespace mmsurv::ad {

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (options_.learning_rate <= 0 || options_.eps <= 0) {
    throw ConfigError("Adam: learning rate and eps must be positive");
  }
  for (const auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (p.frozen) continue;
    auto w = p.value.data();
    auto g = p.grad.data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= options_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
    }
    if (!p.value.all_finite()) throw NumericError("Adam: parameter '" + p.name + "' became non-finite");
  }
}

}  // namespace mmsurv::ad
