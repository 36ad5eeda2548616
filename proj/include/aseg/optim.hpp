#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "aseg/autograd.hpp"

namespace aseg {

/// Adam with bias correction. Moments are kept per parameter of the set it was built for.
template <typename T>
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit Adam(const ParameterSet<T>& params, Options opt = {}) : opt_(opt) {
    if (!(opt_.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }

  long steps() const { return t_; }
  const Options& options() const { return opt_; }

  /// Applies one update from the gradients currently held by `params`.
  void step(ParameterSet<T>& params) {
    if (params.size() != m_.size()) throw std::logic_error("Adam bound to a different parameter set");
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter<T>& p = params[i];
      std::vector<double>& m = m_[i];
      std::vector<double>& v = v_[i];
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const double g = p.grad[j];
        m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g;
        v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g * g;
        const double update = opt_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + opt_.eps);
        p.value[j] = static_cast<T>(p.value[j] - update);
      }
    }
  }

 private:
  Options opt_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace aseg
