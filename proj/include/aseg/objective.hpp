#pragma once

// Certainty-weighted cumulative losses. Each output stream X accumulates
//
//   cum_X(t) = cum_X(t-1) + mean_pixels( C_t * e_X(t) + exp(-C_t) )
//
// and the optimization target of a rollout is the sum of the three streams at t = T.

#include <cmath>
#include <vector>

#include "aseg/autograd.hpp"
#include "aseg/tensor.hpp"

namespace aseg {

struct LossState {
  double cum_local = 0.0;
  double cum_global = 0.0;
  double cum_final = 0.0;
  double total = 0.0;

  bool operator==(const LossState&) const = default;
};

template <typename T>
struct ErrorMaps {
  Tensor<T> local;
  Tensor<T> global;
  Tensor<T> final;
};

/// Per-stream contribution of one step (the increments of LossState).
struct StepContribution {
  double local = 0.0;
  double global = 0.0;
  double final = 0.0;
};

/// mean over pixels of (C * e + exp(-C)).
template <typename T>
double certainty_weighted_mean(const Tensor<T>& certainty, const Tensor<T>& error) {
  expect_shape(error.shape(), certainty.shape(), "certainty_weighted_mean");
  double acc = 0.0;
  for (std::size_t i = 0; i < certainty.size(); ++i) {
    const double c = certainty[i];
    acc += c * error[i] + std::exp(-c);
  }
  return acc / static_cast<double>(certainty.size());
}

/// U_t = exp(-C_t).
template <typename T>
Tensor<T> uncertainty_map(const Tensor<T>& certainty) {
  Tensor<T> u = certainty;
  for (auto& v : u.values()) v = std::exp(-v);
  return u;
}

/// Certainty minimizing c * e + exp(-c) for a fixed error e > 0.
inline double optimal_certainty(double error) { return -std::log(error); }

template <typename T>
StepContribution step_contribution(const ErrorMaps<T>& errors, const Tensor<T>& certainty) {
  return {certainty_weighted_mean(certainty, errors.local),
          certainty_weighted_mean(certainty, errors.global),
          certainty_weighted_mean(certainty, errors.final)};
}

inline LossState accumulate(const LossState& prev, const StepContribution& step) {
  LossState next;
  next.cum_local = prev.cum_local + step.local;
  next.cum_global = prev.cum_global + step.global;
  next.cum_final = prev.cum_final + step.final;
  next.total = next.cum_local + next.cum_global + next.cum_final;
  return next;
}

template <typename T>
LossState step_loss(const LossState& prev, const ErrorMaps<T>& errors, const Tensor<T>& certainty) {
  return accumulate(prev, step_contribution(errors, certainty));
}

/// Maps produced by one agent step.
template <typename T>
struct StepOutputs {
  Tensor<T> local_seg;
  Tensor<T> global_seg;
  Tensor<T> final_seg;
  Tensor<T> certainty;

  Tensor<T> uncertainty() const { return uncertainty_map(certainty); }
};

template <typename T>
ErrorMaps<T> error_maps(const StepOutputs<T>& step, const Tensor<T>& target_onehot) {
  return {bce_error_map(step.local_seg, target_onehot),
          bce_error_map(step.global_seg, target_onehot),
          bce_error_map(step.final_seg, target_onehot)};
}

/// Folds step_loss over a whole rollout.
template <typename T>
LossState rollout_loss(const std::vector<StepOutputs<T>>& steps, const Tensor<T>& target_onehot) {
  if (steps.empty()) throw std::invalid_argument("rollout_loss needs at least one step");
  LossState state;
  for (const auto& s : steps) state = step_loss(state, error_maps(s, target_onehot), s.certainty);
  return state;
}

}  // namespace aseg
