#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <Eigen/Core>

namespace hazefield {

template <typename Scalar>
struct AdamState {
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  VectorX m;
  VectorX v;
  std::int64_t step_count = 0;
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);

  AdamState() = default;
  explicit AdamState(Eigen::Index n) : m(VectorX::Zero(n)), v(VectorX::Zero(n)) {}
};

// One bias-corrected Adam update, in place.
template <typename Scalar>
void adam_step(Eigen::Ref<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> params,
               const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& grads, AdamState<Scalar>& state,
               Scalar lr) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  if (!(lr >= Scalar(0))) {
    throw std::invalid_argument("adam_step: learning rate must be nonnegative");
  }
  if (!grads.allFinite()) {
    throw std::runtime_error("diverged");
  }
  ++state.step_count;
  const Scalar b1 = state.beta1;
  const Scalar b2 = state.beta2;
  const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(state.step_count));
  const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(state.step_count));
  state.m = b1 * state.m + (Scalar(1) - b1) * grads;
  state.v = b2 * state.v + (Scalar(1) - b2) * grads.cwiseAbs2();
  if (lr == Scalar(0)) return;
  const Scalar step = lr / c1;
  const Scalar sqrt_c2 = std::sqrt(c2);
  params.array() -= step * state.m.array() / (state.v.array().sqrt() / sqrt_c2 + state.eps);
}

// Piecewise-constant decay at fixed fractions of the run.
struct LrSchedule {
  double base_lr_grid = 1e-2;
  double base_lr_atmosphere = 3e-4;
  std::array<double, 4> milestones{1.0 / 3.0, 3.0 / 5.0, 4.0 / 5.0, 9.0 / 10.0};
  double decay = 0.33;

  void validate() const {
    if (!(base_lr_grid > 0.0) || !(base_lr_atmosphere > 0.0)) throw std::invalid_argument("learning rates must be positive");
    if (!(decay > 0.0 && decay < 1.0)) throw std::invalid_argument("decay must lie in (0, 1)");
    double prev = 0.0;
    for (double m : milestones) {
      if (!(m > prev && m < 1.0)) throw std::invalid_argument("milestones must increase strictly inside (0, 1)");
      prev = m;
    }
  }

  // First iteration at which milestone k is in effect.
  std::int64_t milestone_iteration(std::size_t k, std::int64_t total) const {
    return static_cast<std::int64_t>(std::ceil(milestones[k] * double(total) - 1e-9));
  }
};

struct LearningRates {
  double grid = 0.0;
  double atmosphere = 0.0;
};

inline LearningRates lr_at(const LrSchedule& schedule, std::int64_t iteration, std::int64_t total_iterations) {
  if (total_iterations < 1 || iteration < 0 || iteration >= total_iterations) {
    throw std::out_of_range("lr_at: iteration out of range");
  }
  double factor = 1.0;
  for (std::size_t k = 0; k < schedule.milestones.size(); ++k) {
    if (iteration >= schedule.milestone_iteration(k, total_iterations)) factor *= schedule.decay;
  }
  return {schedule.base_lr_grid * factor, schedule.base_lr_atmosphere * factor};
}

}  // namespace hazefield
