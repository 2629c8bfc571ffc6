#pragma once

#include "nhedge/autodiff.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace nhedge::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;
};

// Zero accumulators shaped like `params`.
AdamState make_adam_state(std::span<const Matrix> params, AdamConfig config = {});

// One bias-corrected Adam step applied in place.
void adam_update(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state);

// Adam over autodiff parameters, reading each parameter's grad slot.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig config = {});

  void step();
  void zero_grad();

  const AdamState& state() const { return state_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
};

}  // namespace nhedge::ad
