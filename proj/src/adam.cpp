#include "nhedge/adam.hpp"

#include <cmath>

namespace nhedge::ad {

AdamState make_adam_state(std::span<const Matrix> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.first_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
    s.second_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  return s;
}

void adam_update(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw ShapeError("adam_update: parameter, gradient and state counts differ");
  state.step += 1;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = params[i];
    const Matrix& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw ShapeError("adam_update: gradient shape differs from parameter");
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    p.array() -= c.learning_rate * (m.array() / correction1) /
                 ((v.array() / correction2).sqrt() + c.epsilon);
  }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)) {
  std::vector<Matrix> values;
  values.reserve(params_.size());
  for (const auto& p : params_) values.push_back(p.value());
  state_ = make_adam_state(values, config);
}

void Adam::step() {
  std::vector<Matrix> grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) grads.push_back(p.grad());
  // Update through a temporary view of the live parameter storage.
  std::vector<Matrix> values;
  values.reserve(params_.size());
  for (auto& p : params_) values.push_back(std::move(p.mutable_value()));
  try {
    adam_update(values, grads, state_);
  } catch (...) {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].mutable_value() = std::move(values[i]);
    throw;
  }
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i].mutable_value() = std::move(values[i]);
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace nhedge::ad
