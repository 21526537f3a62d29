#include "ecr/adam.hpp"

#include <cmath>

#include "ecr/error.hpp"

namespace ecr {

AdamState Adam::init(std::span<const std::size_t> block_sizes) const {
  AdamState state;
  for (std::size_t n : block_sizes) {
    state.first_moment.emplace_back(n, 0.0);
    state.second_moment.emplace_back(n, 0.0);
  }
  return state;
}

void Adam::update(AdamState& state, std::span<const ParamView> blocks) const {
  if (blocks.size() != state.first_moment.size()) {
    throw InputError("adam: block count does not match optimizer state");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const ParamView& block = blocks[b];
    std::vector<double>& m = state.first_moment[b];
    std::vector<double>& v = state.second_moment[b];
    if (block.value.size() != m.size() || block.grad.size() != m.size()) {
      throw InputError("adam: block shape does not match optimizer state");
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = block.grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      block.value[i] -=
          config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace ecr
