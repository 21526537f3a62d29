#ifndef ECR_ADAM_HPP_
#define ECR_ADAM_HPP_

#include <cstdint>
#include <span>
#include <vector>

namespace ecr {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One parameter block seen by the optimizer.
struct ParamView {
  std::span<double> value;
  std::span<const double> grad;
};

// First/second moments per block, shaped like the blocks passed to init().
struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step = 0;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  AdamState init(std::span<const std::size_t> block_sizes) const;

  // Bias-corrected descent step on every block (minimization).
  void update(AdamState& state, std::span<const ParamView> blocks) const;

 private:
  AdamConfig config_;
};

}  // namespace ecr

#endif  // ECR_ADAM_HPP_
