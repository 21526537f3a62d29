#ifndef ECR_CLI_HPP_
#define ECR_CLI_HPP_

#include <ostream>

namespace ecr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitNumerical = 2;

// Subcommands: synth, stats, train, predict, eval, crossval, heatmap.
int dispatch(int argc, const char* const* argv, std::ostream& out,
             std::ostream& err);

}  // namespace ecr

#endif  // ECR_CLI_HPP_
