#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gdcaf {
namespace gradcheck {

struct CheckResult {
  std::string name;
  double max_rel_error = 0.0;
};

inline constexpr double kTolerance = 1e-2;

// Central-difference verification of every differentiable primitive on small
// random inputs (activation inputs nudged away from the kinks).
std::vector<CheckResult> check_primitives(std::uint64_t seed);

// End-to-end check: full forward plus squared-error loss on a two-node,
// two-step, 4x4 configuration; differentiated with respect to every
// parameter element.
CheckResult check_full_model(std::uint64_t seed);

}  // namespace gradcheck
}  // namespace gdcaf
