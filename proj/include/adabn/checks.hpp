#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace adabn {

struct GradCheckResult {
  std::string layer;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  int points = 0;

  bool pass() const { return max_rel_error < tolerance; }
};

// Central-difference sweep over every layer's analytic backward pass, in
// wide (double) precision with step h = 1e-5. Each layer is probed at
// `points` random configurations per differentiable argument; kink-free
// layers must come in under 1e-6, the kinked ones (relu, maxpool, and the
// full composed chain) under 1e-4 at points sampled away from their kinks.
std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed, int points);

}  // namespace adabn
