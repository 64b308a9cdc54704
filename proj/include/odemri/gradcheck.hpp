#pragma once

#include <cstdint>

#include "odemri/ode_net.hpp"

namespace odemri {

struct GradcheckResult {
  double max_rel_err = 0.0;
  Index coords = 0;      // parameters plus input coordinates swept
  double seconds = 0.0;  // wall time of the sweep
  bool passed = false;   // max_rel_err < 1e-6
};

// Sweeps every parameter and input coordinate of a small reconstruction
// network (size x size image, 2 blocks, 4 feature channels, 1 augmented
// channel, 2 Euler steps, tanh) with central finite differences (eps = 1e-5)
// of the scalar loss, and compares against the analytic backward pass.
// Relative error is |a - fd| / max(1, |a|, |fd|). The instance is pinned so
// it can be rebuilt externally: per pixel, Rng(seed) yields x0.re, x0.im,
// truth.re, truth.im gaussians in that order, then rng.stream(1) seeds
// init_params. `perturb` injects a deliberate error into one gradient
// entry, for exercising the failure path.
GradcheckResult run_gradcheck(Index size = 8, std::uint64_t seed = 0, bool perturb = false);

}  // namespace odemri
