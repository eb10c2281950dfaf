#pragma once

#include "flnet/raster.hpp"

namespace flnet {

// Result of translation-only co-registration. (dx, dy) is the correction:
// shift_raster(moving, dx, dy) aligns `moving` onto `reference`, so a scene
// displaced by (a, b) comes back as (-a, -b). The displacement itself is
// (-dx, -dy). score is the peak masked normalized cross-correlation.
struct Registration {
  double dx = 0.0;
  double dy = 0.0;
  double score = 0.0;
};

// Exhaustive masked-NCC search over integer shifts in [-max_shift, max_shift]^2
// followed by per-axis quadratic refinement of the 3x3 peak neighborhood.
// Shifts with less than 25% valid overlap are excluded; if every shift is
// excluded the registration is refused. A numerically perfect peak
// (score > 1 - 1e-6) skips refinement, so exact integer shifts stay integer.
Registration coregister_translation(const Raster& reference, const Raster& moving,
                                    int max_shift);

}  // namespace flnet
