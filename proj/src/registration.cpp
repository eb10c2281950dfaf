#include "flnet/registration.hpp"

#include <cmath>
#include <vector>

#include "flnet/kernels.hpp"

namespace flnet {

namespace {

// Vertex offset of the parabola through (-1, ym), (0, y0), (+1, yp) where y0
// is a local maximum, clamped to half a pixel.
double peak_offset(double ym, double y0, double yp) {
  const double den = ym - 2.0 * y0 + yp;
  if (den >= -1e-12) return 0.0;  // flat or non-concave fit
  return std::clamp(0.5 * (ym - yp) / den, -0.5, 0.5);
}

}  // namespace

Registration coregister_translation(const Raster& reference, const Raster& moving,
                                    int max_shift) {
  if (reference.bands() != 1 || moving.bands() != 1)
    fail(ErrorCode::usage, "coregister_translation: single-band inputs required");
  if (reference.width() != moving.width() || reference.height() != moving.height())
    fail(ErrorCode::grid_mismatch, "coregister_translation: dimensions differ");
  if (max_shift < 1) fail(ErrorCode::usage, "coregister_translation: max_shift < 1");
  if (reference.valid_count() < 64 * 64 || moving.valid_count() < 64 * 64)
    fail(ErrorCode::insufficient_overlap,
         "coregister_translation: fewer than 64x64 valid pixels");

  const size_t min_overlap = reference.pixel_count() / 4;
  const int side = 2 * max_shift + 1;
  std::vector<double> scores(size_t(side) * side);
  kern::ncc_shift_scores(reference.data().data(), reference.mask().data(),
                         moving.data().data(), moving.mask().data(), reference.width(),
                         reference.height(), max_shift, min_overlap, scores.data());

  int best = -1;
  for (int i = 0; i < side * side; ++i) {
    if (scores[size_t(i)] <= kern::kNccRejected) continue;
    if (best < 0 || scores[size_t(i)] > scores[size_t(best)]) best = i;
  }
  if (best < 0)
    fail(ErrorCode::insufficient_overlap,
         "coregister_translation: no shift with at least 25% valid overlap");

  const int bv = best / side, bu = best % side;
  Registration reg;
  reg.score = scores[size_t(best)];
  reg.dx = bu - max_shift;
  reg.dy = bv - max_shift;

  if (reg.score <= 1.0 - 1e-6) {
    auto at = [&](int u, int v) { return scores[size_t(v) * side + u]; };
    if (bu > 0 && bu < side - 1 && at(bu - 1, bv) > kern::kNccRejected &&
        at(bu + 1, bv) > kern::kNccRejected)
      reg.dx += peak_offset(at(bu - 1, bv), reg.score, at(bu + 1, bv));
    if (bv > 0 && bv < side - 1 && at(bu, bv - 1) > kern::kNccRejected &&
        at(bu, bv + 1) > kern::kNccRejected)
      reg.dy += peak_offset(at(bu, bv - 1), reg.score, at(bu, bv + 1));
  }
  return reg;
}

}  // namespace flnet
