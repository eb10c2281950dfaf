#pragma once

#include "flnet/raster.hpp"

namespace flnet {

// Damage classes; stored as 0/1/2 reals in single-band label rasters.
inline constexpr int kLabelNo = 0;
inline constexpr int kLabelPartial = 1;
inline constexpr int kLabelFull = 2;

struct ThresholdConfig {
  float t_partial = 0.15f;
  float t_full = 0.40f;
  void validate() const {
    if (!(-2.0f < t_partial && t_partial < t_full && t_full < 2.0f))
      fail(ErrorCode::usage, "thresholds must satisfy -2 < t_partial < t_full < 2");
  }
};

// pre - post on co-gridded NDVI rasters; nodata where either side is nodata.
Raster delta_ndvi(const Raster& pre, const Raster& post);

// Full where delta >= t_full, Partial where t_partial <= delta < t_full,
// No otherwise. Boundaries go to the higher class; nodata passes through.
Raster threshold_label(const Raster& delta, const ThresholdConfig& cfg);

// Majority vote of the valid labels in an odd window, ties toward the center
// pixel's current label (then lowest class). Nodata pixels are untouched.
Raster morphological_smooth(const Raster& labels, int window = 3);

// 4-connected components smaller than min_size take the modal label of their
// valid boundary neighbors, evaluated against the original labels for every
// component (ties relabel to No; components with no valid neighbors stay).
Raster small_object_removal(const Raster& labels, int min_size = 10);

}  // namespace flnet
