#pragma once

#include <string>
#include <vector>

#include "flnet/raster.hpp"

namespace flnet {

// Procedural flood-damage scene: Voronoi smallholder parcels, per-parcel
// post-event NDVI drops, narrow full-damage strips, optional cloud blobs, and
// a sensor model producing the co-registered low-resolution counterparts.
struct SceneSpec {
  uint64_t seed = 0;
  int hr_size = 768;        // pixels, must be divisible by scale
  double hr_pixel = 3.0;    // map units per pixel
  int parcel_count = 120;
  double damage_fraction = 0.25;
  int narrow_feature_count = 4;  // 1-3 px wide full-damage strips
  double cloud_fraction = 0.0;
  double noise_sigma = 0.01;
  int scale = 3;
  double blur_sigma = 0.5;  // sensor PSF sigma in low-res pixel units

  void validate() const;
};

struct SceneBundle {
  int scale = 3;
  Raster pre_hr, post_hr;       // clean NDVI at the fine grid
  Raster pre_lr, post_lr;       // degraded NDVI, exactly scale x coarser
  Raster truth_labels;          // threshold + smoothing of the clean delta
  Raster cropland;              // 1 = cropland
  Raster parcel_index;          // parcel id per pixel
  QualityMask quality_pre_hr, quality_post_hr;
  QualityMask quality_pre_lr, quality_post_lr;
};

SceneBundle generate_scene(const SceneSpec& spec);

// Gaussian blur (sigma = blur_sigma * r in fine pixels), r x r box average,
// then additive Gaussian noise clamped to [-1, 1]. Deterministic per seed.
Raster degrade_to_lr(const Raster& hr, int r, double blur_sigma, double noise_sigma,
                     uint64_t seed);

// A bundle persists as FR1 files plus a key=value manifest.
void save_bundle(const std::string& dir, const SceneBundle& bundle, const SceneSpec& spec);
SceneBundle load_bundle(const std::string& dir);

}  // namespace flnet
