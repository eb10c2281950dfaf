#pragma once

#include <string>
#include <vector>

#include "flnet/raster.hpp"

namespace flnet {

inline constexpr double kNdviDenomEps = 1e-6;

// (NIR - Red) / (NIR + Red). Output is nodata where either input is nodata or
// |NIR + Red| < kNdviDenomEps, and clamped to [-1, 1] against stray rounding.
Raster compute_ndvi(const Raster& nir, const Raster& red);

enum class ResampleMethod { nearest, bilinear, bicubic };
ResampleMethod parse_resample_method(const std::string& name);

// Resamples onto the target grid. Nearest carries the source pixel's validity;
// the interpolating methods mark an output pixel nodata as soon as any source
// pixel with nonzero weight is invalid or outside the grid. A target grid
// identical to the source grid returns a bit-exact copy for every method.
Raster resample(const Raster& src, const GeoTransform& target_geo, int width,
                int height, ResampleMethod method);
namespace serial {
Raster resample(const Raster& src, const GeoTransform& target_geo, int width,
                int height, ResampleMethod method);
}

// Pixels with any quality bit set or outside cropland become nodata.
// `cropland` must already be on r's grid (nearest-resampled when coarser).
Raster apply_masks(const Raster& r, const QualityMask& quality, const Raster& cropland);

// Bilinear shift: out(x, y) = in(x - dx, y - dy). Footprints leaving the
// grid produce nodata, so integer shifts are exact copies with a nodata rim.
Raster shift_raster(const Raster& r, double dx, double dy);

struct ChipOrigin {
  int x = 0, y = 0;
};

// Row-major tiling; a window is emitted iff every member raster has a nodata
// fraction <= max_nodata_fraction inside it.
std::vector<ChipOrigin> extract_chips(const std::vector<const Raster*>& rasters,
                                      int chip_size, int stride,
                                      double max_nodata_fraction);

Raster crop(const Raster& r, int x0, int y0, int width, int height);

// Binary PPM (P6, maxval 255) renderings. Palettes (documented contract):
//   damage-classes : 0 no (34,139,34), 1 partial (255,140,0), 2 full
//                    (178,34,34), nodata (128,128,128)
//   ndvi-diverging : -1 (140,81,10), 0 (245,245,245), +1 (26,152,80),
//                    linear per channel, nodata (128,128,128)
enum class MapStyle { damage_classes, ndvi_diverging };
MapStyle parse_map_style(const std::string& name);
std::vector<uint8_t> render_map(const Raster& r, MapStyle style);

}  // namespace flnet
