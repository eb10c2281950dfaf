#pragma once

namespace flnet {

// Affine georeferencing with rotation terms pinned to zero. Map coordinates
// of the center of pixel (col, row) are:
//   x = origin_x + (col + 0.5) * pixel_size_x
//   y = origin_y + (row + 0.5) * pixel_size_y
struct GeoTransform {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double pixel_size_x = 1.0;
  double pixel_size_y = 1.0;

  bool operator==(const GeoTransform&) const = default;

  double px_to_map_x(double col) const { return origin_x + (col + 0.5) * pixel_size_x; }
  double px_to_map_y(double row) const { return origin_y + (row + 0.5) * pixel_size_y; }
  double map_to_px_x(double x) const { return (x - origin_x) / pixel_size_x - 0.5; }
  double map_to_px_y(double y) const { return (y - origin_y) / pixel_size_y - 0.5; }

  // Grid refined by an integer factor (same origin, pixel size / r).
  GeoTransform refined(int r) const {
    return {origin_x, origin_y, pixel_size_x / r, pixel_size_y / r};
  }
  GeoTransform coarsened(int r) const {
    return {origin_x, origin_y, pixel_size_x * r, pixel_size_y * r};
  }
};

}  // namespace flnet
