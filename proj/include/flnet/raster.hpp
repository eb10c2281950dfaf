#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flnet/errors.hpp"
#include "flnet/geo.hpp"

namespace flnet {

inline constexpr float kDefaultNodata = -9999.0f;

// Single- or multi-band grid of f32 with a per-pixel validity mask shared by
// all bands. Immutable by convention once an operation has produced it;
// operations return new rasters.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, int bands = 1, GeoTransform geo = {},
         float fill = 0.0f)
      : width_(width),
        height_(height),
        bands_(bands),
        geo_(geo),
        data_(size_t(width) * height * bands, fill),
        mask_(size_t(width) * height, 0) {
    if (width <= 0 || height <= 0 || bands <= 0)
      fail(ErrorCode::usage, "raster dimensions must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int bands() const { return bands_; }
  size_t pixel_count() const { return size_t(width_) * height_; }
  const GeoTransform& geo() const { return geo_; }
  GeoTransform& geo() { return geo_; }
  float nodata_value() const { return nodata_; }
  void set_nodata_value(float v) { nodata_ = v; }
  uint32_t flags() const { return flags_; }
  void set_flags(uint32_t f) { flags_ = f; }

  float& at(int row, int col, int band = 0) {
    return data_[(size_t(band) * height_ + row) * width_ + col];
  }
  float at(int row, int col, int band = 0) const {
    return data_[(size_t(band) * height_ + row) * width_ + col];
  }
  bool valid(int row, int col) const { return mask_[size_t(row) * width_ + col] == 0; }
  void set_valid(int row, int col, bool v) { mask_[size_t(row) * width_ + col] = v ? 0 : 1; }

  // Marks the pixel invalid and writes the sentinel into every band, so a
  // masked raster serializes identically no matter which op produced it.
  void set_nodata(int row, int col) {
    mask_[size_t(row) * width_ + col] = 1;
    for (int b = 0; b < bands_; ++b) at(row, col, b) = nodata_;
  }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }
  std::vector<uint8_t>& mask() { return mask_; }
  const std::vector<uint8_t>& mask() const { return mask_; }

  size_t valid_count() const {
    size_t n = 0;
    for (uint8_t m : mask_) n += (m == 0);
    return n;
  }

  bool co_gridded_with(const Raster& o) const {
    return width_ == o.width_ && height_ == o.height_ && geo_ == o.geo_;
  }

  bool identical_to(const Raster& o) const;  // bitwise, incl. header fields

 private:
  int width_ = 0, height_ = 0, bands_ = 1;
  GeoTransform geo_;
  float nodata_ = kDefaultNodata;
  uint32_t flags_ = 0;
  std::vector<float> data_;    // band-major, row-major
  std::vector<uint8_t> mask_;  // one plane, 1 = invalid
};

// FR1 container. Layout (little-endian):
//   magic "FLRASTR1"
//   u32 width, u32 height, u32 bands
//   f64 origin_x, f64 pixel_size_x, f64 0, f64 origin_y, f64 0, f64 pixel_size_y
//   f32 nodata sentinel, u32 flags
//   bands * width * height f32 values, band-major row-major
//   ceil(width*height/8) bytes packed nodata bitmask, LSB-first in
//   row-major pixel order, bit = 1 meaning invalid
Raster read_raster(const std::string& path);
void write_raster(const Raster& r, const std::string& path);

// In-memory encode/decode used by the file functions and the round-trip tests.
std::vector<uint8_t> encode_fr1(const Raster& r);
Raster decode_fr1(const uint8_t* bytes, size_t size);

// Writes to `path + ".tmp"` then renames, so readers never see partial files.
void write_file_atomic(const std::string& path, const void* bytes, size_t size);
std::vector<uint8_t> read_file(const std::string& path);

// Per-pixel quality flags on the same grid as the raster they qualify.
enum QualityBit : uint8_t {
  kQualityCloud = 1,
  kQualityShadow = 2,
  kQualityWaterGlare = 4,
  kQualityNodata = 8,
};

struct QualityMask {
  int width = 0, height = 0;
  GeoTransform geo;
  std::vector<uint8_t> bits;

  QualityMask() = default;
  QualityMask(int w, int h, GeoTransform g, uint8_t fill = 0)
      : width(w), height(h), geo(g), bits(size_t(w) * h, fill) {}

  uint8_t& at(int row, int col) { return bits[size_t(row) * width + col]; }
  uint8_t at(int row, int col) const { return bits[size_t(row) * width + col]; }

  // Flag values ride in band 0 of an FR1 raster (integers 0..15, exact in f32).
  Raster to_raster() const;
  static QualityMask from_raster(const Raster& r);
};

}  // namespace flnet
