#include "flnet/raster_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace flnet {

Raster compute_ndvi(const Raster& nir, const Raster& red) {
  if (!nir.co_gridded_with(red) || nir.bands() != 1 || red.bands() != 1)
    fail(ErrorCode::grid_mismatch, "compute_ndvi: inputs must be co-gridded single-band");
  Raster out(nir.width(), nir.height(), 1, nir.geo());
#pragma omp parallel for schedule(static)
  for (int y = 0; y < nir.height(); ++y)
    for (int x = 0; x < nir.width(); ++x) {
      if (!nir.valid(y, x) || !red.valid(y, x)) {
        out.set_nodata(y, x);
        continue;
      }
      const double n = nir.at(y, x), r = red.at(y, x);
      const double den = n + r;
      if (std::abs(den) < kNdviDenomEps) {
        out.set_nodata(y, x);
        continue;
      }
      out.at(y, x) = std::clamp(float((n - r) / den), -1.0f, 1.0f);
    }
  return out;
}

ResampleMethod parse_resample_method(const std::string& name) {
  if (name == "nearest") return ResampleMethod::nearest;
  if (name == "bilinear") return ResampleMethod::bilinear;
  if (name == "bicubic") return ResampleMethod::bicubic;
  fail(ErrorCode::usage, "unknown resample method: " + name);
}

namespace {

// Keys cubic kernel, a = -0.5 (the common "bicubic").
inline double cubic_weight(double t) {
  t = std::abs(t);
  if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
  if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t - 2.0;
  return 0.0;
}

struct AxisTaps {
  std::vector<int> first;       // index of first source sample per output index
  std::vector<double> weights;  // n_taps weights per output index
  int n_taps;
};

AxisTaps make_taps(const GeoTransform& tgt, const GeoTransform& src, int out_extent,
                   int src_extent, bool x_axis, ResampleMethod m) {
  AxisTaps taps;
  taps.n_taps = m == ResampleMethod::nearest ? 1 : (m == ResampleMethod::bilinear ? 2 : 4);
  taps.first.resize(size_t(out_extent));
  taps.weights.assign(size_t(out_extent) * taps.n_taps, 0.0);
  for (int o = 0; o < out_extent; ++o) {
    const double map = x_axis ? tgt.px_to_map_x(o) : tgt.px_to_map_y(o);
    const double u = x_axis ? src.map_to_px_x(map) : src.map_to_px_y(map);
    double* w = taps.weights.data() + size_t(o) * taps.n_taps;
    if (m == ResampleMethod::nearest) {
      taps.first[size_t(o)] = int(std::floor(u + 0.5));
      w[0] = 1.0;
    } else if (m == ResampleMethod::bilinear) {
      const int i0 = int(std::floor(u));
      const double f = u - i0;
      taps.first[size_t(o)] = i0;
      w[0] = 1.0 - f;
      w[1] = f;
    } else {
      const int i0 = int(std::floor(u));
      taps.first[size_t(o)] = i0 - 1;
      for (int i = 0; i < 4; ++i) w[i] = cubic_weight(u - (i0 - 1 + i));
    }
    (void)src_extent;
  }
  return taps;
}

constexpr double kWeightEps = 1e-12;

inline void resample_row(const Raster& src, const AxisTaps& tx, const AxisTaps& ty,
                         int y, Raster& out) {
  const int nt = tx.n_taps;
  const int y0 = ty.first[size_t(y)];
  const double* wy = ty.weights.data() + size_t(y) * nt;
  for (int x = 0; x < out.width(); ++x) {
    const int x0 = tx.first[size_t(x)];
    const double* wx = tx.weights.data() + size_t(x) * nt;
    double acc = 0.0;
    bool bad = false;
    for (int j = 0; j < nt && !bad; ++j) {
      if (std::abs(wy[j]) < kWeightEps) continue;
      const int sy = y0 + j;
      for (int i = 0; i < nt; ++i) {
        if (std::abs(wx[i]) < kWeightEps) continue;
        const int sx = x0 + i;
        if (sy < 0 || sy >= src.height() || sx < 0 || sx >= src.width() ||
            !src.valid(sy, sx)) {
          bad = true;
          break;
        }
        acc += wy[j] * wx[i] * src.at(sy, sx);
      }
    }
    if (bad)
      out.set_nodata(y, x);
    else
      out.at(y, x) = float(acc);
  }
}

Raster resample_impl(const Raster& src, const GeoTransform& tgt, int width, int height,
                     ResampleMethod m, bool parallel) {
  if (src.bands() != 1) fail(ErrorCode::usage, "resample: single-band only");
  if (width <= 0 || height <= 0 || tgt.pixel_size_x <= 0 || tgt.pixel_size_y == 0)
    fail(ErrorCode::usage, "resample: invalid target grid");
  if (tgt == src.geo() && width == src.width() && height == src.height()) return src;

  auto span = [](double o, double s, int n) {
    return std::pair<double, double>{std::min(o, o + s * n), std::max(o, o + s * n)};
  };
  auto [sx0, sx1] = span(src.geo().origin_x, src.geo().pixel_size_x, src.width());
  auto [sy0, sy1] = span(src.geo().origin_y, src.geo().pixel_size_y, src.height());
  auto [tx0, tx1] = span(tgt.origin_x, tgt.pixel_size_x, width);
  auto [ty0, ty1] = span(tgt.origin_y, tgt.pixel_size_y, height);
  if (tx1 <= sx0 || tx0 >= sx1 || ty1 <= sy0 || ty0 >= sy1)
    fail(ErrorCode::grid_mismatch, "resample: empty overlap with source extent");

  AxisTaps tx = make_taps(tgt, src.geo(), width, src.width(), true, m);
  AxisTaps ty = make_taps(tgt, src.geo(), height, src.height(), false, m);
  Raster out(width, height, 1, tgt);
  out.set_nodata_value(src.nodata_value());

  if (m == ResampleMethod::nearest) {
    auto one_row = [&](int y) {
      const int sy = ty.first[size_t(y)];
      for (int x = 0; x < width; ++x) {
        const int sx = tx.first[size_t(x)];
        if (sy < 0 || sy >= src.height() || sx < 0 || sx >= src.width() ||
            !src.valid(sy, sx))
          out.set_nodata(y, x);
        else
          out.at(y, x) = src.at(sy, sx);
      }
    };
    if (parallel) {
#pragma omp parallel for schedule(static)
      for (int y = 0; y < height; ++y) one_row(y);
    } else {
      for (int y = 0; y < height; ++y) one_row(y);
    }
    return out;
  }

  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) resample_row(src, tx, ty, y, out);
  } else {
    for (int y = 0; y < height; ++y) resample_row(src, tx, ty, y, out);
  }
  return out;
}

}  // namespace

Raster resample(const Raster& src, const GeoTransform& target_geo, int width,
                int height, ResampleMethod method) {
  return resample_impl(src, target_geo, width, height, method, true);
}

Raster serial::resample(const Raster& src, const GeoTransform& target_geo, int width,
                        int height, ResampleMethod method) {
  return resample_impl(src, target_geo, width, height, method, false);
}

Raster apply_masks(const Raster& r, const QualityMask& quality, const Raster& cropland) {
  if (quality.width != r.width() || quality.height != r.height() ||
      !(quality.geo == r.geo()))
    fail(ErrorCode::grid_mismatch, "apply_masks: quality mask not co-gridded");
  if (!cropland.co_gridded_with(r))
    fail(ErrorCode::grid_mismatch, "apply_masks: cropland mask not co-gridded");
  Raster out = r;
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x) {
      const bool crop = cropland.valid(y, x) && cropland.at(y, x) != 0.0f;
      if (quality.at(y, x) != 0 || !crop) out.set_nodata(y, x);
    }
  return out;
}

Raster shift_raster(const Raster& r, double dx, double dy) {
  if (r.bands() != 1) fail(ErrorCode::usage, "shift_raster: single-band only");
  Raster out(r.width(), r.height(), 1, r.geo());
  out.set_nodata_value(r.nodata_value());
#pragma omp parallel for schedule(static)
  for (int y = 0; y < r.height(); ++y) {
    const double v = y - dy;
    const int y0 = int(std::floor(v));
    const double fy = v - y0;
    for (int x = 0; x < r.width(); ++x) {
      const double u = x - dx;
      const int x0 = int(std::floor(u));
      const double fx = u - x0;
      const double wts[2][2] = {{(1 - fy) * (1 - fx), (1 - fy) * fx},
                                {fy * (1 - fx), fy * fx}};
      double acc = 0.0;
      bool bad = false;
      for (int j = 0; j < 2 && !bad; ++j)
        for (int i = 0; i < 2; ++i) {
          if (wts[j][i] < kWeightEps) continue;
          const int sy = y0 + j, sx = x0 + i;
          if (sy < 0 || sy >= r.height() || sx < 0 || sx >= r.width() ||
              !r.valid(sy, sx)) {
            bad = true;
            break;
          }
          acc += wts[j][i] * r.at(sy, sx);
        }
      if (bad)
        out.set_nodata(y, x);
      else
        out.at(y, x) = float(acc);
    }
  }
  return out;
}

std::vector<ChipOrigin> extract_chips(const std::vector<const Raster*>& rasters,
                                      int chip_size, int stride,
                                      double max_nodata_fraction) {
  std::vector<ChipOrigin> chips;
  if (rasters.empty() || chip_size <= 0 || stride <= 0) return chips;
  const Raster& first = *rasters[0];
  for (const Raster* r : rasters)
    if (!r->co_gridded_with(first))
      fail(ErrorCode::grid_mismatch, "extract_chips: rasters not co-gridded");
  const int w = first.width(), h = first.height();
  if (chip_size > w || chip_size > h) return chips;

  // Summed-area tables of the invalid masks make the window counts O(1).
  const size_t n = rasters.size();
  std::vector<std::vector<int64_t>> sat(n);
  for (size_t k = 0; k < n; ++k) {
    auto& s = sat[k];
    s.assign(size_t(w + 1) * (h + 1), 0);
    const auto& m = rasters[k]->mask();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        s[size_t(y + 1) * (w + 1) + (x + 1)] = int64_t(m[size_t(y) * w + x]) +
                                               s[size_t(y) * (w + 1) + (x + 1)] +
                                               s[size_t(y + 1) * (w + 1) + x] -
                                               s[size_t(y) * (w + 1) + x];
  }
  const double max_bad = max_nodata_fraction * chip_size * chip_size;
  for (int y = 0; y + chip_size <= h; y += stride)
    for (int x = 0; x + chip_size <= w; x += stride) {
      bool ok = true;
      for (size_t k = 0; k < n && ok; ++k) {
        const auto& s = sat[k];
        const int64_t bad = s[size_t(y + chip_size) * (w + 1) + (x + chip_size)] -
                            s[size_t(y) * (w + 1) + (x + chip_size)] -
                            s[size_t(y + chip_size) * (w + 1) + x] +
                            s[size_t(y) * (w + 1) + x];
        ok = double(bad) <= max_bad;
      }
      if (ok) chips.push_back({x, y});
    }
  return chips;
}

Raster crop(const Raster& r, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || x0 + width > r.width() || y0 + height > r.height())
    fail(ErrorCode::usage, "crop: window out of bounds");
  GeoTransform geo = r.geo();
  geo.origin_x += x0 * geo.pixel_size_x;
  geo.origin_y += y0 * geo.pixel_size_y;
  Raster out(width, height, r.bands(), geo);
  out.set_nodata_value(r.nodata_value());
  for (int b = 0; b < r.bands(); ++b)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(y, x, b) = r.at(y0 + y, x0 + x, b);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.set_valid(y, x, r.valid(y0 + y, x0 + x));
  return out;
}

MapStyle parse_map_style(const std::string& name) {
  if (name == "damage-classes") return MapStyle::damage_classes;
  if (name == "ndvi-diverging") return MapStyle::ndvi_diverging;
  fail(ErrorCode::usage, "unknown map style: " + name);
}

namespace {
constexpr uint8_t kGray[3] = {128, 128, 128};
constexpr uint8_t kDamagePalette[3][3] = {{34, 139, 34}, {255, 140, 0}, {178, 34, 34}};
constexpr double kNdviLow[3] = {140, 81, 10};
constexpr double kNdviMid[3] = {245, 245, 245};
constexpr double kNdviHigh[3] = {26, 152, 80};
}  // namespace

std::vector<uint8_t> render_map(const Raster& r, MapStyle style) {
  if (r.bands() != 1) fail(ErrorCode::usage, "render_map: single-band only");
  std::string header = "P6\n" + std::to_string(r.width()) + " " +
                       std::to_string(r.height()) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + r.pixel_count() * 3);
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x) {
      uint8_t px[3];
      if (!r.valid(y, x)) {
        std::memcpy(px, kGray, 3);
      } else if (style == MapStyle::damage_classes) {
        const int cls = std::clamp(int(std::lround(r.at(y, x))), 0, 2);
        std::memcpy(px, kDamagePalette[cls], 3);
      } else {
        const double t = (std::clamp(double(r.at(y, x)), -1.0, 1.0) + 1.0) / 2.0;
        for (int c = 0; c < 3; ++c) {
          const double v = t <= 0.5
                               ? kNdviLow[c] + (kNdviMid[c] - kNdviLow[c]) * (t / 0.5)
                               : kNdviMid[c] + (kNdviHigh[c] - kNdviMid[c]) * ((t - 0.5) / 0.5);
          px[c] = uint8_t(std::lround(v));
        }
      }
      out.insert(out.end(), px, px + 3);
    }
  return out;
}

}  // namespace flnet
