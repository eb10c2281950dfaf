#include "flnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "flnet/change.hpp"
#include "flnet/kernels.hpp"
#include "flnet/rng.hpp"

namespace flnet {

void SceneSpec::validate() const {
  if (hr_size < 32) fail(ErrorCode::usage, "scene: hr_size too small");
  if (scale < 2) fail(ErrorCode::usage, "scene: scale must be >= 2");
  if (hr_size % scale != 0)
    fail(ErrorCode::usage, "scene: hr_size must be divisible by the scale");
  if (parcel_count < 2) fail(ErrorCode::usage, "scene: parcel_count must be >= 2");
  if (damage_fraction < 0.0 || damage_fraction > 1.0)
    fail(ErrorCode::usage, "scene: damage_fraction outside [0,1]");
  if (cloud_fraction < 0.0 || cloud_fraction > 0.9)
    fail(ErrorCode::usage, "scene: cloud_fraction outside [0,0.9]");
}

namespace {

constexpr double kCroplandShare = 0.85;

QualityMask cloud_mask(int size, const GeoTransform& geo, double fraction, Rng rng) {
  QualityMask q(size, size, geo);
  if (fraction <= 0.0) return q;
  const size_t target = size_t(fraction * size * size);
  size_t covered = 0;
  int guard = 0;
  while (covered < target && guard++ < 10000) {
    const double cx = rng.uniform(0.0, size);
    const double cy = rng.uniform(0.0, size);
    const double rad = rng.uniform(0.02, 0.06) * size;
    const int x0 = std::max(0, int(cx - rad) - 1), x1 = std::min(size - 1, int(cx + rad) + 1);
    const int y0 = std::max(0, int(cy - rad) - 1), y1 = std::min(size - 1, int(cy + rad) + 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        if (dx * dx + dy * dy > rad * rad) continue;
        uint8_t& b = q.at(y, x);
        if (!(b & kQualityCloud)) {
          b |= kQualityCloud;
          ++covered;
        }
      }
  }
  return q;
}

QualityMask degrade_quality(const QualityMask& hr, int r) {
  QualityMask lr(hr.width / r, hr.height / r,
                 GeoTransform{hr.geo.origin_x, hr.geo.origin_y, hr.geo.pixel_size_x * r,
                              hr.geo.pixel_size_y * r});
  for (int y = 0; y < lr.height; ++y)
    for (int x = 0; x < lr.width; ++x) {
      uint8_t bits = 0;
      for (int j = 0; j < r; ++j)
        for (int i = 0; i < r; ++i) bits |= hr.at(y * r + j, x * r + i);
      lr.at(y, x) = bits;
    }
  return lr;
}

}  // namespace

Raster degrade_to_lr(const Raster& hr, int r, double blur_sigma, double noise_sigma,
                     uint64_t seed) {
  if (hr.bands() != 1) fail(ErrorCode::usage, "degrade_to_lr: single-band input");
  if (r < 1 || hr.width() % r || hr.height() % r)
    fail(ErrorCode::usage, "degrade_to_lr: dims not divisible by the scale");
  const int lw = hr.width() / r, lh = hr.height() / r;

  std::vector<float> blurred(hr.pixel_count());
  kern::gaussian_blur(hr.data().data(), blurred.data(), hr.width(), hr.height(),
                      blur_sigma * r);
  Raster lr(lw, lh, 1,
            GeoTransform{hr.geo().origin_x, hr.geo().origin_y,
                         hr.geo().pixel_size_x * r, hr.geo().pixel_size_y * r});
  lr.set_nodata_value(hr.nodata_value());
  kern::box_downsample(blurred.data(), lr.data().data(), lw, lh, r);

  Rng rng(seed);
  if (noise_sigma > 0.0)
    for (auto& v : lr.data())
      v = float(std::clamp(double(v) + rng.normal(0.0, noise_sigma), -1.0, 1.0));
  else
    for (auto& v : lr.data()) v = std::clamp(v, -1.0f, 1.0f);

  // Propagate nodata: a coarse pixel is invalid if any fine pixel under it is.
  for (int y = 0; y < lh; ++y)
    for (int x = 0; x < lw; ++x) {
      bool bad = false;
      for (int j = 0; j < r && !bad; ++j)
        for (int i = 0; i < r; ++i)
          if (!hr.valid(y * r + j, x * r + i)) {
            bad = true;
            break;
          }
      if (bad) lr.set_nodata(y, x);
    }
  return lr;
}

SceneBundle generate_scene(const SceneSpec& spec) {
  spec.validate();
  const int n = spec.hr_size;
  const GeoTransform geo{0.0, 0.0, spec.hr_pixel, spec.hr_pixel};
  Rng root(spec.seed);
  Rng seed_rng = root.fork(1);
  Rng assign_rng = root.fork(2);
  Rng texture_rng = root.fork(3);
  Rng strip_rng = root.fork(4);
  Rng cloud_pre_rng = root.fork(5);
  Rng cloud_post_rng = root.fork(6);
  Rng noise_pre_rng = root.fork(7);
  Rng noise_post_rng = root.fork(8);
  Rng lr_seed_rng = root.fork(9);

  // Voronoi parcels.
  std::vector<double> sx(size_t(spec.parcel_count)), sy(sx.size());
  for (size_t i = 0; i < sx.size(); ++i) {
    sx[i] = seed_rng.uniform(0.0, n);
    sy[i] = seed_rng.uniform(0.0, n);
  }
  std::vector<int32_t> parcel(size_t(n) * n);
  kern::voronoi_fill(sx.data(), sy.data(), spec.parcel_count, n, n, parcel.data());

  // Per-parcel states: cropland membership, base NDVI, post-event drop.
  std::vector<uint8_t> is_crop(size_t(spec.parcel_count));
  std::vector<float> base(size_t(spec.parcel_count));
  std::vector<float> drop(size_t(spec.parcel_count));
  for (int p = 0; p < spec.parcel_count; ++p) {
    is_crop[size_t(p)] = assign_rng.uniform() < kCroplandShare;
    base[size_t(p)] = float(is_crop[size_t(p)] ? assign_rng.uniform(0.55, 0.9)
                                               : assign_rng.uniform(0.05, 0.3));
    float d = float(assign_rng.uniform(-0.06, 0.06));  // undisturbed drift
    if (is_crop[size_t(p)] && assign_rng.uniform() < spec.damage_fraction)
      d = assign_rng.uniform() < 0.5 ? float(assign_rng.uniform(0.47, 0.68))
                                     : float(assign_rng.uniform(0.22, 0.33));
    drop[size_t(p)] = d;
  }

  // Narrow full-damage strips (drainage-line style), width 1-3 px.
  std::vector<float> strip_drop(size_t(n) * n, 0.0f);
  for (int s = 0; s < spec.narrow_feature_count; ++s) {
    const double cx = strip_rng.uniform(0.1, 0.9) * n;
    const double cy = strip_rng.uniform(0.1, 0.9) * n;
    const double ang = strip_rng.uniform(0.0, 3.141592653589793);
    const double len = strip_rng.uniform(0.4, 0.9) * n;
    const double half_w = 0.5 * (1.0 + strip_rng.below(3));  // widths 1..3
    const float d = float(strip_rng.uniform(0.5, 0.68));
    const double ux = std::cos(ang), uy = std::sin(ang);
    const int x0 = std::max(0, int(cx - len / 2 - 2)), x1 = std::min(n - 1, int(cx + len / 2 + 2));
    const int y0 = std::max(0, int(cy - len / 2 - 2)), y1 = std::min(n - 1, int(cy + len / 2 + 2));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double rx = x + 0.5 - cx, ry = y + 0.5 - cy;
        const double along = rx * ux + ry * uy;
        const double across = std::abs(-rx * uy + ry * ux);
        if (std::abs(along) <= len / 2 && across <= half_w)
          strip_drop[size_t(y) * n + x] = std::max(strip_drop[size_t(y) * n + x], d);
      }
  }

  SceneBundle b;
  b.scale = spec.scale;
  b.pre_hr = Raster(n, n, 1, geo);
  b.post_hr = Raster(n, n, 1, geo);
  b.cropland = Raster(n, n, 1, geo);
  b.parcel_index = Raster(n, n, 1, geo);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const size_t i = size_t(y) * n + x;
      const int32_t p = parcel[i];
      const float tex = float(texture_rng.uniform(-0.03, 0.03));
      const float pre = base[size_t(p)] + tex + float(noise_pre_rng.normal(0.0, spec.noise_sigma));
      const float d = std::max(drop[size_t(p)], strip_drop[i]);
      const float post = base[size_t(p)] - d + tex + float(noise_post_rng.normal(0.0, spec.noise_sigma));
      b.pre_hr.at(y, x) = std::clamp(pre, -1.0f, 1.0f);
      b.post_hr.at(y, x) = std::clamp(post, -1.0f, 1.0f);
      b.cropland.at(y, x) = is_crop[size_t(p)] ? 1.0f : 0.0f;
      b.parcel_index.at(y, x) = float(p);
    }

  b.truth_labels = morphological_smooth(
      threshold_label(delta_ndvi(b.pre_hr, b.post_hr), ThresholdConfig{}), 3);

  b.quality_pre_hr = cloud_mask(n, geo, spec.cloud_fraction, cloud_pre_rng);
  b.quality_post_hr = cloud_mask(n, geo, spec.cloud_fraction, cloud_post_rng);
  b.quality_pre_lr = degrade_quality(b.quality_pre_hr, spec.scale);
  b.quality_post_lr = degrade_quality(b.quality_post_hr, spec.scale);

  b.pre_lr = degrade_to_lr(b.pre_hr, spec.scale, spec.blur_sigma, spec.noise_sigma,
                           lr_seed_rng.next_u64());
  b.post_lr = degrade_to_lr(b.post_hr, spec.scale, spec.blur_sigma, spec.noise_sigma,
                            lr_seed_rng.next_u64());
  return b;
}

// ------------------------------------------------------------- persistence

namespace {
namespace fs = std::filesystem;

const char* kFiles[] = {"pre_hr", "post_hr", "pre_lr", "post_lr", "truth_labels",
                        "cropland", "parcel_index", "quality_pre_hr",
                        "quality_post_hr", "quality_pre_lr", "quality_post_lr"};
}  // namespace

void save_bundle(const std::string& dir, const SceneBundle& b, const SceneSpec& spec) {
  fs::create_directories(dir);
  const Raster* rasters[] = {&b.pre_hr, &b.post_hr, &b.pre_lr, &b.post_lr,
                             &b.truth_labels, &b.cropland, &b.parcel_index};
  for (int i = 0; i < 7; ++i)
    write_raster(*rasters[i], dir + "/" + kFiles[i] + ".fr1");
  const QualityMask* masks[] = {&b.quality_pre_hr, &b.quality_post_hr, &b.quality_pre_lr,
                                &b.quality_post_lr};
  for (int i = 0; i < 4; ++i)
    write_raster(masks[i]->to_raster(), dir + "/" + kFiles[7 + i] + ".fr1");

  std::string m;
  m += "seed=" + std::to_string(spec.seed) + "\n";
  m += "hr_size=" + std::to_string(spec.hr_size) + "\n";
  m += "hr_pixel=" + std::to_string(spec.hr_pixel) + "\n";
  m += "parcel_count=" + std::to_string(spec.parcel_count) + "\n";
  m += "damage_fraction=" + std::to_string(spec.damage_fraction) + "\n";
  m += "narrow_feature_count=" + std::to_string(spec.narrow_feature_count) + "\n";
  m += "cloud_fraction=" + std::to_string(spec.cloud_fraction) + "\n";
  m += "noise_sigma=" + std::to_string(spec.noise_sigma) + "\n";
  m += "scale=" + std::to_string(spec.scale) + "\n";
  m += "blur_sigma=" + std::to_string(spec.blur_sigma) + "\n";
  for (const char* f : kFiles) m += std::string(f) + "=" + f + ".fr1\n";
  write_file_atomic(dir + "/manifest.txt", m.data(), m.size());
}

SceneBundle load_bundle(const std::string& dir) {
  std::ifstream in(dir + "/manifest.txt");
  if (!in) fail(ErrorCode::missing_file, "bundle manifest not found in " + dir);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto file = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) fail(ErrorCode::bad_format, std::string("manifest missing ") + key);
    return dir + "/" + it->second;
  };
  SceneBundle b;
  b.scale = kv.count("scale") ? std::stoi(kv["scale"]) : 3;
  b.pre_hr = read_raster(file("pre_hr"));
  b.post_hr = read_raster(file("post_hr"));
  b.pre_lr = read_raster(file("pre_lr"));
  b.post_lr = read_raster(file("post_lr"));
  b.truth_labels = read_raster(file("truth_labels"));
  b.cropland = read_raster(file("cropland"));
  b.parcel_index = read_raster(file("parcel_index"));
  b.quality_pre_hr = QualityMask::from_raster(read_raster(file("quality_pre_hr")));
  b.quality_post_hr = QualityMask::from_raster(read_raster(file("quality_post_hr")));
  b.quality_pre_lr = QualityMask::from_raster(read_raster(file("quality_pre_lr")));
  b.quality_post_lr = QualityMask::from_raster(read_raster(file("quality_post_lr")));
  return b;
}

}  // namespace flnet
