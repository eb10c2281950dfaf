#include "flnet/change.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "flnet/kernels.hpp"

namespace flnet {

namespace {

// Labels as int32 with invalid pixels zeroed; validates the 3-class set.
std::vector<int32_t> label_grid(const Raster& labels) {
  std::vector<int32_t> out(labels.pixel_count(), 0);
  for (int y = 0; y < labels.height(); ++y)
    for (int x = 0; x < labels.width(); ++x) {
      if (!labels.valid(y, x)) continue;
      const float v = labels.at(y, x);
      if (v != 0.0f && v != 1.0f && v != 2.0f)
        fail(ErrorCode::bad_format, "label raster holds a value outside {0,1,2}");
      out[size_t(y) * labels.width() + x] = int32_t(v);
    }
  return out;
}

}  // namespace

Raster delta_ndvi(const Raster& pre, const Raster& post) {
  if (!pre.co_gridded_with(post) || pre.bands() != 1 || post.bands() != 1)
    fail(ErrorCode::grid_mismatch, "delta_ndvi: inputs must be co-gridded single-band");
  Raster out(pre.width(), pre.height(), 1, pre.geo());
  for (int y = 0; y < pre.height(); ++y)
    for (int x = 0; x < pre.width(); ++x) {
      if (!pre.valid(y, x) || !post.valid(y, x))
        out.set_nodata(y, x);
      else
        out.at(y, x) = std::clamp(pre.at(y, x) - post.at(y, x), -2.0f, 2.0f);
    }
  return out;
}

Raster threshold_label(const Raster& delta, const ThresholdConfig& cfg) {
  cfg.validate();
  if (delta.bands() != 1) fail(ErrorCode::usage, "threshold_label: single-band input");
  Raster out(delta.width(), delta.height(), 1, delta.geo());
  for (int y = 0; y < delta.height(); ++y)
    for (int x = 0; x < delta.width(); ++x) {
      if (!delta.valid(y, x)) {
        out.set_nodata(y, x);
        continue;
      }
      const float d = delta.at(y, x);
      out.at(y, x) = d >= cfg.t_full    ? float(kLabelFull)
                     : d >= cfg.t_partial ? float(kLabelPartial)
                                          : float(kLabelNo);
    }
  return out;
}

Raster morphological_smooth(const Raster& labels, int window) {
  if (window < 1 || window % 2 == 0)
    fail(ErrorCode::usage, "morphological_smooth: window must be odd");
  auto grid = label_grid(labels);
  std::vector<int32_t> voted(grid.size());
  kern::majority_vote(grid.data(), labels.mask().data(), labels.width(),
                      labels.height(), window, 3, voted.data());
  Raster out = labels;
  for (int y = 0; y < labels.height(); ++y)
    for (int x = 0; x < labels.width(); ++x)
      if (labels.valid(y, x)) out.at(y, x) = float(voted[size_t(y) * labels.width() + x]);
  return out;
}

Raster small_object_removal(const Raster& labels, int min_size) {
  if (min_size < 1) fail(ErrorCode::usage, "small_object_removal: min_size < 1");
  const int w = labels.width(), h = labels.height();
  auto grid = label_grid(labels);
  const auto& mask = labels.mask();

  // BFS flood fill in row-major discovery order.
  std::vector<int32_t> comp(grid.size(), -1);
  std::vector<int64_t> comp_size;
  std::vector<size_t> queue;
  for (size_t start = 0; start < grid.size(); ++start) {
    if (mask[start] || comp[start] >= 0) continue;
    const int32_t id = int32_t(comp_size.size());
    const int32_t lab = grid[start];
    int64_t n = 0;
    comp[start] = id;
    queue.assign(1, start);
    while (!queue.empty()) {
      const size_t px = queue.back();
      queue.pop_back();
      ++n;
      const int y = int(px) / w, x = int(px) % w;
      const int ny[4] = {y - 1, y + 1, y, y};
      const int nx[4] = {x, x, x - 1, x + 1};
      for (int k = 0; k < 4; ++k) {
        if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
        const size_t q = size_t(ny[k]) * w + nx[k];
        if (mask[q] || comp[q] >= 0 || grid[q] != lab) continue;
        comp[q] = id;
        queue.push_back(q);
      }
    }
    comp_size.push_back(n);
  }

  // Mode of each small component's valid boundary neighbors (original labels).
  std::vector<std::array<int64_t, 3>> border(comp_size.size(), {0, 0, 0});
  for (size_t px = 0; px < grid.size(); ++px) {
    if (mask[px]) continue;
    const int32_t id = comp[px];
    if (comp_size[size_t(id)] >= min_size) continue;
    const int y = int(px) / w, x = int(px) % w;
    const int ny[4] = {y - 1, y + 1, y, y};
    const int nx[4] = {x, x, x - 1, x + 1};
    for (int k = 0; k < 4; ++k) {
      if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
      const size_t q = size_t(ny[k]) * w + nx[k];
      if (mask[q] || comp[q] == id) continue;
      ++border[size_t(id)][size_t(grid[q])];
    }
  }

  std::vector<int32_t> relabel(comp_size.size(), -1);
  for (size_t id = 0; id < comp_size.size(); ++id) {
    if (comp_size[id] >= min_size) continue;
    const auto& c = border[id];
    const int64_t mx = std::max({c[0], c[1], c[2]});
    if (mx == 0) continue;  // island in nodata, keep
    const int ties = (c[0] == mx) + (c[1] == mx) + (c[2] == mx);
    relabel[id] = ties > 1 ? kLabelNo : int32_t(std::max_element(c.begin(), c.end()) - c.begin());
  }

  Raster out = labels;
  for (size_t px = 0; px < grid.size(); ++px) {
    if (mask[px]) continue;
    const int32_t r = relabel[size_t(comp[px])];
    if (r >= 0) out.at(int(px) / w, int(px) % w) = float(r);
  }
  return out;
}

}  // namespace flnet
