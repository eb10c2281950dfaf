#include <doctest.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <queue>

#include "flnet/change.hpp"
#include "flnet/rng.hpp"
#include "test_util.hpp"

using namespace flnet;

namespace {

Raster labels_from(const std::vector<int>& grid, int w, int h,
                   const std::vector<uint8_t>& invalid = {}) {
  Raster r(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!invalid.empty() && invalid[size_t(y) * w + x])
        r.set_nodata(y, x);
      else
        r.at(y, x) = float(grid[size_t(y) * w + x]);
    }
  return r;
}

// Exhaustive window-vote reference, written against the documented contract
// only: majority of valid labels, ties keep the center, then lowest class.
Raster smooth_reference(const Raster& in, int window) {
  const int w = in.width(), h = in.height(), r = window / 2;
  Raster out = in;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!in.valid(y, x)) continue;
      int counts[3] = {0, 0, 0};
      for (int j = y - r; j <= y + r; ++j)
        for (int i = x - r; i <= x + r; ++i) {
          if (j < 0 || j >= h || i < 0 || i >= w || !in.valid(j, i)) continue;
          ++counts[int(in.at(j, i))];
        }
      const int mx = std::max({counts[0], counts[1], counts[2]});
      const int center = int(in.at(y, x));
      int pick = counts[center] == mx ? center : 0;
      if (counts[center] != mx)
        for (int c = 0; c < 3; ++c)
          if (counts[c] == mx) {
            pick = c;
            break;
          }
      out.at(y, x) = float(pick);
    }
  return out;
}

// Flood-fill reference for small-object removal, simultaneous semantics.
Raster removal_reference(const Raster& in, int min_size) {
  const int w = in.width(), h = in.height();
  Raster out = in;
  std::vector<int> comp(size_t(w) * h, -1);
  std::vector<std::vector<size_t>> members;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t s = size_t(y) * w + x;
      if (!in.valid(y, x) || comp[s] >= 0) continue;
      const int id = int(members.size());
      members.push_back({});
      std::queue<size_t> q;
      q.push(s);
      comp[s] = id;
      while (!q.empty()) {
        const size_t p = q.front();
        q.pop();
        members[size_t(id)].push_back(p);
        const int py = int(p) / w, px = int(p) % w;
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = py + dy[k], nx = px + dx[k];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const size_t np = size_t(ny) * w + nx;
          if (comp[np] >= 0 || !in.valid(ny, nx)) continue;
          if (in.at(ny, nx) != in.at(py, px)) continue;
          comp[np] = id;
          q.push(np);
        }
      }
    }
  for (const auto& m : members) {
    if (int(m.size()) >= min_size) continue;
    int64_t border[3] = {0, 0, 0};
    for (size_t p : m) {
      const int py = int(p) / w, px = int(p) % w;
      const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const int ny = py + dy[k], nx = px + dx[k];
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        if (!in.valid(ny, nx) || comp[size_t(ny) * w + nx] == comp[p]) continue;
        ++border[int(in.at(ny, nx))];
      }
    }
    const int64_t mx = std::max({border[0], border[1], border[2]});
    if (mx == 0) continue;
    const int ties = (border[0] == mx) + (border[1] == mx) + (border[2] == mx);
    int pick = 0;
    if (ties == 1)
      for (int c = 0; c < 3; ++c)
        if (border[c] == mx) pick = c;
    for (size_t p : m) out.at(int(p) / w, int(p) % w) = float(pick);
  }
  return out;
}

}  // namespace

TEST_CASE("delta_ndvi arithmetic and mask propagation") {
  Raster pre(2, 2), post(2, 2);
  pre.at(0, 0) = 0.8f;
  post.at(0, 0) = 0.3f;
  pre.at(0, 1) = 0.5f;
  post.at(0, 1) = 0.5f;
  pre.at(1, 0) = 0.2f;
  post.set_nodata(1, 0);
  const Raster d = delta_ndvi(pre, post);
  CHECK(d.at(0, 0) == doctest::Approx(0.5));
  CHECK(d.at(0, 1) == 0.0f);
  CHECK_FALSE(d.valid(1, 0));

  const Raster z = delta_ndvi(pre, pre);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      if (z.valid(y, x)) CHECK(z.at(y, x) == 0.0f);

  Raster offgrid(2, 2, 1, GeoTransform{5, 5, 1, 1});
  CHECK_THROWS_AS(delta_ndvi(pre, offgrid), Error);
}

TEST_CASE("threshold_label classes and boundary rule") {
  ThresholdConfig cfg;  // 0.15 / 0.40
  Raster d(5, 1);
  d.at(0, 0) = 0.5f;
  d.at(0, 1) = 0.2f;
  d.at(0, 2) = -0.3f;
  d.at(0, 3) = 0.40f;  // exactly t_full
  d.at(0, 4) = 0.15f;  // exactly t_partial
  const Raster lbl = threshold_label(d, cfg);
  CHECK(lbl.at(0, 0) == 2.0f);
  CHECK(lbl.at(0, 1) == 1.0f);
  CHECK(lbl.at(0, 2) == 0.0f);
  CHECK(lbl.at(0, 3) == 2.0f);
  CHECK(lbl.at(0, 4) == 1.0f);

  ThresholdConfig bad;
  bad.t_partial = 0.5f;
  bad.t_full = 0.4f;
  CHECK_THROWS_AS(threshold_label(d, bad), Error);
}

TEST_CASE("threshold_label is monotone in delta") {
  Rng rng(5);
  ThresholdConfig cfg;
  Raster d(16, 16);
  for (auto& v : d.data()) v = float(rng.uniform(-1.0, 1.0));
  Raster d2 = d;
  for (auto& v : d2.data()) v += 0.2f;
  const Raster a = threshold_label(d, cfg);
  const Raster b = threshold_label(d2, cfg);
  for (size_t i = 0; i < a.data().size(); ++i) CHECK(b.data()[i] >= a.data()[i]);
}

TEST_CASE("morphological smoothing examples") {
  SUBCASE("single full pixel in a no-damage field flips") {
    std::vector<int> g(9, 0);
    g[4] = 2;
    const Raster out = morphological_smooth(labels_from(g, 3, 3), 3);
    CHECK(out.at(1, 1) == 0.0f);
  }
  SUBCASE("uniform raster is a fixed point") {
    const Raster in = labels_from(std::vector<int>(25, 1), 5, 5);
    CHECK(morphological_smooth(in, 3).identical_to(in));
  }
  SUBCASE("checkerboard settles within two applications") {
    std::vector<int> g(64);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) g[size_t(y) * 8 + x] = (x + y) % 2 ? 2 : 0;
    const Raster once = morphological_smooth(labels_from(g, 8, 8), 3);
    const Raster twice = morphological_smooth(once, 3);
    const Raster thrice = morphological_smooth(twice, 3);
    CHECK(thrice.identical_to(twice));
  }
  SUBCASE("nodata pixels never change and never vote") {
    std::vector<int> g(9, 2);
    std::vector<uint8_t> inv(9, 0);
    inv[4] = 1;
    Raster in = labels_from(g, 3, 3, inv);
    const Raster out = morphological_smooth(in, 3);
    CHECK_FALSE(out.valid(1, 1));
    CHECK(out.at(0, 0) == 2.0f);
  }
}

TEST_CASE("small object removal examples") {
  SUBCASE("five-pixel blob below the threshold flips to the surround") {
    std::vector<int> g(100, 0);
    for (int i = 0; i < 5; ++i) g[size_t(4) * 10 + 3 + i] = 2;
    const Raster out = small_object_removal(labels_from(g, 10, 10), 10);
    for (int i = 0; i < 5; ++i) CHECK(out.at(4, 3 + i) == 0.0f);
  }
  SUBCASE("ten-pixel blob at min_size 10 is kept") {
    std::vector<int> g(100, 0);
    for (int i = 0; i < 10; ++i) g[size_t(4) * 10 + i] = 2;
    const Raster out = small_object_removal(labels_from(g, 10, 10), 10);
    for (int i = 0; i < 10; ++i) CHECK(out.at(4, i) == 2.0f);
  }
}

TEST_CASE("randomized grids match the brute-force references exactly") {
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<int> g(32 * 32);
    std::vector<uint8_t> inv(g.size());
    for (auto& v : g) v = int(rng.below(3));
    for (auto& m : inv) m = rng.uniform() < 0.08;
    const Raster in = labels_from(g, 32, 32, inv);

    const Raster smoothed = morphological_smooth(in, 3);
    const Raster smoothed_ref = smooth_reference(in, 3);
    REQUIRE(smoothed.identical_to(smoothed_ref));

    const int min_size = 2 + int(rng.below(12));
    const Raster removed = small_object_removal(in, min_size);
    const Raster removed_ref = removal_reference(in, min_size);
    REQUIRE(removed.identical_to(removed_ref));
  }
}

TEST_CASE("label ops never invent classes or touch nodata") {
  Rng rng(23);
  std::vector<int> g(24 * 24);
  std::vector<uint8_t> inv(g.size());
  for (auto& v : g) v = rng.uniform() < 0.7 ? 0 : 2;  // class 1 absent
  for (auto& m : inv) m = rng.uniform() < 0.1;
  const Raster in = labels_from(g, 24, 24, inv);
  for (const Raster& out :
       {morphological_smooth(in, 3), small_object_removal(in, 5)}) {
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x) {
        CHECK(out.valid(y, x) == in.valid(y, x));
        if (out.valid(y, x)) CHECK(out.at(y, x) != 1.0f);
      }
  }
}

TEST_CASE("label rasters round-trip through the container exactly") {
  Rng rng(31);
  std::vector<int> g(16 * 16);
  std::vector<uint8_t> inv(g.size());
  for (auto& v : g) v = int(rng.below(3));
  for (auto& m : inv) m = rng.uniform() < 0.2;
  const Raster in = labels_from(g, 16, 16, inv);
  const std::string path = testutil::scratch_dir("labels") + "/l.fr1";
  write_raster(in, path);
  CHECK(read_raster(path).identical_to(in));
}
