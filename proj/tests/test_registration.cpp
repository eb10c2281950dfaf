#include <doctest.h>

#include <cmath>

#include "flnet/raster_ops.hpp"
#include "flnet/registration.hpp"
#include "test_util.hpp"

using namespace flnet;

TEST_CASE("self-registration returns zero shift with a perfect score") {
  const Raster r = testutil::wave_field(96, 96, 1);
  const Registration reg = coregister_translation(r, r, 8);
  CHECK(reg.dx == 0.0);
  CHECK(reg.dy == 0.0);
  CHECK(reg.score == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("integer displacements are recovered exactly") {
  // displacement (a, b) applied to the moving image; the correction returned
  // must be (-a, -b).
  const int shifts[][2] = {{3, -2}, {-8, 8}, {5, 0}, {0, -7}, {1, 1}};
  int scene = 0;
  for (const auto& s : shifts) {
    const Raster ref = testutil::wave_field(96, 96, 40 + uint64_t(scene++));
    const Raster mov = shift_raster(ref, s[0], s[1]);
    const Registration reg = coregister_translation(ref, mov, 8);
    CHECK(reg.dx == double(-s[0]));
    CHECK(reg.dy == double(-s[1]));
    CHECK(reg.score > 0.999);
  }
}

TEST_CASE("a 1.5-pixel displacement is recovered within half a pixel") {
  for (uint64_t seed = 60; seed < 66; ++seed) {
    const Raster ref = testutil::wave_field(96, 96, seed);
    const Raster mov = shift_raster(ref, 1.5, 0.0);
    const Registration reg = coregister_translation(ref, mov, 4);
    CHECK(std::abs(-reg.dx - 1.5) <= 0.5);
    CHECK(std::abs(reg.dy) <= 0.5);
  }
}

TEST_CASE("the shift-and-recover invariant holds across random integer shifts") {
  Rng rng(123);
  for (int trial = 0; trial < 8; ++trial) {
    const int a = int(rng.below(17)) - 8;
    const int b = int(rng.below(17)) - 8;
    const Raster ref = testutil::wave_field(96, 96, 500 + uint64_t(trial));
    const Registration reg = coregister_translation(ref, shift_raster(ref, a, b), 8);
    CHECK(reg.dx == double(-a));
    CHECK(reg.dy == double(-b));
  }
}

TEST_CASE("insufficient valid overlap is refused") {
  Raster ref = testutil::wave_field(200, 200, 9);
  Raster mov = testutil::wave_field(200, 200, 9);
  // moving keeps a 70x70 valid block: enough pixels to try, but every shift
  // overlaps less than 25% of the frame
  for (int y = 0; y < 200; ++y)
    for (int x = 0; x < 200; ++x)
      if (y >= 70 || x >= 70) mov.set_nodata(y, x);
  CHECK_THROWS_AS(coregister_translation(ref, mov, 4), Error);

  // and fewer than 64x64 valid pixels is refused outright
  Raster tiny = testutil::wave_field(60, 60, 10);
  CHECK_THROWS_AS(coregister_translation(tiny, tiny, 4), Error);
}

TEST_CASE("score reflects agreement strength") {
  const Raster ref = testutil::wave_field(96, 96, 11);
  Raster noisy = ref;
  Rng rng(77);
  for (auto& v : noisy.data()) v += float(rng.normal(0.0, 0.05));
  const Registration reg = coregister_translation(ref, noisy, 4);
  CHECK(reg.score > 0.9);
  CHECK(reg.score < 1.0);
  CHECK(std::abs(reg.dx) <= 0.5);
  CHECK(std::abs(reg.dy) <= 0.5);
}
