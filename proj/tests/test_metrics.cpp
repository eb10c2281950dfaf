#include <doctest.h>

#include <cmath>
#include <limits>

#include "flnet/metrics.hpp"
#include "test_util.hpp"

using namespace flnet;

TEST_CASE("mse and psnr follow the formulas") {
  Raster x(8, 8, 1, {}, 0.2f);
  Raster y(8, 8, 1, {}, 0.0f);
  CHECK(mse(x, y) == doctest::Approx(0.04).epsilon(1e-7));
  CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-7));

  CHECK(psnr(x, x) == std::numeric_limits<double>::infinity());

  Raster empty_a(4, 4), empty_b(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) empty_a.set_nodata(i, j);
  CHECK_THROWS_AS(mse(empty_a, empty_b), Error);
}

TEST_CASE("psnr is shift consistent") {
  const Raster x = testutil::wave_field(32, 32, 1, 0.3, 0.0);
  const Raster y = testutil::wave_field(32, 32, 2, 0.3, 0.0);
  Raster xs = x, ys = y;
  for (auto& v : xs.data()) v += 0.25f;
  for (auto& v : ys.data()) v += 0.25f;
  CHECK(std::abs(psnr(x, y) - psnr(xs, ys)) < 1e-4);
}

TEST_CASE("metrics ignore pixels invalid in either input") {
  Raster x(4, 1), y(4, 1);
  x.at(0, 0) = 1.0f;
  y.at(0, 0) = 0.0f;  // would dominate, but masked below
  x.set_nodata(0, 0);
  x.at(0, 1) = 0.5f;
  y.at(0, 1) = 0.4f;
  x.at(0, 2) = 0.5f;
  y.at(0, 2) = 0.4f;
  x.at(0, 3) = 0.5f;
  y.at(0, 3) = 0.4f;
  CHECK(mse(x, y) == doctest::Approx(0.01).epsilon(1e-5));
}

TEST_CASE("ssim of an image with itself is exactly one") {
  const Raster x = testutil::wave_field(24, 24, 3);
  SsimParams p;
  CHECK(ssim(x, x, p) == 1.0);
  p.global = true;
  CHECK(ssim(x, x, p) == 1.0);
}

TEST_CASE("global ssim of a zero-mean pattern against its negation is negative") {
  Raster x(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int i = 0; i < 16; ++i) x.at(y, i) = (i + y) % 2 ? 0.5f : -0.5f;
  Raster y = x;
  for (auto& v : y.data()) v = -v;
  SsimParams p;
  p.global = true;
  CHECK(ssim(x, y, p) < 0.0);
}

TEST_CASE("windowed ssim matches a direct per-window evaluation") {
  const Raster x = testutil::wave_field(16, 16, 4, 0.4, 0.2);
  Raster y = testutil::wave_field(16, 16, 5, 0.4, 0.2);
  // a couple of nodata pixels knock out the windows containing them
  y.set_nodata(2, 13);

  SsimParams p;
  const auto w = gaussian_window(p.window, p.sigma);
  const double c1 = p.c1(), c2 = p.c2();

  // Independent oracle: raw-moment algebra instead of centered passes.
  double sum = 0.0;
  int count = 0;
  for (int oy = 0; oy + p.window <= 16; ++oy)
    for (int ox = 0; ox + p.window <= 16; ++ox) {
      bool ok = true;
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int j = 0; j < p.window && ok; ++j)
        for (int i = 0; i < p.window; ++i) {
          if (!x.valid(oy + j, ox + i) || !y.valid(oy + j, ox + i)) {
            ok = false;
            break;
          }
          const double wv = w[size_t(j) * p.window + i];
          const double a = x.at(oy + j, ox + i), b = y.at(oy + j, ox + i);
          mx += wv * a;
          my += wv * b;
          sxx += wv * a * a;
          syy += wv * b * b;
          sxy += wv * a * b;
        }
      if (!ok) continue;
      const double vx = sxx - mx * mx, vy = syy - my * my, vxy = sxy - mx * my;
      sum += ((2 * mx * my + c1) * (2 * vxy + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  REQUIRE(count > 0);
  CHECK(ssim(x, y, p) == doctest::Approx(sum / count).epsilon(1e-6));
}

TEST_CASE("ssim rejects images smaller than the window") {
  const Raster tiny = testutil::wave_field(8, 8, 6);
  CHECK_THROWS_AS(ssim(tiny, tiny, SsimParams{}), Error);
}

TEST_CASE("confusion and per-class f1 reproduce the hand-computed example") {
  // truth [0,0,1,1,2,2], pred [0,1,1,1,2,0]
  Raster truth(6, 1), pred(6, 1);
  const int t[6] = {0, 0, 1, 1, 2, 2}, q[6] = {0, 1, 1, 1, 2, 0};
  for (int i = 0; i < 6; ++i) {
    truth.at(0, i) = float(t[i]);
    pred.at(0, i) = float(q[i]);
  }
  const auto cm = confusion(truth, pred);
  CHECK(cm.total() == 6);
  const auto s = f1_scores(cm);
  CHECK(s.f1[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(s.f1[1] == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(s.f1[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  CHECK(s.macro_f1 == doctest::Approx((0.5 + 0.8 + 2.0 / 3.0) / 3.0).epsilon(1e-12));
}

TEST_CASE("perfect prediction scores one everywhere") {
  Raster truth(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) truth.at(y, x) = float((y + x) % 3);
  const auto s = f1_scores(confusion(truth, truth));
  for (int c = 0; c < 3; ++c) CHECK(s.f1[size_t(c)] == 1.0);
  CHECK(s.macro_f1 == 1.0);
}

TEST_CASE("f1 under class permutation permutes the scores") {
  Rng rng(9);
  Raster truth(12, 12), pred(12, 12);
  for (auto& v : truth.data()) v = float(rng.below(3));
  for (auto& v : pred.data()) v = float(rng.below(3));
  const auto base = f1_scores(confusion(truth, pred));

  // permutation (0 1 2) -> (2 0 1)
  auto permute = [](const Raster& r) {
    Raster out = r;
    for (auto& v : out.data()) v = float((int(v) + 2) % 3);
    return out;
  };
  const auto perm = f1_scores(confusion(permute(truth), permute(pred)));
  for (int c = 0; c < 3; ++c)
    CHECK(perm.f1[size_t((c + 2) % 3)] == doctest::Approx(base.f1[size_t(c)]).epsilon(1e-12));
  CHECK(perm.macro_f1 == doctest::Approx(base.macro_f1).epsilon(1e-12));
}

TEST_CASE("absent class scores zero by convention") {
  Raster truth(4, 1), pred(4, 1);
  for (int i = 0; i < 4; ++i) truth.at(0, i) = 0.0f;
  for (int i = 0; i < 4; ++i) pred.at(0, i) = 0.0f;
  const auto s = f1_scores(confusion(truth, pred));
  CHECK(s.f1[0] == 1.0);
  CHECK(s.f1[1] == 0.0);
  CHECK(s.f1[2] == 0.0);
}

TEST_CASE("confusion rejects mismatched grids") {
  Raster a(4, 4), b(4, 4, 1, GeoTransform{1, 0, 1, 1});
  CHECK_THROWS_AS(confusion(a, b), Error);
}
