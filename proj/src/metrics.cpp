#include "flnet/metrics.hpp"

#include <cmath>
#include <limits>

#include "flnet/kernels.hpp"

namespace flnet {

double mse_masked(const float* x, const float* y, const uint8_t* invalid, size_t n) {
  double sum = 0.0;
  size_t k = 0;
  for (size_t i = 0; i < n; ++i) {
    if (invalid && invalid[i]) continue;
    const double d = double(x[i]) - double(y[i]);
    sum += d * d;
    ++k;
  }
  if (k == 0) fail(ErrorCode::usage, "mse: no jointly valid pixels");
  return sum / double(k);
}

namespace {
std::vector<uint8_t> joint_mask(const Raster& x, const Raster& y) {
  if (!(x.width() == y.width() && x.height() == y.height()) || x.bands() != 1 ||
      y.bands() != 1)
    fail(ErrorCode::grid_mismatch, "metrics: rasters must be co-shaped single-band");
  std::vector<uint8_t> m(x.pixel_count());
  for (size_t i = 0; i < m.size(); ++i) m[i] = x.mask()[i] | y.mask()[i];
  return m;
}
}  // namespace

double mse(const Raster& x, const Raster& y) {
  auto m = joint_mask(x, y);
  return mse_masked(x.data().data(), y.data().data(), m.data(), m.size());
}

double psnr_from_mse(double mse_value, double L) {
  if (mse_value < 1e-12) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(L * L / mse_value);
}

double psnr(const Raster& x, const Raster& y, double L) {
  return psnr_from_mse(mse(x, y), L);
}

std::vector<double> gaussian_window(int side, double sigma) {
  std::vector<double> w(size_t(side) * side);
  const double c = (side - 1) / 2.0;
  double sum = 0.0;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double v = std::exp(-((x - c) * (x - c) + (y - c) * (y - c)) /
                                (2.0 * sigma * sigma));
      w[size_t(y) * side + x] = v;
      sum += v;
    }
  for (double& v : w) v /= sum;
  return w;
}

double ssim(const Raster& x, const Raster& y, const SsimParams& p) {
  auto m = joint_mask(x, y);
  const double c1 = p.c1(), c2 = p.c2();

  if (p.global) {
    double mx = 0, my = 0;
    size_t n = 0;
    for (size_t i = 0; i < m.size(); ++i) {
      if (m[i]) continue;
      mx += x.data()[i];
      my += y.data()[i];
      ++n;
    }
    if (n == 0) fail(ErrorCode::usage, "ssim: no jointly valid pixels");
    mx /= double(n);
    my /= double(n);
    double vx = 0, vy = 0, vxy = 0;
    for (size_t i = 0; i < m.size(); ++i) {
      if (m[i]) continue;
      const double dx = x.data()[i] - mx, dy = y.data()[i] - my;
      vx += dx * dx;
      vy += dy * dy;
      vxy += dx * dy;
    }
    vx /= double(n);
    vy /= double(n);
    vxy /= double(n);
    return ((2.0 * mx * my + c1) * (2.0 * vxy + c2)) /
           ((mx * mx + my * my + c1) * (vx + vy + c2));
  }

  if (x.width() < p.window || x.height() < p.window)
    fail(ErrorCode::usage, "ssim: image smaller than the window");
  auto weights = gaussian_window(p.window, p.sigma);
  double sum = 0.0;
  const size_t n = kern::ssim_windowed_sum(x.data().data(), y.data().data(), m.data(),
                                           x.width(), x.height(), weights.data(),
                                           p.window, c1, c2, &sum);
  if (n == 0) fail(ErrorCode::usage, "ssim: no fully valid window positions");
  return sum / double(n);
}

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (const auto& row : counts)
    for (int64_t v : row) t += v;
  return t;
}

ConfusionMatrix confusion(const Raster& truth, const Raster& pred) {
  if (!truth.co_gridded_with(pred))
    fail(ErrorCode::grid_mismatch, "confusion: label rasters not co-gridded");
  ConfusionMatrix cm;
  for (int y = 0; y < truth.height(); ++y)
    for (int x = 0; x < truth.width(); ++x) {
      if (!truth.valid(y, x) || !pred.valid(y, x)) continue;
      const float tv = truth.at(y, x), pv = pred.at(y, x);
      if (tv < 0 || tv > 2 || tv != float(int(tv)) || pv < 0 || pv > 2 ||
          pv != float(int(pv)))
        fail(ErrorCode::bad_format, "confusion: non-class value at a valid pixel");
      ++cm.counts[size_t(tv)][size_t(pv)];
    }
  return cm;
}

F1Scores f1_scores(const ConfusionMatrix& cm) {
  F1Scores s;
  double macro = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double tp = double(cm.counts[size_t(c)][size_t(c)]);
    double fp = 0, fn = 0;
    for (int o = 0; o < 3; ++o) {
      if (o == c) continue;
      fp += double(cm.counts[size_t(o)][size_t(c)]);
      fn += double(cm.counts[size_t(c)][size_t(o)]);
    }
    s.precision[size_t(c)] = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    s.recall[size_t(c)] = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double pr = s.precision[size_t(c)] + s.recall[size_t(c)];
    s.f1[size_t(c)] = pr > 0 ? 2.0 * s.precision[size_t(c)] * s.recall[size_t(c)] / pr : 0.0;
    macro += s.f1[size_t(c)];
  }
  s.macro_f1 = macro / 3.0;
  return s;
}

}  // namespace flnet
