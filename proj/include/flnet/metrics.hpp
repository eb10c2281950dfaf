#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "flnet/raster.hpp"

namespace flnet {

// Mean squared error over jointly valid pixels; errors when none overlap.
double mse(const Raster& x, const Raster& y);
double mse_masked(const float* x, const float* y, const uint8_t* invalid, size_t n);

// 10 log10(L^2 / MSE); identical images (MSE < 1e-12) report +infinity.
double psnr(const Raster& x, const Raster& y, double L = 2.0);
double psnr_from_mse(double mse_value, double L = 2.0);

struct SsimParams {
  double L = 2.0;
  double k1 = 0.01;
  double k2 = 0.03;
  int window = 11;       // side of the Gaussian window
  double sigma = 1.5;
  bool global = false;   // one evaluation over all valid pixels
  double c1() const { return (k1 * L) * (k1 * L); }
  double c2() const { return (k2 * L) * (k2 * L); }
};

// Windowed mode: mean over all fully valid window positions with Gaussian
// weighted moments. Global mode: a single evaluation with uniform weights
// over the jointly valid pixels.
double ssim(const Raster& x, const Raster& y, const SsimParams& params = {});

// Normalized Gaussian window weights (side*side, sums to 1).
std::vector<double> gaussian_window(int side, double sigma);

struct ConfusionMatrix {
  std::array<std::array<int64_t, 3>, 3> counts{};  // [truth][pred]
  int64_t total() const;
};

ConfusionMatrix confusion(const Raster& truth, const Raster& pred);

struct F1Scores {
  std::array<double, 3> precision{}, recall{}, f1{};
  double macro_f1 = 0.0;
};

// Per-class precision/recall/F1; a class with an empty denominator scores 0.
F1Scores f1_scores(const ConfusionMatrix& cm);

}  // namespace flnet
