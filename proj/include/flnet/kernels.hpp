#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace flnet::kern {

// Parallel kernels and their serial references. The parallel versions
// partition disjoint output elements across threads and keep the per-element
// accumulation order identical to the serial reference, so the two are
// bit-identical for any thread count. Tests in test_kernels.cpp hold them to
// that, and bench/ compares their throughput.

struct Conv2dShape {
  int batch = 1, cin = 1, hin = 1, win = 1;
  int cout = 1, k = 3, pad = 1, stride = 1;
  int hout() const { return (hin + 2 * pad - k) / stride + 1; }
  int wout() const { return (win + 2 * pad - k) / stride + 1; }
  size_t x_size() const { return size_t(batch) * cin * hin * win; }
  size_t y_size() const { return size_t(batch) * cout * hout() * wout(); }
  size_t w_size() const { return size_t(cout) * cin * k * k; }
};

// y = conv(x, w) + bias (cross-correlation, zero padding).
// Accumulation order per output element: bias, then (cin, kh, kw).
template <typename T>
void conv2d_forward(const Conv2dShape& s, const T* x, const T* w, const T* bias, T* y);

// dx += conv backward. Accumulation order per input element: (cout, kh, kw).
template <typename T>
void conv2d_backward_input(const Conv2dShape& s, const T* dy, const T* w, T* dx);

// dw += and db += over the batch. Per weight element the reduction runs over
// (batch, oh, ow) through 16 interleaved lanes combined by a fixed pairwise
// tree; that lane scheme is part of the kernel contract (it is what makes the
// row loop vectorizable without reassociation).
template <typename T>
void conv2d_backward_weight(const Conv2dShape& s, const T* dy, const T* x, T* dw, T* db);

namespace serial {
template <typename T>
void conv2d_forward(const Conv2dShape& s, const T* x, const T* w, const T* bias, T* y);
template <typename T>
void conv2d_backward_input(const Conv2dShape& s, const T* dy, const T* w, T* dx);
template <typename T>
void conv2d_backward_weight(const Conv2dShape& s, const T* dy, const T* x, T* dw, T* db);
}  // namespace serial

// Separable Gaussian blur on a single plane, replicate borders.
void gaussian_blur(const float* in, float* out, int width, int height, double sigma);
namespace serial {
void gaussian_blur(const float* in, float* out, int width, int height, double sigma);
}

// r x r box average; in is (height*r, width*r), out is (height, width).
void box_downsample(const float* in, float* out, int width, int height, int r);
namespace serial {
void box_downsample(const float* in, float* out, int width, int height, int r);
}

// Index of the nearest seed per pixel (squared Euclidean distance between
// pixel centers and seed points, ties to the lowest seed index).
void voronoi_fill(const double* sx, const double* sy, int n_seeds, int width,
                  int height, int32_t* out);
namespace serial {
void voronoi_fill(const double* sx, const double* sy, int n_seeds, int width,
                  int height, int32_t* out);
}

// Masked normalized cross-correlation of mov against ref over integer shifts
// in [-max_shift, max_shift]^2, row-major (dy outer, dx inner) into scores
// ((2*max_shift+1)^2 entries). Shifts whose valid overlap is below
// min_overlap score kNccRejected.
inline constexpr double kNccRejected = -2.0;
void ncc_shift_scores(const float* ref, const uint8_t* ref_mask, const float* mov,
                      const uint8_t* mov_mask, int width, int height, int max_shift,
                      size_t min_overlap, double* scores);
namespace serial {
void ncc_shift_scores(const float* ref, const uint8_t* ref_mask, const float* mov,
                      const uint8_t* mov_mask, int width, int height, int max_shift,
                      size_t min_overlap, double* scores);
}

// Mean SSIM over all fully valid window positions (stride 1). `weights` is a
// normalized side*side window. Returns the number of windows used.
size_t ssim_windowed_sum(const float* x, const float* y, const uint8_t* mask,
                         int width, int height, const double* weights, int side,
                         double c1, double c2, double* out_sum);
namespace serial {
size_t ssim_windowed_sum(const float* x, const float* y, const uint8_t* mask,
                         int width, int height, const double* weights, int side,
                         double c1, double c2, double* out_sum);
}

// Per-pixel majority vote over the valid labels of an odd window. Labels are
// small non-negative ints; invalid pixels (mask != 0) pass through untouched
// and do not vote. Ties keep the center label when it is tied, otherwise the
// smallest tied label wins.
void majority_vote(const int32_t* labels, const uint8_t* mask, int width,
                   int height, int window, int n_classes, int32_t* out);
namespace serial {
void majority_vote(const int32_t* labels, const uint8_t* mask, int width,
                   int height, int window, int n_classes, int32_t* out);
}

}  // namespace flnet::kern
