#include "flnet/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace flnet::kern {

namespace {

// Fixed pairwise combination of the 16 reduction lanes. Part of the
// backward-weight kernel contract; both implementations must use it.
template <typename T>
inline T combine_lanes(const T* l) {
  T s0 = (l[0] + l[1]) + (l[2] + l[3]);
  T s1 = (l[4] + l[5]) + (l[6] + l[7]);
  T s2 = (l[8] + l[9]) + (l[10] + l[11]);
  T s3 = (l[12] + l[13]) + (l[14] + l[15]);
  return (s0 + s1) + (s2 + s3);
}

// Valid output range [lo, hi) for one kernel tap: positions where
// ow * stride + k_off - pad stays inside [0, extent).
inline void tap_range(int out_extent, int in_extent, int k_off, int pad, int stride,
                      int& lo, int& hi) {
  // smallest ow with ow*stride >= pad - k_off
  int num = pad - k_off;
  lo = num <= 0 ? 0 : (num + stride - 1) / stride;
  num = in_extent + pad - k_off;
  hi = num <= 0 ? 0 : (num + stride - 1) / stride;
  lo = std::min(lo, out_extent);
  hi = std::min(hi, out_extent);
  if (hi < lo) hi = lo;
}

}  // namespace

// ------------------------------------------------------------------ forward

template <typename T>
static void conv2d_forward_item(const Conv2dShape& s, const T* x, const T* w,
                                const T* bias, T* y, int b, int co) {
  const int ho = s.hout(), wo = s.wout();
  const T* xb = x + size_t(b) * s.cin * s.hin * s.win;
  T* yplane = y + (size_t(b) * s.cout + co) * ho * wo;
  for (int oh = 0; oh < ho; ++oh) {
    T* yr = yplane + size_t(oh) * wo;
    const T bv = bias ? bias[co] : T(0);
    for (int ow = 0; ow < wo; ++ow) yr[ow] = bv;
    for (int ci = 0; ci < s.cin; ++ci) {
      const T* xc = xb + size_t(ci) * s.hin * s.win;
      const T* wc = w + (size_t(co) * s.cin + ci) * s.k * s.k;
      for (int kh = 0; kh < s.k; ++kh) {
        const int ih = oh * s.stride + kh - s.pad;
        if (ih < 0 || ih >= s.hin) continue;
        const T* xr = xc + size_t(ih) * s.win;
        for (int kw = 0; kw < s.k; ++kw) {
          const T wv = wc[kh * s.k + kw];
          int lo, hi;
          tap_range(wo, s.win, kw, s.pad, s.stride, lo, hi);
          if (s.stride == 1) {
            const T* xs = xr + (lo + kw - s.pad);
            for (int ow = lo; ow < hi; ++ow) yr[ow] += wv * xs[ow - lo];
          } else {
            for (int ow = lo; ow < hi; ++ow)
              yr[ow] += wv * xr[ow * s.stride + kw - s.pad];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward(const Conv2dShape& s, const T* x, const T* w, const T* bias, T* y) {
  const long items = long(s.batch) * s.cout;
#pragma omp parallel for schedule(static)
  for (long it = 0; it < items; ++it)
    conv2d_forward_item(s, x, w, bias, y, int(it / s.cout), int(it % s.cout));
}

template <typename T>
void serial::conv2d_forward(const Conv2dShape& s, const T* x, const T* w,
                            const T* bias, T* y) {
  const int ho = s.hout(), wo = s.wout();
  for (int b = 0; b < s.batch; ++b)
    for (int co = 0; co < s.cout; ++co)
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          T acc = bias ? bias[co] : T(0);
          for (int ci = 0; ci < s.cin; ++ci)
            for (int kh = 0; kh < s.k; ++kh) {
              const int ih = oh * s.stride + kh - s.pad;
              if (ih < 0 || ih >= s.hin) continue;
              for (int kw = 0; kw < s.k; ++kw) {
                const int iw = ow * s.stride + kw - s.pad;
                if (iw < 0 || iw >= s.win)
                  continue;
                acc += w[((size_t(co) * s.cin + ci) * s.k + kh) * s.k + kw] *
                       x[((size_t(b) * s.cin + ci) * s.hin + ih) * s.win + iw];
              }
            }
          y[((size_t(b) * s.cout + co) * ho + oh) * wo + ow] = acc;
        }
}

// ----------------------------------------------------------- backward input

template <typename T>
static void conv2d_backward_input_item(const Conv2dShape& s, const T* dy, const T* w,
                                       T* dx, std::vector<T>& tmp, int b, int ci) {
  const int ho = s.hout(), wo = s.wout();
  tmp.assign(size_t(s.hin) * s.win, T(0));
  for (int co = 0; co < s.cout; ++co) {
    const T* dyp = dy + (size_t(b) * s.cout + co) * ho * wo;
    const T* wc = w + (size_t(co) * s.cin + ci) * s.k * s.k;
    for (int kh = 0; kh < s.k; ++kh)
      for (int kw = 0; kw < s.k; ++kw) {
        const T wv = wc[kh * s.k + kw];
        int olo, ohi;
        tap_range(ho, s.hin, kh, s.pad, s.stride, olo, ohi);
        for (int oh = olo; oh < ohi; ++oh) {
          const int ih = oh * s.stride + kh - s.pad;
          T* tr = tmp.data() + size_t(ih) * s.win;
          const T* dyr = dyp + size_t(oh) * wo;
          int lo, hi;
          tap_range(wo, s.win, kw, s.pad, s.stride, lo, hi);
          if (s.stride == 1) {
            T* ts = tr + (lo + kw - s.pad);
            for (int ow = lo; ow < hi; ++ow) ts[ow - lo] += wv * dyr[ow];
          } else {
            for (int ow = lo; ow < hi; ++ow)
              tr[ow * s.stride + kw - s.pad] += wv * dyr[ow];
          }
        }
      }
  }
  T* dxp = dx + size_t(b) * s.cin * s.hin * s.win + size_t(ci) * s.hin * s.win;
  for (size_t i = 0; i < tmp.size(); ++i) dxp[i] += tmp[i];
}

template <typename T>
void conv2d_backward_input(const Conv2dShape& s, const T* dy, const T* w, T* dx) {
  const long items = long(s.batch) * s.cin;
#pragma omp parallel
  {
    std::vector<T> tmp;
#pragma omp for schedule(static)
    for (long it = 0; it < items; ++it)
      conv2d_backward_input_item(s, dy, w, dx, tmp, int(it / s.cin), int(it % s.cin));
  }
}

template <typename T>
void serial::conv2d_backward_input(const Conv2dShape& s, const T* dy, const T* w, T* dx) {
  const int ho = s.hout(), wo = s.wout();
  for (int b = 0; b < s.batch; ++b)
    for (int ci = 0; ci < s.cin; ++ci)
      for (int ih = 0; ih < s.hin; ++ih)
        for (int iw = 0; iw < s.win; ++iw) {
          T acc = T(0);
          for (int co = 0; co < s.cout; ++co)
            for (int kh = 0; kh < s.k; ++kh) {
              const int on = ih + s.pad - kh;
              if (on < 0 || on % s.stride) continue;
              const int oh = on / s.stride;
              if (oh >= ho) continue;
              for (int kw = 0; kw < s.k; ++kw) {
                const int wn = iw + s.pad - kw;
                if (wn < 0 || wn % s.stride) continue;
                const int ow = wn / s.stride;
                if (ow >= wo) continue;
                acc += w[((size_t(co) * s.cin + ci) * s.k + kh) * s.k + kw] *
                       dy[((size_t(b) * s.cout + co) * ho + oh) * wo + ow];
              }
            }
          dx[((size_t(b) * s.cin + ci) * s.hin + ih) * s.win + iw] += acc;
        }
}

// ---------------------------------------------------------- backward weight

template <typename T>
static void conv2d_backward_weight_item(const Conv2dShape& s, const T* dy, const T* x,
                                        T* dw, T* db, int co, int ci) {
  const int ho = s.hout(), wo = s.wout();
  for (int kh = 0; kh < s.k; ++kh)
    for (int kw = 0; kw < s.k; ++kw) {
      T lanes[16] = {};
      int olo, ohi, lo, hi;
      tap_range(ho, s.hin, kh, s.pad, s.stride, olo, ohi);
      tap_range(wo, s.win, kw, s.pad, s.stride, lo, hi);
      for (int b = 0; b < s.batch; ++b) {
        const T* dyp = dy + (size_t(b) * s.cout + co) * ho * wo;
        const T* xp = x + (size_t(b) * s.cin + ci) * s.hin * s.win;
        for (int oh = olo; oh < ohi; ++oh) {
          const T* dyr = dyp + size_t(oh) * wo;
          const T* xr = xp + size_t(oh * s.stride + kh - s.pad) * s.win;
          if (s.stride == 1) {
            const T* xs = xr + (lo + kw - s.pad);
            int ow = lo;
            for (; ow + 16 <= hi; ow += 16) {
              const T* a = dyr + ow;
              const T* c = xs + (ow - lo);
              for (int j = 0; j < 16; ++j) lanes[j] += a[j] * c[j];
            }
            for (int j = 0; ow < hi; ++ow, ++j) lanes[j] += dyr[ow] * xs[ow - lo];
          } else {
            for (int ow = lo; ow < hi; ++ow)
              lanes[(ow - lo) & 15] += dyr[ow] * xr[ow * s.stride + kw - s.pad];
          }
        }
      }
      dw[((size_t(co) * s.cin + ci) * s.k + kh) * s.k + kw] += combine_lanes(lanes);
    }
  if (db && ci == 0) {
    T lanes[16] = {};
    for (int b = 0; b < s.batch; ++b) {
      const T* dyp = dy + (size_t(b) * s.cout + co) * ho * wo;
      for (int oh = 0; oh < ho; ++oh) {
        const T* dyr = dyp + size_t(oh) * wo;
        int ow = 0;
        for (; ow + 16 <= wo; ow += 16)
          for (int j = 0; j < 16; ++j) lanes[j] += dyr[ow + j];
        for (int j = 0; ow < wo; ++ow, ++j) lanes[j] += dyr[ow];
      }
    }
    db[co] += combine_lanes(lanes);
  }
}

template <typename T>
void conv2d_backward_weight(const Conv2dShape& s, const T* dy, const T* x, T* dw, T* db) {
  const long items = long(s.cout) * s.cin;
#pragma omp parallel for schedule(static)
  for (long it = 0; it < items; ++it)
    conv2d_backward_weight_item(s, dy, x, dw, db, int(it / s.cin), int(it % s.cin));
}

template <typename T>
void serial::conv2d_backward_weight(const Conv2dShape& s, const T* dy, const T* x,
                                    T* dw, T* db) {
  for (int co = 0; co < s.cout; ++co)
    for (int ci = 0; ci < s.cin; ++ci)
      conv2d_backward_weight_item(s, dy, x, dw, db, co, ci);
}

template void conv2d_forward<float>(const Conv2dShape&, const float*, const float*, const float*, float*);
template void conv2d_forward<double>(const Conv2dShape&, const double*, const double*, const double*, double*);
template void conv2d_backward_input<float>(const Conv2dShape&, const float*, const float*, float*);
template void conv2d_backward_input<double>(const Conv2dShape&, const double*, const double*, double*);
template void conv2d_backward_weight<float>(const Conv2dShape&, const float*, const float*, float*, float*);
template void conv2d_backward_weight<double>(const Conv2dShape&, const double*, const double*, double*, double*);
template void serial::conv2d_forward<float>(const Conv2dShape&, const float*, const float*, const float*, float*);
template void serial::conv2d_forward<double>(const Conv2dShape&, const double*, const double*, const double*, double*);
template void serial::conv2d_backward_input<float>(const Conv2dShape&, const float*, const float*, float*);
template void serial::conv2d_backward_input<double>(const Conv2dShape&, const double*, const double*, double*);
template void serial::conv2d_backward_weight<float>(const Conv2dShape&, const float*, const float*, float*, float*);
template void serial::conv2d_backward_weight<double>(const Conv2dShape&, const double*, const double*, double*, double*);

// ------------------------------------------------------------ gaussian blur

namespace {

std::vector<double> gaussian_taps(double sigma, int& radius) {
  radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> taps(size_t(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * double(i) * i / (sigma * sigma));
    taps[size_t(i + radius)] = v;
    sum += v;
  }
  for (double& t : taps) t /= sum;
  return taps;
}

inline void blur_h_row(const float* in, float* out, int width, int y,
                       const double* taps, int radius) {
  const float* row = in + size_t(y) * width;
  for (int xx = 0; xx < width; ++xx) {
    double acc = 0.0;
    for (int i = -radius; i <= radius; ++i)
      acc += taps[i + radius] * row[std::clamp(xx + i, 0, width - 1)];
    out[size_t(y) * width + xx] = float(acc);
  }
}

inline void blur_v_row(const float* in, float* out, int width, int height, int y,
                       const double* taps, int radius) {
  for (int xx = 0; xx < width; ++xx) {
    double acc = 0.0;
    for (int i = -radius; i <= radius; ++i)
      acc += taps[i + radius] * in[size_t(std::clamp(y + i, 0, height - 1)) * width + xx];
    out[size_t(y) * width + xx] = float(acc);
  }
}

}  // namespace

void gaussian_blur(const float* in, float* out, int width, int height, double sigma) {
  if (sigma <= 0.0) {
    std::copy(in, in + size_t(width) * height, out);
    return;
  }
  int radius;
  auto taps = gaussian_taps(sigma, radius);
  std::vector<float> tmp(size_t(width) * height);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) blur_h_row(in, tmp.data(), width, y, taps.data(), radius);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y)
    blur_v_row(tmp.data(), out, width, height, y, taps.data(), radius);
}

void serial::gaussian_blur(const float* in, float* out, int width, int height,
                           double sigma) {
  if (sigma <= 0.0) {
    std::copy(in, in + size_t(width) * height, out);
    return;
  }
  int radius;
  auto taps = gaussian_taps(sigma, radius);
  std::vector<float> tmp(size_t(width) * height);
  for (int y = 0; y < height; ++y) blur_h_row(in, tmp.data(), width, y, taps.data(), radius);
  for (int y = 0; y < height; ++y)
    blur_v_row(tmp.data(), out, width, height, y, taps.data(), radius);
}

// ----------------------------------------------------------- box downsample

namespace {
inline void box_row(const float* in, float* out, int width, int y, int r) {
  const int win = width * r;
  for (int xx = 0; xx < width; ++xx) {
    double acc = 0.0;
    for (int dy = 0; dy < r; ++dy)
      for (int dx = 0; dx < r; ++dx)
        acc += in[size_t(y * r + dy) * win + (xx * r + dx)];
    out[size_t(y) * width + xx] = float(acc / (double(r) * r));
  }
}
}  // namespace

void box_downsample(const float* in, float* out, int width, int height, int r) {
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) box_row(in, out, width, y, r);
}

void serial::box_downsample(const float* in, float* out, int width, int height, int r) {
  for (int y = 0; y < height; ++y) box_row(in, out, width, y, r);
}

// -------------------------------------------------------------- voronoi fill

namespace {
inline void voronoi_row(const double* sx, const double* sy, int n, int width, int y,
                        int32_t* out) {
  const double py = y + 0.5;
  for (int xx = 0; xx < width; ++xx) {
    const double px = xx + 0.5;
    double best = 1e300;
    int32_t arg = 0;
    for (int i = 0; i < n; ++i) {
      const double dx = px - sx[i], dy = py - sy[i];
      const double d = dx * dx + dy * dy;
      if (d < best) {
        best = d;
        arg = i;
      }
    }
    out[size_t(y) * width + xx] = arg;
  }
}
}  // namespace

void voronoi_fill(const double* sx, const double* sy, int n_seeds, int width,
                  int height, int32_t* out) {
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) voronoi_row(sx, sy, n_seeds, width, y, out);
}

void serial::voronoi_fill(const double* sx, const double* sy, int n_seeds, int width,
                          int height, int32_t* out) {
  for (int y = 0; y < height; ++y) voronoi_row(sx, sy, n_seeds, width, y, out);
}

// ---------------------------------------------------------------- ncc search

namespace {
inline double ncc_one_shift(const float* ref, const uint8_t* ref_mask, const float* mov,
                            const uint8_t* mov_mask, int width, int height, int u,
                            int v, size_t min_overlap) {
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  size_t n = 0;
  const int y0 = std::max(0, v), y1 = std::min(height, height + v);
  const int x0 = std::max(0, u), x1 = std::min(width, width + u);
  for (int y = y0; y < y1; ++y) {
    const int my = y - v;
    for (int x = x0; x < x1; ++x) {
      const size_t ri = size_t(y) * width + x;
      const size_t mi = size_t(my) * width + (x - u);
      if (ref_mask[ri] | mov_mask[mi]) continue;
      const double a = ref[ri], b = mov[mi];
      sa += a;
      sb += b;
      saa += a * a;
      sbb += b * b;
      sab += a * b;
      ++n;
    }
  }
  if (n < min_overlap) return kNccRejected;
  const double dn = double(n);
  const double va = dn * saa - sa * sa;
  const double vb = dn * sbb - sb * sb;
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return (dn * sab - sa * sb) / std::sqrt(va * vb);
}
}  // namespace

void ncc_shift_scores(const float* ref, const uint8_t* ref_mask, const float* mov,
                      const uint8_t* mov_mask, int width, int height, int max_shift,
                      size_t min_overlap, double* scores) {
  const int side = 2 * max_shift + 1;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < side * side; ++i) {
    const int v = i / side - max_shift;
    const int u = i % side - max_shift;
    scores[i] = ncc_one_shift(ref, ref_mask, mov, mov_mask, width, height, u, v,
                              min_overlap);
  }
}

void serial::ncc_shift_scores(const float* ref, const uint8_t* ref_mask, const float* mov,
                              const uint8_t* mov_mask, int width, int height,
                              int max_shift, size_t min_overlap, double* scores) {
  const int side = 2 * max_shift + 1;
  for (int i = 0; i < side * side; ++i) {
    const int v = i / side - max_shift;
    const int u = i % side - max_shift;
    scores[i] = ncc_one_shift(ref, ref_mask, mov, mov_mask, width, height, u, v,
                              min_overlap);
  }
}

// -------------------------------------------------------------------- ssim

namespace {
inline bool ssim_one_window(const float* x, const float* y, const uint8_t* mask,
                            int width, int ox, int oy, const double* wts, int side,
                            double c1, double c2, double* out) {
  for (int j = 0; j < side; ++j) {
    const uint8_t* mr = mask + size_t(oy + j) * width + ox;
    for (int i = 0; i < side; ++i)
      if (mr[i]) return false;
  }
  double mx = 0, my = 0;
  for (int j = 0; j < side; ++j) {
    const float* xr = x + size_t(oy + j) * width + ox;
    const float* yr = y + size_t(oy + j) * width + ox;
    const double* wr = wts + size_t(j) * side;
    for (int i = 0; i < side; ++i) {
      mx += wr[i] * xr[i];
      my += wr[i] * yr[i];
    }
  }
  double vx = 0, vy = 0, vxy = 0;
  for (int j = 0; j < side; ++j) {
    const float* xr = x + size_t(oy + j) * width + ox;
    const float* yr = y + size_t(oy + j) * width + ox;
    const double* wr = wts + size_t(j) * side;
    for (int i = 0; i < side; ++i) {
      const double dx = xr[i] - mx, dy = yr[i] - my;
      vx += wr[i] * dx * dx;
      vy += wr[i] * dy * dy;
      vxy += wr[i] * dx * dy;
    }
  }
  *out = ((2.0 * mx * my + c1) * (2.0 * vxy + c2)) /
         ((mx * mx + my * my + c1) * (vx + vy + c2));
  return true;
}
}  // namespace

size_t ssim_windowed_sum(const float* x, const float* y, const uint8_t* mask,
                         int width, int height, const double* weights, int side,
                         double c1, double c2, double* out_sum) {
  const int oh = height - side + 1, ow = width - side + 1;
  if (oh <= 0 || ow <= 0) {
    *out_sum = 0.0;
    return 0;
  }
  std::vector<double> row_sum(size_t(oh), 0.0);
  std::vector<size_t> row_cnt(size_t(oh), 0);
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < oh; ++oy) {
    double s = 0.0, v;
    size_t c = 0;
    for (int ox = 0; ox < ow; ++ox)
      if (ssim_one_window(x, y, mask, width, ox, oy, weights, side, c1, c2, &v)) {
        s += v;
        ++c;
      }
    row_sum[size_t(oy)] = s;
    row_cnt[size_t(oy)] = c;
  }
  double total = 0.0;
  size_t n = 0;
  for (int oy = 0; oy < oh; ++oy) {
    total += row_sum[size_t(oy)];
    n += row_cnt[size_t(oy)];
  }
  *out_sum = total;
  return n;
}

size_t serial::ssim_windowed_sum(const float* x, const float* y, const uint8_t* mask,
                                 int width, int height, const double* weights,
                                 int side, double c1, double c2, double* out_sum) {
  const int oh = height - side + 1, ow = width - side + 1;
  if (oh <= 0 || ow <= 0) {
    *out_sum = 0.0;
    return 0;
  }
  double total = 0.0, v;
  size_t n = 0;
  for (int oy = 0; oy < oh; ++oy) {
    double s = 0.0;
    size_t c = 0;
    for (int ox = 0; ox < ow; ++ox)
      if (ssim_one_window(x, y, mask, width, ox, oy, weights, side, c1, c2, &v)) {
        s += v;
        ++c;
      }
    total += s;
    n += c;
  }
  *out_sum = total;
  return n;
}

// ----------------------------------------------------------- majority vote

namespace {
inline void vote_row(const int32_t* labels, const uint8_t* mask, int width, int height,
                     int window, int n_classes, int y, int32_t* out) {
  const int r = window / 2;
  std::vector<int> counts(static_cast<size_t>(n_classes), 0);
  for (int xx = 0; xx < width; ++xx) {
    const size_t idx = size_t(y) * width + xx;
    if (mask[idx]) {
      out[idx] = labels[idx];
      continue;
    }
    std::fill(counts.begin(), counts.end(), 0);
    for (int j = std::max(0, y - r); j <= std::min(height - 1, y + r); ++j)
      for (int i = std::max(0, xx - r); i <= std::min(width - 1, xx + r); ++i) {
        const size_t w = size_t(j) * width + i;
        if (!mask[w]) ++counts[size_t(labels[w])];
      }
    int best = 0;
    for (int c = 1; c < n_classes; ++c)
      if (counts[size_t(c)] > counts[size_t(best)]) best = c;
    const int center = labels[idx];
    if (counts[size_t(center)] == counts[size_t(best)]) best = center;
    out[idx] = best;
  }
}
}  // namespace

void majority_vote(const int32_t* labels, const uint8_t* mask, int width, int height,
                   int window, int n_classes, int32_t* out) {
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y)
    vote_row(labels, mask, width, height, window, n_classes, y, out);
}

void serial::majority_vote(const int32_t* labels, const uint8_t* mask, int width,
                           int height, int window, int n_classes, int32_t* out) {
  for (int y = 0; y < height; ++y)
    vote_row(labels, mask, width, height, window, n_classes, y, out);
}

}  // namespace flnet::kern
