#include "flnet/edsr.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "flnet/metrics.hpp"
#include "flnet/raster_ops.hpp"
#include "flnet/synth.hpp"

namespace flnet {

void EdsrConfig::validate() const {
  if (scale < 2) fail(ErrorCode::usage, "edsr: scale must be >= 2");
  if (n_resblocks < 1) fail(ErrorCode::usage, "edsr: n_resblocks must be >= 1");
  if (n_feats < 1) fail(ErrorCode::usage, "edsr: n_feats must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) fail(ErrorCode::usage, "edsr: kernel must be odd");
}

long long EdsrConfig::param_count() const {
  const long long k2 = (long long)kernel * kernel;
  const long long f = n_feats;
  long long total = f * in_channels * k2 + f;                    // head
  total += 2LL * n_resblocks * (f * f * k2 + f);                 // residual body
  total += f * f * k2 + f;                                       // body-end conv
  total += (f * scale * scale) * f * k2 + f * scale * scale;     // upsampler conv
  total += (long long)out_channels * f * k2 + out_channels;      // output conv
  return total;
}

template <typename T>
Edsr<T>::Edsr(const EdsrConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int p = (cfg.kernel - 1) / 2;
  head_ = nn::Conv<T>(cfg.in_channels, cfg.n_feats, cfg.kernel, p, rng);
  body_.reserve(size_t(cfg.n_resblocks) * 2);
  for (int i = 0; i < cfg.n_resblocks * 2; ++i)
    body_.emplace_back(cfg.n_feats, cfg.n_feats, cfg.kernel, p, rng);
  body_end_ = nn::Conv<T>(cfg.n_feats, cfg.n_feats, cfg.kernel, p, rng);
  upsample_ = nn::Conv<T>(cfg.n_feats, cfg.n_feats * cfg.scale * cfg.scale, cfg.kernel,
                          p, rng);
  out_ = nn::Conv<T>(cfg.n_feats, cfg.out_channels, cfg.kernel, p, rng);
}

template <typename T>
ad::Tensor<T> Edsr<T>::forward(const ad::Tensor<T>& x) const {
  ad::Tensor<T> h = head_(x);
  ad::Tensor<T> b = h;
  for (int i = 0; i < cfg_.n_resblocks; ++i) {
    ad::Tensor<T> t = body_[size_t(2 * i + 1)](ad::relu(body_[size_t(2 * i)](b)));
    if (cfg_.residual_scale != 1.0f) t = ad::scale(t, T(cfg_.residual_scale));
    b = ad::add(b, t);
  }
  b = ad::add(body_end_(b), h);
  ad::Tensor<T> up = ad::pixel_shuffle(upsample_(b), cfg_.scale);
  return out_(up);
}

template <typename T>
std::vector<std::pair<std::string, ad::Tensor<T>>> Edsr<T>::named_params() const {
  std::vector<std::pair<std::string, ad::Tensor<T>>> out;
  head_.collect("head", out);
  for (int i = 0; i < cfg_.n_resblocks; ++i) {
    body_[size_t(2 * i)].collect("body." + std::to_string(i) + ".c1", out);
    body_[size_t(2 * i + 1)].collect("body." + std::to_string(i) + ".c2", out);
  }
  body_end_.collect("body_end", out);
  upsample_.collect("tail.up", out);
  out_.collect("tail.out", out);
  return out;
}

template <typename T>
long long Edsr<T>::param_count() const {
  long long n = 0;
  for (const auto& [name, t] : named_params()) n += (long long)t.values().size();
  return n;
}

template class Edsr<float>;
template class Edsr<double>;

void save_edsr(const std::string& path, const EdsrF& model) {
  save_checkpoint(path, nn::to_records(model.named_params()));
}

EdsrF load_edsr(const std::string& path, const EdsrConfig& cfg) {
  EdsrF model(cfg, 0);
  nn::load_records(model.named_params(), load_checkpoint(path));
  return model;
}

// ------------------------------------------------------------------ dataset

namespace {

double window_nodata_fraction(const Raster& r, int x0, int y0, int size) {
  size_t bad = 0;
  for (int y = y0; y < y0 + size; ++y)
    for (int x = x0; x < x0 + size; ++x) bad += !r.valid(y, x);
  return double(bad) / (double(size) * size);
}

}  // namespace

std::vector<SrPair> make_sr_pairs(const Raster& lr, const Raster& hr, int scale,
                                  int chip_hr, int stride_hr,
                                  double max_nodata_fraction) {
  if (scale < 2) fail(ErrorCode::usage, "make_sr_pairs: scale must be >= 2");
  if (chip_hr % scale != 0)
    fail(ErrorCode::usage,
         "make_sr_pairs: chip size " + std::to_string(chip_hr) +
             " is not divisible by the scale " + std::to_string(scale) +
             "; choose a divisible chip, or resample the low-resolution raster onto "
             "a grid exactly scale-times coarser than the target first");
  if (hr.width() != lr.width() * scale || hr.height() != lr.height() * scale ||
      !(lr.geo() == hr.geo().coarsened(scale)))
    fail(ErrorCode::grid_mismatch,
         "make_sr_pairs: high-res grid is not exactly scale-times finer with the "
         "same origin");

  const int stride = std::max(scale, stride_hr / scale * scale);
  const int chip_lr = chip_hr / scale;
  std::vector<SrPair> pairs;
  for (int hy = 0; hy + chip_hr <= hr.height(); hy += stride)
    for (int hx = 0; hx + chip_hr <= hr.width(); hx += stride) {
      const int lx = hx / scale, ly = hy / scale;
      if (window_nodata_fraction(lr, lx, ly, chip_lr) > max_nodata_fraction) continue;
      if (window_nodata_fraction(hr, hx, hy, chip_hr) > max_nodata_fraction) continue;
      SrPair p;
      p.lr_size = chip_lr;
      p.hr_size = chip_hr;
      p.lr.resize(size_t(chip_lr) * chip_lr);
      p.hr.resize(size_t(chip_hr) * chip_hr);
      p.hr_invalid.resize(p.hr.size());
      for (int y = 0; y < chip_lr; ++y)
        for (int x = 0; x < chip_lr; ++x)
          p.lr[size_t(y) * chip_lr + x] =
              lr.valid(ly + y, lx + x) ? lr.at(ly + y, lx + x) : 0.0f;
      for (int y = 0; y < chip_hr; ++y)
        for (int x = 0; x < chip_hr; ++x) {
          const bool ok = hr.valid(hy + y, hx + x);
          p.hr[size_t(y) * chip_hr + x] = ok ? hr.at(hy + y, hx + x) : 0.0f;
          p.hr_invalid[size_t(y) * chip_hr + x] = ok ? 0 : 1;
        }
      pairs.push_back(std::move(p));
    }
  return pairs;
}

std::vector<SrPair> make_sr_dataset(const std::vector<SceneBundle>& scenes, int chip_hr,
                                    int stride_hr, double max_nodata_fraction) {
  std::vector<SrPair> pairs;
  for (const auto& s : scenes) {
    auto a = make_sr_pairs(s.pre_lr, s.pre_hr, s.scale, chip_hr, stride_hr,
                           max_nodata_fraction);
    auto b = make_sr_pairs(s.post_lr, s.post_hr, s.scale, chip_hr, stride_hr,
                           max_nodata_fraction);
    pairs.insert(pairs.end(), std::make_move_iterator(a.begin()),
                 std::make_move_iterator(a.end()));
    pairs.insert(pairs.end(), std::make_move_iterator(b.begin()),
                 std::make_move_iterator(b.end()));
  }
  return pairs;
}

// ----------------------------------------------------------------- training

namespace {

ad::TensorF batch_forward(const EdsrF& model, const std::vector<SrPair>& pairs,
                          std::span<const int> idx, std::vector<float>& target,
                          std::vector<uint8_t>& invalid) {
  const int n = int(idx.size());
  const int ls = pairs[size_t(idx[0])].lr_size;
  const int hs = pairs[size_t(idx[0])].hr_size;
  std::vector<float> input(size_t(n) * ls * ls);
  target.resize(size_t(n) * hs * hs);
  invalid.resize(target.size());
  for (int i = 0; i < n; ++i) {
    const SrPair& p = pairs[size_t(idx[size_t(i)])];
    if (p.lr_size != ls || p.hr_size != hs)
      fail(ErrorCode::usage, "train_edsr: mixed chip sizes in one batch");
    std::copy(p.lr.begin(), p.lr.end(), input.begin() + size_t(i) * ls * ls);
    std::copy(p.hr.begin(), p.hr.end(), target.begin() + size_t(i) * hs * hs);
    std::copy(p.hr_invalid.begin(), p.hr_invalid.end(),
              invalid.begin() + size_t(i) * hs * hs);
  }
  auto x = ad::TensorF::from({n, 1, ls, ls}, std::move(input));
  return model.forward(x);
}

}  // namespace

double sr_pairs_psnr(const std::vector<SrPair>& pairs,
                     const std::function<std::vector<float>(const SrPair&)>& predict,
                     double L) {
  double se = 0.0;
  size_t n = 0;
  for (const auto& p : pairs) {
    const auto pred = predict(p);
    for (size_t i = 0; i < pred.size(); ++i) {
      if (p.hr_invalid[i]) continue;
      const double d = double(pred[i]) - double(p.hr[i]);
      se += d * d;
      ++n;
    }
  }
  if (n == 0) fail(ErrorCode::usage, "sr_pairs_psnr: no valid pixels");
  return psnr_from_mse(se / double(n), L);
}

TrainResult train_edsr(EdsrF& model, const std::vector<SrPair>& train,
                       const std::vector<SrPair>& val, const TrainSchedule& schedule,
                       const AdamConfig& adam_cfg, std::ostream* log) {
  if (train.empty()) fail(ErrorCode::usage, "train_edsr: no training pairs");

  TrainJob job;
  job.params = model.params();
  job.n_train = int(train.size());
  job.batch_loss = [&](std::span<const int> idx) {
    std::vector<float> target;
    std::vector<uint8_t> invalid;
    auto pred = batch_forward(model, train, idx, target, invalid);
    return ad::l1_loss(pred, target, invalid);
  };
  if (!val.empty()) {
    job.val_loss = [&]() {
      double sum = 0.0;
      long count = 0;
      std::vector<int> idx;
      for (int start = 0; start < int(val.size()); start += schedule.batch_size) {
        const int n = std::min(schedule.batch_size, int(val.size()) - start);
        idx.resize(size_t(n));
        for (int i = 0; i < n; ++i) idx[size_t(i)] = start + i;
        std::vector<float> target;
        std::vector<uint8_t> invalid;
        auto pred = batch_forward(model, val, idx, target, invalid);
        sum += double(ad::l1_loss(pred, target, invalid).item()) * n;
        count += n;
      }
      return sum / double(count);
    };
  }
  if (log) {
    job.on_epoch = [&, log](const EpochStats& st) {
      const double p = sr_pairs_psnr(val.empty() ? train : val, [&](const SrPair& pr) {
        auto x = ad::TensorF::from({1, 1, pr.lr_size, pr.lr_size}, pr.lr);
        return model.forward(x).values();
      });
      (*log) << "epoch " << st.epoch << " train_l1 " << st.train_loss << " val_l1 "
             << st.val_loss << " val_psnr " << p << " lr " << st.lr << "\n";
    };
  }
  return run_training(job, schedule, adam_cfg);
}

// ---------------------------------------------------------------- inference

namespace {

// Tile start offsets covering [0, extent) with the last tile flush.
std::vector<int> tile_starts(int extent, int tile, int step) {
  std::vector<int> out;
  if (extent <= tile) return {0};
  for (int x = 0;; x += step) {
    if (x + tile >= extent) {
      out.push_back(extent - tile);
      break;
    }
    out.push_back(x);
  }
  return out;
}

// Feather profile: 1 in the core, linear ramp to the tile edge on sides that
// have a neighboring tile.
inline double feather(int i, int size, bool lo_open, bool hi_open, double band) {
  double w = 1.0;
  if (lo_open) w = std::min(w, (i + 0.5) / band);
  if (hi_open) w = std::min(w, (size - i - 0.5) / band);
  return std::max(w, 0.0);
}

}  // namespace

Raster infer_sr(const EdsrF& model, const Raster& lr_raster, int tile, int overlap) {
  if (lr_raster.bands() != 1) fail(ErrorCode::usage, "infer_sr: single-band input");
  if (tile < 8 || overlap < 1 || overlap >= tile)
    fail(ErrorCode::usage, "infer_sr: need 0 < overlap < tile");
  const int r = model.config().scale;
  const int W = lr_raster.width(), H = lr_raster.height();
  const int step = tile - overlap;

  std::vector<double> num(size_t(W) * r * H * r, 0.0);
  std::vector<double> den(num.size(), 0.0);
  const double band = double(overlap) * r;

  const auto xs = tile_starts(W, tile, step);
  const auto ys = tile_starts(H, tile, step);
  for (int ty : ys)
    for (int tx : xs) {
      const int tw = std::min(tile, W), th = std::min(tile, H);
      std::vector<float> input(size_t(tw) * th, 0.0f);
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x)
          if (lr_raster.valid(ty + y, tx + x))
            input[size_t(y) * tw + x] = lr_raster.at(ty + y, tx + x);
      auto out = model.forward(ad::TensorF::from({1, 1, th, tw}, std::move(input)));
      const auto& v = out.values();
      const bool xlo = tx > 0, xhi = tx + tw < W;
      const bool ylo = ty > 0, yhi = ty + th < H;
      for (int y = 0; y < th * r; ++y) {
        const double wy = feather(y, th * r, ylo, yhi, band);
        for (int x = 0; x < tw * r; ++x) {
          const double w = wy * feather(x, tw * r, xlo, xhi, band);
          if (w <= 0.0) continue;
          const size_t oi = size_t(ty * r + y) * (size_t(W) * r) + (tx * r + x);
          num[oi] += w * double(v[size_t(y) * tw * r + x]);
          den[oi] += w;
        }
      }
    }

  Raster out(W * r, H * r, 1, lr_raster.geo().refined(r));
  out.set_nodata_value(lr_raster.nodata_value());
  for (int y = 0; y < H * r; ++y)
    for (int x = 0; x < W * r; ++x) {
      if (!lr_raster.valid(y / r, x / r)) {
        out.set_nodata(y, x);
        continue;
      }
      const size_t i = size_t(y) * (size_t(W) * r) + x;
      const double v = den[i] > 0.0 ? num[i] / den[i] : 0.0;
      out.at(y, x) = float(std::clamp(v, -1.0, 1.0));
    }
  return out;
}

}  // namespace flnet
