#include "flnet/unet.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "flnet/change.hpp"
#include "flnet/metrics.hpp"
#include "flnet/synth.hpp"

namespace flnet {

void UnetConfig::validate() const {
  if (depth < 1) fail(ErrorCode::usage, "unet: depth must be >= 1");
  if (base_channels < 1) fail(ErrorCode::usage, "unet: base_channels must be >= 1");
  if (n_classes != 3) fail(ErrorCode::usage, "unet: three classes expected");
  if (class_weights)
    for (float w : *class_weights)
      if (!(w > 0)) fail(ErrorCode::usage, "unet: class weights must be positive");
}

long long UnetConfig::param_count() const {
  long long total = 0;
  int cin = in_channels;
  for (int l = 0; l < depth; ++l) {
    const int c = base_channels << l;
    total += (long long)nn::Conv<float>::count(cin, c, 3);
    total += (long long)nn::Conv<float>::count(c, c, 3);
    cin = c;
  }
  const int cb = base_channels << depth;
  total += (long long)nn::Conv<float>::count(cin, cb, 3);
  total += (long long)nn::Conv<float>::count(cb, cb, 3);
  for (int l = depth - 1; l >= 0; --l) {
    const int c = base_channels << l;
    total += (long long)nn::Conv<float>::count(2 * c, c, 3);  // reduce after upsample
    total += (long long)nn::Conv<float>::count(2 * c, c, 3);  // after skip concat
    total += (long long)nn::Conv<float>::count(c, c, 3);
  }
  total += (long long)nn::Conv<float>::count(base_channels, n_classes, 1);
  return total;
}

template <typename T>
Unet<T>::Unet(const UnetConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  int cin = cfg.in_channels;
  for (int l = 0; l < cfg.depth; ++l) {
    const int c = cfg.base_channels << l;
    enc_.emplace_back(cin, c, 3, 1, rng);
    enc_.emplace_back(c, c, 3, 1, rng);
    cin = c;
  }
  const int cb = cfg.base_channels << cfg.depth;
  mid1_ = nn::Conv<T>(cin, cb, 3, 1, rng);
  mid2_ = nn::Conv<T>(cb, cb, 3, 1, rng);
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const int c = cfg.base_channels << l;
    reduce_.emplace_back(2 * c, c, 3, 1, rng);
    dec_.emplace_back(2 * c, c, 3, 1, rng);
    dec_.emplace_back(c, c, 3, 1, rng);
  }
  final_ = nn::Conv<T>(cfg.base_channels, cfg.n_classes, 1, 0, rng);
}

template <typename T>
ad::Tensor<T> Unet<T>::forward(const ad::Tensor<T>& x) const {
  const auto s = x.shape();
  if (s.h % cfg_.divisor() || s.w % cfg_.divisor())
    fail(ErrorCode::usage, "unet: input dims must be divisible by " +
                               std::to_string(cfg_.divisor()) + " (pad first)");
  std::vector<ad::Tensor<T>> skips;
  ad::Tensor<T> h = x;
  for (int l = 0; l < cfg_.depth; ++l) {
    h = ad::relu(enc_[size_t(2 * l)](h));
    h = ad::relu(enc_[size_t(2 * l + 1)](h));
    skips.push_back(h);
    h = ad::max_pool2d(h);
  }
  h = ad::relu(mid2_(ad::relu(mid1_(h))));
  for (int i = 0; i < cfg_.depth; ++i) {
    h = reduce_[size_t(i)](ad::upsample_nearest2(h));
    h = ad::concat_channels(skips[size_t(cfg_.depth - 1 - i)], h);
    h = ad::relu(dec_[size_t(2 * i)](h));
    h = ad::relu(dec_[size_t(2 * i + 1)](h));
  }
  return final_(h);
}

template <typename T>
std::vector<std::pair<std::string, ad::Tensor<T>>> Unet<T>::named_params() const {
  std::vector<std::pair<std::string, ad::Tensor<T>>> out;
  for (int l = 0; l < cfg_.depth; ++l) {
    enc_[size_t(2 * l)].collect("enc." + std::to_string(l) + ".c1", out);
    enc_[size_t(2 * l + 1)].collect("enc." + std::to_string(l) + ".c2", out);
  }
  mid1_.collect("mid.c1", out);
  mid2_.collect("mid.c2", out);
  for (int i = 0; i < cfg_.depth; ++i) {
    const std::string lvl = std::to_string(cfg_.depth - 1 - i);
    reduce_[size_t(i)].collect("dec." + lvl + ".reduce", out);
    dec_[size_t(2 * i)].collect("dec." + lvl + ".c1", out);
    dec_[size_t(2 * i + 1)].collect("dec." + lvl + ".c2", out);
  }
  final_.collect("final", out);
  return out;
}

template <typename T>
long long Unet<T>::param_count() const {
  long long n = 0;
  for (const auto& [name, t] : named_params()) n += (long long)t.values().size();
  return n;
}

template class Unet<float>;
template class Unet<double>;

void save_unet(const std::string& path, const UnetF& model) {
  save_checkpoint(path, nn::to_records(model.named_params()));
}

UnetF load_unet(const std::string& path, const UnetConfig& cfg) {
  UnetF model(cfg, 0);
  nn::load_records(model.named_params(), load_checkpoint(path));
  return model;
}

// ------------------------------------------------------------------ dataset

std::vector<SegChip> make_seg_chips(const Raster& delta, const Raster& labels, int chip,
                                    int stride, double max_nodata_fraction) {
  if (!delta.co_gridded_with(labels))
    fail(ErrorCode::grid_mismatch, "make_seg_chips: delta and labels not co-gridded");
  std::vector<SegChip> chips;
  for (int y = 0; y + chip <= delta.height(); y += stride)
    for (int x = 0; x + chip <= delta.width(); x += stride) {
      size_t bad = 0;
      for (int j = 0; j < chip; ++j)
        for (int i = 0; i < chip; ++i)
          bad += !delta.valid(y + j, x + i) || !labels.valid(y + j, x + i);
      if (double(bad) > max_nodata_fraction * chip * chip) continue;
      SegChip c;
      c.size = chip;
      c.delta.resize(size_t(chip) * chip);
      c.labels.assign(c.delta.size(), 0);
      c.invalid.resize(c.delta.size());
      for (int j = 0; j < chip; ++j)
        for (int i = 0; i < chip; ++i) {
          const size_t k = size_t(j) * chip + i;
          const bool ok = delta.valid(y + j, x + i) && labels.valid(y + j, x + i);
          c.invalid[k] = ok ? 0 : 1;
          c.delta[k] = delta.valid(y + j, x + i) ? delta.at(y + j, x + i) : 0.0f;
          if (ok) c.labels[k] = int32_t(labels.at(y + j, x + i));
        }
      chips.push_back(std::move(c));
    }
  return chips;
}

std::vector<SegChip> make_seg_dataset(const std::vector<SceneBundle>& scenes, int chip,
                                      int stride, double max_nodata_fraction) {
  std::vector<SegChip> chips;
  for (const auto& s : scenes) {
    Raster delta = delta_ndvi(s.pre_hr, s.post_hr);
    auto c = make_seg_chips(delta, s.truth_labels, chip, stride, max_nodata_fraction);
    chips.insert(chips.end(), std::make_move_iterator(c.begin()),
                 std::make_move_iterator(c.end()));
  }
  return chips;
}

// ----------------------------------------------------------------- training

namespace {

ad::TensorF seg_batch_forward(const UnetF& model, const std::vector<SegChip>& chips,
                              std::span<const int> idx, std::vector<int32_t>& labels,
                              std::vector<uint8_t>& invalid) {
  const int n = int(idx.size());
  const int s = chips[size_t(idx[0])].size;
  std::vector<float> input(size_t(n) * s * s);
  labels.resize(input.size());
  invalid.resize(input.size());
  for (int i = 0; i < n; ++i) {
    const SegChip& c = chips[size_t(idx[size_t(i)])];
    if (c.size != s) fail(ErrorCode::usage, "train_unet: mixed chip sizes in one batch");
    std::copy(c.delta.begin(), c.delta.end(), input.begin() + size_t(i) * s * s);
    std::copy(c.labels.begin(), c.labels.end(), labels.begin() + size_t(i) * s * s);
    std::copy(c.invalid.begin(), c.invalid.end(), invalid.begin() + size_t(i) * s * s);
  }
  return model.forward(ad::TensorF::from({n, 1, s, s}, std::move(input)));
}

std::array<float, 3> inverse_frequency_weights(const std::vector<SegChip>& chips) {
  std::array<int64_t, 3> counts{0, 0, 0};
  for (const auto& c : chips)
    for (size_t i = 0; i < c.labels.size(); ++i)
      if (!c.invalid[i]) ++counts[size_t(c.labels[i])];
  const double total = double(counts[0] + counts[1] + counts[2]);
  std::array<float, 3> w;
  for (int c = 0; c < 3; ++c)
    w[size_t(c)] = float(total / (3.0 * std::max<int64_t>(counts[size_t(c)], 1)));
  return w;
}

void argmax_labels(const std::vector<float>& logits, int n, int s,
                   std::vector<int32_t>& out) {
  const size_t plane = size_t(s) * s;
  out.resize(size_t(n) * plane);
  for (int b = 0; b < n; ++b)
    for (size_t p = 0; p < plane; ++p) {
      const size_t base = size_t(b) * 3 * plane + p;
      int best = 0;
      float bv = logits[base];
      for (int c = 1; c < 3; ++c)
        if (logits[base + size_t(c) * plane] > bv) {
          bv = logits[base + size_t(c) * plane];
          best = c;
        }
      out[size_t(b) * plane + p] = best;
    }
}

}  // namespace

TrainResult train_unet(UnetF& model, const std::vector<SegChip>& train,
                       const std::vector<SegChip>& val, const TrainSchedule& schedule,
                       const AdamConfig& adam_cfg, std::ostream* log) {
  if (train.empty()) fail(ErrorCode::usage, "train_unet: no training chips");

  const UnetConfig& cfg = model.config();
  std::optional<std::array<float, 3>> weights = cfg.class_weights;
  if (!weights && cfg.auto_class_weights) weights = inverse_frequency_weights(train);
  if (log && weights)
    (*log) << "class_weights " << (*weights)[0] << " " << (*weights)[1] << " "
           << (*weights)[2] << "\n";

  TrainJob job;
  job.params = model.params();
  job.n_train = int(train.size());
  job.batch_loss = [&, weights](std::span<const int> idx) {
    std::vector<int32_t> labels;
    std::vector<uint8_t> invalid;
    auto logits = seg_batch_forward(model, train, idx, labels, invalid);
    return ad::cross_entropy_loss(logits, labels, weights, cfg.focal_gamma, invalid);
  };
  if (!val.empty()) {
    job.val_loss = [&, weights]() {
      double sum = 0.0;
      long count = 0;
      std::vector<int> idx;
      for (int start = 0; start < int(val.size()); start += schedule.batch_size) {
        const int n = std::min(schedule.batch_size, int(val.size()) - start);
        idx.resize(size_t(n));
        for (int i = 0; i < n; ++i) idx[size_t(i)] = start + i;
        std::vector<int32_t> labels;
        std::vector<uint8_t> invalid;
        auto logits = seg_batch_forward(model, val, idx, labels, invalid);
        sum += double(
                   ad::cross_entropy_loss(logits, labels, weights, cfg.focal_gamma, invalid)
                       .item()) *
               n;
        count += n;
      }
      return sum / double(count);
    };
  }
  if (log) {
    job.on_epoch = [&, log](const EpochStats& st) {
      const auto& set = val.empty() ? train : val;
      ConfusionMatrix cm;
      std::vector<int32_t> pred;
      for (const auto& c : set) {
        auto logits = model.forward(ad::TensorF::from({1, 1, c.size, c.size}, c.delta));
        argmax_labels(logits.values(), 1, c.size, pred);
        for (size_t i = 0; i < pred.size(); ++i)
          if (!c.invalid[i]) ++cm.counts[size_t(c.labels[i])][size_t(pred[i])];
      }
      const auto f1 = f1_scores(cm);
      (*log) << "epoch " << st.epoch << " train_ce " << st.train_loss << " val_ce "
             << st.val_loss << " f1_no " << f1.f1[0] << " f1_partial " << f1.f1[1]
             << " f1_full " << f1.f1[2] << " macro_f1 " << f1.macro_f1 << " lr "
             << st.lr << "\n";
    };
  }
  return run_training(job, schedule, adam_cfg);
}

// ---------------------------------------------------------------- inference

namespace {

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

inline double feather(int i, int size, bool lo_open, bool hi_open, double band) {
  double w = 1.0;
  if (lo_open) w = std::min(w, (i + 0.5) / band);
  if (hi_open) w = std::min(w, (size - i - 0.5) / band);
  return std::max(w, 0.0);
}

// Index into [0, n) mirrored at the edges (no edge repeat).
inline int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

}  // namespace

Raster predict_damage(const UnetF& model, const Raster& delta, int tile, int overlap,
                      int min_object_size) {
  if (delta.bands() != 1) fail(ErrorCode::usage, "predict_damage: single-band input");
  if (overlap < 1 || overlap >= tile)
    fail(ErrorCode::usage, "predict_damage: need 0 < overlap < tile");
  const int W = delta.width(), H = delta.height();
  const int div = model.config().divisor();
  const int step = tile - overlap;

  std::vector<double> num(size_t(W) * H * 3, 0.0);
  std::vector<double> den(size_t(W) * H, 0.0);

  const auto xs = tile_starts(W, tile, step);
  const auto ys = tile_starts(H, tile, step);
  for (int ty : ys)
    for (int tx : xs) {
      const int tw = std::min(tile, W), th = std::min(tile, H);
      const int pw = (tw + div - 1) / div * div;
      const int ph = (th + div - 1) / div * div;
      std::vector<float> input(size_t(pw) * ph, 0.0f);
      for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x) {
          const int sy = ty + reflect(y, th), sx = tx + reflect(x, tw);
          input[size_t(y) * pw + x] = delta.valid(sy, sx) ? delta.at(sy, sx) : 0.0f;
        }
      auto logits = model.forward(ad::TensorF::from({1, 1, ph, pw}, std::move(input)));
      const auto& v = logits.values();
      const bool xlo = tx > 0, xhi = tx + tw < W;
      const bool ylo = ty > 0, yhi = ty + th < H;
      for (int y = 0; y < th; ++y) {
        const double wy = feather(y, th, ylo, yhi, double(overlap));
        for (int x = 0; x < tw; ++x) {
          const double w = wy * feather(x, tw, xlo, xhi, double(overlap));
          if (w <= 0.0) continue;
          const size_t oi = size_t(ty + y) * W + (tx + x);
          for (int c = 0; c < 3; ++c)
            num[oi * 3 + size_t(c)] += w * double(v[(size_t(c) * ph + y) * pw + x]);
          den[oi] += w;
        }
      }
    }

  Raster labels(W, H, 1, delta.geo());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!delta.valid(y, x)) {
        labels.set_nodata(y, x);
        continue;
      }
      const size_t oi = size_t(y) * W + x;
      int best = 0;
      double bv = num[oi * 3] / den[oi];
      for (int c = 1; c < 3; ++c) {
        const double lv = num[oi * 3 + size_t(c)] / den[oi];
        if (lv > bv) {
          bv = lv;
          best = c;
        }
      }
      labels.at(y, x) = float(best);
    }
  return min_object_size > 1 ? small_object_removal(labels, min_object_size) : labels;
}

}  // namespace flnet
