#pragma once

#include <iosfwd>

#include "flnet/layers.hpp"
#include "flnet/raster.hpp"

namespace flnet {

struct SceneBundle;

struct EdsrConfig {
  int n_resblocks = 16;
  int n_feats = 64;
  int scale = 3;
  int kernel = 3;
  float residual_scale = 1.0f;
  int in_channels = 1;
  int out_channels = 1;

  void validate() const;
  // head + 2 convs per block + body-end conv + upsampler conv + output conv.
  long long param_count() const;
};

// EDSR: conv head, residual body with a global skip, pixel-shuffle tail.
template <typename T>
class Edsr {
 public:
  Edsr(const EdsrConfig& cfg, uint64_t seed);

  ad::Tensor<T> forward(const ad::Tensor<T>& x) const;
  const EdsrConfig& config() const { return cfg_; }
  std::vector<std::pair<std::string, ad::Tensor<T>>> named_params() const;
  std::vector<ad::Tensor<T>> params() const { return nn::param_tensors(named_params()); }
  long long param_count() const;

 private:
  EdsrConfig cfg_;
  nn::Conv<T> head_;
  std::vector<nn::Conv<T>> body_;  // 2 per block
  nn::Conv<T> body_end_;
  nn::Conv<T> upsample_;
  nn::Conv<T> out_;
};

using EdsrF = Edsr<float>;

void save_edsr(const std::string& path, const EdsrF& model);
EdsrF load_edsr(const std::string& path, const EdsrConfig& cfg);

// One aligned training pair. lr holds the chip with nodata imputed to zero;
// the loss masks hr_invalid pixels out.
struct SrPair {
  int lr_size = 0, hr_size = 0;
  std::vector<float> lr;
  std::vector<float> hr;
  std::vector<uint8_t> hr_invalid;
};

// Cuts co-registered (chip/r, chip) windows. chip_hr must be divisible by the
// scale; stride is snapped down to the nearest multiple of the scale. Windows
// whose nodata fraction exceeds max_nodata_fraction on either side are
// skipped.
std::vector<SrPair> make_sr_pairs(const Raster& lr, const Raster& hr, int scale,
                                  int chip_hr, int stride_hr,
                                  double max_nodata_fraction);

// Pairs from both dates of each scene bundle.
std::vector<SrPair> make_sr_dataset(const std::vector<SceneBundle>& scenes, int chip_hr,
                                    int stride_hr, double max_nodata_fraction);

// Masked-L1 training via run_training; logs validation PSNR per epoch when a
// log stream is given. The model ends up holding the best checkpoint.
TrainResult train_edsr(EdsrF& model, const std::vector<SrPair>& train,
                       const std::vector<SrPair>& val, const TrainSchedule& schedule,
                       const AdamConfig& adam_cfg, std::ostream* log = nullptr);

// Tiled full-raster inference with linear feather blending in the overlaps.
// Output is clamped to [-1, 1], carries the nearest-upsampled nodata mask and
// the r-times-finer grid.
Raster infer_sr(const EdsrF& model, const Raster& lr_raster, int tile = 64,
                int overlap = 8);

// Mean validation PSNR of a prediction callable over SR pairs; shared by
// training logs and the evaluation of baselines.
double sr_pairs_psnr(const std::vector<SrPair>& pairs,
                     const std::function<std::vector<float>(const SrPair&)>& predict,
                     double L = 2.0);

}  // namespace flnet
