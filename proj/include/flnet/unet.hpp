#pragma once

#include <iosfwd>
#include <optional>

#include "flnet/layers.hpp"
#include "flnet/raster.hpp"

namespace flnet {

struct SceneBundle;

struct UnetConfig {
  int depth = 4;
  int base_channels = 32;  // doubles per level
  int in_channels = 1;
  int n_classes = 3;
  std::optional<std::array<float, 3>> class_weights;
  bool auto_class_weights = false;  // inverse frequency over the training split
  std::optional<float> focal_gamma;

  void validate() const;
  int divisor() const { return 1 << depth; }
  long long param_count() const;
};

// Encoder-decoder with skip connections: per level conv-relu-conv-relu then
// 2x2 max pool; nearest upsampling + channel-reducing conv + skip concat on
// the way back; 1x1 conv to class logits.
template <typename T>
class Unet {
 public:
  Unet(const UnetConfig& cfg, uint64_t seed);

  // Spatial dims must be divisible by 2^depth.
  ad::Tensor<T> forward(const ad::Tensor<T>& x) const;
  const UnetConfig& config() const { return cfg_; }
  std::vector<std::pair<std::string, ad::Tensor<T>>> named_params() const;
  std::vector<ad::Tensor<T>> params() const { return nn::param_tensors(named_params()); }
  long long param_count() const;

 private:
  UnetConfig cfg_;
  std::vector<nn::Conv<T>> enc_;     // 2 per level
  nn::Conv<T> mid1_, mid2_;
  std::vector<nn::Conv<T>> reduce_;  // 1 per level (deep to shallow)
  std::vector<nn::Conv<T>> dec_;     // 2 per level (deep to shallow)
  nn::Conv<T> final_;
};

using UnetF = Unet<float>;

void save_unet(const std::string& path, const UnetF& model);
UnetF load_unet(const std::string& path, const UnetConfig& cfg);

// One segmentation chip: the change feature with nodata imputed to zero,
// int labels, and the invalid mask excluded from loss and metrics.
struct SegChip {
  int size = 0;
  std::vector<float> delta;
  std::vector<int32_t> labels;
  std::vector<uint8_t> invalid;
};

std::vector<SegChip> make_seg_chips(const Raster& delta, const Raster& labels, int chip,
                                    int stride, double max_nodata_fraction);

// Chips from every scene's clean high-resolution change feature + truth.
std::vector<SegChip> make_seg_dataset(const std::vector<SceneBundle>& scenes, int chip,
                                      int stride, double max_nodata_fraction);

// Cross-entropy training via run_training (class weights resolved here when
// auto_class_weights is set); logs class-wise validation F1 per epoch.
TrainResult train_unet(UnetF& model, const std::vector<SegChip>& train,
                       const std::vector<SegChip>& val, const TrainSchedule& schedule,
                       const AdamConfig& adam_cfg, std::ostream* log = nullptr);

// Tiled inference: reflect-padding to divisibility, feather-blended mean
// logits in overlaps, per-pixel argmax (first index on ties), nodata
// propagated, then small-object removal.
Raster predict_damage(const UnetF& model, const Raster& delta, int tile = 256,
                      int overlap = 32, int min_object_size = 10);

}  // namespace flnet
