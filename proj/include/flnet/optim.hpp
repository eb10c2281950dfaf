#pragma once

#include <functional>
#include <span>
#include <vector>

#include "flnet/autodiff.hpp"

namespace flnet {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter set.
class Adam {
 public:
  Adam(std::vector<ad::TensorF> params, AdamConfig cfg);

  // Applies one update from the parameters' current gradients. Refuses the
  // whole step (state untouched) if any gradient is non-finite.
  bool step();

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  long steps() const { return t_; }

 private:
  std::vector<ad::TensorF> params_;
  std::vector<std::vector<float>> m_, v_;
  long t_ = 0;
  AdamConfig cfg_;
};

struct TrainSchedule {
  int max_epochs = 100;
  int batch_size = 8;
  int early_stop_patience = 10;
  double min_delta = 1e-5;
  double plateau_factor = 0.5;
  int plateau_patience = 5;
  uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool diverged = false;
};

// A training job: the parameters to optimize, a closure building the batch
// loss graph, and a validation-loss evaluation. Sample order is shuffled per
// epoch from the schedule seed, so a fixed seed reproduces bit-identically.
struct TrainJob {
  std::vector<ad::TensorF> params;
  int n_train = 0;
  std::function<ad::TensorF(std::span<const int>)> batch_loss;
  std::function<double()> val_loss;
  std::function<void(const EpochStats&)> on_epoch;  // optional
};

// Epoch loop with best-checkpoint tracking, plateau LR decay and early
// stopping. On return (including divergence aborts) the parameters hold the
// best checkpoint seen.
TrainResult run_training(TrainJob& job, const TrainSchedule& schedule,
                         const AdamConfig& adam_cfg);

}  // namespace flnet
