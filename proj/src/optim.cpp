#include "flnet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flnet/rng.hpp"

namespace flnet {

Adam::Adam(std::vector<ad::TensorF> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.values().size(), 0.0f);
    v_.emplace_back(p.values().size(), 0.0f);
  }
}

bool Adam::step() {
  for (const auto& p : params_) {
    if (p.grad().size() != p.values().size()) return false;
    for (float g : p.grad())
      if (!std::isfinite(g)) return false;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    auto& val = params_[k].values();
    const auto& grad = params_[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < val.size(); ++i) {
      const double g = grad[i];
      const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      m[i] = float(mi);
      v[i] = float(vi);
      val[i] = float(val[i] - cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps));
    }
  }
  return true;
}

namespace {

std::vector<std::vector<float>> snapshot(const std::vector<ad::TensorF>& params) {
  std::vector<std::vector<float>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.values());
  return out;
}

void restore(std::vector<ad::TensorF>& params, const std::vector<std::vector<float>>& snap) {
  for (size_t i = 0; i < params.size(); ++i) params[i].values() = snap[i];
}

}  // namespace

TrainResult run_training(TrainJob& job, const TrainSchedule& schedule,
                         const AdamConfig& adam_cfg) {
  if (job.n_train < 1) fail(ErrorCode::usage, "run_training: empty training split");
  if (schedule.batch_size < 1) fail(ErrorCode::usage, "run_training: batch_size < 1");
  if (schedule.plateau_factor <= 0.0 || schedule.plateau_factor >= 1.0)
    fail(ErrorCode::usage, "run_training: plateau factor must be in (0,1)");

  Adam adam(job.params, adam_cfg);
  Rng rng(schedule.seed);
  TrainResult result;
  auto best = snapshot(job.params);
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int since_best = 0, since_plateau = 0;

  std::vector<int> order(size_t(job.n_train));
  for (int i = 0; i < job.n_train; ++i) order[size_t(i)] = i;

  for (int epoch = 1; epoch <= schedule.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    long n_seen = 0;
    bool dead = false;
    for (int start = 0; start < job.n_train; start += schedule.batch_size) {
      const int count = std::min(schedule.batch_size, job.n_train - start);
      for (auto& p : job.params) p.zero_grad();
      ad::TensorF loss = job.batch_loss({order.data() + start, size_t(count)});
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        dead = true;
        break;
      }
      ad::backward(loss);
      if (!adam.step()) {
        dead = true;
        break;
      }
      loss_sum += lv * count;
      n_seen += count;
    }
    if (dead) {
      restore(job.params, best);
      result.diverged = true;
      break;
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / double(n_seen);
    st.val_loss = job.val_loss ? job.val_loss() : st.train_loss;
    st.lr = adam.lr();
    result.history.push_back(st);
    if (job.on_epoch) job.on_epoch(st);
    if (!std::isfinite(st.val_loss)) {
      restore(job.params, best);
      result.diverged = true;
      break;
    }

    if (st.val_loss < best_val - schedule.min_delta) {
      best_val = st.val_loss;
      best_epoch = epoch;
      best = snapshot(job.params);
      since_best = 0;
      since_plateau = 0;
    } else {
      ++since_best;
      ++since_plateau;
      if (since_plateau >= schedule.plateau_patience) {
        adam.set_lr(adam.lr() * schedule.plateau_factor);
        since_plateau = 0;
      }
      if (since_best >= schedule.early_stop_patience) break;
    }
  }

  restore(job.params, best);
  result.best_epoch = best_epoch;
  result.best_val_loss = best_val;
  return result;
}

}  // namespace flnet
