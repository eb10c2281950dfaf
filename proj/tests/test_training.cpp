#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "flnet/checkpoint.hpp"
#include "flnet/edsr.hpp"
#include "flnet/synth.hpp"
#include "test_util.hpp"

using namespace flnet;
using ad::TensorF;

namespace {

// A scripted job: the validation curve is fixed, the parameter only exists so
// the optimizer has something to chew on.
struct ScriptedJob {
  TensorF p = TensorF::from({1, 1, 1, 1}, {1.0f}, true);
  std::vector<double> val_curve;
  int epoch = 0;

  TrainJob job() {
    TrainJob j;
    j.params = {p};
    j.n_train = 4;
    j.batch_loss = [this](std::span<const int>) {
      return ad::l1_loss(ad::scale(p, 0.01f), std::vector<float>{1.0f}, {});
    };
    j.val_loss = [this]() {
      const double v = val_curve[std::min(size_t(epoch), val_curve.size() - 1)];
      ++epoch;
      return v;
    };
    return j;
  }
};

}  // namespace

TEST_CASE("strictly improving validation: no LR drop, no early stop") {
  ScriptedJob s;
  for (int e = 0; e < 20; ++e) s.val_curve.push_back(1.0 / (e + 1));
  auto job = s.job();
  TrainSchedule sched;
  sched.max_epochs = 20;
  sched.batch_size = 4;
  sched.early_stop_patience = 3;
  sched.plateau_patience = 2;
  const auto r = run_training(job, sched, AdamConfig{.lr = 1e-3});
  REQUIRE(r.history.size() == 20);
  for (const auto& e : r.history) CHECK(e.lr == doctest::Approx(1e-3));
  CHECK(r.best_epoch == 20);
  CHECK_FALSE(r.diverged);
}

TEST_CASE("frozen validation: stop exactly patience epochs after the best") {
  ScriptedJob s;
  s.val_curve.assign(50, 1.0);
  auto job = s.job();
  TrainSchedule sched;
  sched.max_epochs = 50;
  sched.batch_size = 4;
  sched.early_stop_patience = 4;
  sched.plateau_patience = 2;
  sched.plateau_factor = 0.5;
  const auto r = run_training(job, sched, AdamConfig{.lr = 1e-3});
  REQUIRE(r.history.size() == 5);  // best at 1, then 4 patience epochs
  CHECK(r.best_epoch == 1);
  // LR halves after two flat epochs, and the drop shows up from epoch 4 on.
  CHECK(r.history[2].lr == doctest::Approx(1e-3));
  CHECK(r.history[3].lr == doctest::Approx(5e-4));
  CHECK(r.history[4].lr == doctest::Approx(5e-4));
}

TEST_CASE("non-finite loss aborts with the best checkpoint restored") {
  TensorF p = TensorF::from({1, 1, 1, 1}, {1.0f}, true);
  int step = 0;
  TrainJob job;
  job.params = {p};
  job.n_train = 1;
  job.batch_loss = [&](std::span<const int>) {
    ++step;
    const float v = step >= 3 ? std::numeric_limits<float>::quiet_NaN() : 1.0f;
    return ad::l1_loss(ad::scale(p, 1.0f), std::vector<float>{v}, {});
  };
  job.val_loss = [&]() { return 1.0; };
  TrainSchedule sched;
  sched.max_epochs = 10;
  sched.batch_size = 1;
  const auto r = run_training(job, sched, AdamConfig{.lr = 0.1});
  CHECK(r.diverged);
  CHECK(r.history.size() == 2);
}

TEST_CASE("overfit one 8-sample batch of the SR task") {
  // Small net, small chips; the oracle is trainability of the whole stack.
  SceneSpec spec;
  spec.seed = 3;
  spec.hr_size = 64;
  spec.parcel_count = 24;
  spec.damage_fraction = 0.4;
  spec.narrow_feature_count = 1;
  spec.scale = 2;
  const SceneBundle scene = generate_scene(spec);
  auto pairs = make_sr_pairs(scene.pre_lr, scene.pre_hr, 2, 16, 16, 0.0);
  REQUIRE(pairs.size() >= 8);
  pairs.resize(8);

  EdsrConfig cfg;
  cfg.n_resblocks = 2;
  cfg.n_feats = 8;
  cfg.scale = 2;
  EdsrF model(cfg, 17);
  TrainSchedule sched;
  sched.max_epochs = 500;
  sched.batch_size = 8;
  sched.early_stop_patience = 500;
  sched.plateau_patience = 500;
  sched.seed = 5;
  const auto r = train_edsr(model, pairs, {}, sched, AdamConfig{.lr = 1e-2});
  REQUIRE_FALSE(r.diverged);
  double final_train = r.history.back().train_loss;
  CHECK(final_train < 0.01);
  CHECK(r.history.size() <= 500);
}

TEST_CASE("same seed, same data: bit-identical parameters") {
  SceneSpec spec;
  spec.seed = 4;
  spec.hr_size = 48;
  spec.parcel_count = 12;
  spec.scale = 2;
  const SceneBundle scene = generate_scene(spec);
  const auto pairs = make_sr_pairs(scene.pre_lr, scene.pre_hr, 2, 16, 16, 0.0);
  REQUIRE(!pairs.empty());

  auto run = [&]() {
    EdsrConfig cfg;
    cfg.n_resblocks = 1;
    cfg.n_feats = 4;
    cfg.scale = 2;
    EdsrF model(cfg, 99);
    TrainSchedule sched;
    sched.max_epochs = 5;
    sched.batch_size = 4;
    sched.seed = 123;
    train_edsr(model, pairs, pairs, sched, AdamConfig{.lr = 1e-3});
    std::vector<float> flat;
    for (const auto& [name, t] : model.named_params())
      flat.insert(flat.end(), t.values().begin(), t.values().end());
    return flat;
  };
  const auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("checkpoint encode/decode round-trips bit-exactly") {
  Rng rng(7);
  std::vector<ParamRecord> params;
  for (int i = 0; i < 5; ++i) {
    ParamRecord p;
    p.name = "layer." + std::to_string(i) + ".w";
    p.dims = {uint32_t(1 + rng.below(4)), uint32_t(1 + rng.below(4)),
              uint32_t(1 + rng.below(5))};
    size_t n = 1;
    for (auto d : p.dims) n *= d;
    p.values = testutil::random_values(n, 1000 + uint64_t(i));
    params.push_back(std::move(p));
  }
  const auto bytes = encode_checkpoint(params);
  CHECK(std::memcmp(bytes.data(), "FLCKPT01", 8) == 0);
  const auto back = decode_checkpoint(bytes.data(), bytes.size());
  REQUIRE(back.size() == params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    CHECK(back[i].name == params[i].name);
    CHECK(back[i].dims == params[i].dims);
    REQUIRE(back[i].values.size() == params[i].values.size());
    CHECK(std::memcmp(back[i].values.data(), params[i].values.data(),
                      params[i].values.size() * 4) == 0);
  }

  SUBCASE("bad magic is rejected") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad.data(), bad.size()), Error);
  }
  SUBCASE("truncation is rejected") {
    CHECK_THROWS_AS(decode_checkpoint(bytes.data(), bytes.size() - 3), Error);
  }
}

TEST_CASE("loss history CSV format") {
  const std::string path = testutil::scratch_dir("history") + "/h.csv";
  write_history_csv(path, {{1, 0.5, 0.6, 1e-3}, {2, 0.25, 0.3, 1e-3}});
  const auto bytes = read_file(path);
  const std::string text(bytes.begin(), bytes.end());
  CHECK(text.substr(0, 29) == "epoch,train_loss,val_loss,lr\n");
  CHECK(text.find("1,0.5,0.6,0.001\n") != std::string::npos);
  CHECK(text.find("2,0.25,0.3,0.001\n") != std::string::npos);
}
