#include <doctest.h>

#include <cmath>
#include <cstring>

#include "flnet/change.hpp"
#include "flnet/metrics.hpp"
#include "flnet/synth.hpp"
#include "flnet/unet.hpp"
#include "test_util.hpp"

using namespace flnet;
using ad::TensorF;

namespace {

// Fast synthetic segmentation chips: labels are the exact threshold +
// smoothing function of the delta field.
std::vector<SegChip> tiny_chips(int count, int size, uint64_t seed) {
  std::vector<SegChip> chips;
  for (int i = 0; i < count; ++i) {
    SceneSpec spec;
    spec.seed = seed + uint64_t(i);
    spec.hr_size = size;
    spec.parcel_count = 10;
    spec.damage_fraction = 0.5;
    spec.narrow_feature_count = 1;
    spec.scale = 2;
    const SceneBundle b = generate_scene(spec);
    auto c = make_seg_chips(delta_ndvi(b.pre_hr, b.post_hr), b.truth_labels, size, size,
                            0.0);
    chips.insert(chips.end(), c.begin(), c.end());
  }
  return chips;
}

}  // namespace

TEST_CASE("default parameter count matches the closed form over the layer list") {
  UnetConfig cfg;  // depth 4, base 32, 1 -> 3
  auto conv = [](long long cin, long long cout, long long k) {
    return cout * cin * k * k + cout;
  };
  long long expect = 0;
  // encoder 1->32->32, 32->64->64, 64->128->128, 128->256->256
  long long cin = 1;
  for (int l = 0; l < 4; ++l) {
    const long long c = 32LL << l;
    expect += conv(cin, c, 3) + conv(c, c, 3);
    cin = c;
  }
  // bottleneck 256->512->512
  expect += conv(256, 512, 3) + conv(512, 512, 3);
  // decoder: reduce 512->256, then (256+256)->256->256, and so on up
  for (int l = 3; l >= 0; --l) {
    const long long c = 32LL << l;
    expect += conv(2 * c, c, 3) + conv(2 * c, c, 3) + conv(c, c, 3);
  }
  expect += conv(32, 3, 1);
  CHECK(cfg.param_count() == expect);

  UnetF model(cfg, 1);
  CHECK(model.param_count() == expect);
}

TEST_CASE("256x256 input produces 256x256x3 logits") {
  UnetConfig cfg;
  UnetF model(cfg, 2);
  auto y = model.forward(TensorF::zeros({1, 1, 256, 256}));
  CHECK(y.shape() == ad::Shape{1, 3, 256, 256});
}

TEST_CASE("constant input gives finite logits and a well-defined argmax") {
  UnetConfig cfg;
  cfg.base_channels = 4;
  UnetF model(cfg, 3);
  auto y = model.forward(TensorF::from({1, 1, 32, 32}, std::vector<float>(1024, 0.2f)));
  for (float v : y.values()) REQUIRE(std::isfinite(v));

  // softmax normalizes per pixel
  const auto& v = y.values();
  for (size_t p = 0; p < 1024; ++p) {
    double mx = std::max({v[p], v[1024 + p], v[2048 + p]});
    double s = 0;
    for (int c = 0; c < 3; ++c) s += std::exp(double(v[size_t(c) * 1024 + p]) - mx);
    double total = 0;
    for (int c = 0; c < 3; ++c)
      total += std::exp(double(v[size_t(c) * 1024 + p]) - mx) / s;
    REQUIRE(total == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("indivisible input is rejected with a padding hint") {
  UnetConfig cfg;
  cfg.base_channels = 4;
  UnetF model(cfg, 4);
  CHECK_THROWS_WITH_AS(model.forward(TensorF::zeros({1, 1, 40, 40})),
                       doctest::Contains("divisible"), Error);
}

TEST_CASE("identical loss under scaled class weights; argmax unaffected") {
  UnetConfig cfg;
  cfg.base_channels = 4;
  UnetF model(cfg, 5);
  auto chips = tiny_chips(1, 32, 50);
  REQUIRE(!chips.empty());
  auto x = TensorF::from({1, 1, 32, 32}, chips[0].delta);
  auto logits = model.forward(x);

  const std::optional<std::array<float, 3>> w1{{1.0f, 2.0f, 4.0f}};
  const std::optional<std::array<float, 3>> w3{{3.0f, 6.0f, 12.0f}};
  const auto l1 = ad::cross_entropy_loss(logits, chips[0].labels, w1, std::nullopt,
                                         chips[0].invalid);
  const auto l3 = ad::cross_entropy_loss(logits, chips[0].labels, w3, std::nullopt,
                                         chips[0].invalid);
  CHECK(l1.item() == doctest::Approx(l3.item()).epsilon(1e-6));
}

TEST_CASE("overfit one batch to >99% pixel accuracy") {
  auto chips = tiny_chips(2, 32, 77);
  chips.resize(std::min<size_t>(chips.size(), 8));
  REQUIRE(!chips.empty());

  UnetConfig cfg;
  cfg.base_channels = 8;
  UnetF model(cfg, 6);
  TrainSchedule sched;
  sched.max_epochs = 220;
  sched.batch_size = int(chips.size());
  sched.early_stop_patience = 500;
  sched.plateau_patience = 60;
  sched.seed = 9;
  const auto r = train_unet(model, chips, {}, sched, AdamConfig{.lr = 3e-3});
  REQUIRE_FALSE(r.diverged);
  CHECK(r.history.size() <= 500);

  size_t correct = 0, total = 0;
  for (const auto& c : chips) {
    auto logits = model.forward(TensorF::from({1, 1, c.size, c.size}, c.delta));
    const auto& v = logits.values();
    const size_t plane = size_t(c.size) * c.size;
    for (size_t p = 0; p < plane; ++p) {
      if (c.invalid[p]) continue;
      int best = 0;
      for (int cl = 1; cl < 3; ++cl)
        if (v[size_t(cl) * plane + p] > v[size_t(best) * plane + p]) best = cl;
      correct += best == c.labels[p];
      ++total;
    }
  }
  CHECK(double(correct) / double(total) > 0.99);
}

TEST_CASE("predict_damage: whole-tile path, nodata, small-object removal") {
  SceneSpec spec;
  spec.seed = 21;
  spec.hr_size = 64;
  spec.parcel_count = 12;
  spec.damage_fraction = 0.5;
  spec.scale = 2;
  const SceneBundle b = generate_scene(spec);
  Raster delta = delta_ndvi(b.pre_hr, b.post_hr);
  for (int y = 10; y < 20; ++y)
    for (int x = 30; x < 44; ++x) delta.set_nodata(y, x);

  UnetConfig cfg;
  cfg.base_channels = 4;
  UnetF model(cfg, 8);
  const Raster out = predict_damage(model, delta, 64, 8, 10);
  REQUIRE(out.co_gridded_with(delta));
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      CHECK(out.valid(y, x) == delta.valid(y, x));
      if (out.valid(y, x)) {
        const float v = out.at(y, x);
        CHECK((v == 0.0f || v == 1.0f || v == 2.0f));
      }
    }
}

TEST_CASE("tiled and untiled logits give the same argmax on a trained model") {
  auto chips = tiny_chips(2, 32, 33);
  UnetConfig cfg;
  cfg.base_channels = 8;
  UnetF model(cfg, 10);
  TrainSchedule sched;
  sched.max_epochs = 120;
  sched.batch_size = int(std::min<size_t>(chips.size(), 8));
  sched.early_stop_patience = 500;
  sched.plateau_patience = 60;
  sched.seed = 3;
  train_unet(model, chips, {}, sched, AdamConfig{.lr = 3e-3});

  SceneSpec spec;
  spec.seed = 97;
  spec.hr_size = 64;
  spec.parcel_count = 12;
  spec.damage_fraction = 0.5;
  spec.scale = 2;
  const SceneBundle b = generate_scene(spec);
  const Raster delta = delta_ndvi(b.pre_hr, b.post_hr);

  const Raster whole = predict_damage(model, delta, 64, 8, 1);
  const Raster tiled = predict_damage(model, delta, 48, 16, 1);
  size_t diff = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) diff += whole.at(y, x) != tiled.at(y, x);
  CHECK(diff == 0);
}

TEST_CASE("checkpoint round-trip restores the model bit-exactly") {
  UnetConfig cfg;
  cfg.base_channels = 4;
  UnetF model(cfg, 12);
  const std::string path = testutil::scratch_dir("unet_ckpt") + "/u.ckpt";
  save_unet(path, model);
  const UnetF back = load_unet(path, cfg);
  auto a = model.named_params();
  auto c = back.named_params();
  REQUIRE(a.size() == c.size());
  for (size_t i = 0; i < a.size(); ++i)
    CHECK(std::memcmp(a[i].second.values().data(), c[i].second.values().data(),
                      a[i].second.values().size() * 4) == 0);
}
