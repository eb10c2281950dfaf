// FLNet command line: synthetic scenes, preprocessing, super-resolution and
// segmentation training/inference, change labeling, and evaluation.

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "flnet/change.hpp"
#include "flnet/checkpoint.hpp"
#include "flnet/edsr.hpp"
#include "flnet/metrics.hpp"
#include "flnet/raster_ops.hpp"
#include "flnet/registration.hpp"
#include "flnet/synth.hpp"
#include "flnet/unet.hpp"

namespace fs = std::filesystem;
using namespace flnet;

namespace {

// Relative outputs land under FLNET_WORK_DIR when it is set.
std::string out_path(const std::string& p) {
  const char* wd = std::getenv("FLNET_WORK_DIR");
  if (!wd || !*wd || p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(wd) / p).string();
}

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)v);
  return buf;
}

Raster read_input(const std::string& path) {
  if (!fs::exists(path)) fail(ErrorCode::missing_file, "input not found: " + path);
  return read_raster(path);
}

std::vector<std::string> scene_dirs(const std::string& root) {
  if (!fs::is_directory(root))
    fail(ErrorCode::missing_file, "scene directory not found: " + root);
  std::vector<std::string> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "manifest.txt"))
      dirs.push_back(e.path().string());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) fail(ErrorCode::missing_file, "no scene bundles under " + root);
  return dirs;
}

std::vector<SceneBundle> load_scenes(const std::vector<std::string>& dirs) {
  std::vector<SceneBundle> scenes;
  scenes.reserve(dirs.size());
  for (const auto& d : dirs) scenes.push_back(load_bundle(d));
  return scenes;
}

struct ScheduleFlags {
  TrainSchedule sched;
  double lr = 1e-4;

  void attach(CLI::App* cmd, double default_lr) {
    lr = default_lr;
    cmd->add_option("--epochs", sched.max_epochs, "Max training epochs");
    cmd->add_option("--batch", sched.batch_size, "Batch size");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--patience", sched.early_stop_patience, "Early-stop patience");
    cmd->add_option("--min-delta", sched.min_delta, "Improvement threshold");
    cmd->add_option("--plateau-factor", sched.plateau_factor, "LR decay factor");
    cmd->add_option("--plateau-patience", sched.plateau_patience, "LR decay patience");
    cmd->add_option("--seed", sched.seed, "Run seed");
  }
};

struct EdsrFlags {
  EdsrConfig cfg;
  void attach(CLI::App* cmd) {
    cmd->add_option("--resblocks", cfg.n_resblocks, "Residual blocks");
    cmd->add_option("--feats", cfg.n_feats, "Feature channels");
    cmd->add_option("--scale", cfg.scale, "Upscale factor");
    cmd->add_option("--residual-scale", cfg.residual_scale, "Residual branch scale");
  }
};

struct UnetFlags {
  UnetConfig cfg;
  std::string weights = "none";
  double focal_gamma = -1.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--depth", cfg.depth, "Encoder-decoder stages");
    cmd->add_option("--base-channels", cfg.base_channels, "First-level channels");
    cmd->add_option("--class-weights", weights,
                    "none | auto (inverse frequency) | w0,w1,w2");
    cmd->add_option("--focal-gamma", focal_gamma, "Focal loss gamma (<0 disables)");
  }

  UnetConfig resolve() {
    UnetConfig c = cfg;
    if (weights == "auto") {
      c.auto_class_weights = true;
    } else if (weights != "none") {
      std::array<float, 3> w{};
      std::stringstream ss(weights);
      std::string tok;
      for (int i = 0; i < 3; ++i) {
        if (!std::getline(ss, tok, ',')) fail(ErrorCode::usage, "bad --class-weights");
        w[size_t(i)] = std::stof(tok);
      }
      c.class_weights = w;
    }
    if (focal_gamma >= 0.0) c.focal_gamma = float(focal_gamma);
    return c;
  }
};

std::string config_hash(CLI::App* cmd) {
  return hex64(fnv1a64(cmd->config_to_str(true, false)));
}

// ----------------------------------------------------------------- commands

int cmd_synth(uint64_t seed, int count, const std::string& out, SceneSpec spec) {
  for (int i = 0; i < count; ++i) {
    spec.seed = seed + uint64_t(i);
    char name[32];
    std::snprintf(name, sizeof name, "scene_%06llu", (unsigned long long)spec.seed);
    const std::string dir = (fs::path(out_path(out)) / name).string();
    save_bundle(dir, generate_scene(spec), spec);
    std::cout << "wrote " << dir << "\n";
  }
  return 0;
}

struct PreprocessArgs {
  std::string pre_ndvi, post_ndvi;
  std::string pre_nir, pre_red, post_nir, post_red;
  std::string pre_quality, post_quality, cropland;
  std::string grid_like, grid_method = "bilinear";
  bool no_register = false;
  int max_shift = 8;
  std::string out_pre, out_post;
};

int cmd_preprocess(const PreprocessArgs& a) {
  auto load_ndvi = [&](const std::string& ndvi, const std::string& nir,
                       const std::string& red, const char* which) {
    if (!ndvi.empty()) return read_input(ndvi);
    if (nir.empty() || red.empty())
      fail(ErrorCode::usage,
           std::string("preprocess: give --") + which + "-ndvi or --" + which +
               "-nir plus --" + which + "-red");
    return compute_ndvi(read_input(nir), read_input(red));
  };
  Raster pre = load_ndvi(a.pre_ndvi, a.pre_nir, a.pre_red, "pre");
  Raster post = load_ndvi(a.post_ndvi, a.post_nir, a.post_red, "post");

  if (!a.grid_like.empty()) {
    const Raster ref = read_input(a.grid_like);
    const auto method = parse_resample_method(a.grid_method);
    pre = resample(pre, ref.geo(), ref.width(), ref.height(), method);
    post = resample(post, ref.geo(), ref.width(), ref.height(), method);
  }

  auto quality_or_clear = [&](const std::string& path, const Raster& r) {
    if (path.empty()) return QualityMask(r.width(), r.height(), r.geo());
    return QualityMask::from_raster(read_input(path));
  };
  Raster cropland = a.cropland.empty() ? Raster() : read_input(a.cropland);
  auto mask_one = [&](Raster& r, const std::string& qpath) {
    QualityMask q = quality_or_clear(qpath, r);
    Raster crop = cropland.width() == 0
                      ? Raster(r.width(), r.height(), 1, r.geo(), 1.0f)
                      : resample(cropland, r.geo(), r.width(), r.height(),
                                 ResampleMethod::nearest);
    r = apply_masks(r, q, crop);
  };
  mask_one(pre, a.pre_quality);
  mask_one(post, a.post_quality);

  if (!a.no_register) {
    const Registration reg = coregister_translation(pre, post, a.max_shift);
    std::cout << "registration dx " << reg.dx << " dy " << reg.dy << " score "
              << reg.score << "\n";
    if (reg.dx != 0.0 || reg.dy != 0.0) post = shift_raster(post, reg.dx, reg.dy);
  }

  write_raster(pre, out_path(a.out_pre));
  write_raster(post, out_path(a.out_post));
  std::cout << "wrote " << out_path(a.out_pre) << " and " << out_path(a.out_post) << "\n";
  return 0;
}

int cmd_train_sr(const std::string& scenes_dir, int val_count, int chip, int stride,
                 double max_nodata, const EdsrConfig& cfg, const TrainSchedule& sched,
                 double lr, const std::string& out, const std::string& history) {
  auto dirs = scene_dirs(out_path(scenes_dir));
  if (val_count < 0 || val_count >= int(dirs.size()))
    fail(ErrorCode::usage, "train-sr: --val-count must leave at least one training scene");
  std::vector<std::string> train_dirs(dirs.begin(), dirs.end() - val_count);
  std::vector<std::string> val_dirs(dirs.end() - val_count, dirs.end());

  auto train_pairs = make_sr_dataset(load_scenes(train_dirs), chip, stride, max_nodata);
  auto val_pairs = val_count
                       ? make_sr_dataset(load_scenes(val_dirs), chip, stride, max_nodata)
                       : std::vector<SrPair>{};
  std::cout << "train pairs " << train_pairs.size() << " val pairs " << val_pairs.size()
            << "\n";

  EdsrF model(cfg, sched.seed);
  AdamConfig adam;
  adam.lr = lr;
  const TrainResult r = train_edsr(model, train_pairs, val_pairs, sched, adam, &std::cout);
  if (r.diverged) {
    save_edsr(out_path(out), model);
    fail(ErrorCode::divergence, "train-sr: training diverged; best checkpoint kept");
  }
  save_edsr(out_path(out), model);
  if (!history.empty()) write_history_csv(out_path(history), r.history);
  std::cout << "best epoch " << r.best_epoch << " val_loss " << r.best_val_loss
            << " -> " << out_path(out) << "\n";
  return 0;
}

int cmd_infer_sr(const std::string& ckpt, const std::string& input,
                 const std::string& out, const EdsrConfig& cfg, int tile, int overlap) {
  const EdsrF model = load_edsr(out_path(ckpt), cfg);
  const Raster sr = infer_sr(model, read_input(out_path(input)), tile, overlap);
  write_raster(sr, out_path(out));
  std::cout << "wrote " << out_path(out) << "\n";
  return 0;
}

int cmd_label(const std::string& pre, const std::string& post, const std::string& delta_in,
              const ThresholdConfig& tcfg, int smooth_window,
              const std::string& delta_out, const std::string& labels_out) {
  Raster delta;
  if (!delta_in.empty()) {
    delta = read_input(out_path(delta_in));
  } else {
    if (pre.empty() || post.empty())
      fail(ErrorCode::usage, "label: give --delta, or --pre and --post");
    delta = delta_ndvi(read_input(out_path(pre)), read_input(out_path(post)));
  }
  if (!delta_out.empty()) write_raster(delta, out_path(delta_out));
  if (!labels_out.empty()) {
    Raster labels = threshold_label(delta, tcfg);
    if (smooth_window > 0) labels = morphological_smooth(labels, smooth_window);
    write_raster(labels, out_path(labels_out));
  }
  return 0;
}

int cmd_train_seg(const std::string& scenes_dir, int val_count, int chip, int stride,
                  double max_nodata, UnetConfig cfg, const TrainSchedule& sched,
                  double lr, const std::string& out, const std::string& history) {
  auto dirs = scene_dirs(out_path(scenes_dir));
  if (val_count < 0 || val_count >= int(dirs.size()))
    fail(ErrorCode::usage, "train-seg: --val-count must leave at least one training scene");
  std::vector<std::string> train_dirs(dirs.begin(), dirs.end() - val_count);
  std::vector<std::string> val_dirs(dirs.end() - val_count, dirs.end());

  auto train_chips = make_seg_dataset(load_scenes(train_dirs), chip, stride, max_nodata);
  auto val_chips = val_count
                       ? make_seg_dataset(load_scenes(val_dirs), chip, stride, max_nodata)
                       : std::vector<SegChip>{};
  std::cout << "train chips " << train_chips.size() << " val chips " << val_chips.size()
            << "\n";

  UnetF model(cfg, sched.seed);
  AdamConfig adam;
  adam.lr = lr;
  const TrainResult r = train_unet(model, train_chips, val_chips, sched, adam, &std::cout);
  if (r.diverged) {
    save_unet(out_path(out), model);
    fail(ErrorCode::divergence, "train-seg: training diverged; best checkpoint kept");
  }
  save_unet(out_path(out), model);
  if (!history.empty()) write_history_csv(out_path(history), r.history);
  std::cout << "best epoch " << r.best_epoch << " val_loss " << r.best_val_loss
            << " -> " << out_path(out) << "\n";
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& delta_path,
              const std::string& out, const UnetConfig& cfg, int tile, int overlap,
              int min_size, const std::string& render) {
  const UnetF model = load_unet(out_path(ckpt), cfg);
  const Raster delta = read_input(out_path(delta_path));
  const Raster labels = predict_damage(model, delta, tile, overlap, min_size);
  write_raster(labels, out_path(out));
  if (!render.empty()) {
    const auto ppm = render_map(labels, MapStyle::damage_classes);
    write_file_atomic(out_path(render), ppm.data(), ppm.size());
  }
  std::cout << "wrote " << out_path(out) << "\n";
  return 0;
}

int cmd_evaluate(const std::string& pred, const std::string& truth, const std::string& sr,
                 const std::string& hr, bool ssim_global, const std::string& report,
                 const std::string& render_dir, const std::string& cfg_hash) {
  std::ostringstream csv;
  csv << "# config_hash " << cfg_hash << "\n";
  csv << "metric,value,pixels\n";
  std::ostringstream table;
  auto emit = [&](const std::string& name, double value, int64_t pixels) {
    csv << name << "," << value << "," << pixels << "\n";
    table << "  " << name;
    for (size_t i = name.size(); i < 14; ++i) table << ' ';
    table << value << "\n";
  };

  if (pred.empty() != truth.empty())
    fail(ErrorCode::usage, "evaluate: --pred and --truth go together");
  if (sr.empty() != hr.empty())
    fail(ErrorCode::usage, "evaluate: --sr and --hr go together");
  if (pred.empty() && sr.empty())
    fail(ErrorCode::usage, "evaluate: nothing to do; give --pred/--truth or --sr/--hr");

  if (!sr.empty()) {
    const Raster a = read_input(out_path(sr));
    const Raster b = read_input(out_path(hr));
    if (!a.co_gridded_with(b))
      fail(ErrorCode::grid_mismatch, "evaluate: SR and reference grids differ");
    std::vector<uint8_t> joint(a.pixel_count());
    int64_t n = 0;
    for (size_t i = 0; i < joint.size(); ++i) {
      joint[i] = a.mask()[i] | b.mask()[i];
      n += !joint[i];
    }
    const double m = mse(a, b);
    emit("mse", m, n);
    emit("psnr", psnr_from_mse(m), n);
    SsimParams sp;
    sp.global = ssim_global;
    emit(ssim_global ? "ssim_global" : "ssim", ssim(a, b, sp), n);
    if (!render_dir.empty()) {
      fs::create_directories(out_path(render_dir));
      for (auto [r, name] : {std::pair<const Raster*, const char*>{&a, "sr.ppm"},
                             {&b, "reference.ppm"}}) {
        const auto ppm = render_map(*r, MapStyle::ndvi_diverging);
        write_file_atomic((fs::path(out_path(render_dir)) / name).string(), ppm.data(),
                          ppm.size());
      }
    }
  }

  if (!pred.empty()) {
    const Raster p = read_input(out_path(pred));
    const Raster t = read_input(out_path(truth));
    const ConfusionMatrix cm = confusion(t, p);
    const F1Scores f1 = f1_scores(cm);
    const int64_t n = cm.total();
    const char* cls[3] = {"no", "partial", "full"};
    for (int c = 0; c < 3; ++c) {
      emit(std::string("precision_") + cls[c], f1.precision[size_t(c)], n);
      emit(std::string("recall_") + cls[c], f1.recall[size_t(c)], n);
      emit(std::string("f1_") + cls[c], f1.f1[size_t(c)], n);
    }
    emit("macro_f1", f1.macro_f1, n);
    if (!render_dir.empty()) {
      fs::create_directories(out_path(render_dir));
      for (auto [r, name] : {std::pair<const Raster*, const char*>{&p, "pred.ppm"},
                             {&t, "truth.ppm"}}) {
        const auto ppm = render_map(*r, MapStyle::damage_classes);
        write_file_atomic((fs::path(out_path(render_dir)) / name).string(), ppm.data(),
                          ppm.size());
      }
    }
  }

  std::cout << "evaluation (config " << cfg_hash << ")\n" << table.str();
  if (!report.empty()) {
    const std::string body = csv.str();
    write_file_atomic(out_path(report), body.data(), body.size());
    std::cout << "report -> " << out_path(report) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FLNet: NDVI super-resolution and flood crop-damage mapping"};
  app.require_subcommand(1);
  std::function<int()> action;

  // synth
  {
    auto* c = app.add_subcommand("synth", "Generate deterministic synthetic scenes");
    c->set_config("--config");
    auto seed = std::make_shared<uint64_t>(0);
    auto count = std::make_shared<int>(1);
    auto out = std::make_shared<std::string>("scenes");
    auto spec = std::make_shared<SceneSpec>();
    c->add_option("--seed", *seed, "First scene seed");
    c->add_option("--count", *count, "Number of scenes (seeds seed..seed+count-1)");
    c->add_option("--out", *out, "Output directory");
    c->add_option("--hr-size", spec->hr_size, "Fine-grid size in pixels");
    c->add_option("--hr-pixel", spec->hr_pixel, "Fine-grid pixel size");
    c->add_option("--parcels", spec->parcel_count, "Voronoi parcel count");
    c->add_option("--damage-fraction", spec->damage_fraction, "Damaged parcel share");
    c->add_option("--strips", spec->narrow_feature_count, "Narrow full-damage strips");
    c->add_option("--cloud-fraction", spec->cloud_fraction, "Cloud cover share");
    c->add_option("--noise-sigma", spec->noise_sigma, "Sensor noise sigma");
    c->add_option("--scale", spec->scale, "Coarse-to-fine scale factor");
    c->add_option("--blur-sigma", spec->blur_sigma, "PSF sigma in coarse pixels");
    c->callback([=]() { action = [=]() { return cmd_synth(*seed, *count, *out, *spec); }; });
  }

  // preprocess
  {
    auto* c = app.add_subcommand("preprocess",
                                 "NDVI, grid alignment, masking, co-registration");
    c->set_config("--config");
    auto a = std::make_shared<PreprocessArgs>();
    c->add_option("--pre-ndvi", a->pre_ndvi, "Pre-event NDVI raster");
    c->add_option("--post-ndvi", a->post_ndvi, "Post-event NDVI raster");
    c->add_option("--pre-nir", a->pre_nir, "Pre-event NIR band");
    c->add_option("--pre-red", a->pre_red, "Pre-event red band");
    c->add_option("--post-nir", a->post_nir, "Post-event NIR band");
    c->add_option("--post-red", a->post_red, "Post-event red band");
    c->add_option("--pre-quality", a->pre_quality, "Pre-event quality mask raster");
    c->add_option("--post-quality", a->post_quality, "Post-event quality mask raster");
    c->add_option("--cropland", a->cropland, "Cropland mask raster (any grid)");
    c->add_option("--grid-like", a->grid_like, "Resample both dates onto this raster's grid");
    c->add_option("--grid-method", a->grid_method, "nearest | bilinear | bicubic");
    c->add_flag("--no-register", a->no_register, "Skip translation co-registration");
    c->add_option("--max-shift", a->max_shift, "Registration search radius (px)");
    c->add_option("--out-pre", a->out_pre, "Output pre NDVI")->required();
    c->add_option("--out-post", a->out_post, "Output post NDVI")->required();
    c->callback([=]() { action = [=]() { return cmd_preprocess(*a); }; });
  }

  // train-sr
  {
    auto* c = app.add_subcommand("train-sr", "Train the super-resolution model");
    c->set_config("--config");
    auto scenes = std::make_shared<std::string>();
    auto val_count = std::make_shared<int>(1);
    auto chip = std::make_shared<int>(240);
    auto stride = std::make_shared<int>(240);
    auto max_nodata = std::make_shared<double>(0.05);
    auto ef = std::make_shared<EdsrFlags>();
    auto sf = std::make_shared<ScheduleFlags>();
    auto out = std::make_shared<std::string>("edsr.ckpt");
    auto hist = std::make_shared<std::string>();
    c->add_option("--scenes", *scenes, "Scene bundle directory")->required();
    c->add_option("--val-count", *val_count, "Scenes held out for validation");
    c->add_option("--chip", *chip, "Fine-grid chip size (divisible by scale)");
    c->add_option("--stride", *stride, "Chip stride");
    c->add_option("--max-nodata", *max_nodata, "Max nodata fraction per chip");
    ef->attach(c);
    sf->attach(c, 1e-4);
    c->add_option("--out", *out, "Checkpoint path");
    c->add_option("--history", *hist, "Loss history CSV path");
    c->callback([=]() {
      action = [=]() {
        return cmd_train_sr(*scenes, *val_count, *chip, *stride, *max_nodata, ef->cfg,
                            sf->sched, sf->lr, *out, *hist);
      };
    });
  }

  // infer-sr
  {
    auto* c = app.add_subcommand("infer-sr", "Super-resolve an NDVI raster");
    c->set_config("--config");
    auto ckpt = std::make_shared<std::string>();
    auto input = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto ef = std::make_shared<EdsrFlags>();
    auto tile = std::make_shared<int>(64);
    auto overlap = std::make_shared<int>(8);
    c->add_option("--checkpoint", *ckpt, "EDSR checkpoint")->required();
    c->add_option("--input", *input, "Coarse NDVI raster")->required();
    c->add_option("--out", *out, "Output fine NDVI raster")->required();
    ef->attach(c);
    c->add_option("--tile", *tile, "Tile size in coarse pixels");
    c->add_option("--overlap", *overlap, "Tile overlap in coarse pixels");
    c->callback([=]() {
      action = [=]() { return cmd_infer_sr(*ckpt, *input, *out, ef->cfg, *tile, *overlap); };
    });
  }

  // label
  {
    auto* c = app.add_subcommand("label", "Change feature and threshold labels");
    c->set_config("--config");
    auto pre = std::make_shared<std::string>();
    auto post = std::make_shared<std::string>();
    auto delta_in = std::make_shared<std::string>();
    auto tcfg = std::make_shared<ThresholdConfig>();
    auto smooth = std::make_shared<int>(3);
    auto delta_out = std::make_shared<std::string>();
    auto labels_out = std::make_shared<std::string>();
    c->add_option("--pre", *pre, "Pre-event NDVI raster");
    c->add_option("--post", *post, "Post-event NDVI raster");
    c->add_option("--delta", *delta_in, "Precomputed change raster");
    c->add_option("--t-partial", tcfg->t_partial, "Partial-damage threshold");
    c->add_option("--t-full", tcfg->t_full, "Full-damage threshold");
    c->add_option("--smooth-window", *smooth, "Majority window (0 = off)");
    c->add_option("--delta-out", *delta_out, "Write the change raster here");
    c->add_option("--labels-out", *labels_out, "Write the label raster here");
    c->callback([=]() {
      action = [=]() {
        return cmd_label(*pre, *post, *delta_in, *tcfg, *smooth, *delta_out, *labels_out);
      };
    });
  }

  // train-seg
  {
    auto* c = app.add_subcommand("train-seg", "Train the damage segmentation model");
    c->set_config("--config");
    auto scenes = std::make_shared<std::string>();
    auto val_count = std::make_shared<int>(1);
    auto chip = std::make_shared<int>(256);
    auto stride = std::make_shared<int>(256);
    auto max_nodata = std::make_shared<double>(0.05);
    auto uf = std::make_shared<UnetFlags>();
    auto sf = std::make_shared<ScheduleFlags>();
    auto out = std::make_shared<std::string>("unet.ckpt");
    auto hist = std::make_shared<std::string>();
    c->add_option("--scenes", *scenes, "Scene bundle directory")->required();
    c->add_option("--val-count", *val_count, "Scenes held out for validation");
    c->add_option("--chip", *chip, "Chip size (divisible by 2^depth)");
    c->add_option("--stride", *stride, "Chip stride");
    c->add_option("--max-nodata", *max_nodata, "Max nodata fraction per chip");
    uf->attach(c);
    sf->attach(c, 1e-3);
    c->add_option("--out", *out, "Checkpoint path");
    c->add_option("--history", *hist, "Loss history CSV path");
    c->callback([=]() {
      action = [=]() {
        return cmd_train_seg(*scenes, *val_count, *chip, *stride, *max_nodata,
                             uf->resolve(), sf->sched, sf->lr, *out, *hist);
      };
    });
  }

  // infer
  {
    auto* c = app.add_subcommand("infer", "Per-pixel damage map from a change raster");
    c->set_config("--config");
    auto ckpt = std::make_shared<std::string>();
    auto delta = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto uf = std::make_shared<UnetFlags>();
    auto tile = std::make_shared<int>(256);
    auto overlap = std::make_shared<int>(32);
    auto min_size = std::make_shared<int>(10);
    auto render = std::make_shared<std::string>();
    c->add_option("--checkpoint", *ckpt, "UNet checkpoint")->required();
    c->add_option("--delta", *delta, "Change raster")->required();
    c->add_option("--out", *out, "Output label raster")->required();
    uf->attach(c);
    c->add_option("--tile", *tile, "Tile size");
    c->add_option("--overlap", *overlap, "Tile overlap");
    c->add_option("--min-size", *min_size, "Small-object removal threshold");
    c->add_option("--render", *render, "Also write a PPM damage map here");
    c->callback([=]() {
      action = [=]() {
        return cmd_infer(*ckpt, *delta, *out, uf->resolve(), *tile, *overlap, *min_size,
                         *render);
      };
    });
  }

  // evaluate
  {
    auto* c = app.add_subcommand("evaluate", "Reconstruction and classification metrics");
    c->set_config("--config");
    auto pred = std::make_shared<std::string>();
    auto truth = std::make_shared<std::string>();
    auto sr = std::make_shared<std::string>();
    auto hr = std::make_shared<std::string>();
    auto ssim_global = std::make_shared<bool>(false);
    auto report = std::make_shared<std::string>();
    auto render_dir = std::make_shared<std::string>();
    c->add_option("--pred", *pred, "Predicted label raster");
    c->add_option("--truth", *truth, "Truth label raster");
    c->add_option("--sr", *sr, "Reconstructed NDVI raster");
    c->add_option("--hr", *hr, "Reference NDVI raster");
    c->add_flag("--ssim-global", *ssim_global, "Single global SSIM window");
    c->add_option("--report", *report, "Write the CSV report here");
    c->add_option("--render-dir", *render_dir, "Write PPM maps here");
    CLI::App* cptr = c;
    c->callback([=]() {
      action = [=]() {
        return cmd_evaluate(*pred, *truth, *sr, *hr, *ssim_global, *report, *render_dir,
                            config_hash(cptr));
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : int(ErrorCode::usage);
  }

  try {
    return action ? action() : int(ErrorCode::usage);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(ErrorCode::generic);
  }
}
