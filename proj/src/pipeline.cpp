// SPDX-License-Identifier: Apache-2.0
#include "c2w/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "c2w/io.hpp"

namespace c2w::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config serialization

namespace {

[[noreturn]] void bad_config(const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); }

template <class E>
struct EnumNames;

template <>
struct EnumNames<RoiSource> {
  static constexpr std::pair<RoiSource, const char*> v[] = {{RoiSource::OracleMask, "oracle_mask"},
                                                            {RoiSource::CoarseModel, "coarse_model"}};
};
template <>
struct EnumNames<EmptyFallback> {
  static constexpr std::pair<EmptyFallback, const char*> v[] = {{EmptyFallback::VolumeCenter, "volume_center"},
                                                                {EmptyFallback::Abort, "abort"}};
};
template <>
struct EnumNames<train::ScheduleKind> {
  static constexpr std::pair<train::ScheduleKind, const char*> v[] = {
      {train::ScheduleKind::WarmupCosine, "warmup_cosine"}, {train::ScheduleKind::StagewiseCosine, "stagewise_cosine"}};
};
template <>
struct EnumNames<metrics::SurfaceDiceMode> {
  static constexpr std::pair<metrics::SurfaceDiceMode, const char*> v[] = {
      {metrics::SurfaceDiceMode::Symmetric, "symmetric"}, {metrics::SurfaceDiceMode::OneSided, "one_sided"}};
};

template <class E>
std::string enum_name(E e) {
  for (const auto& [k, n] : EnumNames<E>::v)
    if (k == e) return n;
  return "?";
}

template <class E>
E enum_from(const std::string& s) {
  for (const auto& [k, n] : EnumNames<E>::v)
    if (s == n) return k;
  bad_config("unknown value '" + s + "'");
}

// Sets `field` from j[key] when present.
template <class T>
void read(const json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  if constexpr (std::is_enum_v<T>) {
    field = enum_from<T>(j.at(key).get<std::string>());
  } else if constexpr (std::is_same_v<T, fs::path>) {
    field = fs::path(j.at(key).get<std::string>());
  } else {
    field = j.at(key).get<T>();
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) bad_config(where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* x) { return k == x; })) {
      bad_config("unknown key '" + k + "' in " + where);
    }
  }
}

json augment_json(const train::AugmentConfig& a) {
  return {{"p_flip", a.p_flip},           {"flip_axis", a.flip_axis},         {"p_rotate", a.p_rotate},
          {"max_rotate_deg", a.max_rotate_deg}, {"p_elastic", a.p_elastic}, {"elastic_sigma", a.elastic_sigma},
          {"elastic_alpha", a.elastic_alpha},   {"p_scale", a.p_scale},     {"scale_min", a.scale_min},
          {"scale_max", a.scale_max},           {"p_histogram", a.p_histogram}};
}

train::AugmentConfig augment_from(const json& j) {
  train::AugmentConfig a;
  read(j, "p_flip", a.p_flip);
  read(j, "flip_axis", a.flip_axis);
  read(j, "p_rotate", a.p_rotate);
  read(j, "max_rotate_deg", a.max_rotate_deg);
  read(j, "p_elastic", a.p_elastic);
  read(j, "elastic_sigma", a.elastic_sigma);
  read(j, "elastic_alpha", a.elastic_alpha);
  read(j, "p_scale", a.p_scale);
  read(j, "scale_min", a.scale_min);
  read(j, "scale_max", a.scale_max);
  read(j, "p_histogram", a.p_histogram);
  return a;
}

json train_json(const train::TrainConfig& t) {
  return {{"batch_size", t.batch_size}, {"max_epochs", t.max_epochs}, {"patience", t.patience},
          {"augment", t.augment},       {"augmentation", augment_json(t.augmentation)}};
}

train::TrainConfig train_from(const json& j, train::TrainConfig t) {
  read(j, "batch_size", t.batch_size);
  read(j, "max_epochs", t.max_epochs);
  read(j, "patience", t.patience);
  read(j, "augment", t.augment);
  if (j.contains("augmentation")) t.augmentation = augment_from(j.at("augmentation"));
  return t;
}

json schedule_json(const train::ScheduleConfig& s) {
  return {{"kind", enum_name(s.kind)},
          {"lr_max", s.lr_max},
          {"lr_min", s.lr_min},
          {"warmup_epochs", s.warmup_epochs},
          {"horizon_epochs", s.horizon_epochs},
          {"restart_boundaries", s.restart_boundaries},
          {"restart_decay", s.restart_decay},
          {"segment_min_ratio", s.segment_min_ratio}};
}

train::ScheduleConfig schedule_from(const json& j, train::ScheduleConfig s) {
  read(j, "kind", s.kind);
  read(j, "lr_max", s.lr_max);
  read(j, "lr_min", s.lr_min);
  read(j, "warmup_epochs", s.warmup_epochs);
  read(j, "horizon_epochs", s.horizon_epochs);
  read(j, "restart_boundaries", s.restart_boundaries);
  read(j, "restart_decay", s.restart_decay);
  read(j, "segment_min_ratio", s.segment_min_ratio);
  return s;
}

json unfreeze_json(const train::UnfreezeSchedule& u) {
  return {{"step_a_end", u.step_a_end},
          {"step_b_end", u.step_b_end},
          {"deep_stage_cutoff", u.deep_stage_cutoff},
          {"max_epochs", u.max_epochs}};
}

json loss_json(const train::LossConfig& l) {
  return {{"dice_eps", l.dice_eps},
          {"focal_gamma", l.focal_gamma},
          {"focal_alpha", l.focal_alpha},
          {"focal_weight", l.focal_weight},
          {"prob_clamp", l.prob_clamp}};
}

json optimizer_json(const train::OptimizerConfig& o) {
  return {{"beta1", o.beta1}, {"beta2", o.beta2}, {"weight_decay", o.weight_decay}, {"eps", o.eps}};
}

}  // namespace

RunConfig default_config() {
  RunConfig c;
  c.cavity_train.max_epochs = 25;
  c.cavity_train.patience = 25;
  c.cavity_schedule.lr_max = 3e-3;
  c.cavity_schedule.lr_min = 1e-6;
  c.cavity_schedule.warmup_epochs = 3;
  c.cavity_schedule.horizon_epochs = 25;

  c.wall_train = c.cavity_train;
  c.wall_train.max_epochs = 30;
  c.wall_train.patience = 30;
  c.unfreeze = train::UnfreezeSchedule::scaled(c.wall_train.max_epochs, 2);
  c.finetune_schedule.kind = train::ScheduleKind::StagewiseCosine;
  c.finetune_schedule.lr_max = 3e-3;
  c.finetune_schedule.restart_decay = 1.0;
  c.finetune_schedule.warmup_epochs = 1;
  c.finetune_schedule.horizon_epochs = c.wall_train.max_epochs;
  c.finetune_schedule.restart_boundaries = {c.unfreeze.step_a_end + 1, c.unfreeze.step_b_end + 1};
  c.scratch_schedule = c.cavity_schedule;
  c.scratch_schedule.horizon_epochs = c.wall_train.max_epochs;
  return c;
}

void RunConfig::validate() const {
  model.validate();
  phantom.validate();
  if (splits.train == 0 || splits.val == 0 || splits.test == 0) bad_config("every split needs at least one case");
  if (roi.size.count() == 0) bad_config("roi size must be positive");
  (void)net::output_shape(model, ad::Shape{1, model.in_channels, roi.size.d, roi.size.h, roi.size.w});
  for (const auto* t : {&cavity_train, &wall_train}) t->validate();
  auto check_schedule = [](const train::ScheduleConfig& s, const train::TrainConfig& t, const char* name) {
    s.validate();
    if (s.horizon_epochs < t.max_epochs) bad_config(std::string(name) + " horizon is shorter than max_epochs");
  };
  check_schedule(cavity_schedule, cavity_train, "cavity_schedule");
  check_schedule(finetune_schedule, wall_train, "finetune_schedule");
  check_schedule(scratch_schedule, wall_train, "scratch_schedule");
  unfreeze.validate();
  if (unfreeze.max_epochs < wall_train.max_epochs) bad_config("unfreeze max_epochs is shorter than wall max_epochs");
  loss.validate();
  optimizer.validate();
  if (!(tolerance_mm > 0.0)) bad_config("tolerance_mm must be positive");
  if (predict_split != "train" && predict_split != "val" && predict_split != "test") {
    bad_config("predict_split must be train, val or test");
  }
  if (pred_mask.empty() || ref_mask.empty()) bad_config("mask names must be nonempty");
}

json to_json(const RunConfig& c) {
  return {{"paths",
           {{"dataset", c.paths.dataset.string()},
            {"crops", c.paths.crops.string()},
            {"cavity_checkpoint", c.paths.cavity_checkpoint.string()},
            {"coarse_checkpoint", c.paths.coarse_checkpoint.string()},
            {"checkpoint", c.paths.checkpoint.string()},
            {"predictions", c.paths.predictions.string()},
            {"reference", c.paths.reference.string()}}},
          {"phantom", phantom::to_json(c.phantom)},
          {"splits", {{"train", c.splits.train}, {"val", c.splits.val}, {"test", c.splits.test}}},
          {"model", net::to_json(c.model)},
          {"roi", {{"size", {c.roi.size.d, c.roi.size.h, c.roi.size.w}}, {"pad_value", c.roi.pad_value}}},
          {"roi_source", enum_name(c.roi_source)},
          {"empty_fallback", enum_name(c.empty_fallback)},
          {"cavity_train", train_json(c.cavity_train)},
          {"cavity_schedule", schedule_json(c.cavity_schedule)},
          {"wall_train", train_json(c.wall_train)},
          {"finetune_schedule", schedule_json(c.finetune_schedule)},
          {"scratch_schedule", schedule_json(c.scratch_schedule)},
          {"unfreeze", unfreeze_json(c.unfreeze)},
          {"loss", loss_json(c.loss)},
          {"optimizer", optimizer_json(c.optimizer)},
          {"predict_split", c.predict_split},
          {"pred_mask", c.pred_mask},
          {"ref_mask", c.ref_mask},
          {"tolerance_mm", c.tolerance_mm},
          {"surface_mode", enum_name(c.surface_mode)},
          {"seed", c.seed}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c = default_config();
  try {
    reject_unknown(j,
                   {"paths", "phantom", "splits", "model", "roi", "roi_source", "empty_fallback", "cavity_train",
                    "cavity_schedule", "wall_train", "finetune_schedule", "scratch_schedule", "unfreeze", "loss",
                    "optimizer", "predict_split", "pred_mask", "ref_mask", "tolerance_mm", "surface_mode", "seed"},
                   "run config");
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      reject_unknown(p,
                     {"dataset", "crops", "cavity_checkpoint", "coarse_checkpoint", "checkpoint", "predictions",
                      "reference"},
                     "paths");
      read(p, "dataset", c.paths.dataset);
      read(p, "crops", c.paths.crops);
      read(p, "cavity_checkpoint", c.paths.cavity_checkpoint);
      read(p, "coarse_checkpoint", c.paths.coarse_checkpoint);
      read(p, "checkpoint", c.paths.checkpoint);
      read(p, "predictions", c.paths.predictions);
      read(p, "reference", c.paths.reference);
    }
    if (j.contains("phantom")) c.phantom = phantom::phantom_config_from_json(j.at("phantom"));
    if (j.contains("splits")) {
      const auto& s = j.at("splits");
      read(s, "train", c.splits.train);
      read(s, "val", c.splits.val);
      read(s, "test", c.splits.test);
    }
    if (j.contains("model")) c.model = net::model_spec_from_json(j.at("model"));
    if (j.contains("roi")) {
      const auto& r = j.at("roi");
      if (r.contains("size")) {
        const auto& s = r.at("size");
        c.roi.size = {s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>(), s.at(2).get<std::size_t>()};
      }
      read(r, "pad_value", c.roi.pad_value);
    }
    read(j, "roi_source", c.roi_source);
    read(j, "empty_fallback", c.empty_fallback);
    if (j.contains("cavity_train")) c.cavity_train = train_from(j.at("cavity_train"), c.cavity_train);
    if (j.contains("cavity_schedule")) c.cavity_schedule = schedule_from(j.at("cavity_schedule"), c.cavity_schedule);
    if (j.contains("wall_train")) c.wall_train = train_from(j.at("wall_train"), c.wall_train);
    if (j.contains("finetune_schedule")) {
      c.finetune_schedule = schedule_from(j.at("finetune_schedule"), c.finetune_schedule);
    }
    if (j.contains("scratch_schedule")) {
      c.scratch_schedule = schedule_from(j.at("scratch_schedule"), c.scratch_schedule);
    }
    if (j.contains("unfreeze")) {
      const auto& u = j.at("unfreeze");
      read(u, "step_a_end", c.unfreeze.step_a_end);
      read(u, "step_b_end", c.unfreeze.step_b_end);
      read(u, "deep_stage_cutoff", c.unfreeze.deep_stage_cutoff);
      read(u, "max_epochs", c.unfreeze.max_epochs);
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      read(l, "dice_eps", c.loss.dice_eps);
      read(l, "focal_gamma", c.loss.focal_gamma);
      read(l, "focal_alpha", c.loss.focal_alpha);
      read(l, "focal_weight", c.loss.focal_weight);
      read(l, "prob_clamp", c.loss.prob_clamp);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      read(o, "beta1", c.optimizer.beta1);
      read(o, "beta2", c.optimizer.beta2);
      read(o, "weight_decay", c.optimizer.weight_decay);
      read(o, "eps", c.optimizer.eps);
    }
    read(j, "predict_split", c.predict_split);
    read(j, "pred_mask", c.pred_mask);
    read(j, "ref_mask", c.ref_mask);
    read(j, "tolerance_mm", c.tolerance_mm);
    read(j, "surface_mode", c.surface_mode);
    read(j, "seed", c.seed);
  } catch (const json::exception& e) {
    bad_config(e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidConfig) throw;
    bad_config(e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) { return run_config_from_json(io::read_json(path)); }

std::uint64_t init_seed(const RunConfig& c) { return derive_seed(c.seed, hash_name("init")); }
std::uint64_t head_seed(const RunConfig& c) { return derive_seed(c.seed, hash_name("head")); }
std::uint64_t train_seed(const RunConfig& c) { return derive_seed(c.seed, hash_name("train")); }

json training_record(const RunConfig& c, const std::string& command) {
  const bool cavity = command == "train-cavity";
  const bool transfer = command == "finetune-wall";
  json init;
  if (transfer) {
    init = {{"kind", "transfer"},
            {"checkpoint", c.paths.cavity_checkpoint.string()},
            {"reinit_head", true},
            {"head_seed", head_seed(c)}};
  } else {
    init = {{"kind", "random"}, {"seed", init_seed(c)}};
  }
  const auto& sched = cavity ? c.cavity_schedule : (transfer ? c.finetune_schedule : c.scratch_schedule);
  auto tc = cavity ? c.cavity_train : c.wall_train;
  json t = train_json(tc);
  t["seed"] = train_seed(c);
  return {{"command", command},
          {"model", net::to_json(c.model)},
          {"spec_hash", net::spec_hash(c.model)},
          {"data", {{"crops", c.paths.crops.string()}, {"target", cavity ? "cavity" : "wall"}}},
          {"roi", {{"size", {c.roi.size.d, c.roi.size.h, c.roi.size.w}}, {"source", enum_name(c.roi_source)}}},
          {"train", t},
          {"loss", loss_json(c.loss)},
          {"optimizer", optimizer_json(c.optimizer)},
          {"schedule", schedule_json(sched)},
          {"init", init},
          {"unfreeze", transfer ? unfreeze_json(c.unfreeze) : json(nullptr)},
          {"seed", c.seed}};
}

json to_json(const LocalizationRecord& r) {
  return {{"case_id", r.case_id},
          {"center_voxel", {r.center.z, r.center.y, r.center.x}},
          {"window_start", r.window.start},
          {"window_size", {r.window.size.d, r.window.size.h, r.window.size.w}},
          {"source", r.source},
          {"fallback", r.fallback}};
}

// ---------------------------------------------------------------------------
// Commands

namespace {

// Marks `out` incomplete until commit().
class OutputGuard {
 public:
  explicit OutputGuard(const fs::path& out) : marker_(out / ".partial") {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out.string() + ": " + ec.message());
    io::write_text(marker_, "incomplete\n");
  }
  void commit() {
    std::error_code ec;
    fs::remove(marker_, ec);
  }

 private:
  fs::path marker_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::PreconditionFailed, what);
}

void require_dataset(const fs::path& root, const char* name) {
  require(!root.empty(), std::string("paths.") + name + " is not set");
  require(fs::exists(root / "manifest.json"), "no manifest.json under " + root.string() + " (paths." + name + ")");
}

void require_checkpoint(const fs::path& base, const char* name) {
  require(!base.empty(), std::string("paths.") + name + " is not set");
  require(fs::exists(net::checkpoint_manifest_path(base)), "no checkpoint at " + base.string());
}

Mask3 predict_full(const net::Model<float>& model, const Volume3& image) {
  return train::predict_mask(model, zscore_normalize(image));
}

void save_run(const fs::path& out, const json& record, const train::TrainResult& r) {
  net::save_checkpoint(r.best, out / "model");
  io::write_json(out / "run.json", record);
  io::write_json(out / "result.json", {{"best_epoch", r.best_epoch},
                                       {"best_val_dice", r.best_val_dice},
                                       {"epochs_run", r.log.size()}});
}

train::TrainResult run_training(const RunConfig& c, const fs::path& out, const std::string& command,
                                net::Model<float> model, const std::string& target, const train::TrainConfig& tc,
                                const train::ScheduleConfig& sched, const train::UnfreezeSchedule* unfreeze) {
  const auto man = phantom::read_manifest(c.paths.crops);
  const auto tr = load_samples(c.paths.crops, man.train, target);
  const auto va = load_samples(c.paths.crops, man.val, target);
  auto cfg = tc;
  cfg.seed = train_seed(c);
  train::TrainHooks hooks;
  hooks.log_path = out / "train_log.jsonl";
  std::error_code ec;
  fs::remove(*hooks.log_path, ec);
  auto r = train::train(std::move(model), tr, va, cfg, sched, c.loss, c.optimizer, unfreeze, hooks);
  save_run(out, training_record(c, command), r);
  return r;
}

}  // namespace

std::vector<std::string> case_ids(const fs::path& dir, const std::string& split, const std::string& mask_name) {
  if (fs::exists(dir / "manifest.json")) {
    const auto man = phantom::read_manifest(dir);
    if (split == "train") return man.train;
    if (split == "val") return man.val;
    if (split == "test") return man.test;
    bad_config("unknown split '" + split + "'");
  }
  require(fs::is_directory(dir), "not a directory: " + dir.string());
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(mvol_header_path(e.path() / mask_name))) {
      out.push_back(e.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<train::Sample> load_samples(const fs::path& crops, const std::vector<std::string>& ids,
                                        const std::string& target) {
  std::vector<train::Sample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    out.push_back({id, load_volume(crops / id / "image"), load_mask(crops / id / target)});
  }
  return out;
}

void gen_phantoms(const RunConfig& c, const fs::path& out) {
  c.validate();
  OutputGuard guard(out);
  phantom::generate_dataset(c.phantom, c.splits, out);
  guard.commit();
}

void localize(const RunConfig& c, const fs::path& out) {
  c.validate();
  require_dataset(c.paths.dataset, "dataset");
  std::optional<net::Model<float>> coarse;
  if (c.roi_source == RoiSource::CoarseModel) {
    require_checkpoint(c.paths.coarse_checkpoint, "coarse_checkpoint");
    coarse = net::load_checkpoint(c.paths.coarse_checkpoint);
  }
  const auto man = phantom::read_manifest(c.paths.dataset);
  OutputGuard guard(out);
  std::vector<std::string> all = man.train;
  all.insert(all.end(), man.val.begin(), man.val.end());
  all.insert(all.end(), man.test.begin(), man.test.end());
  json records = json::array();
  for (const auto& id : all) {
    const fs::path src = c.paths.dataset / id;
    const auto image = load_volume(src / "image");
    const auto cavity = load_mask(src / "cavity");
    const auto wall = load_mask(src / "wall");
    LocalizationRecord rec;
    rec.case_id = id;
    rec.source = enum_name(c.roi_source);
    if (coarse) {
      const auto pred = predict_full(*coarse, image);
      if (count_foreground(pred) == 0) {
        if (c.empty_fallback == EmptyFallback::Abort) {
          throw Error(ErrorCode::EmptyPrediction, "coarse model predicts no foreground for case " + id);
        }
        rec.center = volume_center(image.dims());
        rec.fallback = true;
      } else {
        rec.center = center_of_mass(pred);
      }
    } else {
      rec.center = center_of_mass(cavity);
    }
    rec.window = roi_window(rec.center, c.roi.size);
    const fs::path dst = out / id;
    std::error_code ec;
    fs::create_directories(dst, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dst.string());
    save_volume(zscore_normalize(crop(image, rec.window, c.roi.pad_value)), dst / "image");
    save_mask(crop(cavity, rec.window), dst / "cavity");
    save_mask(crop(wall, rec.window), dst / "wall");
    const auto rj = to_json(rec);
    io::write_json(dst / "roi.json", rj);
    records.push_back(rj);
  }
  io::write_json(out / "manifest.json",
                 {{"format", "c2w-crops"},
                  {"source_dataset", c.paths.dataset.string()},
                  {"roi", {{"size", {c.roi.size.d, c.roi.size.h, c.roi.size.w}}, {"pad_value", c.roi.pad_value}}},
                  {"normalization", "zscore"},
                  {"splits", {{"train", man.train}, {"val", man.val}, {"test", man.test}}},
                  {"localization", records}});
  guard.commit();
}

train::TrainResult train_cavity(const RunConfig& c, const fs::path& out) {
  c.validate();
  require_dataset(c.paths.crops, "crops");
  OutputGuard guard(out);
  auto r = run_training(c, out, "train-cavity", net::Model<float>::build(c.model, init_seed(c)), "cavity",
                        c.cavity_train, c.cavity_schedule, nullptr);
  guard.commit();
  return r;
}

train::TrainResult finetune_wall(const RunConfig& c, const fs::path& out) {
  c.validate();
  require_dataset(c.paths.crops, "crops");
  require_checkpoint(c.paths.cavity_checkpoint, "cavity_checkpoint");
  const auto cav = net::load_checkpoint(c.paths.cavity_checkpoint);
  if (!(cav.spec() == c.model)) {
    throw Error(ErrorCode::SpecMismatch, "cavity checkpoint spec " + net::spec_hash(cav.spec()) +
                                             " differs from the configured model " + net::spec_hash(c.model));
  }
  OutputGuard guard(out);
  auto model = net::transfer_weights(cav, net::Model<float>::build(c.model, init_seed(c)), true, head_seed(c));
  auto r = run_training(c, out, "finetune-wall", std::move(model), "wall", c.wall_train, c.finetune_schedule,
                        &c.unfreeze);
  guard.commit();
  return r;
}

train::TrainResult train_scratch(const RunConfig& c, const fs::path& out) {
  c.validate();
  require_dataset(c.paths.crops, "crops");
  OutputGuard guard(out);
  auto r = run_training(c, out, "train-scratch", net::Model<float>::build(c.model, init_seed(c)), "wall",
                        c.wall_train, c.scratch_schedule, nullptr);
  guard.commit();
  return r;
}

void predict(const RunConfig& c, const fs::path& out) {
  c.validate();
  require_dataset(c.paths.crops, "crops");
  require_checkpoint(c.paths.checkpoint, "checkpoint");
  const auto model = net::load_checkpoint(c.paths.checkpoint);
  const auto ids = case_ids(c.paths.crops, c.predict_split, "image");
  OutputGuard guard(out);
  for (const auto& id : ids) {
    const auto image = load_volume(c.paths.crops / id / "image");
    const auto pred = train::predict_mask(model, image);
    std::error_code ec;
    fs::create_directories(out / id, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + (out / id).string());
    save_mask(pred, out / id / c.pred_mask);
  }
  guard.commit();
}

metrics::Summary evaluate(const RunConfig& c, const fs::path& out) {
  c.validate();
  require(!c.paths.predictions.empty(), "paths.predictions is not set");
  require(fs::is_directory(c.paths.predictions), "no predictions at " + c.paths.predictions.string());
  const fs::path ref = c.paths.reference.empty() ? c.paths.crops : c.paths.reference;
  require(!ref.empty() && fs::is_directory(ref), "no reference directory (paths.reference)");
  const auto pids = case_ids(c.paths.predictions, c.predict_split, c.pred_mask);
  const auto rids = case_ids(ref, c.predict_split, c.ref_mask);
  const std::set<std::string> ps(pids.begin(), pids.end()), rs(rids.begin(), rids.end());
  for (const auto& id : rids) {
    if (!ps.count(id) || !fs::exists(mvol_header_path(c.paths.predictions / id / c.pred_mask))) {
      throw Error(ErrorCode::CaseMismatch, "no prediction for case " + id);
    }
  }
  for (const auto& id : pids) {
    if (!rs.count(id)) throw Error(ErrorCode::CaseMismatch, "no reference for case " + id);
  }
  std::vector<std::string> ids(rs.begin(), rs.end());
  OutputGuard guard(out);
  std::vector<metrics::MetricsReport> reports;
  std::string lines;
  for (const auto& id : ids) {
    const auto p = load_mask(c.paths.predictions / id / c.pred_mask);
    const auto r = load_mask(ref / id / c.ref_mask);
    reports.push_back(metrics::evaluate(p, r, c.tolerance_mm, c.surface_mode));
    json rec = metrics::to_json(reports.back());
    rec["case_id"] = id;
    lines += rec.dump() + "\n";
  }
  const auto summary = metrics::summarize(reports);
  io::write_text(out / "metrics.jsonl", lines);
  io::write_json(out / "summary.json", metrics::to_json(summary));
  guard.commit();
  return summary;
}

}  // namespace c2w::pipeline
