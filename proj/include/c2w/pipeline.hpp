// SPDX-License-Identifier: Apache-2.0
//
// The end-to-end workflow behind the command-line verbs: phantom generation,
// ROI localization, cavity pre-training, wall fine-tuning, the scratch
// baseline, prediction and evaluation. Every command writes only under its
// output directory and leaves `<out>/.partial` behind if it fails.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2w/metrics.hpp"
#include "c2w/network.hpp"
#include "c2w/phantom.hpp"
#include "c2w/training.hpp"
#include "c2w/volume.hpp"

namespace c2w::pipeline {

enum class RoiSource { OracleMask, CoarseModel };
enum class EmptyFallback { VolumeCenter, Abort };

struct Paths {
  std::filesystem::path dataset;            // phantom dataset root
  std::filesystem::path crops;              // localize output
  std::filesystem::path cavity_checkpoint;  // base path of theta_cav
  std::filesystem::path coarse_checkpoint;  // ROI model for roi_source = coarse_model
  std::filesystem::path checkpoint;         // model used by predict
  std::filesystem::path predictions;        // predict output, read by evaluate
  std::filesystem::path reference;          // reference masks for evaluate
};

struct RunConfig {
  Paths paths;
  phantom::PhantomConfig phantom;
  phantom::SplitCounts splits;
  net::ModelSpec model = net::ModelSpec::desk();
  RoiSpec roi{{24, 24, 24}, 0.0f};
  RoiSource roi_source = RoiSource::OracleMask;
  EmptyFallback empty_fallback = EmptyFallback::VolumeCenter;

  train::TrainConfig cavity_train;
  train::ScheduleConfig cavity_schedule;
  /// Shared by finetune-wall and train-scratch.
  train::TrainConfig wall_train;
  train::ScheduleConfig finetune_schedule;
  train::ScheduleConfig scratch_schedule;
  train::UnfreezeSchedule unfreeze;
  train::LossConfig loss;
  train::OptimizerConfig optimizer;

  std::string predict_split = "test";
  std::string pred_mask = "pred";
  std::string ref_mask = "wall";
  double tolerance_mm = 1.0;
  metrics::SurfaceDiceMode surface_mode = metrics::SurfaceDiceMode::Symmetric;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;
};

/// The desk-scale defaults used by the phantom experiment.
RunConfig default_config();

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults. Throws InvalidConfig.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Serialized settings of one training run (what differs between the
/// transfer and scratch runs is visible by diffing two of these).
nlohmann::json training_record(const RunConfig& c, const std::string& command);

struct LocalizationRecord {
  std::string case_id;
  VoxelCoord center{};
  RoiWindow window;
  std::string source;
  bool fallback = false;
};

nlohmann::json to_json(const LocalizationRecord& r);

/// Model input: z-score normalized image, [1, 1, d, h, w] implied.
std::vector<train::Sample> load_samples(const std::filesystem::path& crops, const std::vector<std::string>& ids,
                                        const std::string& target);

/// Case ids under `dir`: the named split of `<dir>/manifest.json` if present,
/// otherwise every subdirectory holding `<mask_name>.json`, sorted.
std::vector<std::string> case_ids(const std::filesystem::path& dir, const std::string& split,
                                  const std::string& mask_name);

void gen_phantoms(const RunConfig& c, const std::filesystem::path& out);
void localize(const RunConfig& c, const std::filesystem::path& out);
train::TrainResult train_cavity(const RunConfig& c, const std::filesystem::path& out);
train::TrainResult finetune_wall(const RunConfig& c, const std::filesystem::path& out);
train::TrainResult train_scratch(const RunConfig& c, const std::filesystem::path& out);
void predict(const RunConfig& c, const std::filesystem::path& out);
metrics::Summary evaluate(const RunConfig& c, const std::filesystem::path& out);

/// Seeds derived from the run seed.
std::uint64_t init_seed(const RunConfig& c);
std::uint64_t head_seed(const RunConfig& c);
std::uint64_t train_seed(const RunConfig& c);

}  // namespace c2w::pipeline
