// SPDX-License-Identifier: Apache-2.0
//
// DiceFocal loss, AdamW, cosine schedules, progressive unfreezing,
// augmentation and the epoch loop with early stopping.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "c2w/network.hpp"
#include "c2w/rng.hpp"
#include "c2w/tensor.hpp"
#include "c2w/volume.hpp"

namespace c2w::train {

struct LossConfig {
  double dice_eps = 1e-5;
  double focal_gamma = 2.0;
  double focal_alpha = 0.5;
  double focal_weight = 1.0;
  double prob_clamp = 1e-7;

  void validate() const;
};

/// L = soft Dice over the whole batch + weight * focal term, p = sigmoid(logits).
/// target holds 0/1 values and the same shape as logits.
template <class T>
ad::Tensor<T> dice_focal_loss(ad::Tape<T>& tape, const ad::Tensor<T>& logits, const ad::Tensor<T>& target,
                              const LossConfig& cfg = {});

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-4;
  double eps = 1e-8;

  void validate() const;
};

/// Decoupled weight decay Adam with per-parameter step counts. Frozen
/// parameters are skipped and their moments discarded, so a parameter that is
/// unfrozen later restarts from zero moments and t = 0.
class AdamW {
 public:
  explicit AdamW(OptimizerConfig cfg = {});

  /// Throws MissingGrad if a trainable parameter has no gradient.
  template <class T>
  void step(net::ParameterSet<T>& params, double lr);

  /// 0 for parameters without state.
  std::size_t step_count(const std::string& name) const;
  const OptimizerConfig& config() const { return cfg_; }

 private:
  struct State {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  OptimizerConfig cfg_;
  std::unordered_map<std::string, State> state_;
};

enum class ScheduleKind { WarmupCosine, StagewiseCosine };

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::WarmupCosine;
  double lr_max = 1e-3;
  /// Warmup-cosine floor. Stagewise segments use lr_max_k * segment_min_ratio.
  double lr_min = 1e-6;
  /// Per segment for stagewise.
  std::size_t warmup_epochs = 50;
  std::size_t horizon_epochs = 1000;
  /// Epochs where a new segment starts (stagewise only).
  std::vector<std::size_t> restart_boundaries;
  double restart_decay = 10.0;
  double segment_min_ratio = 1e-3;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Throws OutOfRange unless 0 <= epoch < horizon.
double lr_at(const ScheduleConfig& cfg, std::size_t epoch);

/// Peak lr of every stagewise segment (a single entry for warmup-cosine).
std::vector<double> segment_maxima(const ScheduleConfig& cfg);

struct UnfreezeSchedule {
  std::size_t step_a_end = 60;
  std::size_t step_b_end = 180;
  /// Encoder stages 1..cutoff stay frozen through step B.
  std::size_t deep_stage_cutoff = 3;
  std::size_t max_epochs = 1000;

  void validate() const;
  /// Boundaries scaled from the reference 60/180/1000 to `max_epochs`.
  static UnfreezeSchedule scaled(std::size_t max_epochs, std::size_t deep_stage_cutoff);
};

/// Trainable tags at `epoch` given every tag of the model. Throws OutOfRange.
std::set<std::string> unfreeze_state(const UnfreezeSchedule& s, std::size_t epoch,
                                     const std::set<std::string>& all_tags);

/// 'A', 'B' or 'C'.
char unfreeze_step(const UnfreezeSchedule& s, std::size_t epoch);

struct AugmentConfig {
  double p_flip = 0.5;
  /// Axis mirrored by the flip: 0 = z, 1 = y, 2 = x (left-right).
  int flip_axis = 2;
  double p_rotate = 0.2;
  double max_rotate_deg = 10.0;
  double p_elastic = 0.2;
  /// Smoothing and magnitude of the displacement field, voxels.
  double elastic_sigma = 3.0;
  double elastic_alpha = 2.0;
  double p_scale = 0.2;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double p_histogram = 0.1;

  static AugmentConfig none();
};

/// Each step fires with its probability; the mask follows every spatial step
/// (nearest neighbour) and stays binary. `references` feed histogram
/// matching; an empty list disables it.
std::pair<Volume3, Mask3> augment(const Volume3& v, const Mask3& m, const AugmentConfig& cfg, Rng& rng,
                                  const std::vector<const Volume3*>& references = {});

/// Mirror along one axis.
Volume3 flip(const Volume3& v, int axis);
Mask3 flip(const Mask3& m, int axis);
/// Monotone CDF mapping of v's intensities onto reference's.
Volume3 histogram_match(const Volume3& v, const Volume3& reference);

struct Sample {
  std::string id;
  Volume3 image;
  Mask3 target;
};

struct TrainConfig {
  std::size_t batch_size = 4;
  std::size_t max_epochs = 1000;
  std::size_t patience = 50;
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentConfig augmentation;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double val_dice = 0.0;
  std::vector<std::string> trainable_tags;
  double wall_clock_s = 0.0;
};

nlohmann::json to_json(const EpochRecord& r);

struct TrainResult {
  net::Model<float> best;
  std::size_t best_epoch = 0;
  double best_val_dice = 0.0;
  std::vector<EpochRecord> log;
};

struct TrainHooks {
  /// Appends one JSON line per epoch when set.
  std::optional<std::filesystem::path> log_path;
  /// Called after every optimizer step with the epoch and the live model.
  std::function<void(std::size_t epoch, const net::Model<float>&)> after_step;
  /// Called before each epoch's first step.
  std::function<void(std::size_t epoch, const net::Model<float>&)> before_epoch;
};

/// Mean Dice of thresholded predictions (logit >= 0) over the samples.
double mean_dice(const net::Model<float>& model, const std::vector<Sample>& samples, std::size_t batch_size = 4);

/// Binary prediction for one image (sigmoid >= 0.5, i.e. logit >= 0).
Mask3 predict_mask(const net::Model<float>& model, const Volume3& image);

/// Epoch loop. With an unfreeze schedule, trainable tags follow it and early
/// stopping only counts epochs in step C. Throws EmptySplit, Divergence.
TrainResult train(net::Model<float> model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& cfg, const ScheduleConfig& schedule, const LossConfig& loss = {},
                  const OptimizerConfig& opt = {}, const UnfreezeSchedule* unfreeze = nullptr,
                  const TrainHooks& hooks = {});

}  // namespace c2w::train
