// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic cases: a randomly posed ellipsoidal cavity (bright), a thin
// shell around it (dim), optionally cut by a cylindrical notch, on a dark
// background with Gaussian noise.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2w/rng.hpp"
#include "c2w/volume.hpp"

namespace c2w::phantom {

struct PhantomConfig {
  Dims dims{32, 32, 32};
  Spacing spacing{1.0, 1.0, 1.0};
  /// Semi-axes as fractions of the extent along each axis.
  double radius_min = 0.18;
  double radius_max = 0.28;
  /// Centre offset from the volume centre, voxels, per axis.
  double center_jitter = 2.0;
  /// Shell thickness in voxels.
  double thickness_min = 1.0;
  double thickness_max = 2.0;
  double mu_background = 0.0;
  double mu_wall = 0.35;
  double mu_cavity = 1.0;
  double noise_sigma = 0.15;
  double notch_probability = 0.5;
  double notch_radius = 1.5;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;
};

nlohmann::json to_json(const PhantomConfig& c);
PhantomConfig phantom_config_from_json(const nlohmann::json& j);

struct CaseMeta {
  std::array<double, 3> center{};  // voxel coordinates (z, y, x)
  std::array<double, 3> radii{};   // voxels
  std::array<double, 9> rotation{};
  double thickness = 0.0;
  bool notch = false;
  std::array<double, 3> notch_direction{};
};

struct PhantomCase {
  Volume3 image;
  Mask3 cavity;
  Mask3 wall;
  CaseMeta meta;
};

PhantomCase generate_case(const PhantomConfig& cfg, Rng& rng);

nlohmann::json to_json(const CaseMeta& m);

struct SplitCounts {
  std::size_t train = 60, val = 20, test = 20;
};

struct DatasetManifest {
  std::vector<std::string> train, val, test;
};

/// Writes `<root>/manifest.json` and `<root>/<case_id>/{image,cavity,wall}`
/// MVOL files plus `meta.json`. Case i draws from derive_seed(cfg.seed, i).
DatasetManifest generate_dataset(const PhantomConfig& cfg, const SplitCounts& counts,
                                 const std::filesystem::path& root);

/// Throws IoFailure / MalformedHeader.
DatasetManifest read_manifest(const std::filesystem::path& root);

}  // namespace c2w::phantom
