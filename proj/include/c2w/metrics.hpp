// SPDX-License-Identifier: Apache-2.0
//
// Overlap and surface metrics on binary masks. Surfaces are foreground voxel
// centres with a six-connected background (or outside) neighbour; distances
// are in millimetres.
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2w/volume.hpp"

namespace c2w::metrics {

/// 2|A and B| / (|A| + |B|); both empty gives 1. Throws GeometryMismatch.
double dice(const Mask3& a, const Mask3& b);

struct SurfacePointSet {
  std::vector<std::array<std::size_t, 3>> voxels;  // (z, y, x)
  std::vector<std::array<double, 3>> points;       // voxel index * spacing
  Dims dims;
  Spacing spacing;

  std::size_t size() const { return voxels.size(); }
};

/// Throws EmptyMask.
SurfacePointSet extract_surface(const Mask3& m);

enum class DistanceMethod { Edt, Brute };

struct DirectedDistances {
  std::vector<double> a_to_b;
  std::vector<double> b_to_a;
};

/// Nearest-surface distances in both directions. Edt needs both sets on the
/// same grid (GeometryMismatch otherwise).
DirectedDistances surface_distances(const SurfacePointSet& a, const SurfacePointSet& b,
                                    DistanceMethod method = DistanceMethod::Edt);

/// Exact squared Euclidean distance (mm^2) from every voxel to the nearest
/// seed, separable lower-envelope algorithm. Voxels with no seed anywhere get
/// +infinity.
std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& seeds, const Dims& dims,
                                               const Spacing& spacing);

/// Linear interpolation between order statistics at rank q/100 * (n - 1).
double percentile(std::vector<double> values, double q);

double hd95(const Mask3& a, const Mask3& b);
/// Max of the two directed maxima.
double hausdorff(const Mask3& a, const Mask3& b);
double assd(const Mask3& a, const Mask3& b);

enum class SurfaceDiceMode { Symmetric, OneSided };

/// One-sided counts the fraction of a's surface within tol of b's.
double surface_dice(const Mask3& a, const Mask3& b, double tol_mm,
                    SurfaceDiceMode mode = SurfaceDiceMode::Symmetric);

struct MetricsReport {
  double dice = 0.0;
  std::optional<double> surface_dice;
  std::optional<double> hd95;
  std::optional<double> assd;
  double tolerance_mm = 1.0;
  /// Set when a surface metric could not be computed (EmptyMask).
  std::optional<ErrorCode> error;
};

MetricsReport evaluate(const Mask3& pred, const Mask3& ref, double tol_mm = 1.0,
                       SurfaceDiceMode mode = SurfaceDiceMode::Symmetric);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // population
  std::size_t n = 0;
};

MeanSd mean_sd(const std::vector<double>& v);

struct Summary {
  MeanSd dice, surface_dice, hd95, assd;
  std::size_t cases = 0;
  std::size_t errors = 0;
};

/// Surface metrics average over the cases that have them.
Summary summarize(const std::vector<MetricsReport>& reports);

nlohmann::json to_json(const MetricsReport& r);
nlohmann::json to_json(const Summary& s);

}  // namespace c2w::metrics
