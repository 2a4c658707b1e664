// SPDX-License-Identifier: Apache-2.0
//
// Volumes, masks, the MVOL on-disk format, z-score normalization and
// center-of-mass ROI cropping.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <type_traits>
#include <vector>

#include "c2w/error.hpp"

namespace c2w {

/// Voxel counts in (depth, height, width) order.
struct Dims {
  std::size_t d = 0, h = 0, w = 0;

  std::size_t count() const { return d * h * w; }
  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const { return (z * h + y) * w + x; }
  bool operator==(const Dims&) const = default;
};

/// Millimetres per voxel in (z, y, x) order.
struct Spacing {
  double z = 1.0, y = 1.0, x = 1.0;
  bool operator==(const Spacing&) const = default;
};

/// Fractional voxel coordinates (z, y, x).
struct VoxelCoord {
  double z = 0.0, y = 0.0, x = 0.0;
};

/// Dense 3D grid with x fastest. Construction validates the invariants of the
/// element type: finite values for float volumes, {0,1} for masks.
template <class T>
class Image3 {
 public:
  using value_type = T;

  Image3() = default;
  Image3(Dims dims, Spacing spacing);  // zero-filled
  Image3(Dims dims, Spacing spacing, std::vector<T> data);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const T> data() const { return data_; }
  std::span<T> mutable_data() { return data_; }
  std::size_t size() const { return data_.size(); }

  T operator()(std::size_t z, std::size_t y, std::size_t x) const { return data_[dims_.index(z, y, x)]; }
  T& at(std::size_t z, std::size_t y, std::size_t x) { return data_[dims_.index(z, y, x)]; }

  bool same_geometry(const Image3<T>& o) const { return dims_ == o.dims_ && spacing_ == o.spacing_; }
  template <class U>
  bool same_geometry(const Image3<U>& o) const {
    return dims_ == o.dims() && spacing_ == o.spacing();
  }

  /// Re-checks the element invariants after in-place modification.
  void validate() const;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<T> data_;
};

using Volume3 = Image3<float>;
using Mask3 = Image3<std::uint8_t>;

extern template class Image3<float>;
extern template class Image3<std::uint8_t>;

std::size_t count_foreground(const Mask3& m);

// ---------------------------------------------------------------------------
// MVOL format: `<base>.json` header + `<base>.raw` little-endian payload.
// `path` may be given with or without the `.json` suffix.

Volume3 load_volume(const std::filesystem::path& path);
Mask3 load_mask(const std::filesystem::path& path);
void save_volume(const Volume3& v, const std::filesystem::path& path);
void save_mask(const Mask3& m, const std::filesystem::path& path);

std::filesystem::path mvol_header_path(const std::filesystem::path& base);
std::filesystem::path mvol_payload_path(const std::filesystem::path& base);

// ---------------------------------------------------------------------------

/// (v - mean) / std with population std; all zeros when std < 1e-8.
Volume3 zscore_normalize(const Volume3& v);

/// Unweighted mean of foreground voxel indices. Throws EmptyMask.
VoxelCoord center_of_mass(const Mask3& m);

struct RoiSpec {
  Dims size{44, 256, 256};
  float pad_value = 0.0f;
};

/// Crop window in source voxel indices; may extend beyond the source.
struct RoiWindow {
  std::array<std::int64_t, 3> start{};  // z, y, x
  Dims size;
};

/// start = floor(center + 0.5) - floor(size / 2) per axis. The window is never
/// shifted to fit inside the source; out-of-range voxels take the pad value.
RoiWindow roi_window(const VoxelCoord& center, const Dims& size);

/// Geometric center ((n - 1) / 2 per axis).
VoxelCoord volume_center(const Dims& dims);

Volume3 crop(const Volume3& v, const RoiWindow& window, float pad_value);
Mask3 crop(const Mask3& m, const RoiWindow& window);

Volume3 crop_roi(const Volume3& v, const VoxelCoord& center, const RoiSpec& roi);
Mask3 crop_roi(const Mask3& m, const VoxelCoord& center, const RoiSpec& roi);

}  // namespace c2w
