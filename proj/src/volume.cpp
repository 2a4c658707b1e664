// SPDX-License-Identifier: Apache-2.0
#include "c2w/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include <json.hpp>

#include "c2w/io.hpp"

namespace c2w {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_geometry(const Dims& dims, const Spacing& s) {
  if (dims.d == 0 || dims.h == 0 || dims.w == 0) {
    throw Error(ErrorCode::InvalidGeometry, "dims must be positive");
  }
  for (double v : {s.z, s.y, s.x}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::InvalidGeometry, "spacing must be positive and finite");
    }
  }
}

template <class T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) {
    return "f32";
  } else {
    return "u8";
  }
}

template <class T>
Image3<T> load_image(const fs::path& path) {
  const auto header_path = mvol_header_path(path);
  json header;
  {
    const auto text = io::read_file(header_path);
    header = json::parse(text.begin(), text.end(), nullptr, false);
  }
  if (header.is_discarded() || !header.is_object()) {
    throw Error(ErrorCode::MalformedHeader, "invalid JSON in " + header_path.string());
  }
  Dims dims;
  Spacing spacing;
  try {
    const auto& d = header.at("dims");
    const auto& s = header.at("spacing_mm");
    if (d.size() != 3 || s.size() != 3) throw std::runtime_error("dims/spacing_mm must have 3 entries");
    dims = {d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>(), d.at(2).get<std::size_t>()};
    spacing = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
    if (header.at("dtype").get<std::string>() != dtype_name<T>()) {
      throw std::runtime_error(std::string("expected dtype ") + dtype_name<T>());
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::MalformedHeader, header_path.string() + ": " + e.what());
  }

  const auto payload = io::read_file(mvol_payload_path(path));
  const std::size_t n = dims.count();
  if (payload.size() != n * sizeof(T)) {
    throw Error(ErrorCode::SizeMismatch, "payload has " + std::to_string(payload.size()) +
                                             " bytes, header implies " + std::to_string(n * sizeof(T)));
  }
  std::vector<T> data(n);
  if constexpr (std::is_same_v<T, float>) {
    io::decode_f32le(payload.data(), data);
  } else {
    std::memcpy(data.data(), payload.data(), n);
  }
  return Image3<T>(dims, spacing, std::move(data));
}

template <class T>
void save_image(const Image3<T>& img, const fs::path& path) {
  const auto& d = img.dims();
  const auto& s = img.spacing();
  json header = {{"dims", {d.d, d.h, d.w}}, {"spacing_mm", {s.z, s.y, s.x}}, {"dtype", dtype_name<T>()}};

  std::vector<char> payload;
  if constexpr (std::is_same_v<T, float>) {
    payload = io::encode_f32le(img.data());
  } else {
    payload.assign(img.data().begin(), img.data().end());
  }
  const std::string text = header.dump();
  io::write_file(mvol_header_path(path), text.data(), text.size());
  io::write_file(mvol_payload_path(path), payload.data(), payload.size());
}

std::int64_t round_half_up(double v) { return static_cast<std::int64_t>(std::floor(v + 0.5)); }

template <class T>
Image3<T> crop_impl(const Image3<T>& src, const RoiWindow& win, T pad) {
  const auto& sd = src.dims();
  std::vector<T> out(win.size.count(), pad);
  for (std::size_t z = 0; z < win.size.d; ++z) {
    const std::int64_t sz = win.start[0] + static_cast<std::int64_t>(z);
    if (sz < 0 || sz >= static_cast<std::int64_t>(sd.d)) continue;
    for (std::size_t y = 0; y < win.size.h; ++y) {
      const std::int64_t sy = win.start[1] + static_cast<std::int64_t>(y);
      if (sy < 0 || sy >= static_cast<std::int64_t>(sd.h)) continue;
      for (std::size_t x = 0; x < win.size.w; ++x) {
        const std::int64_t sx = win.start[2] + static_cast<std::int64_t>(x);
        if (sx < 0 || sx >= static_cast<std::int64_t>(sd.w)) continue;
        out[win.size.index(z, y, x)] = src(static_cast<std::size_t>(sz), static_cast<std::size_t>(sy),
                                           static_cast<std::size_t>(sx));
      }
    }
  }
  return Image3<T>(win.size, src.spacing(), std::move(out));
}

}  // namespace

template <class T>
Image3<T>::Image3(Dims dims, Spacing spacing) : dims_(dims), spacing_(spacing), data_(dims.count(), T{}) {
  check_geometry(dims_, spacing_);
}

template <class T>
Image3<T>::Image3(Dims dims, Spacing spacing, std::vector<T> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  check_geometry(dims_, spacing_);
  if (data_.size() != dims_.count()) {
    throw Error(ErrorCode::SizeMismatch, "data length " + std::to_string(data_.size()) + " != D*H*W " +
                                             std::to_string(dims_.count()));
  }
  validate();
}

template <class T>
void Image3<T>::validate() const {
  if constexpr (std::is_same_v<T, float>) {
    for (float v : data_) {
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteData, "volume contains NaN or Inf");
    }
  } else {
    for (auto v : data_) {
      if (v > 1) throw Error(ErrorCode::NonBinaryMask, "mask values must be 0 or 1");
    }
  }
}

template class Image3<float>;
template class Image3<std::uint8_t>;

std::size_t count_foreground(const Mask3& m) {
  return static_cast<std::size_t>(std::count(m.data().begin(), m.data().end(), std::uint8_t{1}));
}

fs::path mvol_header_path(const fs::path& base) {
  if (base.extension() == ".json") return base;
  auto p = base;
  p += ".json";
  return p;
}

fs::path mvol_payload_path(const fs::path& base) {
  auto p = base;
  if (p.extension() == ".json") p.replace_extension();
  p += ".raw";
  return p;
}

Volume3 load_volume(const fs::path& path) { return load_image<float>(path); }
Mask3 load_mask(const fs::path& path) { return load_image<std::uint8_t>(path); }
void save_volume(const Volume3& v, const fs::path& path) { save_image(v, path); }
void save_mask(const Mask3& m, const fs::path& path) { save_image(m, path); }

Volume3 zscore_normalize(const Volume3& v) {
  const auto data = v.data();
  const double n = static_cast<double>(data.size());
  double mean = 0.0;
  for (float x : data) mean += x;
  mean /= n;
  double var = 0.0;
  for (float x : data) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);

  std::vector<float> out(data.size(), 0.0f);
  if (sd >= 1e-8) {
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = static_cast<float>((data[i] - mean) / sd);
  }
  return Volume3(v.dims(), v.spacing(), std::move(out));
}

VoxelCoord center_of_mass(const Mask3& m) {
  const auto& d = m.dims();
  double sz = 0, sy = 0, sx = 0;
  std::size_t n = 0;
  for (std::size_t z = 0; z < d.d; ++z) {
    for (std::size_t y = 0; y < d.h; ++y) {
      for (std::size_t x = 0; x < d.w; ++x) {
        if (m(z, y, x)) {
          sz += static_cast<double>(z);
          sy += static_cast<double>(y);
          sx += static_cast<double>(x);
          ++n;
        }
      }
    }
  }
  if (n == 0) throw Error(ErrorCode::EmptyMask, "center of mass of an empty mask");
  const double inv = static_cast<double>(n);
  return {sz / inv, sy / inv, sx / inv};
}

RoiWindow roi_window(const VoxelCoord& center, const Dims& size) {
  if (size.count() == 0) throw Error(ErrorCode::InvalidGeometry, "ROI size components must be >= 1");
  RoiWindow w;
  w.size = size;
  w.start = {round_half_up(center.z) - static_cast<std::int64_t>(size.d / 2),
             round_half_up(center.y) - static_cast<std::int64_t>(size.h / 2),
             round_half_up(center.x) - static_cast<std::int64_t>(size.w / 2)};
  return w;
}

VoxelCoord volume_center(const Dims& dims) {
  return {(static_cast<double>(dims.d) - 1.0) / 2.0, (static_cast<double>(dims.h) - 1.0) / 2.0,
          (static_cast<double>(dims.w) - 1.0) / 2.0};
}

Volume3 crop(const Volume3& v, const RoiWindow& window, float pad_value) {
  return crop_impl(v, window, pad_value);
}

Mask3 crop(const Mask3& m, const RoiWindow& window) { return crop_impl(m, window, std::uint8_t{0}); }

Volume3 crop_roi(const Volume3& v, const VoxelCoord& center, const RoiSpec& roi) {
  return crop(v, roi_window(center, roi.size), roi.pad_value);
}

Mask3 crop_roi(const Mask3& m, const VoxelCoord& center, const RoiSpec& roi) {
  return crop(m, roi_window(center, roi.size));
}

}  // namespace c2w
