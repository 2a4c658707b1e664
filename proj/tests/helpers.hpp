// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "c2w/rng.hpp"
#include "c2w/tensor.hpp"
#include "c2w/volume.hpp"

namespace c2w::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "c2w") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

template <class T>
ad::Tensor<T> random_tensor(Rng& rng, ad::Shape shape, double sd = 1.0, bool requires_grad = false) {
  std::vector<T> v(ad::shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.normal(0.0, sd));
  return ad::Tensor<T>(std::move(shape), std::move(v), requires_grad);
}

inline Volume3 random_volume(Rng& rng, Dims dims, Spacing sp = {}) {
  std::vector<float> v(dims.count());
  for (auto& x : v) x = static_cast<float>(rng.normal(0.0, 3.0));
  return Volume3(dims, sp, std::move(v));
}

inline Mask3 random_mask(Rng& rng, Dims dims, double p, Spacing sp = {}) {
  std::vector<std::uint8_t> v(dims.count());
  for (auto& x : v) x = rng.bernoulli(p) ? 1 : 0;
  return Mask3(dims, sp, std::move(v));
}

}  // namespace c2w::test
