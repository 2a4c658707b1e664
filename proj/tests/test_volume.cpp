// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "c2w/volume.hpp"
#include "helpers.hpp"

using namespace c2w;
using c2w::test::TempDir;

namespace {

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

// Independent window oracle: start = floor(c + 0.5) - size / 2.
template <class T>
T oracle_voxel(const Image3<T>& src, const VoxelCoord& c, const Dims& size, std::size_t z, std::size_t y,
               std::size_t x, T pad) {
  const long sz = static_cast<long>(std::floor(c.z + 0.5)) - static_cast<long>(size.d / 2) + static_cast<long>(z);
  const long sy = static_cast<long>(std::floor(c.y + 0.5)) - static_cast<long>(size.h / 2) + static_cast<long>(y);
  const long sx = static_cast<long>(std::floor(c.x + 0.5)) - static_cast<long>(size.w / 2) + static_cast<long>(x);
  const auto& d = src.dims();
  if (sz < 0 || sy < 0 || sx < 0 || sz >= static_cast<long>(d.d) || sy >= static_cast<long>(d.h) ||
      sx >= static_cast<long>(d.w)) {
    return pad;
  }
  return src(static_cast<std::size_t>(sz), static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
}

}  // namespace

TEST_SUITE("volume-io") {
  TEST_CASE("save/load round trip is identity") {
    TempDir dir;
    Rng rng(11);
    auto v = test::random_volume(rng, {4, 4, 4}, {0.5, 0.75, 1.25});
    save_volume(v, dir / "vol");
    auto back = load_volume(dir / "vol.json");
    CHECK(back.dims() == v.dims());
    CHECK(back.spacing() == v.spacing());
    CHECK(std::memcmp(back.data().data(), v.data().data(), v.size() * sizeof(float)) == 0);
  }

  TEST_CASE("payload length mismatch") {
    TempDir dir;
    write_text(dir / "bad.json", R"({"dims":[2,2,2],"spacing_mm":[1,1,1],"dtype":"f32"})");
    write_text(dir / "bad.raw", std::string(12, '\0'));
    CHECK_THROWS_WITH_AS(load_volume(dir / "bad"), doctest::Contains("SizeMismatch"), Error);
  }

  TEST_CASE("full-scale ROI header") {
    TempDir dir;
    write_text(dir / "roi.json", R"({"dims":[44,256,256],"spacing_mm":[0.625,0.625,0.625],"dtype":"f32"})");
    write_text(dir / "roi.raw", std::string(44 * 256 * 256 * 4, '\0'));
    auto v = load_volume(dir / "roi");
    CHECK(v.dims() == Dims{44, 256, 256});
    CHECK(v.spacing() == Spacing{0.625, 0.625, 0.625});
  }

  TEST_CASE("malformed headers") {
    TempDir dir;
    write_text(dir / "a.json", "{not json");
    write_text(dir / "a.raw", "");
    CHECK_THROWS_WITH_AS(load_volume(dir / "a"), doctest::Contains("MalformedHeader"), Error);
    write_text(dir / "b.json", R"({"dims":[1,1,1],"dtype":"f32"})");
    write_text(dir / "b.raw", std::string(4, '\0'));
    CHECK_THROWS_WITH_AS(load_volume(dir / "b"), doctest::Contains("MalformedHeader"), Error);
    write_text(dir / "c.json", R"({"dims":[1,1,1],"spacing_mm":[1,1,1],"dtype":"u8"})");
    write_text(dir / "c.raw", std::string(1, '\0'));
    CHECK_THROWS_WITH_AS(load_volume(dir / "c"), doctest::Contains("MalformedHeader"), Error);
  }

  TEST_CASE("non-finite payload and non-binary mask") {
    TempDir dir;
    write_text(dir / "n.json", R"({"dims":[1,1,2],"spacing_mm":[1,1,1],"dtype":"f32"})");
    const float vals[2] = {1.0f, std::nanf("")};
    write_text(dir / "n.raw", std::string(reinterpret_cast<const char*>(vals), sizeof(vals)));
    CHECK_THROWS_WITH_AS(load_volume(dir / "n"), doctest::Contains("NonFiniteData"), Error);
    write_text(dir / "m.json", R"({"dims":[1,1,2],"spacing_mm":[1,1,1],"dtype":"u8"})");
    write_text(dir / "m.raw", std::string("\x01\x02", 2));
    CHECK_THROWS_WITH_AS(load_mask(dir / "m"), doctest::Contains("NonBinaryMask"), Error);
  }

  TEST_CASE("second serialization is bitwise equal") {
    TempDir dir;
    Rng rng(5);
    auto v = test::random_volume(rng, {3, 5, 7}, {0.625, 0.625, 2.5});
    save_volume(v, dir / "one");
    save_volume(load_volume(dir / "one"), dir / "two");
    CHECK(slurp(dir / "one.json") == slurp(dir / "two.json"));
    CHECK(slurp(dir / "one.raw") == slurp(dir / "two.raw"));
  }

  TEST_CASE("unwritable location") {
    TempDir dir;
    write_text(dir / "file", "x");
    Volume3 v({1, 1, 1}, {});
    CHECK_THROWS_WITH_AS(save_volume(v, dir / "file" / "sub" / "vol"), doctest::Contains("IoFailure"), Error);
  }

  TEST_CASE("single voxel payload is little-endian float") {
    TempDir dir;
    Volume3 v({1, 1, 1}, {}, {3.5f});
    save_volume(v, dir / "one");
    const auto raw = slurp(dir / "one.raw");
    REQUIRE(raw.size() == 4);
    const unsigned char expect[4] = {0x00, 0x00, 0x60, 0x40};
    CHECK(std::memcmp(raw.data(), expect, 4) == 0);
  }

  TEST_CASE("mask round trip") {
    TempDir dir;
    Rng rng(3);
    auto m = test::random_mask(rng, {5, 4, 3}, 0.4, {1.0, 0.5, 0.5});
    save_mask(m, dir / "mask");
    auto back = load_mask(dir / "mask");
    CHECK(std::equal(m.data().begin(), m.data().end(), back.data().begin(), back.data().end()));
    CHECK(back.spacing() == m.spacing());
  }

  TEST_CASE("zscore examples") {
    Volume3 c({2, 2, 2}, {}, std::vector<float>(8, 7.0f));
    const auto zc = zscore_normalize(c);
    for (float x : zc.data()) CHECK(x == 0.0f);

    Volume3 two({1, 1, 4}, {}, {0.0f, 2.0f, 0.0f, 2.0f});
    auto z = zscore_normalize(two);
    CHECK(z.data()[0] == doctest::Approx(-1.0).epsilon(1e-7));
    CHECK(z.data()[1] == doctest::Approx(1.0).epsilon(1e-7));
  }

  TEST_CASE("zscore moments, idempotence and affine invariance") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      auto v = test::random_volume(rng, {6, 7, 5});
      auto z = zscore_normalize(v);
      double m = 0.0, s = 0.0;
      for (float x : z.data()) m += x;
      m /= static_cast<double>(z.size());
      for (float x : z.data()) s += (x - m) * (x - m);
      s = std::sqrt(s / static_cast<double>(z.size()));
      CHECK(std::abs(m) < 1e-5);
      CHECK(std::abs(s - 1.0) < 1e-5);

      auto zz = zscore_normalize(z);
      const double a = rng.uniform(0.1, 10.0), b = rng.uniform(-50.0, 50.0);
      std::vector<float> shifted(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) shifted[i] = static_cast<float>(a * v.data()[i] + b);
      auto za = zscore_normalize(Volume3(v.dims(), v.spacing(), shifted));
      for (std::size_t i = 0; i < z.size(); ++i) {
        CHECK(std::abs(zz.data()[i] - z.data()[i]) < 1e-5);
        CHECK(std::abs(za.data()[i] - z.data()[i]) < 1e-5);
      }
    }
  }

  TEST_CASE("center of mass examples") {
    Mask3 one({3, 4, 5}, {});
    one.at(1, 2, 3) = 1;
    auto c = center_of_mass(one);
    CHECK(c.z == 1.0);
    CHECK(c.y == 2.0);
    CHECK(c.x == 3.0);

    Mask3 full({3, 3, 3}, {}, std::vector<std::uint8_t>(27, 1));
    c = center_of_mass(full);
    CHECK(c.z == 1.0);
    CHECK(c.y == 1.0);
    CHECK(c.x == 1.0);

    Mask3 two({1, 1, 3}, {});
    two.at(0, 0, 0) = 1;
    two.at(0, 0, 2) = 1;
    c = center_of_mass(two);
    CHECK(c.z == 0.0);
    CHECK(c.y == 0.0);
    CHECK(c.x == 1.0);

    CHECK_THROWS_WITH_AS(center_of_mass(Mask3({2, 2, 2}, {})), doctest::Contains("EmptyMask"), Error);
  }

  TEST_CASE("center of mass flip equivariance") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(100 + seed);
      const Dims d{static_cast<std::size_t>(rng.uniform_int(1, 6)), static_cast<std::size_t>(rng.uniform_int(1, 6)),
                   static_cast<std::size_t>(rng.uniform_int(1, 6))};
      auto m = test::random_mask(rng, d, 0.3);
      if (count_foreground(m) == 0) m.at(0, 0, 0) = 1;
      Mask3 f(d, {});
      for (std::size_t z = 0; z < d.d; ++z)
        for (std::size_t y = 0; y < d.h; ++y)
          for (std::size_t x = 0; x < d.w; ++x) f.at(z, y, d.w - 1 - x) = m(z, y, x);
      const auto a = center_of_mass(m), b = center_of_mass(f);
      CHECK(b.x == doctest::Approx(static_cast<double>(d.w - 1) - a.x).epsilon(1e-12));
      CHECK(b.y == doctest::Approx(a.y).epsilon(1e-12));
    }
  }

  TEST_CASE("crop identity and padding") {
    Rng rng(8);
    auto v = test::random_volume(rng, {4, 5, 6});
    auto same = crop_roi(v, volume_center(v.dims()), RoiSpec{v.dims(), 0.0f});
    CHECK(std::equal(v.data().begin(), v.data().end(), same.data().begin(), same.data().end()));

    Volume3 ones({4, 4, 4}, {}, std::vector<float>(64, 1.0f));
    auto big = crop_roi(ones, volume_center(ones.dims()), RoiSpec{{6, 6, 6}, 0.0f});
    CHECK(big.size() == 216);
    double s = 0.0;
    for (float x : big.data()) s += x;
    CHECK(s == 64.0);
  }

  TEST_CASE("crop window matches index oracle") {
    Rng rng(9);
    auto v = test::random_volume(rng, {4, 4, 4}, {0.5, 0.5, 0.5});
    const VoxelCoord c{1.0, 1.0, 1.0};
    auto out = crop_roi(v, c, RoiSpec{{2, 2, 2}, -9.0f});
    CHECK(out.spacing() == v.spacing());
    for (std::size_t z = 0; z < 2; ++z)
      for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 2; ++x) CHECK(out(z, y, x) == v(z, y, x));  // the [0..2)^3 block

    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      Rng r(seed);
      auto src = test::random_volume(r, {5, 6, 7});
      auto msk = test::random_mask(r, {5, 6, 7}, 0.5);
      const VoxelCoord cc{r.uniform(-2.0, 7.0), r.uniform(-2.0, 8.0), r.uniform(-2.0, 9.0)};
      const Dims size{static_cast<std::size_t>(r.uniform_int(1, 8)), static_cast<std::size_t>(r.uniform_int(1, 8)),
                      static_cast<std::size_t>(r.uniform_int(1, 8))};
      auto cv = crop_roi(src, cc, RoiSpec{size, 0.25f});
      auto cm = crop_roi(msk, cc, RoiSpec{size, 0.0f});
      REQUIRE(cv.dims() == size);
      for (std::size_t z = 0; z < size.d; ++z)
        for (std::size_t y = 0; y < size.h; ++y)
          for (std::size_t x = 0; x < size.w; ++x) {
            CHECK(cv(z, y, x) == oracle_voxel(src, cc, size, z, y, x, 0.25f));
            CHECK(cm(z, y, x) == oracle_voxel(msk, cc, size, z, y, x, std::uint8_t{0}));
          }
    }
  }

  TEST_CASE("crop preserves foreground count when the window covers it") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      Mask3 m({10, 10, 10}, {});
      for (int i = 0; i < 12; ++i) {
        m.at(static_cast<std::size_t>(rng.uniform_int(3, 6)), static_cast<std::size_t>(rng.uniform_int(3, 6)),
             static_cast<std::size_t>(rng.uniform_int(3, 6))) = 1;
      }
      auto c = crop_roi(m, center_of_mass(m), RoiSpec{{8, 8, 8}, 0.0f});
      CHECK(count_foreground(c) == count_foreground(m));
    }
  }
}
