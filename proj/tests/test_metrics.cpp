// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "c2w/metrics.hpp"
#include "helpers.hpp"

using namespace c2w;
using namespace c2w::metrics;

namespace {

Mask3 mask_with(Dims d, Spacing s, std::initializer_list<std::array<std::size_t, 3>> on) {
  Mask3 m(d, s);
  for (const auto& v : on) m.at(v[0], v[1], v[2]) = 1;
  return m;
}

// Hyndman-Fan type 7 written from its 1-based definition.
double type7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p + 1.0;
  const double fl = std::floor(h);
  const auto i = static_cast<std::size_t>(fl);
  if (i >= v.size()) return v.back();
  return v[i - 1] + (h - fl) * (v[i] - v[i - 1]);
}

// Random blobby mask: a few random boxes, never empty.
Mask3 random_blobs(Rng& rng, Dims d, Spacing s) {
  Mask3 m(d, s);
  const int boxes = static_cast<int>(rng.uniform_int(1, 3));
  for (int b = 0; b < boxes; ++b) {
    std::array<std::size_t, 3> lo, hi;
    const std::size_t ext[3] = {d.d, d.h, d.w};
    for (int a = 0; a < 3; ++a) {
      lo[a] = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(ext[a]) - 1));
      hi[a] = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo[a]),
                                                       static_cast<std::int64_t>(ext[a]) - 1));
    }
    for (std::size_t z = lo[0]; z <= hi[0]; ++z)
      for (std::size_t y = lo[1]; y <= hi[1]; ++y)
        for (std::size_t x = lo[2]; x <= hi[2]; ++x) m.at(z, y, x) = 1;
  }
  // Sprinkle isolated voxels too.
  for (auto& v : m.mutable_data()) {
    if (rng.bernoulli(0.03)) v = 1;
  }
  return m;
}

Dims random_dims(Rng& rng) {
  return {static_cast<std::size_t>(rng.uniform_int(1, 12)), static_cast<std::size_t>(rng.uniform_int(1, 12)),
          static_cast<std::size_t>(rng.uniform_int(1, 12))};
}

Spacing random_spacing(Rng& rng) { return {rng.uniform(0.3, 3.0), rng.uniform(0.3, 3.0), rng.uniform(0.3, 3.0)}; }

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("dice examples") {
    Dims d{2, 4, 4};
    Rng rng(1);
    auto a = test::random_mask(rng, d, 0.4);
    if (count_foreground(a) == 0) a.at(0, 0, 0) = 1;
    CHECK(dice(a, a) == 1.0);
    Mask3 left(d, {}), right(d, {});
    for (std::size_t z = 0; z < 2; ++z)
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) (x < 2 ? left : right).at(z, y, x) = 1;
    CHECK(dice(left, right) == 0.0);
    // |A| = 8, |B| = 8, overlap 4.
    Mask3 p(d, {}), q(d, {});
    for (std::size_t i = 0; i < 8; ++i) p.mutable_data()[i] = 1;
    for (std::size_t i = 4; i < 12; ++i) q.mutable_data()[i] = 1;
    CHECK(dice(p, q) == 0.5);
    CHECK(dice(Mask3(d, {}), Mask3(d, {})) == 1.0);
    CHECK(dice(Mask3(d, {}), p) == 0.0);
    CHECK_THROWS_WITH_AS(dice(p, Mask3({2, 4, 5}, {})), doctest::Contains("GeometryMismatch"), Error);
    CHECK_THROWS_WITH_AS(dice(p, Mask3(d, {1.0, 1.0, 2.0})), doctest::Contains("GeometryMismatch"), Error);
  }

  TEST_CASE("surface extraction") {
    CHECK(extract_surface(mask_with({3, 3, 3}, {}, {{1, 1, 1}})).size() == 1);
    Mask3 cube({5, 5, 5}, {});
    for (std::size_t z = 1; z < 4; ++z)
      for (std::size_t y = 1; y < 4; ++y)
        for (std::size_t x = 1; x < 4; ++x) cube.at(z, y, x) = 1;
    const auto s = extract_surface(cube);
    CHECK(s.size() == 26);
    for (const auto& v : s.voxels) CHECK_FALSE((v[0] == 2 && v[1] == 2 && v[2] == 2));

    Mask3 full({5, 4, 3}, {0.5, 1.0, 2.0});
    for (auto& v : full.mutable_data()) v = 1;
    const auto fs = extract_surface(full);
    CHECK(fs.size() == 5 * 4 * 3 - 3 * 2 * 1);
    for (std::size_t i = 0; i < fs.size(); ++i) {
      CHECK(fs.points[i][0] == fs.voxels[i][0] * 0.5);
      CHECK(fs.points[i][2] == fs.voxels[i][2] * 2.0);
    }
    CHECK_THROWS_WITH_AS(extract_surface(Mask3({2, 2, 2}, {})), doctest::Contains("EmptyMask"), Error);
  }

  TEST_CASE("pairwise distance examples") {
    const Spacing sp{0.625, 0.625, 0.625};
    auto a = mask_with({1, 1, 4}, sp, {{0, 0, 1}});
    auto b = mask_with({1, 1, 4}, sp, {{0, 0, 2}});
    for (auto method : {DistanceMethod::Edt, DistanceMethod::Brute}) {
      const auto d = surface_distances(extract_surface(a), extract_surface(b), method);
      CHECK(d.a_to_b == std::vector<double>{0.625});
      CHECK(d.b_to_a == std::vector<double>{0.625});
      const auto same = surface_distances(extract_surface(a), extract_surface(a), method);
      CHECK(same.a_to_b == std::vector<double>{0.0});
    }
    const Spacing an{1.0, 0.5, 0.5};
    auto c = mask_with({3, 2, 2}, an, {{0, 1, 1}});
    auto e = mask_with({3, 2, 2}, an, {{1, 1, 1}});
    for (auto method : {DistanceMethod::Edt, DistanceMethod::Brute}) {
      CHECK(surface_distances(extract_surface(c), extract_surface(e), method).a_to_b == std::vector<double>{1.0});
    }
  }

  TEST_CASE("single voxel pair metrics") {
    const Spacing sp{0.625, 0.625, 0.625};
    auto a = mask_with({1, 1, 4}, sp, {{0, 0, 1}});
    auto b = mask_with({1, 1, 4}, sp, {{0, 0, 2}});
    CHECK(hd95(a, b) == 0.625);
    CHECK(assd(a, b) == 0.625);
    CHECK(surface_dice(a, b, 1.0) == 1.0);
    CHECK(surface_dice(a, b, 1.0, SurfaceDiceMode::OneSided) == 1.0);
    CHECK(surface_dice(a, b, 0.5) == 0.0);
    CHECK(surface_dice(a, b, 0.5, SurfaceDiceMode::OneSided) == 0.0);
    const auto r = evaluate(a, b, 1.0);
    CHECK(r.dice == 0.0);
    CHECK(*r.surface_dice == 1.0);
    CHECK(*r.hd95 == 0.625);
    CHECK(*r.assd == 0.625);
    CHECK_FALSE(r.error.has_value());
    CHECK_THROWS_WITH_AS(surface_dice(a, b, 0.0), doctest::Contains("NonPositiveTolerance"), Error);
    CHECK_THROWS_WITH_AS(surface_dice(a, b, -1.0), doctest::Contains("NonPositiveTolerance"), Error);
  }

  TEST_CASE("identical masks are perfect") {
    Rng rng(2);
    auto m = random_blobs(rng, {7, 8, 9}, {1.0, 0.7, 0.7});
    CHECK(hd95(m, m) == 0.0);
    CHECK(assd(m, m) == 0.0);
    CHECK(surface_dice(m, m, 0.1) == 1.0);
    const auto r = evaluate(m, m);
    CHECK(r.dice == 1.0);
    CHECK(*r.surface_dice == 1.0);
    CHECK(*r.hd95 == 0.0);
    CHECK(*r.assd == 0.0);
  }

  TEST_CASE("asymmetric assd by hand") {
    // A = {x=1}; B = {x=0, 2, 3} on one row. A->B: 1. B->A: 1, 1, 2.
    auto a = mask_with({3, 3, 5}, {}, {{1, 1, 1}});
    auto b = mask_with({3, 3, 5}, {}, {{1, 1, 0}, {1, 1, 2}, {1, 1, 3}});
    const auto d = surface_distances(extract_surface(a), extract_surface(b), DistanceMethod::Brute);
    CHECK(d.a_to_b == std::vector<double>{1.0});
    CHECK(d.b_to_a == std::vector<double>{1.0, 1.0, 2.0});
    CHECK(assd(a, b) == 1.25);
    CHECK(assd(b, a) == 1.25);
  }

  TEST_CASE("percentile follows linear interpolation between order statistics") {
    std::vector<double> v(20, 0.0);
    v.push_back(5.0);
    CHECK(percentile(v, 95.0) == doctest::Approx(type7(v, 0.95)).epsilon(1e-15));
    CHECK(percentile(v, 100.0) == 5.0);
    CHECK(percentile(v, 0.0) == 0.0);
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> w(static_cast<std::size_t>(rng.uniform_int(1, 40)));
      for (auto& x : w) x = rng.uniform(0.0, 10.0);
      const double q = rng.uniform(0.0, 100.0);
      CHECK(percentile(w, q) == doctest::Approx(type7(w, q / 100.0)).epsilon(1e-12));
    }
    CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 50.0) == 2.5);

    // 20 coincident surface points plus one 5 voxels away: B has an extra
    // voxel at distance 5 from A's row end.
    Mask3 a({1, 3, 30}, {}), b({1, 3, 30}, {});
    for (std::size_t x = 0; x < 20; ++x) {
      a.at(0, 1, x) = 1;
      b.at(0, 1, x) = 1;
    }
    b.at(0, 1, 24) = 1;
    const auto d = surface_distances(extract_surface(a), extract_surface(b));
    CHECK(d.b_to_a.size() == 21);
    CHECK(hd95(a, b) == doctest::Approx(type7(d.b_to_a, 0.95)).epsilon(1e-15));
  }

  TEST_CASE("distance transform matches brute force over the full grid") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng rng(100 + seed);
      const Dims d = random_dims(rng);
      const Spacing s = random_spacing(rng);
      std::vector<std::uint8_t> seeds(d.count());
      for (auto& v : seeds) v = rng.bernoulli(0.05);
      seeds[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(d.count()) - 1))] = 1;
      const auto g = squared_distance_transform(seeds, d, s);
      double worst = 0.0;
      for (std::size_t z = 0; z < d.d; ++z)
        for (std::size_t y = 0; y < d.h; ++y)
          for (std::size_t x = 0; x < d.w; ++x) {
            double best = 1e300;
            for (std::size_t i = 0; i < d.count(); ++i) {
              if (!seeds[i]) continue;
              const std::size_t sz = i / (d.h * d.w), sy = (i / d.w) % d.h, sx = i % d.w;
              const double dz = (double(z) - double(sz)) * s.z, dy = (double(y) - double(sy)) * s.y,
                           dx = (double(x) - double(sx)) * s.x;
              best = std::min(best, dz * dz + dy * dy + dx * dx);
            }
            worst = std::max(worst, std::abs(std::sqrt(g[d.index(z, y, x)]) - std::sqrt(best)));
          }
      CHECK(worst < 1e-9);
    }
    std::vector<std::uint8_t> none(8, 0);
    for (double v : squared_distance_transform(none, {2, 2, 2}, {})) CHECK(std::isinf(v));
  }

  TEST_CASE("edt and brute agree on 200 random pairs") {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      Rng rng(seed);
      const Dims d = random_dims(rng);
      const Spacing s = random_spacing(rng);
      const auto a = extract_surface(random_blobs(rng, d, s));
      const auto b = extract_surface(random_blobs(rng, d, s));
      const auto fast = surface_distances(a, b, DistanceMethod::Edt);
      const auto slow = surface_distances(a, b, DistanceMethod::Brute);
      REQUIRE(fast.a_to_b.size() == slow.a_to_b.size());
      REQUIRE(fast.b_to_a.size() == slow.b_to_a.size());
      for (std::size_t i = 0; i < fast.a_to_b.size(); ++i)
        worst = std::max(worst, std::abs(fast.a_to_b[i] - slow.a_to_b[i]));
      for (std::size_t i = 0; i < fast.b_to_a.size(); ++i)
        worst = std::max(worst, std::abs(fast.b_to_a[i] - slow.b_to_a[i]));
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("metric properties") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      Rng rng(500 + seed);
      const Dims d = random_dims(rng);
      const Spacing s = random_spacing(rng);
      const auto a = random_blobs(rng, d, s);
      const auto b = random_blobs(rng, d, s);
      // Symmetry.
      CHECK(dice(a, b) == dice(b, a));
      CHECK(hd95(a, b) == hd95(b, a));
      CHECK(assd(a, b) == doctest::Approx(assd(b, a)).epsilon(1e-14));
      CHECK(surface_dice(a, b, 1.0) == surface_dice(b, a, 1.0));
      // Monotone in tolerance.
      double prev = 0.0;
      for (double tau : {0.1, 0.5, 1.0, 2.0, 4.0, 100.0}) {
        const double sd = surface_dice(a, b, tau);
        CHECK(sd >= prev);
        CHECK(sd <= 1.0);
        prev = sd;
      }
      CHECK(prev == 1.0);
      CHECK(hd95(a, b) <= hausdorff(a, b));
      // Scale covariance; powers of two scale exactly.
      for (double k : {2.0, 0.5, 1.7}) {
        const Spacing ks{s.z * k, s.y * k, s.x * k};
        const Mask3 ak(d, ks, {a.data().begin(), a.data().end()});
        const Mask3 bk(d, ks, {b.data().begin(), b.data().end()});
        const double tol = k == 1.7 ? 1e-12 : 0.0;
        CHECK(std::abs(hd95(ak, bk) - k * hd95(a, b)) <= tol * k * hd95(a, b));
        CHECK(std::abs(assd(ak, bk) - k * assd(a, b)) <= tol * k * assd(a, b) + tol);
        CHECK(dice(ak, bk) == dice(a, b));
        if (k != 1.7) CHECK(surface_dice(ak, bk, 1.0 * k) == surface_dice(a, b, 1.0));
      }
    }
  }

  TEST_CASE("empty operands") {
    Rng rng(4);
    auto a = random_blobs(rng, {6, 6, 6}, {});
    Mask3 empty({6, 6, 6}, {});
    CHECK_THROWS_WITH_AS(hd95(a, empty), doctest::Contains("EmptyMask"), Error);
    CHECK_THROWS_WITH_AS(assd(empty, a), doctest::Contains("EmptyMask"), Error);
    CHECK_THROWS_WITH_AS(surface_dice(empty, a, 1.0), doctest::Contains("EmptyMask"), Error);
    const auto r = evaluate(empty, a);
    CHECK(r.dice == 0.0);
    REQUIRE(r.error.has_value());
    CHECK(*r.error == ErrorCode::EmptyMask);
    CHECK_FALSE(r.hd95.has_value());
    const auto j = to_json(r);
    CHECK(j["error"] == "EmptyMask");
    CHECK(j["hd95_mm"].is_null());
    CHECK_THROWS_WITH_AS(evaluate(a, Mask3({6, 6, 5}, {})), doctest::Contains("GeometryMismatch"), Error);
  }

  TEST_CASE("summary statistics") {
    MetricsReport r;
    r.dice = 0.8;
    r.surface_dice = 0.7;
    r.hd95 = 2.0;
    r.assd = 0.5;
    auto one = summarize({r});
    CHECK(one.dice.mean == 0.8);
    CHECK(one.dice.sd == 0.0);
    CHECK(one.hd95.sd == 0.0);
    MetricsReport e;
    e.dice = 0.4;
    e.error = ErrorCode::EmptyMask;
    auto two = summarize({r, e});
    CHECK(two.dice.mean == doctest::Approx(0.6));
    CHECK(two.dice.sd == doctest::Approx(0.2));
    CHECK(two.hd95.n == 1);
    CHECK(two.errors == 1);
  }
}
