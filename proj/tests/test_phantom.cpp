// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>

#include "c2w/io.hpp"
#include "c2w/metrics.hpp"
#include "c2w/phantom.hpp"
#include "helpers.hpp"

using namespace c2w;
using namespace c2w::phantom;
namespace fs = std::filesystem;

namespace {

bool cavity_touches_background(const PhantomCase& c) {
  const Dims& d = c.cavity.dims();
  for (std::size_t z = 1; z + 1 < d.d; ++z)
    for (std::size_t y = 1; y + 1 < d.h; ++y)
      for (std::size_t x = 1; x + 1 < d.w; ++x) {
        if (!c.cavity(z, y, x)) continue;
        const std::size_t nb[6][3] = {{z - 1, y, x}, {z + 1, y, x}, {z, y - 1, x},
                                      {z, y + 1, x}, {z, y, x - 1}, {z, y, x + 1}};
        for (const auto& n : nb) {
          if (!c.cavity(n[0], n[1], n[2]) && !c.wall(n[0], n[1], n[2])) return true;
        }
      }
  return false;
}

std::vector<char> tree_bytes(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<char> out;
  for (const auto& f : files) {
    const auto rel = fs::relative(f, root).string();
    out.insert(out.end(), rel.begin(), rel.end());
    const auto b = io::read_file(f);
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

}  // namespace

TEST_SUITE("phantom") {
  TEST_CASE("noiseless case without notch is piecewise constant") {
    PhantomConfig cfg;
    cfg.noise_sigma = 0.0;
    cfg.notch_probability = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      const auto c = generate_case(cfg, rng);
      std::set<float> values(c.image.data().begin(), c.image.data().end());
      CHECK(values.size() == 3);
      for (std::size_t i = 0; i < c.image.size(); ++i) {
        const float expect = c.cavity.data()[i] ? 1.0f : (c.wall.data()[i] ? 0.35f : 0.0f);
        CHECK(c.image.data()[i] == expect);
      }
      CHECK_FALSE(cavity_touches_background(c));
    }
  }

  TEST_CASE("wall is a disjoint shell within thickness of the cavity") {
    PhantomConfig cfg;
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
      Rng rng(100 + seed);
      const auto c = generate_case(cfg, rng);
      const Dims& d = c.cavity.dims();
      std::vector<std::array<double, 3>> cav;
      for (std::size_t z = 0; z < d.d; ++z)
        for (std::size_t y = 0; y < d.h; ++y)
          for (std::size_t x = 0; x < d.w; ++x)
            if (c.cavity(z, y, x)) cav.push_back({double(z), double(y), double(x)});
      REQUIRE_FALSE(cav.empty());
      std::size_t wall_voxels = 0;
      bool all_close = true;
      for (std::size_t z = 0; z < d.d; ++z)
        for (std::size_t y = 0; y < d.h; ++y)
          for (std::size_t x = 0; x < d.w; ++x) {
            if (!c.wall(z, y, x)) continue;
            ++wall_voxels;
            CHECK_FALSE(c.cavity(z, y, x));
            double best = 1e300;
            for (const auto& p : cav) {
              const double dz = p[0] - z, dy = p[1] - y, dx = p[2] - x;
              best = std::min(best, dz * dz + dy * dy + dx * dx);
            }
            all_close = all_close && std::sqrt(best) <= c.meta.thickness + 1e-12;
          }
      CHECK(all_close);
      CHECK(wall_voxels > 0);
      CHECK(metrics::dice(c.wall, c.cavity) < 0.2);
      // Class imbalance: the wall is a small fraction of the volume.
      CHECK(static_cast<double>(wall_voxels) < 0.1 * static_cast<double>(d.count()));
      if (!c.meta.notch) CHECK_FALSE(cavity_touches_background(c));
      // Nothing touches the volume border.
      for (std::size_t z = 0; z < d.d; ++z)
        for (std::size_t y = 0; y < d.h; ++y) {
          CHECK_FALSE(c.wall(z, y, 0));
          CHECK_FALSE(c.wall(z, y, d.w - 1));
        }
    }
  }

  TEST_CASE("notches open the shell") {
    PhantomConfig cfg;
    cfg.notch_probability = 1.0;
    cfg.notch_radius = 2.0;
    int open = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(200 + seed);
      const auto c = generate_case(cfg, rng);
      CHECK(c.meta.notch);
      open += cavity_touches_background(c);
    }
    CHECK(open == 10);
  }

  TEST_CASE("same seed, same case") {
    PhantomConfig cfg;
    Rng a(7), b(7), c(8);
    const auto x = generate_case(cfg, a);
    const auto y = generate_case(cfg, b);
    const auto z = generate_case(cfg, c);
    CHECK(std::equal(x.image.data().begin(), x.image.data().end(), y.image.data().begin()));
    CHECK(std::equal(x.wall.data().begin(), x.wall.data().end(), y.wall.data().begin()));
    CHECK_FALSE(std::equal(x.image.data().begin(), x.image.data().end(), z.image.data().begin()));
  }

  TEST_CASE("config validation") {
    auto bad = [](auto edit) {
      PhantomConfig cfg;
      edit(cfg);
      CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("InvalidConfig"), Error);
    };
    bad([](PhantomConfig& c) { c.mu_wall = 1.5; });
    bad([](PhantomConfig& c) { c.noise_sigma = -0.1; });
    bad([](PhantomConfig& c) { c.radius_max = 0.45; });
    bad([](PhantomConfig& c) { c.thickness_min = 0.0; });
    bad([](PhantomConfig& c) { c.center_jitter = 10.0; });
    PhantomConfig ok;
    CHECK(phantom_config_from_json(to_json(ok)).dims == ok.dims);
  }

  TEST_CASE("dataset layout, manifest and regeneration") {
    test::TempDir dir;
    PhantomConfig cfg;
    cfg.seed = 9;
    const auto man = generate_dataset(cfg, {60, 20, 20}, dir / "a");
    CHECK(man.train.size() == 60);
    CHECK(man.val.size() == 20);
    CHECK(man.test.size() == 20);
    std::set<std::string> ids(man.train.begin(), man.train.end());
    ids.insert(man.val.begin(), man.val.end());
    ids.insert(man.test.begin(), man.test.end());
    CHECK(ids.size() == 100);
    std::size_t dirs = 0;
    for (const auto& e : fs::directory_iterator(dir / "a")) dirs += e.is_directory();
    CHECK(dirs == 100);
    for (const auto& id : man.val) {
      for (const char* f : {"image.json", "image.raw", "cavity.json", "cavity.raw", "wall.json", "wall.raw",
                            "meta.json"}) {
        CHECK(fs::exists(dir / "a" / id / f));
      }
    }
    const auto back = read_manifest(dir / "a");
    CHECK(back.test == man.test);
    const auto wall = load_mask(dir / "a" / man.test[0] / "wall");
    CHECK(wall.dims() == cfg.dims);

    generate_dataset(cfg, {60, 20, 20}, dir / "b");
    CHECK(tree_bytes(dir / "a") == tree_bytes(dir / "b"));

    CHECK_THROWS_WITH_AS(generate_dataset(cfg, {0, 1, 1}, dir / "c"), doctest::Contains("InvalidConfig"), Error);
  }
}
