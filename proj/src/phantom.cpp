// SPDX-License-Identifier: Apache-2.0
#include "c2w/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "c2w/io.hpp"
#include "c2w/metrics.hpp"

namespace c2w::phantom {

namespace fs = std::filesystem;
using nlohmann::json;

void PhantomConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (dims.d == 0 || dims.h == 0 || dims.w == 0) fail("dims must be positive");
  for (double s : {spacing.z, spacing.y, spacing.x}) {
    if (!(s > 0.0)) fail("spacing must be positive");
  }
  if (!(radius_min > 0.0) || radius_max < radius_min) fail("need 0 < radius_min <= radius_max");
  if (center_jitter < 0.0) fail("center_jitter must be >= 0");
  if (!(thickness_min > 0.0) || thickness_max < thickness_min) fail("need 0 < thickness_min <= thickness_max");
  if (!(mu_background < mu_wall && mu_wall < mu_cavity)) fail("need mu_background < mu_wall < mu_cavity");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (notch_probability < 0.0 || notch_probability > 1.0) fail("notch_probability must be in [0, 1]");
  if (notch_radius < 0.0) fail("notch_radius must be >= 0");
  // The rotated ellipsoid stays inside the sphere of its largest semi-axis.
  const std::size_t ext[3] = {dims.d, dims.h, dims.w};
  double r_max = 0.0;
  for (std::size_t e : ext) r_max = std::max(r_max, radius_max * static_cast<double>(e));
  for (std::size_t e : ext) {
    const double half = (static_cast<double>(e) - 1.0) / 2.0;
    if (r_max + thickness_max + center_jitter + 1.0 > half) {
      fail("cavity + wall + jitter do not fit inside an extent of " + std::to_string(e));
    }
  }
}

json to_json(const PhantomConfig& c) {
  return {{"dims", {c.dims.d, c.dims.h, c.dims.w}},
          {"spacing_mm", {c.spacing.z, c.spacing.y, c.spacing.x}},
          {"radius_min", c.radius_min},
          {"radius_max", c.radius_max},
          {"center_jitter", c.center_jitter},
          {"thickness_min", c.thickness_min},
          {"thickness_max", c.thickness_max},
          {"mu_background", c.mu_background},
          {"mu_wall", c.mu_wall},
          {"mu_cavity", c.mu_cavity},
          {"noise_sigma", c.noise_sigma},
          {"notch_probability", c.notch_probability},
          {"notch_radius", c.notch_radius},
          {"seed", c.seed}};
}

PhantomConfig phantom_config_from_json(const json& j) {
  PhantomConfig c;
  try {
    if (j.contains("dims")) {
      const auto& d = j.at("dims");
      c.dims = {d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>(), d.at(2).get<std::size_t>()};
    }
    if (j.contains("spacing_mm")) {
      const auto& s = j.at("spacing_mm");
      c.spacing = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
    }
    c.radius_min = j.value("radius_min", c.radius_min);
    c.radius_max = j.value("radius_max", c.radius_max);
    c.center_jitter = j.value("center_jitter", c.center_jitter);
    c.thickness_min = j.value("thickness_min", c.thickness_min);
    c.thickness_max = j.value("thickness_max", c.thickness_max);
    c.mu_background = j.value("mu_background", c.mu_background);
    c.mu_wall = j.value("mu_wall", c.mu_wall);
    c.mu_cavity = j.value("mu_cavity", c.mu_cavity);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.notch_probability = j.value("notch_probability", c.notch_probability);
    c.notch_radius = j.value("notch_radius", c.notch_radius);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  c.validate();
  return c;
}

namespace {

// Uniform random rotation from a unit quaternion.
std::array<double, 9> random_rotation(Rng& rng) {
  double q[4], n = 0.0;
  do {
    n = 0.0;
    for (double& v : q) {
      v = rng.normal();
      n += v * v;
    }
  } while (n < 1e-12);
  n = std::sqrt(n);
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

}  // namespace

PhantomCase generate_case(const PhantomConfig& cfg, Rng& rng) {
  cfg.validate();
  const Dims& d = cfg.dims;
  const std::size_t ext[3] = {d.d, d.h, d.w};
  CaseMeta meta;
  for (int a = 0; a < 3; ++a) {
    meta.center[a] = (static_cast<double>(ext[a]) - 1.0) / 2.0 + rng.uniform(-cfg.center_jitter, cfg.center_jitter);
  }
  for (int a = 0; a < 3; ++a) {
    meta.radii[a] = rng.uniform(cfg.radius_min, cfg.radius_max) * static_cast<double>(ext[a]);
  }
  meta.rotation = random_rotation(rng);
  meta.thickness = rng.uniform(cfg.thickness_min, cfg.thickness_max);
  meta.notch = rng.bernoulli(cfg.notch_probability);
  {
    double n = 0.0;
    for (double& v : meta.notch_direction) {
      v = rng.normal();
      n += v * v;
    }
    n = std::sqrt(std::max(n, 1e-300));
    for (double& v : meta.notch_direction) v /= n;
  }

  Mask3 cavity(d, cfg.spacing), wall(d, cfg.spacing);
  const auto& R = meta.rotation;
  for (std::size_t z = 0; z < d.d; ++z)
    for (std::size_t y = 0; y < d.h; ++y)
      for (std::size_t x = 0; x < d.w; ++x) {
        const double p[3] = {static_cast<double>(z) - meta.center[0], static_cast<double>(y) - meta.center[1],
                             static_cast<double>(x) - meta.center[2]};
        double r = 0.0;
        for (int i = 0; i < 3; ++i) {
          // Body coordinates: R^T p.
          const double b = R[0 * 3 + i] * p[0] + R[1 * 3 + i] * p[1] + R[2 * 3 + i] * p[2];
          r += (b / meta.radii[i]) * (b / meta.radii[i]);
        }
        if (r <= 1.0) cavity.at(z, y, x) = 1;
      }
  // Guarantee a nonempty cavity even for degenerate draws.
  if (count_foreground(cavity) == 0) {
    cavity.at(static_cast<std::size_t>(std::lround(meta.center[0])), static_cast<std::size_t>(std::lround(meta.center[1])),
              static_cast<std::size_t>(std::lround(meta.center[2]))) = 1;
  }

  // Shell: voxels within `thickness` (voxel units) of the cavity.
  const std::vector<std::uint8_t> seeds(cavity.data().begin(), cavity.data().end());
  const auto d2 = metrics::squared_distance_transform(seeds, d, Spacing{1.0, 1.0, 1.0});
  const double t2 = meta.thickness * meta.thickness;
  for (std::size_t i = 0; i < d.count(); ++i) {
    if (!seeds[i] && d2[i] <= t2) wall.mutable_data()[i] = 1;
  }

  // Notch: a ray from the centre, cut out of the shell.
  if (meta.notch) {
    const auto& u = meta.notch_direction;
    for (std::size_t z = 0; z < d.d; ++z)
      for (std::size_t y = 0; y < d.h; ++y)
        for (std::size_t x = 0; x < d.w; ++x) {
          if (!wall(z, y, x)) continue;
          const double p[3] = {static_cast<double>(z) - meta.center[0], static_cast<double>(y) - meta.center[1],
                               static_cast<double>(x) - meta.center[2]};
          const double along = p[0] * u[0] + p[1] * u[1] + p[2] * u[2];
          if (along <= 0.0) continue;
          const double perp2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - along * along;
          if (perp2 <= cfg.notch_radius * cfg.notch_radius) wall.at(z, y, x) = 0;
        }
  }

  std::vector<float> img(d.count());
  for (std::size_t i = 0; i < d.count(); ++i) {
    const double mu =
        cavity.data()[i] ? cfg.mu_cavity : (wall.data()[i] ? cfg.mu_wall : cfg.mu_background);
    const double noise = cfg.noise_sigma > 0.0 ? cfg.noise_sigma * rng.normal() : 0.0;
    img[i] = static_cast<float>(mu + noise);
  }
  return {Volume3(d, cfg.spacing, std::move(img)), std::move(cavity), std::move(wall), meta};
}

json to_json(const CaseMeta& m) {
  return {{"center_voxel", m.center},  {"radii_voxel", m.radii}, {"rotation", m.rotation},
          {"thickness_voxel", m.thickness}, {"notch", m.notch},      {"notch_direction", m.notch_direction}};
}

DatasetManifest generate_dataset(const PhantomConfig& cfg, const SplitCounts& counts, const fs::path& root) {
  cfg.validate();
  if (counts.train == 0 || counts.val == 0 || counts.test == 0) {
    throw Error(ErrorCode::InvalidConfig, "every split needs at least one case");
  }
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + root.string() + ": " + ec.message());

  DatasetManifest man;
  const std::size_t total = counts.train + counts.val + counts.test;
  for (std::size_t i = 0; i < total; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "case_%04zu", i);
    auto& split = i < counts.train ? man.train : (i < counts.train + counts.val ? man.val : man.test);
    split.push_back(id);
    Rng rng(derive_seed(cfg.seed, i));
    const auto c = generate_case(cfg, rng);
    const fs::path dir = root / id;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
    save_volume(c.image, dir / "image");
    save_mask(c.cavity, dir / "cavity");
    save_mask(c.wall, dir / "wall");
    io::write_json(dir / "meta.json", to_json(c.meta));
  }
  io::write_json(root / "manifest.json", {{"format", "c2w-phantoms"},
                                          {"config", to_json(cfg)},
                                          {"splits", {{"train", man.train}, {"val", man.val}, {"test", man.test}}}});
  return man;
}

DatasetManifest read_manifest(const fs::path& root) {
  const auto j = io::read_json(root / "manifest.json");
  DatasetManifest man;
  try {
    const auto& s = j.at("splits");
    man.train = s.at("train").get<std::vector<std::string>>();
    man.val = s.at("val").get<std::vector<std::string>>();
    man.test = s.at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, (root / "manifest.json").string() + ": " + e.what());
  }
  return man;
}

}  // namespace c2w::phantom
