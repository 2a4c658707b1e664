// SPDX-License-Identifier: Apache-2.0
#include "c2w/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace c2w::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_geometry(const Mask3& a, const Mask3& b) {
  if (!a.same_geometry(b)) throw Error(ErrorCode::GeometryMismatch, "masks differ in dims or spacing");
}

// Lower envelope of parabolas over one line: f holds squared distances on
// input, d receives min_q f(q) + ((p - q) * step)^2.
void envelope_1d(const double* f, double* d, std::size_t n, double step, std::vector<std::size_t>& v,
                 std::vector<double>& z) {
  v.resize(n);
  z.resize(n + 1);
  std::size_t k = 0;
  bool any = false;
  auto key = [&](std::size_t q) {
    const double x = static_cast<double>(q) * step;
    return f[q] + x * x;
  };
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (!any) {
      any = true;
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = (key(q) - key(v[k])) / (2.0 * step * static_cast<double>(q - v[k]));
    while (s <= z[k]) {  // z[0] is -inf, so k never underflows
      --k;
      s = (key(q) - key(v[k])) / (2.0 * step * static_cast<double>(q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (!any) {
    std::fill(d, d + n, kInf);
    return;
  }
  k = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const double x = static_cast<double>(p) * step;
    while (z[k + 1] < x) ++k;
    const double dx = (static_cast<double>(p) - static_cast<double>(v[k])) * step;
    d[p] = f[v[k]] + dx * dx;
  }
}

std::vector<double> brute_directed(const SurfacePointSet& from, const SurfacePointSet& to) {
  std::vector<double> out(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    const auto& p = from.points[i];
    double best = kInf;
    for (const auto& q : to.points) {
      const double dz = p[0] - q[0], dy = p[1] - q[1], dx = p[2] - q[2];
      best = std::min(best, dz * dz + dy * dy + dx * dx);
    }
    out[i] = std::sqrt(best);
  }
  return out;
}

std::vector<double> edt_directed(const SurfacePointSet& from, const SurfacePointSet& to) {
  std::vector<std::uint8_t> seeds(to.dims.count(), 0);
  for (const auto& v : to.voxels) seeds[to.dims.index(v[0], v[1], v[2])] = 1;
  const auto d2 = squared_distance_transform(seeds, to.dims, to.spacing);
  std::vector<double> out(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    const auto& v = from.voxels[i];
    out[i] = std::sqrt(d2[from.dims.index(v[0], v[1], v[2])]);
  }
  return out;
}

DirectedDistances mask_distances(const Mask3& a, const Mask3& b) {
  require_same_geometry(a, b);
  return surface_distances(extract_surface(a), extract_surface(b), DistanceMethod::Edt);
}

}  // namespace

double dice(const Mask3& a, const Mask3& b) {
  require_same_geometry(a, b);
  std::size_t na = 0, nb = 0, both = 0;
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    na += da[i];
    nb += db[i];
    both += da[i] & db[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

SurfacePointSet extract_surface(const Mask3& m) {
  const Dims& d = m.dims();
  const Spacing& s = m.spacing();
  SurfacePointSet out;
  out.dims = d;
  out.spacing = s;
  auto bg = [&](std::ptrdiff_t z, std::ptrdiff_t y, std::ptrdiff_t x) {
    if (z < 0 || y < 0 || x < 0 || z >= static_cast<std::ptrdiff_t>(d.d) || y >= static_cast<std::ptrdiff_t>(d.h) ||
        x >= static_cast<std::ptrdiff_t>(d.w))
      return true;
    return m(static_cast<std::size_t>(z), static_cast<std::size_t>(y), static_cast<std::size_t>(x)) == 0;
  };
  for (std::size_t z = 0; z < d.d; ++z)
    for (std::size_t y = 0; y < d.h; ++y)
      for (std::size_t x = 0; x < d.w; ++x) {
        if (!m(z, y, x)) continue;
        const auto iz = static_cast<std::ptrdiff_t>(z), iy = static_cast<std::ptrdiff_t>(y),
                   ix = static_cast<std::ptrdiff_t>(x);
        if (bg(iz - 1, iy, ix) || bg(iz + 1, iy, ix) || bg(iz, iy - 1, ix) || bg(iz, iy + 1, ix) ||
            bg(iz, iy, ix - 1) || bg(iz, iy, ix + 1)) {
          out.voxels.push_back({z, y, x});
          out.points.push_back({static_cast<double>(z) * s.z, static_cast<double>(y) * s.y,
                                static_cast<double>(x) * s.x});
        }
      }
  if (out.voxels.empty()) throw Error(ErrorCode::EmptyMask, "mask has no foreground voxels");
  return out;
}

std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& seeds, const Dims& dims,
                                               const Spacing& spacing) {
  const std::size_t D = dims.d, H = dims.h, W = dims.w;
  std::vector<double> g(dims.count());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = seeds[i] ? 0.0 : kInf;
  const std::size_t longest = std::max({D, H, W});
  std::vector<double> f(longest), out(longest);
  std::vector<std::size_t> v;
  std::vector<double> z;
  // x lines are contiguous.
  for (std::size_t zz = 0; zz < D; ++zz)
    for (std::size_t y = 0; y < H; ++y) {
      double* line = &g[dims.index(zz, y, 0)];
      std::copy(line, line + W, f.begin());
      envelope_1d(f.data(), line, W, spacing.x, v, z);
    }
  for (std::size_t zz = 0; zz < D; ++zz)
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t y = 0; y < H; ++y) f[y] = g[dims.index(zz, y, x)];
      envelope_1d(f.data(), out.data(), H, spacing.y, v, z);
      for (std::size_t y = 0; y < H; ++y) g[dims.index(zz, y, x)] = out[y];
    }
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t zz = 0; zz < D; ++zz) f[zz] = g[dims.index(zz, y, x)];
      envelope_1d(f.data(), out.data(), D, spacing.z, v, z);
      for (std::size_t zz = 0; zz < D; ++zz) g[dims.index(zz, y, x)] = out[zz];
    }
  return g;
}

DirectedDistances surface_distances(const SurfacePointSet& a, const SurfacePointSet& b, DistanceMethod method) {
  if (a.size() == 0 || b.size() == 0) throw Error(ErrorCode::EmptyMask, "surface point set is empty");
  if (method == DistanceMethod::Brute) return {brute_directed(a, b), brute_directed(b, a)};
  if (!(a.dims == b.dims) || !(a.spacing == b.spacing)) {
    throw Error(ErrorCode::GeometryMismatch, "surfaces come from different grids");
  }
  return {edt_directed(a, b), edt_directed(b, a)};
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::EmptyMask, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

double hd95(const Mask3& a, const Mask3& b) {
  const auto d = mask_distances(a, b);
  return std::max(percentile(d.a_to_b, 95.0), percentile(d.b_to_a, 95.0));
}

double hausdorff(const Mask3& a, const Mask3& b) {
  const auto d = mask_distances(a, b);
  return std::max(*std::max_element(d.a_to_b.begin(), d.a_to_b.end()),
                  *std::max_element(d.b_to_a.begin(), d.b_to_a.end()));
}

double assd(const Mask3& a, const Mask3& b) {
  const auto d = mask_distances(a, b);
  const double s = std::accumulate(d.a_to_b.begin(), d.a_to_b.end(), 0.0) +
                   std::accumulate(d.b_to_a.begin(), d.b_to_a.end(), 0.0);
  return s / static_cast<double>(d.a_to_b.size() + d.b_to_a.size());
}

double surface_dice(const Mask3& a, const Mask3& b, double tol_mm, SurfaceDiceMode mode) {
  if (!(tol_mm > 0.0)) throw Error(ErrorCode::NonPositiveTolerance, "tolerance must be positive");
  const auto d = mask_distances(a, b);
  auto within = [&](const std::vector<double>& v) {
    return static_cast<double>(std::count_if(v.begin(), v.end(), [&](double x) { return x <= tol_mm; }));
  };
  if (mode == SurfaceDiceMode::OneSided) return within(d.a_to_b) / static_cast<double>(d.a_to_b.size());
  return (within(d.a_to_b) + within(d.b_to_a)) / static_cast<double>(d.a_to_b.size() + d.b_to_a.size());
}

MetricsReport evaluate(const Mask3& pred, const Mask3& ref, double tol_mm, SurfaceDiceMode mode) {
  require_same_geometry(pred, ref);
  if (!(tol_mm > 0.0)) throw Error(ErrorCode::NonPositiveTolerance, "tolerance must be positive");
  MetricsReport r;
  r.tolerance_mm = tol_mm;
  r.dice = dice(pred, ref);
  if (count_foreground(pred) == 0 || count_foreground(ref) == 0) {
    r.error = ErrorCode::EmptyMask;
    return r;
  }
  const auto d = mask_distances(pred, ref);
  r.hd95 = std::max(percentile(d.a_to_b, 95.0), percentile(d.b_to_a, 95.0));
  const double total = static_cast<double>(d.a_to_b.size() + d.b_to_a.size());
  r.assd = (std::accumulate(d.a_to_b.begin(), d.a_to_b.end(), 0.0) +
            std::accumulate(d.b_to_a.begin(), d.b_to_a.end(), 0.0)) /
           total;
  auto within = [&](const std::vector<double>& v) {
    return static_cast<double>(std::count_if(v.begin(), v.end(), [&](double x) { return x <= tol_mm; }));
  };
  r.surface_dice = mode == SurfaceDiceMode::OneSided
                       ? within(d.a_to_b) / static_cast<double>(d.a_to_b.size())
                       : (within(d.a_to_b) + within(d.b_to_a)) / total;
  return r;
}

MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd out;
  out.n = v.size();
  if (v.empty()) return out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.sd = std::sqrt(ss / static_cast<double>(v.size()));
  return out;
}

Summary summarize(const std::vector<MetricsReport>& reports) {
  std::vector<double> d, sd, h, a;
  Summary s;
  s.cases = reports.size();
  for (const auto& r : reports) {
    d.push_back(r.dice);
    if (r.error) ++s.errors;
    if (r.surface_dice) sd.push_back(*r.surface_dice);
    if (r.hd95) h.push_back(*r.hd95);
    if (r.assd) a.push_back(*r.assd);
  }
  s.dice = mean_sd(d);
  s.surface_dice = mean_sd(sd);
  s.hd95 = mean_sd(h);
  s.assd = mean_sd(a);
  return s;
}

nlohmann::json to_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"dice", r.dice},
          {"surface_dice", opt(r.surface_dice)},
          {"tol_mm", r.tolerance_mm},
          {"hd95_mm", opt(r.hd95)},
          {"assd_mm", opt(r.assd)},
          {"error", r.error ? nlohmann::json(std::string(to_string(*r.error))) : nlohmann::json(nullptr)}};
}

nlohmann::json to_json(const Summary& s) {
  auto ms = [](const MeanSd& m) { return nlohmann::json{{"mean", m.mean}, {"sd", m.sd}, {"n", m.n}}; };
  return {{"cases", s.cases},
          {"errors", s.errors},
          {"dice", ms(s.dice)},
          {"surface_dice", ms(s.surface_dice)},
          {"hd95_mm", ms(s.hd95)},
          {"assd_mm", ms(s.assd)}};
}

}  // namespace c2w::metrics
