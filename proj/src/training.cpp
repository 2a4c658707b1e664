// SPDX-License-Identifier: Apache-2.0
#include "c2w/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <tuple>

#include "c2w/metrics.hpp"
#include "c2w/ops.hpp"

namespace c2w::train {

namespace fs = std::filesystem;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Loss

void LossConfig::validate() const {
  if (!(focal_gamma >= 0.0)) throw Error(ErrorCode::InvalidConfig, "focal_gamma must be >= 0");
  if (!(focal_alpha >= 0.0 && focal_alpha <= 1.0)) throw Error(ErrorCode::InvalidConfig, "focal_alpha must be in [0, 1]");
  if (!(dice_eps > 0.0)) throw Error(ErrorCode::InvalidConfig, "dice_eps must be positive");
  if (!(prob_clamp > 0.0 && prob_clamp < 0.5)) throw Error(ErrorCode::InvalidConfig, "prob_clamp must be in (0, 0.5)");
}

template <class T>
Tensor<T> dice_focal_loss(Tape<T>& tape, const Tensor<T>& logits, const Tensor<T>& target, const LossConfig& cfg) {
  if (logits.shape() != target.shape()) {
    throw Error(ErrorCode::ShapeMismatch,
                "logits " + ad::shape_str(logits.shape()) + " vs target " + ad::shape_str(target.shape()));
  }
  cfg.validate();
  const std::size_t n = logits.numel();
  const auto z = logits.values();
  const auto g = target.values();
  const double lo = cfg.prob_clamp, hi = 1.0 - cfg.prob_clamp;
  const double gamma = cfg.focal_gamma, alpha = cfg.focal_alpha;

  auto prob = [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); };
  double inter = 0.0, psum = 0.0, gsum = 0.0, focal = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = prob(static_cast<double>(z[i]));
    const double gi = static_cast<double>(g[i]);
    const double pc = std::clamp(p, lo, hi);
    inter += p * gi;
    psum += p;
    gsum += gi;
    focal += alpha * gi * std::pow(1.0 - p, gamma) * std::log(pc) +
             (1.0 - alpha) * (1.0 - gi) * std::pow(p, gamma) * std::log(1.0 - pc);
  }
  const double eps = cfg.dice_eps;
  const double den = psum + gsum + eps;
  const double num = 2.0 * inter + eps;
  const double l_dice = 1.0 - num / den;
  const double l_focal = -focal / static_cast<double>(n);
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(l_dice + cfg.focal_weight * l_focal));

  if (ad::needs_grad(tape, logits)) {
    out.mark_requires_grad();
    tape.record([out, logits, target, cfg, num, den, n, lo, hi, gamma, alpha, prob]() {
      if (!out.has_grad()) return;
      const double up = static_cast<double>(out.grad()[0]);
      auto gz = logits.ensure_grad();
      const auto zv = logits.values();
      const auto gv = target.values();
      const double fw = cfg.focal_weight / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double p = prob(static_cast<double>(zv[i]));
        const double gi = static_cast<double>(gv[i]);
        const bool inside = p > lo && p < hi;
        const double pc = std::clamp(p, lo, hi);
        // d L_dice / dp
        double dp = -(2.0 * gi * den - num) / (den * den);
        // d (-focal_i) / dp
        double df = 0.0;
        if (gi != 0.0) {
          double t = 0.0;
          if (gamma != 0.0) t -= gamma * std::pow(1.0 - p, gamma - 1.0) * std::log(pc);
          if (inside) t += std::pow(1.0 - p, gamma) / pc;
          df += alpha * gi * t;
        }
        if (gi != 1.0) {
          double t = 0.0;
          if (gamma != 0.0) t += gamma * std::pow(p, gamma - 1.0) * std::log(1.0 - pc);
          if (inside) t -= std::pow(p, gamma) / (1.0 - pc);
          df += (1.0 - alpha) * (1.0 - gi) * t;
        }
        dp -= fw * df;
        gz[i] += static_cast<T>(up * dp * p * (1.0 - p));
      }
    });
  }
  return out;
}

template Tensor<float> dice_focal_loss(Tape<float>&, const Tensor<float>&, const Tensor<float>&, const LossConfig&);
template Tensor<double> dice_focal_loss(Tape<double>&, const Tensor<double>&, const Tensor<double>&,
                                        const LossConfig&);

// ---------------------------------------------------------------------------
// Optimizer

void OptimizerConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "betas must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidConfig, "weight_decay must be >= 0");
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidConfig, "eps must be positive");
}

AdamW::AdamW(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

template <class T>
void AdamW::step(net::ParameterSet<T>& params, double lr) {
  for (const auto& p : params) {
    if (p.trainable && !p.tensor.has_grad()) throw Error(ErrorCode::MissingGrad, "no gradient for " + p.name);
  }
  for (auto& p : params) {
    if (!p.trainable) {
      state_.erase(p.name);
      continue;
    }
    auto& st = state_[p.name];
    auto w = p.tensor.values();
    const auto g = p.tensor.grad();
    if (st.m.size() != w.size()) {
      st.m.assign(w.size(), 0.0);
      st.v.assign(w.size(), 0.0);
      st.t = 0;
    }
    ++st.t;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      st.m[i] = b1 * st.m[i] + (1.0 - b1) * gi;
      st.v[i] = b2 * st.v[i] + (1.0 - b2) * gi * gi;
      const double mhat = st.m[i] / c1;
      const double vhat = st.v[i] / c2;
      const double wi = static_cast<double>(w[i]);
      w[i] = static_cast<T>(wi - lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * wi));
    }
  }
}

std::size_t AdamW::step_count(const std::string& name) const {
  auto it = state_.find(name);
  return it == state_.end() ? 0 : it->second.t;
}

template void AdamW::step(net::ParameterSet<float>&, double);
template void AdamW::step(net::ParameterSet<double>&, double);

// ---------------------------------------------------------------------------
// Schedules

namespace {

struct Segment {
  std::size_t start, length;
  double peak, floor;
};

std::vector<Segment> segments(const ScheduleConfig& c) {
  std::vector<Segment> out;
  if (c.kind == ScheduleKind::WarmupCosine) {
    out.push_back({0, c.horizon_epochs, c.lr_max, c.lr_min});
    return out;
  }
  std::vector<std::size_t> starts{0};
  starts.insert(starts.end(), c.restart_boundaries.begin(), c.restart_boundaries.end());
  double peak = c.lr_max;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const std::size_t end = k + 1 < starts.size() ? starts[k + 1] : c.horizon_epochs;
    out.push_back({starts[k], end - starts[k], peak, peak * c.segment_min_ratio});
    peak /= c.restart_decay;
  }
  return out;
}

double warmup_cosine(double peak, double floor, std::size_t w, std::size_t t, std::size_t e) {
  if (e < w) return peak * (static_cast<double>(e + 1) / static_cast<double>(w));
  const double frac = static_cast<double>(e - w) / static_cast<double>(t - 1 - w);
  return floor + 0.5 * (peak - floor) * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace

void ScheduleConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (!(lr_max > 0.0)) fail("lr_max must be positive");
  if (!(lr_min >= 0.0 && lr_min <= lr_max)) fail("need 0 <= lr_min <= lr_max");
  if (kind == ScheduleKind::StagewiseCosine) {
    if (!(restart_decay > 0.0)) fail("restart_decay must be positive");
    if (!(segment_min_ratio >= 0.0 && segment_min_ratio <= 1.0)) fail("segment_min_ratio must be in [0, 1]");
    std::size_t prev = 0;
    for (std::size_t b : restart_boundaries) {
      if (b <= prev || b >= horizon_epochs) fail("restart boundaries must increase strictly inside the horizon");
      prev = b;
    }
  } else if (!restart_boundaries.empty()) {
    fail("restart boundaries only apply to stagewise schedules");
  }
  // Every segment needs its warmup plus at least two cosine epochs.
  std::size_t first = horizon_epochs;
  if (kind == ScheduleKind::StagewiseCosine && !restart_boundaries.empty()) first = restart_boundaries.front();
  if (warmup_epochs >= first) fail("warmup_epochs must be shorter than the first segment");
  for (const auto& s : segments(*this)) {
    if (s.length < warmup_epochs + 2) {
      fail("segment starting at epoch " + std::to_string(s.start) + " is shorter than warmup + 2");
    }
  }
}

double lr_at(const ScheduleConfig& cfg, std::size_t epoch) {
  if (epoch >= cfg.horizon_epochs) {
    throw Error(ErrorCode::OutOfRange,
                "epoch " + std::to_string(epoch) + " outside horizon " + std::to_string(cfg.horizon_epochs));
  }
  cfg.validate();
  for (const auto& s : segments(cfg)) {
    if (epoch < s.start + s.length) return warmup_cosine(s.peak, s.floor, cfg.warmup_epochs, s.length, epoch - s.start);
  }
  throw Error(ErrorCode::OutOfRange, "epoch outside every segment");
}

std::vector<double> segment_maxima(const ScheduleConfig& cfg) {
  cfg.validate();
  std::vector<double> out;
  for (const auto& s : segments(cfg)) out.push_back(s.peak);
  return out;
}

void UnfreezeSchedule::validate() const {
  if (!(0 < step_a_end && step_a_end < step_b_end && step_b_end < max_epochs)) {
    throw Error(ErrorCode::InvalidConfig, "need 0 < step_a_end < step_b_end < max_epochs");
  }
}

UnfreezeSchedule UnfreezeSchedule::scaled(std::size_t max_epochs, std::size_t deep_stage_cutoff) {
  UnfreezeSchedule s;
  s.max_epochs = max_epochs;
  s.deep_stage_cutoff = deep_stage_cutoff;
  const double m = static_cast<double>(max_epochs);
  s.step_a_end = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(m * 60.0 / 1000.0)));
  s.step_b_end = std::max<std::size_t>(s.step_a_end + 1, static_cast<std::size_t>(std::lround(m * 180.0 / 1000.0)));
  s.validate();
  return s;
}

char unfreeze_step(const UnfreezeSchedule& s, std::size_t epoch) {
  s.validate();
  if (epoch >= s.max_epochs) {
    throw Error(ErrorCode::OutOfRange,
                "epoch " + std::to_string(epoch) + " outside max_epochs " + std::to_string(s.max_epochs));
  }
  if (epoch <= s.step_a_end) return 'A';
  if (epoch <= s.step_b_end) return 'B';
  return 'C';
}

std::set<std::string> unfreeze_state(const UnfreezeSchedule& s, std::size_t epoch,
                                     const std::set<std::string>& all_tags) {
  const char step = unfreeze_step(s, epoch);
  if (step == 'C') return all_tags;
  std::set<std::string> out;
  for (const auto& t : all_tags) {
    if (t == "head" || t == "bottleneck" || t.rfind("dec.", 0) == 0) {
      out.insert(t);
    } else if (step == 'B' && t.rfind("enc.stage", 0) == 0) {
      const std::size_t k = std::stoul(t.substr(9));
      if (k > s.deep_stage_cutoff) out.insert(t);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.p_flip = c.p_rotate = c.p_elastic = c.p_scale = c.p_histogram = 0.0;
  return c;
}

namespace {

template <class T>
Image3<T> flip_image(const Image3<T>& v, int axis) {
  if (axis < 0 || axis > 2) throw Error(ErrorCode::InvalidConfig, "flip axis must be 0, 1 or 2");
  const Dims& d = v.dims();
  std::vector<T> out(d.count());
  for (std::size_t z = 0; z < d.d; ++z)
    for (std::size_t y = 0; y < d.h; ++y)
      for (std::size_t x = 0; x < d.w; ++x) {
        const std::size_t sz = axis == 0 ? d.d - 1 - z : z;
        const std::size_t sy = axis == 1 ? d.h - 1 - y : y;
        const std::size_t sx = axis == 2 ? d.w - 1 - x : x;
        out[d.index(z, y, x)] = v(sz, sy, sx);
      }
  return Image3<T>(d, v.spacing(), std::move(out));
}

float sample_linear(const Volume3& v, double z, double y, double x) {
  const Dims& d = v.dims();
  auto clampd = [](double c, std::size_t n) { return std::clamp(c, 0.0, static_cast<double>(n - 1)); };
  z = clampd(z, d.d);
  y = clampd(y, d.h);
  x = clampd(x, d.w);
  const auto z0 = static_cast<std::size_t>(std::floor(z)), y0 = static_cast<std::size_t>(std::floor(y)),
             x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t z1 = std::min(z0 + 1, d.d - 1), y1 = std::min(y0 + 1, d.h - 1), x1 = std::min(x0 + 1, d.w - 1);
  const double fz = z - static_cast<double>(z0), fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  const double c00 = lerp(v(z0, y0, x0), v(z0, y0, x1), fx);
  const double c01 = lerp(v(z0, y1, x0), v(z0, y1, x1), fx);
  const double c10 = lerp(v(z1, y0, x0), v(z1, y0, x1), fx);
  const double c11 = lerp(v(z1, y1, x0), v(z1, y1, x1), fx);
  return static_cast<float>(lerp(lerp(c00, c01, fy), lerp(c10, c11, fy), fz));
}

std::uint8_t sample_nearest(const Mask3& m, double z, double y, double x) {
  const Dims& d = m.dims();
  const double rz = std::round(z), ry = std::round(y), rx = std::round(x);
  if (rz < 0 || ry < 0 || rx < 0 || rz > static_cast<double>(d.d - 1) || ry > static_cast<double>(d.h - 1) ||
      rx > static_cast<double>(d.w - 1))
    return 0;
  return m(static_cast<std::size_t>(rz), static_cast<std::size_t>(ry), static_cast<std::size_t>(rx));
}

// Resamples image (linear) and mask (nearest) at source(z, y, x) coordinates.
template <class F>
std::pair<Volume3, Mask3> warp(const Volume3& v, const Mask3& m, F&& source) {
  const Dims& d = v.dims();
  std::vector<float> img(d.count());
  std::vector<std::uint8_t> msk(d.count());
  for (std::size_t z = 0; z < d.d; ++z)
    for (std::size_t y = 0; y < d.h; ++y)
      for (std::size_t x = 0; x < d.w; ++x) {
        const auto s = source(z, y, x);
        const std::size_t i = d.index(z, y, x);
        img[i] = sample_linear(v, s[0], s[1], s[2]);
        msk[i] = sample_nearest(m, s[0], s[1], s[2]);
      }
  return {Volume3(d, v.spacing(), std::move(img)), Mask3(d, m.spacing(), std::move(msk))};
}

void smooth_axis(std::vector<double>& f, const Dims& d, int axis, const std::vector<double>& k) {
  const auto r = static_cast<std::ptrdiff_t>(k.size() / 2);
  const std::size_t n[3] = {d.d, d.h, d.w};
  std::vector<double> out(f.size());
  for (std::size_t z = 0; z < d.d; ++z)
    for (std::size_t y = 0; y < d.h; ++y)
      for (std::size_t x = 0; x < d.w; ++x) {
        const std::size_t c[3] = {z, y, x};
        double acc = 0.0;
        for (std::ptrdiff_t o = -r; o <= r; ++o) {
          std::size_t p[3] = {z, y, x};
          const auto q = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(c[axis]) + o, 0,
                                                    static_cast<std::ptrdiff_t>(n[axis]) - 1);
          p[axis] = static_cast<std::size_t>(q);
          acc += k[static_cast<std::size_t>(o + r)] * f[d.index(p[0], p[1], p[2])];
        }
        out[d.index(z, y, x)] = acc;
      }
  f.swap(out);
}

}  // namespace

Volume3 flip(const Volume3& v, int axis) { return flip_image(v, axis); }
Mask3 flip(const Mask3& m, int axis) { return flip_image(m, axis); }

Volume3 histogram_match(const Volume3& v, const Volume3& reference) {
  const auto src = v.data();
  std::vector<float> ref(reference.data().begin(), reference.data().end());
  std::sort(ref.begin(), ref.end());
  std::vector<std::size_t> order(src.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return src[a] < src[b]; });
  std::vector<float> out(src.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    // Position r * (m - 1) / (n - 1) in the reference, split exactly.
    const std::size_t den = order.size() > 1 ? order.size() - 1 : 1;
    const std::size_t num = r * (ref.size() - 1);
    const std::size_t lo = num / den;
    const std::size_t hi = std::min(lo + 1, ref.size() - 1);
    const double f = static_cast<double>(num % den) / static_cast<double>(den);
    out[order[r]] = static_cast<float>(ref[lo] + (static_cast<double>(ref[hi]) - ref[lo]) * f);
  }
  // Ties in the source map to one value: the mean of their targets.
  for (std::size_t r = 0; r < order.size();) {
    std::size_t e = r + 1;
    while (e < order.size() && src[order[e]] == src[order[r]]) ++e;
    if (e - r > 1) {
      double s = 0.0;
      for (std::size_t i = r; i < e; ++i) s += out[order[i]];
      const auto m = static_cast<float>(s / static_cast<double>(e - r));
      for (std::size_t i = r; i < e; ++i) out[order[i]] = m;
    }
    r = e;
  }
  return Volume3(v.dims(), v.spacing(), std::move(out));
}

std::pair<Volume3, Mask3> augment(const Volume3& v, const Mask3& m, const AugmentConfig& cfg, Rng& rng,
                                  const std::vector<const Volume3*>& references) {
  if (!v.same_geometry(m)) throw Error(ErrorCode::GeometryMismatch, "image and mask geometry differ");
  Volume3 img = v;
  Mask3 msk = m;
  const Dims d = v.dims();
  const double cz = (static_cast<double>(d.d) - 1.0) / 2.0, cy = (static_cast<double>(d.h) - 1.0) / 2.0,
               cx = (static_cast<double>(d.w) - 1.0) / 2.0;
  (void)cz;

  if (rng.bernoulli(cfg.p_flip)) {
    img = flip(img, cfg.flip_axis);
    msk = flip(msk, cfg.flip_axis);
  }
  if (rng.bernoulli(cfg.p_rotate)) {
    const double a = rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg) * std::numbers::pi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    std::tie(img, msk) = warp(img, msk, [&](std::size_t z, std::size_t y, std::size_t x) {
      const double py = static_cast<double>(y) - cy, px = static_cast<double>(x) - cx;
      return std::array<double, 3>{static_cast<double>(z), cy + c * py + s * px, cx - s * py + c * px};
    });
  }
  if (rng.bernoulli(cfg.p_elastic)) {
    const double sigma = std::max(cfg.elastic_sigma, 1e-6);
    const auto r = static_cast<std::size_t>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double ks = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
      const double t = static_cast<double>(i) - static_cast<double>(r);
      k[i] = std::exp(-0.5 * t * t / (sigma * sigma));
      ks += k[i];
    }
    for (auto& x : k) x /= ks;
    std::array<std::vector<double>, 3> field;
    for (auto& f : field) {
      f.resize(d.count());
      for (auto& x : f) x = rng.uniform(-1.0, 1.0);
      for (int axis = 0; axis < 3; ++axis) smooth_axis(f, d, axis, k);
      double peak = 0.0;
      for (double x : f) peak = std::max(peak, std::abs(x));
      const double gain = peak > 0.0 ? cfg.elastic_alpha / peak : 0.0;
      for (auto& x : f) x *= gain;
    }
    std::tie(img, msk) = warp(img, msk, [&](std::size_t z, std::size_t y, std::size_t x) {
      const std::size_t i = d.index(z, y, x);
      return std::array<double, 3>{static_cast<double>(z) + field[0][i], static_cast<double>(y) + field[1][i],
                                   static_cast<double>(x) + field[2][i]};
    });
  }
  if (rng.bernoulli(cfg.p_scale)) {
    const auto a = static_cast<float>(rng.uniform(cfg.scale_min, cfg.scale_max));
    for (auto& x : img.mutable_data()) x *= a;
  }
  if (rng.bernoulli(cfg.p_histogram) && !references.empty()) {
    const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(references.size()) - 1));
    img = histogram_match(img, *references[pick]);
  }
  return {std::move(img), std::move(msk)};
}

// ---------------------------------------------------------------------------
// Training loop

void TrainConfig::validate() const {
  if (batch_size == 0) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (patience == 0) throw Error(ErrorCode::InvalidConfig, "patience must be >= 1");
  if (max_epochs == 0) throw Error(ErrorCode::InvalidConfig, "max_epochs must be >= 1");
}

json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"loss", r.loss},
          {"lr", r.lr},
          {"val_dice", r.val_dice},
          {"trainable_tags", r.trainable_tags},
          {"wall_clock_s", r.wall_clock_s}};
}

namespace {

Tensor<float> stack_images(const std::vector<const Volume3*>& vs) {
  const Dims d = vs.front()->dims();
  std::vector<float> buf;
  buf.reserve(vs.size() * d.count());
  for (const auto* v : vs) {
    if (!(v->dims() == d)) throw Error(ErrorCode::ShapeMismatch, "samples in a batch must share dims");
    buf.insert(buf.end(), v->data().begin(), v->data().end());
  }
  return Tensor<float>(Shape{vs.size(), 1, d.d, d.h, d.w}, std::move(buf));
}

Tensor<float> stack_masks(const std::vector<const Mask3*>& ms) {
  const Dims d = ms.front()->dims();
  std::vector<float> buf;
  buf.reserve(ms.size() * d.count());
  for (const auto* m : ms) {
    if (!(m->dims() == d)) throw Error(ErrorCode::ShapeMismatch, "samples in a batch must share dims");
    for (auto v : m->data()) buf.push_back(static_cast<float>(v));
  }
  return Tensor<float>(Shape{ms.size(), 1, d.d, d.h, d.w}, std::move(buf));
}

Mask3 threshold(const Tensor<float>& logits, std::size_t b, const Dims& d, const Spacing& s) {
  const std::size_t n = d.count();
  std::vector<std::uint8_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = logits.values()[b * n + i] >= 0.0f ? 1 : 0;
  return Mask3(d, s, std::move(v));
}

}  // namespace

Mask3 predict_mask(const net::Model<float>& model, const Volume3& image) {
  Tape<float> tape(false);
  const auto logits = model.forward(tape, stack_images({&image}));
  return threshold(logits, 0, image.dims(), image.spacing());
}

double mean_dice(const net::Model<float>& model, const std::vector<Sample>& samples, std::size_t batch_size) {
  if (samples.empty()) throw Error(ErrorCode::EmptySplit, "no samples to evaluate");
  double total = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    std::vector<const Volume3*> imgs;
    for (std::size_t i = start; i < end; ++i) imgs.push_back(&samples[i].image);
    Tape<float> tape(false);
    const auto logits = model.forward(tape, stack_images(imgs));
    for (std::size_t i = start; i < end; ++i) {
      const auto& t = samples[i].target;
      total += metrics::dice(threshold(logits, i - start, t.dims(), t.spacing()), t);
    }
  }
  return total / static_cast<double>(samples.size());
}

TrainResult train(net::Model<float> model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& cfg, const ScheduleConfig& schedule, const LossConfig& loss_cfg,
                  const OptimizerConfig& opt_cfg, const UnfreezeSchedule* unfreeze, const TrainHooks& hooks) {
  if (train_set.empty()) throw Error(ErrorCode::EmptySplit, "training split is empty");
  if (val_set.empty()) throw Error(ErrorCode::EmptySplit, "validation split is empty");
  cfg.validate();
  schedule.validate();
  loss_cfg.validate();
  if (schedule.horizon_epochs < cfg.max_epochs) {
    throw Error(ErrorCode::InvalidConfig, "schedule horizon is shorter than max_epochs");
  }
  if (unfreeze) {
    unfreeze->validate();
    if (unfreeze->max_epochs < cfg.max_epochs) {
      throw Error(ErrorCode::InvalidConfig, "unfreeze schedule is shorter than max_epochs");
    }
  }

  AdamW opt(opt_cfg);
  Rng order_rng(derive_seed(cfg.seed, 0x5348));
  std::vector<const Volume3*> references;
  for (const auto& s : train_set) references.push_back(&s.image);
  const auto all_tags = model.params().tags();

  TrainResult result;
  result.best_val_dice = -1.0;
  std::size_t stale = 0;
  std::ofstream log;
  if (hooks.log_path) {
    log.open(*hooks.log_path, std::ios::app);
    if (!log) throw Error(ErrorCode::IoFailure, "cannot open " + hooks.log_path->string());
  }
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    if (unfreeze) {
      const auto want = unfreeze_state(*unfreeze, epoch, all_tags);
      if (want != model.params().trainable_tags()) model.params().set_trainable_only(want);
    }
    const double lr = lr_at(schedule, epoch);
    if (hooks.before_epoch) hooks.before_epoch(epoch, model);

    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Volume3> imgs;
      std::vector<Mask3> msks;
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = train_set[order[k]];
        if (cfg.augment) {
          Rng arng(derive_seed(cfg.seed, (epoch << 20) ^ (order[k] + 1)));
          auto [v, m] = augment(s.image, s.target, cfg.augmentation, arng, references);
          imgs.push_back(std::move(v));
          msks.push_back(std::move(m));
        } else {
          imgs.push_back(s.image);
          msks.push_back(s.target);
        }
      }
      std::vector<const Volume3*> ip;
      std::vector<const Mask3*> mp;
      for (std::size_t k = 0; k < imgs.size(); ++k) {
        ip.push_back(&imgs[k]);
        mp.push_back(&msks[k]);
      }
      const auto x = stack_images(ip);
      const auto y = stack_masks(mp);

      model.params().zero_grad();
      Tape<float> tape;
      auto logits = model.forward(tape, x);
      auto loss = dice_focal_loss(tape, logits, y, loss_cfg);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        throw Error(ErrorCode::Divergence, "non-finite loss at epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
      tape.reset();
      opt.step(model.params(), lr);
      if (hooks.after_step) hooks.after_step(epoch, model);
      loss_sum += lv;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(batches);
    rec.lr = lr;
    rec.val_dice = mean_dice(model, val_set, cfg.batch_size);
    const auto tags = model.params().trainable_tags();
    rec.trainable_tags.assign(tags.begin(), tags.end());
    rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(rec);
    if (log.is_open()) {
      log << to_json(rec).dump() << "\n";
      log.flush();
    }

    if (rec.val_dice > result.best_val_dice + 1e-4 || result.log.size() == 1) {
      result.best_val_dice = rec.val_dice;
      result.best_epoch = epoch;
      result.best = net::Model<float>(model.spec(), model.params().clone());
      stale = 0;
    } else if (!unfreeze || unfreeze_step(*unfreeze, epoch) == 'C') {
      if (++stale >= cfg.patience) break;
    }
  }
  return result;
}

}  // namespace c2w::train
