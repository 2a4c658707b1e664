// SPDX-License-Identifier: Apache-2.0
#include "c2w/network.hpp"

#include <cmath>
#include <cstdio>

#include "c2w/io.hpp"
#include "c2w/ops.hpp"
#include "c2w/rng.hpp"

namespace c2w::net {

namespace fs = std::filesystem;
using nlohmann::json;
using ad::Shape;
using ad::Tape;
using ad::Tensor;

// ---------------------------------------------------------------------------
// ModelSpec

ModelSpec ModelSpec::full(std::size_t input_depth) {
  ModelSpec spec;
  spec.base_channels = 32;
  spec.cardinality = 8;
  std::size_t depth = input_depth;
  for (std::size_t ch : {32, 64, 128, 256, 512, 512, 512}) {
    StageSpec st;
    st.channels = ch;
    if (!spec.stages.empty()) {
      const bool z = depth >= 8;
      st.downsample = {z, true, true};
      if (z) depth = (depth + 1) / 2;
    }
    spec.stages.push_back(st);
  }
  return spec;
}

ModelSpec ModelSpec::desk() {
  ModelSpec spec;
  spec.base_channels = 32;
  spec.cardinality = 2;
  spec.scale = 0.25;
  for (std::size_t ch : {32, 64, 128, 128}) {
    StageSpec st;
    st.channels = ch;
    if (!spec.stages.empty()) st.downsample = {true, true, true};
    spec.stages.push_back(st);
  }
  return spec;
}

std::size_t ModelSpec::width(std::size_t s) const {
  return static_cast<std::size_t>(std::lround(static_cast<double>(stages.at(s).channels) * scale));
}

void ModelSpec::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidSpec, m); };
  if (stages.empty()) fail("at least one encoder stage is required");
  if (!(scale > 0.0) || !std::isfinite(scale)) fail("scale must be positive");
  if (cardinality == 0) fail("cardinality must be positive");
  if (in_channels == 0 || out_channels == 0) fail("in/out channels must be positive");
  if (stages.front().channels != base_channels) fail("first stage channels must equal base_channels");
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::size_t w = width(s);
    const std::string where = "stage " + std::to_string(s + 1);
    if (w == 0) fail(where + " has zero channels after scaling");
    if (w % cardinality != 0) {
      fail(where + " width " + std::to_string(w) + " not divisible by cardinality " + std::to_string(cardinality));
    }
    if (stages[s].blocks == 0) fail(where + " needs at least one block");
  }
}

namespace {

const char* activation_name(Activation a) { return a == Activation::Relu ? "relu" : "leaky_relu"; }

}  // namespace

json to_json(const ModelSpec& spec) {
  json stages = json::array();
  for (const auto& st : spec.stages) {
    stages.push_back({{"channels", st.channels},
                      {"blocks", st.blocks},
                      {"downsample", {st.downsample[0], st.downsample[1], st.downsample[2]}}});
  }
  return {{"stages", stages},
          {"base_channels", spec.base_channels},
          {"cardinality", spec.cardinality},
          {"in_channels", spec.in_channels},
          {"out_channels", spec.out_channels},
          {"activation", activation_name(spec.activation)},
          {"scale", spec.scale}};
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec spec;
  try {
    for (const auto& st : j.at("stages")) {
      StageSpec s;
      s.channels = st.at("channels").get<std::size_t>();
      s.blocks = st.value("blocks", std::size_t{1});
      if (st.contains("downsample")) {
        const auto& d = st.at("downsample");
        if (d.size() != 3) throw Error(ErrorCode::InvalidSpec, "downsample needs 3 flags");
        s.downsample = {d[0].get<bool>(), d[1].get<bool>(), d[2].get<bool>()};
      }
      spec.stages.push_back(s);
    }
    spec.base_channels = j.value("base_channels", spec.stages.empty() ? 32 : spec.stages.front().channels);
    spec.cardinality = j.at("cardinality").get<std::size_t>();
    spec.in_channels = j.value("in_channels", std::size_t{1});
    spec.out_channels = j.value("out_channels", std::size_t{1});
    const std::string act = j.value("activation", std::string("leaky_relu"));
    if (act == "relu") {
      spec.activation = Activation::Relu;
    } else if (act == "leaky_relu") {
      spec.activation = Activation::LeakyRelu;
    } else {
      throw Error(ErrorCode::InvalidSpec, "unknown activation " + act);
    }
    spec.scale = j.value("scale", 1.0);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, e.what());
  }
  spec.validate();
  return spec;
}

std::string spec_hash(const ModelSpec& spec) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_name(to_json(spec).dump())));
  return buf;
}

std::vector<std::array<std::size_t, 3>> encoder_extents(const ModelSpec& spec, std::array<std::size_t, 3> in) {
  std::vector<std::array<std::size_t, 3>> out;
  for (const auto& st : spec.stages) {
    for (int a = 0; a < 3; ++a) {
      if (st.downsample[a]) in[a] = (in[a] - 1) / 2 + 1;  // k3, s2, p1
    }
    out.push_back(in);
  }
  return out;
}

Shape output_shape(const ModelSpec& spec, const Shape& input) {
  spec.validate();
  if (input.size() != 5 || input[1] != spec.in_channels) {
    throw Error(ErrorCode::ShapeMismatch, "expected [N," + std::to_string(spec.in_channels) + ",D,H,W], got " +
                                              ad::shape_str(input));
  }
  return {input[0], spec.out_channels, input[2], input[3], input[4]};
}

// ---------------------------------------------------------------------------
// Layout and initialization

namespace {

enum class InitKind { HeNormal, Ones, Zeros, FanInUniform };

struct Slot {
  std::string name;
  Shape shape;
  std::string tag;
  InitKind init;
  std::size_t fan_in;
};

std::string enc_tag(std::size_t s) { return "enc.stage" + std::to_string(s + 1); }

std::vector<Slot> layout(const ModelSpec& spec) {
  spec.validate();
  std::vector<Slot> out;
  auto conv = [&](const std::string& base, std::size_t co, std::size_t ci, std::size_t k, const std::string& tag) {
    out.push_back({base + ".weight", {co, ci, k, k, k}, tag, InitKind::HeNormal, ci * k * k * k});
  };
  auto norm = [&](const std::string& base, std::size_t c, const std::string& tag) {
    out.push_back({base + ".weight", {c}, tag, InitKind::Ones, 0});
    out.push_back({base + ".bias", {c}, tag, InitKind::Zeros, 0});
  };
  const std::size_t S = spec.stages.size();
  std::size_t prev = spec.in_channels;
  for (std::size_t s = 0; s < S; ++s) {
    const std::size_t w = spec.width(s);
    const std::string pre = "enc.stage" + std::to_string(s + 1);
    conv(pre + ".entry.conv", w, prev, 3, enc_tag(s));
    norm(pre + ".entry.norm", w, enc_tag(s));
    const std::string block_tag = s + 1 == S ? "bottleneck" : enc_tag(s);
    for (std::size_t b = 0; b < spec.stages[s].blocks; ++b) {
      const std::string bp = pre + ".block" + std::to_string(b);
      conv(bp + ".conv1", w, w, 1, block_tag);
      norm(bp + ".norm1", w, block_tag);
      conv(bp + ".conv2", w, w / spec.cardinality, 3, block_tag);
      norm(bp + ".norm2", w, block_tag);
      conv(bp + ".conv3", w, w, 1, block_tag);
      norm(bp + ".norm3", w, block_tag);
    }
    prev = w;
  }
  for (std::size_t k = S - 1; k >= 1; --k) {
    const std::size_t w = spec.width(k - 1);
    const std::string pre = "dec.stage" + std::to_string(k);
    conv(pre + ".conv1", w, spec.width(k) + w, 3, pre);
    norm(pre + ".norm1", w, pre);
    conv(pre + ".conv2", w, w, 3, pre);
    norm(pre + ".norm2", w, pre);
  }
  conv("head.conv", spec.out_channels, spec.width(0), 1, "head");
  out.push_back({"head.conv.bias", {spec.out_channels}, "head", InitKind::FanInUniform, spec.width(0)});
  return out;
}

template <class T>
Tensor<T> init_slot(const Slot& slot, std::uint64_t seed) {
  std::vector<T> v(ad::shape_numel(slot.shape));
  Rng rng(derive_seed(seed, hash_name(slot.name)));
  switch (slot.init) {
    case InitKind::HeNormal: {
      const double sd = std::sqrt(2.0 / static_cast<double>(slot.fan_in));
      for (auto& x : v) x = static_cast<T>(sd * rng.normal());
      break;
    }
    case InitKind::Ones:
      std::fill(v.begin(), v.end(), T(1));
      break;
    case InitKind::Zeros:
      break;
    case InitKind::FanInUniform: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(slot.fan_in));
      for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
      break;
    }
  }
  return Tensor<T>(slot.shape, std::move(v));
}

}  // namespace

// ---------------------------------------------------------------------------
// ParameterSet

template <class T>
void ParameterSet<T>::add(std::string name, Tensor<T> tensor, std::string stage_tag) {
  if (index_.count(name)) throw Error(ErrorCode::InvalidSpec, "duplicate parameter " + name);
  index_.emplace(name, params_.size());
  tensor.set_requires_grad(true);
  params_.push_back({std::move(name), std::move(tensor), std::move(stage_tag), true});
}

template <class T>
const Tensor<T>& ParameterSet<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::SpecMismatch, "no parameter named " + name);
  return params_[it->second].tensor;
}

template <class T>
Parameter<T>& ParameterSet<T>::param(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::SpecMismatch, "no parameter named " + name);
  return params_[it->second];
}

template <class T>
std::set<std::string> ParameterSet<T>::tags() const {
  std::set<std::string> out;
  for (const auto& p : params_) out.insert(p.stage_tag);
  return out;
}

template <class T>
std::set<std::string> ParameterSet<T>::names() const {
  std::set<std::string> out;
  for (const auto& p : params_) out.insert(p.name);
  return out;
}

template <class T>
void ParameterSet<T>::set_trainable(const std::set<std::string>& tags, bool trainable) {
  const auto known = this->tags();
  for (const auto& t : tags) {
    if (!known.count(t)) throw Error(ErrorCode::UnknownTag, "no parameters tagged " + t);
  }
  for (auto& p : params_) {
    if (!tags.count(p.stage_tag)) continue;
    p.trainable = trainable;
    p.tensor.set_requires_grad(trainable);
    if (!trainable) p.tensor.drop_grad();
  }
}

template <class T>
void ParameterSet<T>::set_trainable_only(const std::set<std::string>& tags) {
  const auto all = this->tags();
  std::set<std::string> off;
  for (const auto& t : all) {
    if (!tags.count(t)) off.insert(t);
  }
  set_trainable(tags, true);
  set_trainable(off, false);
}

template <class T>
std::set<std::string> ParameterSet<T>::trainable_tags() const {
  std::set<std::string> out;
  for (const auto& p : params_) {
    if (p.trainable) out.insert(p.stage_tag);
  }
  return out;
}

template <class T>
std::size_t ParameterSet<T>::numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <class T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : params_) {
    if (p.trainable) {
      p.tensor.zero_grad();
    } else {
      p.tensor.drop_grad();
    }
  }
}

template <class T>
ParameterSet<T> ParameterSet<T>::clone() const {
  ParameterSet out;
  for (const auto& p : params_) {
    out.add(p.name, p.tensor.clone(), p.stage_tag);
  }
  for (auto& p : out.params_) {
    if (!params_[out.index_[p.name]].trainable) {
      p.trainable = false;
      p.tensor.set_requires_grad(false);
      p.tensor.drop_grad();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model

template <class T>
Model<T>::Model(ModelSpec spec, ParameterSet<T> params) : spec_(std::move(spec)), params_(std::move(params)) {
  const auto slots = layout(spec_);
  if (slots.size() != params_.size()) {
    throw Error(ErrorCode::SpecMismatch, "parameter count " + std::to_string(params_.size()) +
                                             " does not match spec (" + std::to_string(slots.size()) + ")");
  }
  for (const auto& s : slots) {
    const auto& t = params_.get(s.name);
    if (t.shape() != s.shape) {
      throw Error(ErrorCode::SpecMismatch, s.name + " has shape " + ad::shape_str(t.shape()) + ", spec wants " +
                                               ad::shape_str(s.shape));
    }
  }
}

template <class T>
Model<T> Model<T>::build(const ModelSpec& spec, std::uint64_t seed) {
  ParameterSet<T> ps;
  for (const auto& s : layout(spec)) ps.add(s.name, init_slot<T>(s, seed), s.tag);
  return Model(spec, std::move(ps));
}

template <class T>
Tensor<T> Model<T>::activate(Tape<T>& tape, const Tensor<T>& x) const {
  return spec_.activation == Activation::Relu ? ad::relu(tape, x) : ad::leaky_relu(tape, x, T(0.01));
}

template <class T>
Tensor<T> Model<T>::conv_norm_act(Tape<T>& tape, const Tensor<T>& x, const std::string& conv,
                                  const std::string& norm, std::array<std::size_t, 3> stride, std::size_t pad,
                                  std::size_t groups, bool act) const {
  ad::Conv3dOptions opt;
  opt.stride = stride;
  opt.padding = {pad, pad, pad};
  opt.groups = groups;
  auto y = ad::conv3d(tape, x, params_.get(conv + ".weight"), Tensor<T>(), opt);
  y = ad::instance_norm3d(tape, y, params_.get(norm + ".weight"), params_.get(norm + ".bias"));
  return act ? activate(tape, y) : y;
}

template <class T>
Tensor<T> Model<T>::forward(Tape<T>& tape, const Tensor<T>& input) const {
  output_shape(spec_, input.shape());
  const std::size_t S = spec_.stages.size();
  std::vector<Tensor<T>> skips;
  Tensor<T> x = input;
  for (std::size_t s = 0; s < S; ++s) {
    const auto& st = spec_.stages[s];
    const std::string pre = "enc.stage" + std::to_string(s + 1);
    const std::array<std::size_t, 3> stride{st.downsample[0] ? 2u : 1u, st.downsample[1] ? 2u : 1u,
                                            st.downsample[2] ? 2u : 1u};
    x = conv_norm_act(tape, x, pre + ".entry.conv", pre + ".entry.norm", stride, 1, 1, true);
    for (std::size_t b = 0; b < st.blocks; ++b) {
      const std::string bp = pre + ".block" + std::to_string(b);
      auto h = conv_norm_act(tape, x, bp + ".conv1", bp + ".norm1", {1, 1, 1}, 0, 1, true);
      h = conv_norm_act(tape, h, bp + ".conv2", bp + ".norm2", {1, 1, 1}, 1, spec_.cardinality, true);
      h = conv_norm_act(tape, h, bp + ".conv3", bp + ".norm3", {1, 1, 1}, 0, 1, false);
      x = activate(tape, ad::add(tape, h, x));
    }
    if (s + 1 < S) skips.push_back(x);
  }
  for (std::size_t k = S - 1; k >= 1; --k) {
    const auto& deeper = spec_.stages[k];
    const Tensor<T>& skip = skips[k - 1];
    x = ad::upsample_trilinear(tape, x,
                               {deeper.downsample[0] ? 2u : 1u, deeper.downsample[1] ? 2u : 1u,
                                deeper.downsample[2] ? 2u : 1u});
    const std::array<std::size_t, 3> target{skip.dim(2), skip.dim(3), skip.dim(4)};
    if (x.dim(2) != target[0] || x.dim(3) != target[1] || x.dim(4) != target[2]) {
      x = ad::crop_spatial(tape, x, target);
    }
    x = ad::concat(tape, std::vector<Tensor<T>>{x, skip}, 1);
    const std::string pre = "dec.stage" + std::to_string(k);
    x = conv_norm_act(tape, x, pre + ".conv1", pre + ".norm1", {1, 1, 1}, 1, 1, true);
    x = conv_norm_act(tape, x, pre + ".conv2", pre + ".norm2", {1, 1, 1}, 1, 1, true);
  }
  return ad::conv3d(tape, x, params_.get("head.conv.weight"), params_.get("head.conv.bias"));
}

template <class T>
template <class U>
Model<U> Model<T>::cast() const {
  ParameterSet<U> ps;
  for (const auto& p : params_) {
    std::vector<U> v(p.tensor.values().begin(), p.tensor.values().end());
    ps.add(p.name, Tensor<U>(p.tensor.shape(), std::move(v)), p.stage_tag);
  }
  std::set<std::string> frozen;
  for (const auto& t : params_.tags()) frozen.insert(t);
  for (const auto& t : params_.trainable_tags()) frozen.erase(t);
  if (!frozen.empty()) ps.set_trainable(frozen, false);
  return Model<U>(spec_, std::move(ps));
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Model<float>;
template class Model<double>;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;

// ---------------------------------------------------------------------------
// Transfer and checkpoints

Model<float> transfer_weights(const Model<float>& source, const Model<float>& target, bool reinit_head,
                              std::uint64_t seed) {
  if (!(source.spec() == target.spec())) {
    throw Error(ErrorCode::SpecMismatch, "source spec " + spec_hash(source.spec()) + " differs from target " +
                                             spec_hash(target.spec()));
  }
  if (source.params().names() != target.params().names()) {
    throw Error(ErrorCode::SpecMismatch, "parameter name sets differ");
  }
  ParameterSet<float> out = target.params().clone();
  for (auto& p : out) {
    const auto& src = source.params().get(p.name);
    if (src.shape() != p.tensor.shape()) throw Error(ErrorCode::SpecMismatch, "shape differs for " + p.name);
    std::copy(src.values().begin(), src.values().end(), p.tensor.values().begin());
  }
  if (reinit_head) {
    for (const auto& slot : layout(target.spec())) {
      if (slot.tag != "head") continue;
      const auto fresh = init_slot<float>(slot, seed);
      auto dst = out.param(slot.name).tensor.values();
      std::copy(fresh.values().begin(), fresh.values().end(), dst.begin());
    }
  }
  return Model<float>(target.spec(), std::move(out));
}

fs::path checkpoint_manifest_path(const fs::path& base) { return fs::path(base.string() + ".manifest.json"); }
fs::path checkpoint_payload_path(const fs::path& base) { return fs::path(base.string() + ".weights.raw"); }

void save_checkpoint(const Model<float>& model, const fs::path& base) {
  json params = json::array();
  std::vector<float> flat;
  flat.reserve(model.params().numel());
  for (const auto& p : model.params()) {
    params.push_back({{"name", p.name},
                      {"shape", p.tensor.shape()},
                      {"stage_tag", p.stage_tag},
                      {"trainable", p.trainable},
                      {"offset", flat.size()},
                      {"numel", p.tensor.numel()}});
    flat.insert(flat.end(), p.tensor.values().begin(), p.tensor.values().end());
  }
  const json manifest = {{"format", "c2w-checkpoint"}, {"version", 1},
                         {"dtype", "float32"},         {"byte_order", "little"},
                         {"spec", to_json(model.spec())}, {"payload_bytes", flat.size() * 4},
                         {"parameters", params}};
  const auto bytes = io::encode_f32le(flat);
  io::write_json(checkpoint_manifest_path(base), manifest);
  io::write_file(checkpoint_payload_path(base), bytes.data(), bytes.size());
}

Model<float> load_checkpoint(const fs::path& base) {
  const json manifest = io::read_json(checkpoint_manifest_path(base));
  const auto payload = io::read_file(checkpoint_payload_path(base));
  auto mismatch = [&](const std::string& m) { throw Error(ErrorCode::ManifestMismatch, base.string() + ": " + m); };
  ModelSpec spec;
  ParameterSet<float> ps;
  std::set<std::string> frozen;
  try {
    if (manifest.at("format") != "c2w-checkpoint" || manifest.at("dtype") != "float32") {
      mismatch("not a float32 checkpoint manifest");
    }
    spec = model_spec_from_json(manifest.at("spec"));
    const std::size_t declared = manifest.at("payload_bytes").get<std::size_t>();
    if (payload.size() != declared) {
      mismatch("payload has " + std::to_string(payload.size()) + " bytes, manifest declares " +
               std::to_string(declared));
    }
    std::size_t expect_offset = 0;
    for (const auto& e : manifest.at("parameters")) {
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto numel = e.at("numel").get<std::size_t>();
      if (offset != expect_offset || numel != ad::shape_numel(shape) || 4 * (offset + numel) > payload.size()) {
        mismatch("bad extent for " + e.at("name").get<std::string>());
      }
      std::vector<float> v(numel);
      io::decode_f32le(payload.data() + 4 * offset, v);
      ps.add(e.at("name").get<std::string>(), Tensor<float>(shape, std::move(v)), e.at("stage_tag").get<std::string>());
      if (!e.value("trainable", true)) frozen.insert(e.at("stage_tag").get<std::string>());
      expect_offset += numel;
    }
    if (4 * expect_offset != payload.size()) mismatch("parameters do not cover the payload");
  } catch (const json::exception& e) {
    mismatch(e.what());
  }
  if (!frozen.empty()) ps.set_trainable(frozen, false);
  try {
    return Model<float>(spec, std::move(ps));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SpecMismatch) mismatch(e.what());
    throw;
  }
}

}  // namespace c2w::net
