// SPDX-License-Identifier: Apache-2.0
//
// ResNeXt-encoder 3D U-Net built from a declarative spec, with stage-tagged
// parameters for freeze control and a float32 checkpoint format.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "c2w/tensor.hpp"

namespace c2w::net {

enum class Activation { Relu, LeakyRelu };

struct StageSpec {
  std::size_t channels = 32;  // before scaling
  std::size_t blocks = 1;
  /// Stride-2 entry conv per axis (z, y, x).
  std::array<bool, 3> downsample{false, false, false};

  bool operator==(const StageSpec&) const = default;
};

struct ModelSpec {
  std::vector<StageSpec> stages;
  std::size_t base_channels = 32;
  std::size_t cardinality = 8;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  Activation activation = Activation::LeakyRelu;
  double scale = 1.0;

  /// Seven stages, 32..512 channels, cardinality 8. Depth is halved only while
  /// it stays >= 8 for the given input depth (44 -> 22 -> 11 -> 6).
  static ModelSpec full(std::size_t input_depth = 44);
  /// Four stages with 8, 16, 32, 32 channels, cardinality 2.
  static ModelSpec desk();

  /// Effective channel count of stage s (0-based) after scaling.
  std::size_t width(std::size_t s) const;
  /// Throws InvalidSpec.
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);
/// Hex FNV-1a of the canonical JSON dump.
std::string spec_hash(const ModelSpec& spec);

/// Spatial extents after every encoder stage for an input of extent `in`.
std::vector<std::array<std::size_t, 3>> encoder_extents(const ModelSpec& spec, std::array<std::size_t, 3> in);
/// [N, out_channels, D, H, W] for an [N, in_channels, D, H, W] input.
ad::Shape output_shape(const ModelSpec& spec, const ad::Shape& input);

template <class T>
struct Parameter {
  std::string name;
  ad::Tensor<T> tensor;
  std::string stage_tag;
  bool trainable = true;
};

/// Named parameters in construction order. Tensors require grad exactly when
/// trainable, so frozen stages skip their weight gradients.
template <class T>
class ParameterSet {
 public:
  void add(std::string name, ad::Tensor<T> tensor, std::string stage_tag);

  std::size_t size() const { return params_.size(); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Parameter<T>& at(std::size_t i) { return params_.at(i); }
  const Parameter<T>& at(std::size_t i) const { return params_.at(i); }
  const ad::Tensor<T>& get(const std::string& name) const;
  Parameter<T>& param(const std::string& name);

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::set<std::string> tags() const;
  std::set<std::string> names() const;
  /// Throws UnknownTag if any tag is absent.
  void set_trainable(const std::set<std::string>& tags, bool trainable);
  /// Trainable exactly for the given tags.
  void set_trainable_only(const std::set<std::string>& tags);
  std::set<std::string> trainable_tags() const;
  std::size_t numel() const;

  void zero_grad();
  /// Deep copy (no gradients).
  ParameterSet clone() const;

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <class T>
class Model {
 public:
  Model() = default;
  Model(ModelSpec spec, ParameterSet<T> params);

  /// He-normal conv weights, per-parameter streams derived from seed and name.
  static Model build(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  /// [N,1,D,H,W] -> logits of the same shape.
  ad::Tensor<T> forward(ad::Tape<T>& tape, const ad::Tensor<T>& input) const;

  /// Deep copy, optionally in another precision.
  template <class U>
  Model<U> cast() const;

 private:
  ad::Tensor<T> conv_norm_act(ad::Tape<T>& tape, const ad::Tensor<T>& x, const std::string& conv,
                              const std::string& norm, std::array<std::size_t, 3> stride, std::size_t pad,
                              std::size_t groups, bool act) const;
  ad::Tensor<T> activate(ad::Tape<T>& tape, const ad::Tensor<T>& x) const;

  ModelSpec spec_;
  ParameterSet<T> params_;
};

/// Copies every parameter of source into a model with the same name/shape
/// set; with reinit_head the head tag is re-drawn from seed. Throws
/// SpecMismatch.
Model<float> transfer_weights(const Model<float>& source, const Model<float>& target, bool reinit_head,
                              std::uint64_t seed);

/// `<base>.manifest.json` + `<base>.weights.raw` (little-endian float32).
void save_checkpoint(const Model<float>& model, const std::filesystem::path& base);
Model<float> load_checkpoint(const std::filesystem::path& base);
std::filesystem::path checkpoint_manifest_path(const std::filesystem::path& base);
std::filesystem::path checkpoint_payload_path(const std::filesystem::path& base);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class Model<float>;
extern template class Model<double>;

}  // namespace c2w::net
