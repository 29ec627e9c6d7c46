#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace ser::nn {

enum class LayerKind { kConv, kRelu, kMaxPool, kFc };

std::string to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::string name;
  int out_channels = 0;  // conv
  int kernel = 0;        // conv, maxpool
  int stride = 1;        // conv, maxpool
  int pad = 0;           // conv
  int out_features = 0;  // fc

  static LayerSpec conv(std::string name, int out, int k, int s, int p);
  static LayerSpec relu(std::string name);
  static LayerSpec maxpool(std::string name, int k, int s);
  static LayerSpec fc(std::string name, int out);

  bool has_params() const {
    return kind == LayerKind::kConv || kind == LayerKind::kFc;
  }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct InputSpec {
  int channels = 1;
  int height = 256;
  int width = 256;
  int crop = 0;  // center crop to crop x crop when > 0
  int effective_height() const { return crop > 0 ? crop : height; }
  int effective_width() const { return crop > 0 ? crop : width; }
  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

struct ModelConfig {
  InputSpec input;
  std::vector<LayerSpec> layers;
  int num_classes = 0;

  // Per-sample activation shape after every layer ({C,H,W} or {F}); throws
  // UsageError when consecutive layers do not compose or the final fc width
  // differs from num_classes.
  std::vector<std::vector<int>> infer_shapes() const;
  void validate() const { infer_shapes(); }

  int count(LayerKind k) const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// AlexNet-style topology: C1 P1 C2 P2 C3 C4 C5 P5 F6 F7 F8, ReLU after every
// conv and fc except F8. Widths are AlexNet's scaled by width_scale (rounded
// up). A 256x256 input is center-cropped to 227x227.
ModelConfig build_alexnet_like(int num_classes, double width_scale,
                               int input_channels, int input_size = 256);

// One conv + relu + fc; used by the gradient checker.
ModelConfig build_tiny_model(int num_classes, int input_size = 8,
                             int channels = 3);

}  // namespace ser::nn
