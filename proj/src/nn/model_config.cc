#include "ser/nn/model_config.h"

#include <cmath>

#include "ser/error.h"
#include "ser/nn/kernels.h"

namespace ser::nn {

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kFc: return "fc";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "conv") return LayerKind::kConv;
  if (s == "relu") return LayerKind::kRelu;
  if (s == "maxpool") return LayerKind::kMaxPool;
  if (s == "fc") return LayerKind::kFc;
  throw DataError("unknown layer kind '" + s + "'");
}

LayerSpec LayerSpec::conv(std::string name, int out, int k, int s, int p) {
  LayerSpec l;
  l.kind = LayerKind::kConv;
  l.name = std::move(name);
  l.out_channels = out;
  l.kernel = k;
  l.stride = s;
  l.pad = p;
  return l;
}

LayerSpec LayerSpec::relu(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::kRelu;
  l.name = std::move(name);
  return l;
}

LayerSpec LayerSpec::maxpool(std::string name, int k, int s) {
  LayerSpec l;
  l.kind = LayerKind::kMaxPool;
  l.name = std::move(name);
  l.kernel = k;
  l.stride = s;
  return l;
}

LayerSpec LayerSpec::fc(std::string name, int out) {
  LayerSpec l;
  l.kind = LayerKind::kFc;
  l.name = std::move(name);
  l.out_features = out;
  return l;
}

std::vector<std::vector<int>> ModelConfig::infer_shapes() const {
  if (input.channels < 1 || input.height < 1 || input.width < 1)
    throw UsageError("model input dimensions must be positive");
  if (input.crop > 0 && (input.crop > input.height || input.crop > input.width))
    throw UsageError("model input crop exceeds input size");
  if (layers.empty()) throw UsageError("model has no layers");

  std::vector<int> cur{input.channels, input.effective_height(),
                       input.effective_width()};
  std::vector<std::vector<int>> shapes;
  auto fail = [&](const LayerSpec& l, const std::string& why) {
    return UsageError("layer '" + l.name + "' does not compose with input " +
                      shape_string(cur) + ": " + why);
  };
  for (const LayerSpec& l : layers) {
    switch (l.kind) {
      case LayerKind::kConv: {
        if (cur.size() != 3) throw fail(l, "conv after fc");
        if (l.out_channels < 1 || l.kernel < 1 || l.stride < 1 || l.pad < 0)
          throw fail(l, "bad conv parameters");
        if (cur[1] + 2 * l.pad < l.kernel || cur[2] + 2 * l.pad < l.kernel)
          throw fail(l, "kernel larger than padded input");
        cur = {l.out_channels, conv_out_dim(cur[1], l.kernel, l.stride, l.pad),
               conv_out_dim(cur[2], l.kernel, l.stride, l.pad)};
        break;
      }
      case LayerKind::kMaxPool: {
        if (cur.size() != 3) throw fail(l, "pool after fc");
        if (l.kernel < 1 || l.stride < 1) throw fail(l, "bad pool parameters");
        if (l.kernel > cur[1] || l.kernel > cur[2])
          throw fail(l, "pool kernel larger than input");
        cur = {cur[0], pool_out_dim(cur[1], l.kernel, l.stride),
               pool_out_dim(cur[2], l.kernel, l.stride)};
        break;
      }
      case LayerKind::kFc:
        if (l.out_features < 1) throw fail(l, "bad fc width");
        cur = {l.out_features};
        break;
      case LayerKind::kRelu:
        break;
    }
    shapes.push_back(cur);
  }
  const LayerSpec& last = layers.back();
  if (last.kind != LayerKind::kFc)
    throw UsageError("model must end with a fully connected layer");
  if (last.out_features != num_classes)
    throw UsageError("final fc width " + std::to_string(last.out_features) +
                     " != num_classes " + std::to_string(num_classes));
  return shapes;
}

int ModelConfig::count(LayerKind k) const {
  int n = 0;
  for (const auto& l : layers) n += l.kind == k;
  return n;
}

nlohmann::json to_json(const ModelConfig& cfg) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : cfg.layers) {
    nlohmann::json j{{"kind", to_string(l.kind)}, {"name", l.name}};
    switch (l.kind) {
      case LayerKind::kConv:
        j["out_channels"] = l.out_channels;
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["pad"] = l.pad;
        break;
      case LayerKind::kMaxPool:
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        break;
      case LayerKind::kFc:
        j["out_features"] = l.out_features;
        break;
      case LayerKind::kRelu:
        break;
    }
    layers.push_back(std::move(j));
  }
  return {{"input",
           {{"channels", cfg.input.channels},
            {"height", cfg.input.height},
            {"width", cfg.input.width},
            {"crop", cfg.input.crop}}},
          {"layers", std::move(layers)},
          {"num_classes", cfg.num_classes}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig cfg;
    const auto& in = j.at("input");
    cfg.input.channels = in.at("channels").get<int>();
    cfg.input.height = in.at("height").get<int>();
    cfg.input.width = in.at("width").get<int>();
    cfg.input.crop = in.value("crop", 0);
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
      l.name = lj.value("name", "");
      l.out_channels = lj.value("out_channels", 0);
      l.kernel = lj.value("kernel", 0);
      l.stride = lj.value("stride", 1);
      l.pad = lj.value("pad", 0);
      l.out_features = lj.value("out_features", 0);
      cfg.layers.push_back(std::move(l));
    }
    cfg.num_classes = j.at("num_classes").get<int>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad model config: ") + e.what());
  }
}

ModelConfig build_alexnet_like(int num_classes, double width_scale,
                               int input_channels, int input_size) {
  if (!(width_scale > 0.0 && width_scale <= 1.0))
    throw UsageError("width_scale must be in (0, 1]");
  if (num_classes < 2) throw UsageError("num_classes must be >= 2");
  auto width = [&](int w) {
    // The epsilon keeps e.g. 96 * (1/16) = 6.000000000000001 from rounding up.
    return std::max(1, static_cast<int>(std::ceil(w * width_scale - 1e-9)));
  };
  ModelConfig m;
  m.input = {input_channels, input_size, input_size,
             input_size == 256 ? 227 : 0};
  m.num_classes = num_classes;
  m.layers = {
      LayerSpec::conv("conv1", width(96), 11, 4, 2),
      LayerSpec::relu("relu1"),
      LayerSpec::maxpool("pool1", 3, 2),
      LayerSpec::conv("conv2", width(256), 5, 1, 2),
      LayerSpec::relu("relu2"),
      LayerSpec::maxpool("pool2", 3, 2),
      LayerSpec::conv("conv3", width(384), 3, 1, 1),
      LayerSpec::relu("relu3"),
      LayerSpec::conv("conv4", width(384), 3, 1, 1),
      LayerSpec::relu("relu4"),
      LayerSpec::conv("conv5", width(256), 3, 1, 1),
      LayerSpec::relu("relu5"),
      LayerSpec::maxpool("pool5", 3, 2),
      LayerSpec::fc("fc6", width(4096)),
      LayerSpec::relu("relu6"),
      LayerSpec::fc("fc7", width(4096)),
      LayerSpec::relu("relu7"),
      LayerSpec::fc("fc8", num_classes),
  };
  m.validate();
  return m;
}

ModelConfig build_tiny_model(int num_classes, int input_size, int channels) {
  ModelConfig m;
  m.input = {channels, input_size, input_size, 0};
  m.num_classes = num_classes;
  m.layers = {LayerSpec::conv("conv1", 4, 3, 1, 1), LayerSpec::relu("relu1"),
              LayerSpec::fc("fc2", num_classes)};
  m.validate();
  return m;
}

}  // namespace ser::nn
