#include "ser/nn/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ser::nn {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'R', 'C', 'K', 'P', 'T', '\0'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(std::span<const std::uint8_t> bytes, size_t& pos) {
  if (pos + sizeof(U) > bytes.size())
    throw DataError("checkpoint truncated");
  U v = 0;
  for (size_t i = 0; i < sizeof(U); ++i) v |= U(bytes[pos + i]) << (8 * i);
  pos += sizeof(U);
  return v;
}

void put_tensor(std::vector<std::uint8_t>& out, const Tensor<float>& t) {
  for (float f : t.values()) put_le(out, std::bit_cast<std::uint32_t>(f));
}

Tensor<float> get_tensor(std::span<const std::uint8_t> bytes, size_t& pos,
                         const std::vector<int>& shape) {
  Tensor<float> t(shape);
  for (auto& f : t.values())
    f = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
  return t;
}

}  // namespace

Checkpoint make_checkpoint(const Network<float>& net, const LabelSet& labels,
                           int epoch, double input_mean,
                           const SgdState<float>* solver_state) {
  Checkpoint c;
  c.model = net.config();
  c.labels = labels;
  c.epoch = epoch;
  c.input_mean = input_mean;
  for (const auto& p : net.params()) c.params.push_back(p.value);
  if (solver_state && !solver_state->velocity.empty())
    c.momentum = solver_state->velocity;
  return c;
}

Network<float> network_from_checkpoint(const Checkpoint& ckpt) {
  Network<float> net(ckpt.model);
  auto& params = net.params();
  if (params.size() != ckpt.params.size())
    throw DataError("checkpoint has " + std::to_string(ckpt.params.size()) +
                    " parameter tensors, model expects " +
                    std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].value.shape() != ckpt.params[i].shape())
      throw DataError("checkpoint parameter " + params[i].name + " has shape " +
                      shape_string(ckpt.params[i].shape()) + ", model expects " +
                      shape_string(params[i].value.shape()));
    params[i].value = ckpt.params[i];
  }
  return net;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.momentum.empty() && ckpt.momentum.size() != ckpt.params.size())
    throw UsageError("checkpoint momentum does not match parameters");
  // Validate shapes before writing anything.
  Network<float> expected(ckpt.model);
  nlohmann::json params = nlohmann::json::array();
  for (size_t i = 0; i < ckpt.params.size(); ++i) {
    if (i >= expected.params().size() ||
        expected.params()[i].value.shape() != ckpt.params[i].shape())
      throw UsageError("checkpoint parameters do not match model config");
    params.push_back({{"name", expected.params()[i].name},
                      {"shape", ckpt.params[i].shape()}});
  }
  if (ckpt.params.size() != expected.params().size())
    throw UsageError("checkpoint parameters do not match model config");

  nlohmann::json header{{"format_version", Checkpoint::kFormatVersion},
                        {"model", to_json(ckpt.model)},
                        {"labels", ckpt.labels.names()},
                        {"epoch", ckpt.epoch},
                        {"input_mean", ckpt.input_mean},
                        {"params", params},
                        {"has_momentum", !ckpt.momentum.empty()}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, Checkpoint::kFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : ckpt.params) put_tensor(out, t);
  for (const auto& t : ckpt.momentum) put_tensor(out, t);
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a checkpoint (bad magic)");
  size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != Checkpoint::kFormatVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw DataError("checkpoint truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + pos,
                                   bytes.begin() + pos + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  pos += header_len;

  Checkpoint c;
  try {
    c.model = model_config_from_json(header.at("model"));
    c.labels = LabelSet(header.at("labels").get<std::vector<std::string>>());
    c.epoch = header.at("epoch").get<int>();
    c.input_mean = header.at("input_mean").get<double>();
    std::vector<std::vector<int>> shapes;
    for (const auto& p : header.at("params"))
      shapes.push_back(p.at("shape").get<std::vector<int>>());
    for (const auto& s : shapes) c.params.push_back(get_tensor(bytes, pos, s));
    if (header.at("has_momentum").get<bool>())
      for (const auto& s : shapes)
        c.momentum.push_back(get_tensor(bytes, pos, s));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  if (pos != bytes.size()) throw DataError("checkpoint has trailing bytes");
  network_from_checkpoint(c);  // shape check against the model config
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace ser::nn
