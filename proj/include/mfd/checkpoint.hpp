#pragma once

// Model checkpoint (.mfd) layout:
//   bytes 0..3   magic "MFD1"
//   bytes 4..7   header length N, unsigned 32-bit little-endian
//   next N bytes UTF-8 JSON header: format version, element type, input
//                shape, layer list with parameter shapes, class order,
//                total parameter count, free-form training metadata
//   remainder    parameter blobs, IEEE-754 float64 little-endian, in header
//                order (per layer: kernel/weights, then bias)

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfd/error.hpp"
#include "mfd/image_io.hpp"
#include "mfd/mask_class.hpp"
#include "mfd/network.hpp"

namespace mfd {

inline constexpr char kCheckpointMagic[4] = {'M', 'F', 'D', '1'};
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json shape_json(const Shape& s) { return nlohmann::json(s); }

inline Shape json_shape(const nlohmann::json& j) {
  Shape s = j.get<Shape>();
  if (s.empty() || std::find(s.begin(), s.end(), 0u) != s.end())
    throw CorruptionError("checkpoint: invalid shape in header");
  return s;
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

inline double get_f64(const std::uint8_t* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline nlohmann::json architecture_json(const Network<double>& net) {
  nlohmann::json layers = nlohmann::json::array();
  const auto names = net.layer_names();
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    nlohmann::json lj;
    lj["name"] = names[i];
    if (auto* c = std::get_if<ConvLayer<double>>(&l)) {
      lj["type"] = "Conv2D";
      lj["activation"] = to_string(c->activation);
      lj["params"] = {{{"name", "kernel"}, {"shape", detail::shape_json(c->params.kernel.shape())}},
                      {{"name", "bias"}, {"shape", detail::shape_json(c->params.bias.shape())}}};
    } else if (auto* d = std::get_if<DenseLayer<double>>(&l)) {
      lj["type"] = "Dense";
      lj["activation"] = to_string(d->activation);
      lj["params"] = {{{"name", "weights"}, {"shape", detail::shape_json(d->params.weights.shape())}},
                      {{"name", "bias"}, {"shape", detail::shape_json(d->params.bias.shape())}}};
    } else {
      lj["type"] = std::holds_alternative<PoolLayer>(l) ? "MaxPooling2D" : "Flatten";
      lj["params"] = nlohmann::json::array();
    }
    layers.push_back(lj);
  }
  return layers;
}

// Serializes to the in-memory checkpoint byte layout.
inline std::vector<std::uint8_t> encode_checkpoint(const Network<double>& net,
                                                   const nlohmann::json& metadata = nlohmann::json::object()) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["element_type"] = "float64";
  header["byte_order"] = "little";
  header["input_shape"] = net.input_shape();
  header["layers"] = architecture_json(net);
  header["total_params"] = net.param_count();
  nlohmann::json classes = nlohmann::json::array();
  for (auto c : kAllClasses) classes.push_back(std::string(class_name(c)));
  header["classes"] = classes;
  header["metadata"] = metadata;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + 8 * net.param_count());
  for (const auto* p : net.parameters())
    for (double v : p->values()) detail::put_f64(out, v);
  return out;
}

struct Checkpoint {
  Network<double> network;
  nlohmann::json metadata;
  nlohmann::json header;
};

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "softmax") return Activation::softmax;
  if (s == "linear") return Activation::linear;
  throw CorruptionError("checkpoint: unknown activation '" + s + "'");
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic bytes (not an MFD1 file)");
  if (bytes.size() < 8) throw CorruptionError("checkpoint: truncated header length");
  std::uint32_t hlen = 0;
  for (int i = 0; i < 4; ++i) hlen |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
  if (bytes.size() - 8 < hlen) throw CorruptionError("checkpoint: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("checkpoint: unreadable header: ") + e.what());
  }

  Checkpoint ck;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion)
      throw VersionError("checkpoint: format version " + std::to_string(version) +
                         " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    if (header.at("element_type") != "float64")
      throw FormatError("checkpoint: unsupported element type");
    const auto& classes = header.at("classes");
    if (classes.size() != kNumClasses) throw FormatError("checkpoint: class list mismatch");
    for (std::size_t i = 0; i < kNumClasses; ++i)
      if (classes[i].get<std::string>() != class_name(class_from_ordinal(i)))
        throw FormatError("checkpoint: class order differs from correct_mask, incorrect_mask, without_mask");

    const Shape input = detail::json_shape(header.at("input_shape"));
    if (input.size() != 3) throw CorruptionError("checkpoint: input shape must be H,W,C");

    std::size_t total = 0;
    std::vector<Layer<double>> layers;
    for (const auto& lj : header.at("layers")) {
      const std::string type = lj.at("type");
      auto param = [&](std::size_t i) {
        Shape s = detail::json_shape(lj.at("params").at(i).at("shape"));
        total += shape_size(s);
        return Tensor<double>(std::move(s));
      };
      if (type == "Conv2D") {
        auto k = param(0);
        auto b = param(1);
        if (k.rank() != 4 || b.rank() != 1 || b.dim(0) != k.dim(3))
          throw CorruptionError("checkpoint: inconsistent Conv2D parameter shapes");
        layers.push_back(ConvLayer<double>{{std::move(k), std::move(b)}, parse_activation(lj.at("activation"))});
      } else if (type == "Dense") {
        auto w = param(0);
        auto b = param(1);
        if (w.rank() != 2 || b.rank() != 1 || b.dim(0) != w.dim(1))
          throw CorruptionError("checkpoint: inconsistent Dense parameter shapes");
        layers.push_back(DenseLayer<double>{{std::move(w), std::move(b)}, parse_activation(lj.at("activation"))});
      } else if (type == "MaxPooling2D") {
        layers.push_back(PoolLayer{});
      } else if (type == "Flatten") {
        layers.push_back(FlattenLayer{});
      } else {
        throw CorruptionError("checkpoint: unknown layer type '" + type + "'");
      }
    }
    if (layers.empty() || !std::holds_alternative<DenseLayer<double>>(layers.back()))
      throw CorruptionError("checkpoint: network must end in a Dense layer");
    if (header.at("total_params").get<std::size_t>() != total)
      throw CorruptionError("checkpoint: total_params disagrees with layer shapes");
    if (bytes.size() - 8 - hlen != 8 * total)
      throw CorruptionError("checkpoint: parameter section is " + std::to_string(bytes.size() - 8 - hlen) +
                            " bytes, header describes " + std::to_string(8 * total));

    ck.network = Network<double>(input, std::move(layers));
    // Shape chain must be consistent with the declared input.
    Shape s{1, input[0], input[1], input[2]};
    for (const auto& l : ck.network.layers()) {
      if (auto* c = std::get_if<ConvLayer<double>>(&l)) {
        if (s.size() != 4 || c->params.in_channels() != s[3] || s[1] < c->params.kh() || s[2] < c->params.kw())
          throw CorruptionError("checkpoint: Conv2D layer does not fit its input");
        s = {1, s[1] - c->params.kh() + 1, s[2] - c->params.kw() + 1, c->params.out_channels()};
      } else if (std::holds_alternative<PoolLayer>(l)) {
        if (s.size() != 4 || s[1] < 2 || s[2] < 2) throw CorruptionError("checkpoint: pooling layer does not fit its input");
        s = {1, s[1] / 2, s[2] / 2, s[3]};
      } else if (std::holds_alternative<FlattenLayer>(l)) {
        s = {1, shape_size(s)};
      } else {
        const auto& d = std::get<DenseLayer<double>>(l);
        if (s.size() != 2 || d.params.in_features() != s[1])
          throw CorruptionError("checkpoint: Dense layer does not fit its input");
        s = {1, d.params.out_features()};
      }
    }
    if (s[1] != kNumClasses) throw CorruptionError("checkpoint: output width is not the class count");
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("checkpoint: malformed header: ") + e.what());
  }

  const std::uint8_t* blob = bytes.data() + 8 + hlen;
  for (auto* p : ck.network.parameters())
    for (auto& v : p->values()) {
      v = detail::get_f64(blob);
      blob += 8;
    }
  ck.metadata = header.value("metadata", nlohmann::json::object());
  ck.header = std::move(header);
  return ck;
}

// Writes to a temporary sibling and renames it into place.
inline void save_model(const Network<double>& net, const fs::path& path,
                       const nlohmann::json& metadata = nlohmann::json::object()) {
  const auto bytes = encode_checkpoint(net, metadata);
  fs::path tmp = path;
  tmp += ".tmp";
  write_file_bytes(tmp, bytes);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot move checkpoint into '" + path.string() + "': " + ec.message());
  }
}

inline Checkpoint load_checkpoint(const fs::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

inline Network<double> load_model(const fs::path& path) { return load_checkpoint(path).network; }

}  // namespace mfd
