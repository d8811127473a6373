#include "qpdn/nn/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>

#include "qpdn/errors.hpp"

namespace qpdn::nn {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
  return v;
}

Json layer_to_json(Layer& layer) {
  const LayerSpec s = layer.spec();
  Json j;
  j["kind"] = std::string(to_string(s.kind));
  switch (s.kind) {
    case LayerKind::conv:
    case LayerKind::tconv:
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      [[fallthrough]];
    case LayerKind::dense:
      j["in"] = s.in_channels;
      j["out"] = s.out_channels;
      break;
    case LayerKind::batchnorm:
      j["channels"] = s.channels;
      j["momentum"] = s.momentum;
      j["epsilon"] = s.epsilon;
      break;
    default: break;
  }
  Json params = Json::object();
  for (Param* p : layer.params()) params[p->name] = tensor_to_json(p->value);
  if (!params.empty()) j["params"] = std::move(params);
  Json buffers = Json::array();
  for (Tensor* b : layer.buffers()) buffers.push_back(tensor_to_json(*b));
  if (!buffers.empty()) j["buffers"] = std::move(buffers);
  return j;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t n = bytes[i] << 16;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ParseError("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    std::array<int, 4> v{};
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && last && k >= 2) {
        ++pad;
        v[k] = 0;
        continue;
      }
      if (pad > 0) throw ParseError("base64: data after padding");
      v[k] = decode_char(c);
      if (v[k] < 0) throw ParseError("base64: invalid character");
    }
    const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(n >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n));
  }
  return out;
}

std::string encode_doubles(std::span<const double> values) {
  std::vector<std::uint8_t> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint64_t le = to_little_endian(std::bit_cast<std::uint64_t>(values[i]));
    std::memcpy(bytes.data() + 8 * i, &le, 8);
  }
  return base64_encode(bytes);
}

std::vector<double> decode_doubles(std::string_view text) {
  const std::vector<std::uint8_t> bytes = base64_decode(text);
  if (bytes.size() % 8 != 0) throw ParseError("weights: byte count is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t le = 0;
    std::memcpy(&le, bytes.data() + 8 * i, 8);
    out[i] = std::bit_cast<double>(to_little_endian(le));
  }
  return out;
}

Json tensor_to_json(const Tensor& t) {
  return Json{{"shape", t.shape()}, {"data", encode_doubles(t.values())}};
}

Tensor tensor_from_json(const Json& j) {
  try {
    auto shape = j.at("shape").get<std::vector<std::size_t>>();
    auto data = decode_doubles(j.at("data").get<std::string>());
    if (data.size() != shape_size(shape)) throw ParseError("tensor: data does not match shape");
    return Tensor(std::move(shape), std::move(data));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("tensor: ") + e.what());
  }
}

Json sequential_to_json(Sequential& net) {
  Json layers = Json::array();
  for (std::size_t i = 0; i < net.size(); ++i) layers.push_back(layer_to_json(net.layer(i)));
  return layers;
}

Sequential sequential_from_json(const Json& j) {
  if (!j.is_array()) throw ParseError("model: layer list must be an array");
  Sequential net;
  try {
    for (const Json& lj : j) {
      LayerSpec s;
      s.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
      s.kernel = lj.value("kernel", 0);
      s.stride = lj.value("stride", 1);
      s.in_channels = lj.value("in", 0);
      s.out_channels = lj.value("out", 0);
      s.channels = lj.value("channels", 0);
      s.momentum = lj.value("momentum", 0.9);
      s.epsilon = lj.value("epsilon", 1e-5);
      std::unique_ptr<Layer> layer = make_layer(s);
      for (Param* p : layer->params()) {
        Tensor t = tensor_from_json(lj.at("params").at(p->name));
        if (t.shape() != p->value.shape()) {
          throw ParseError("model: parameter '" + p->name + "' has shape " + t.shape_string() + ", expected " +
                           p->value.shape_string());
        }
        p->value = std::move(t);
      }
      const std::vector<Tensor*> buffers = layer->buffers();
      if (!buffers.empty()) {
        const Json& bj = lj.at("buffers");
        if (bj.size() != buffers.size()) throw ParseError("model: wrong number of buffers");
        for (std::size_t k = 0; k < buffers.size(); ++k) {
          Tensor t = tensor_from_json(bj[k]);
          if (t.shape() != buffers[k]->shape()) throw ParseError("model: buffer shape mismatch");
          *buffers[k] = std::move(t);
        }
      }
      net.add(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
  return net;
}

}  // namespace qpdn::nn
