#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpdn/nn/model.hpp"

namespace qpdn::nn {

using Json = nlohmann::ordered_json;

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ParseError on characters outside the standard alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Doubles as little-endian IEEE-754 bytes, base64 encoded.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(std::string_view text);

Json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const Json& j);

/// Layer specs, weights and batchnorm running statistics.
Json sequential_to_json(Sequential& net);
Sequential sequential_from_json(const Json& j);

}  // namespace qpdn::nn
