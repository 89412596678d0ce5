#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mdrnn {

// Minimal OSC 1.0 message codec: int32 (i), float32 (f), float64 (d) and string (s)
// arguments. Bundles are recognised and skipped, not unpacked.
using OscArg = std::variant<std::int32_t, float, double, std::string>;

struct OscMessage {
  std::string address;
  std::vector<OscArg> args;

  bool operator==(const OscMessage&) const = default;
};

std::string encode_osc(const OscMessage& msg);

// Returns nullopt for bundles. Throws WireError on malformed packets.
std::optional<OscMessage> decode_osc(std::string_view packet);

OscMessage float_message(std::string address, const std::vector<double>& values);

}  // namespace mdrnn
