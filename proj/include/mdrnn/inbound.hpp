#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mdrnn/osc.hpp"
#include "mdrnn/predictor.hpp"

namespace mdrnn {

inline constexpr std::string_view kInterfaceAddress = "/interface";
inline constexpr std::string_view kPredictionAddress = "/prediction";
inline constexpr std::string_view kConfigAddress = "/config";

enum class InboundStatus { Accepted, IgnoredAddress, BadArity, BadType };

struct InboundResult {
  InboundStatus status = InboundStatus::IgnoredAddress;
  ControlEvent event;  // set when accepted
  std::string detail;  // human-readable reason otherwise
};

// Validates an interface message for a model of dimension N (N-1 values on the
// wire). Numeric arguments are narrowed to 32-bit floats, then clamped to [0,1].
InboundResult receive_interface(const OscMessage& msg, int dimension, double arrival_time);

// Live settings carried by a WebSocket `/config` frame. Absent fields are left
// unchanged.
struct ConfigFrame {
  std::optional<InteractionMode> mode;
  std::optional<double> pi_temperature;
  std::optional<double> sigma_temperature;

  bool operator==(const ConfigFrame&) const = default;
};

using GatewayFrame = std::variant<OscMessage, ConfigFrame>;

// Parses one WebSocket text frame. Throws WireError on malformed JSON or fields.
GatewayFrame parse_gateway_frame(std::string_view text);

std::string prediction_frame(const std::vector<double>& values);
std::string interface_frame(const std::vector<double>& values);
std::string config_frame(const ConfigFrame& cfg);

}  // namespace mdrnn
