#include "mdrnn/inbound.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "mdrnn/errors.hpp"

namespace mdrnn {

using nlohmann::json;

InboundResult receive_interface(const OscMessage& msg, int dimension, double arrival_time) {
  InboundResult r;
  if (msg.address != kInterfaceAddress) {
    r.status = InboundStatus::IgnoredAddress;
    r.detail = "ignoring message to " + msg.address;
    return r;
  }
  const auto expected = static_cast<std::size_t>(dimension - 1);
  if (msg.args.size() != expected) {
    r.status = InboundStatus::BadArity;
    r.detail = std::string(kInterfaceAddress) + " has " + std::to_string(msg.args.size()) +
               " arguments, expected " + std::to_string(expected);
    return r;
  }
  r.event.time = arrival_time;
  r.event.values.reserve(expected);
  for (std::size_t i = 0; i < msg.args.size(); ++i) {
    float v = 0.0f;
    if (const auto* f = std::get_if<float>(&msg.args[i])) v = *f;
    else if (const auto* d = std::get_if<double>(&msg.args[i])) v = static_cast<float>(*d);
    else if (const auto* n = std::get_if<std::int32_t>(&msg.args[i])) v = static_cast<float>(*n);
    if (std::holds_alternative<std::string>(msg.args[i]) || !std::isfinite(v)) {
      r.status = InboundStatus::BadType;
      r.detail = std::string(kInterfaceAddress) + " argument " + std::to_string(i + 1) +
                 " is not a finite number";
      r.event = {};
      return r;
    }
    r.event.values.push_back(std::clamp(static_cast<double>(v), 0.0, 1.0));
  }
  r.status = InboundStatus::Accepted;
  return r;
}

namespace {

double temperature_field(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw WireError(std::string("config field '") + key + "' must be a number");
  const double t = v.get<double>();
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw WireError(std::string("config field '") + key + "' must be finite and >= 0");
  }
  return t;
}

}  // namespace

GatewayFrame parse_gateway_frame(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw WireError(std::string("malformed JSON frame: ") + e.what());
  }
  if (!j.is_object()) throw WireError("JSON frame must be an object");
  const auto addr = j.find("address");
  if (addr == j.end() || !addr->is_string()) throw WireError("JSON frame has no string 'address'");
  const auto address = addr->get<std::string>();

  if (address == kConfigAddress) {
    ConfigFrame cfg;
    if (j.contains("mode")) {
      if (!j["mode"].is_string()) throw WireError("config field 'mode' must be a string");
      cfg.mode = parse_mode(j["mode"].get<std::string>());
      if (!cfg.mode) {
        throw WireError("unknown mode '" + j["mode"].get<std::string>() + "' (expected one of " +
                        mode_list() + ")");
      }
    }
    if (j.contains("pi_temp")) cfg.pi_temperature = temperature_field(j, "pi_temp");
    if (j.contains("sigma_temp")) cfg.sigma_temperature = temperature_field(j, "sigma_temp");
    return cfg;
  }

  OscMessage msg{address, {}};
  if (j.contains("args")) {
    const auto& args = j["args"];
    if (!args.is_array()) throw WireError("JSON frame 'args' must be an array");
    for (const auto& a : args) {
      if (a.is_number_integer()) msg.args.emplace_back(static_cast<std::int32_t>(a.get<long long>()));
      else if (a.is_number()) msg.args.emplace_back(a.get<double>());
      else if (a.is_string()) msg.args.emplace_back(a.get<std::string>());
      else throw WireError("JSON frame arguments must be numbers or strings");
    }
  }
  return msg;
}

namespace {

std::string values_frame(std::string_view address, const std::vector<double>& values) {
  json args = json::array();
  for (double v : values) args.push_back(static_cast<float>(v));
  return json{{"address", address}, {"args", args}}.dump();
}

}  // namespace

std::string prediction_frame(const std::vector<double>& values) {
  return values_frame(kPredictionAddress, values);
}

std::string interface_frame(const std::vector<double>& values) {
  return values_frame(kInterfaceAddress, values);
}

std::string config_frame(const ConfigFrame& cfg) {
  json j{{"address", kConfigAddress}};
  if (cfg.mode) j["mode"] = mode_name(*cfg.mode);
  if (cfg.pi_temperature) j["pi_temp"] = *cfg.pi_temperature;
  if (cfg.sigma_temperature) j["sigma_temp"] = *cfg.sigma_temperature;
  return j.dump();
}

}  // namespace mdrnn
