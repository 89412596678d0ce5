#include "mdrnn/osc.hpp"

#include <bit>

#include "mdrnn/errors.hpp"

namespace mdrnn {
namespace {

void pad(std::string& out) {
  do out.push_back('\0');
  while (out.size() % 4 != 0);
}

void put_string(std::string& out, std::string_view s) {
  out.append(s);
  pad(out);  // always at least one terminator
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xffu));
}

void put_be64(std::string& out, std::uint64_t v) {
  put_be32(out, static_cast<std::uint32_t>(v >> 32));
  put_be32(out, static_cast<std::uint32_t>(v));
}

class Cursor {
 public:
  explicit Cursor(std::string_view p) : p_(p) {}

  std::string_view string(const char* what) {
    const auto end = p_.find('\0', at_);
    if (end == std::string_view::npos) throw WireError(std::string("OSC ") + what + " is not terminated");
    const auto s = p_.substr(at_, end - at_);
    at_ = (end + 4) & ~std::size_t{3};
    if (at_ > p_.size()) throw WireError(std::string("OSC ") + what + " padding is truncated");
    return s;
  }

  std::uint32_t be32() {
    if (p_.size() - at_ < 4) throw WireError("OSC argument data is truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(p_[at_ + i]);
    at_ += 4;
    return v;
  }

  std::uint64_t be64() {
    const std::uint64_t hi = be32();
    return (hi << 32) | be32();
  }

  bool done() const { return at_ == p_.size(); }

 private:
  std::string_view p_;
  std::size_t at_ = 0;
};

}  // namespace

std::string encode_osc(const OscMessage& msg) {
  if (msg.address.empty() || msg.address[0] != '/') {
    throw WireError("OSC address must start with '/': " + msg.address);
  }
  std::string out;
  put_string(out, msg.address);
  std::string tags = ",";
  for (const auto& a : msg.args) tags.push_back("ifds"[a.index()]);
  put_string(out, tags);
  for (const auto& a : msg.args) {
    std::visit(
        [&](const auto& v) {
          using V = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<V, std::int32_t>) put_be32(out, static_cast<std::uint32_t>(v));
          else if constexpr (std::is_same_v<V, float>) put_be32(out, std::bit_cast<std::uint32_t>(v));
          else if constexpr (std::is_same_v<V, double>) put_be64(out, std::bit_cast<std::uint64_t>(v));
          else put_string(out, v);
        },
        a);
  }
  return out;
}

std::optional<OscMessage> decode_osc(std::string_view packet) {
  if (packet.empty()) throw WireError("empty OSC packet");
  if (packet.size() % 4 != 0) throw WireError("OSC packet size is not a multiple of 4");
  if (packet.starts_with(std::string_view("#bundle\0", 8))) return std::nullopt;
  if (packet[0] != '/') throw WireError("OSC address must start with '/'");

  Cursor c(packet);
  OscMessage msg;
  msg.address = std::string(c.string("address"));
  if (c.done()) return msg;  // old-style message without a type tag string
  const auto tags = c.string("type tags");
  if (tags.empty() || tags[0] != ',') throw WireError("OSC type tag string must start with ','");
  for (char t : tags.substr(1)) {
    switch (t) {
      case 'i': msg.args.emplace_back(static_cast<std::int32_t>(c.be32())); break;
      case 'f': msg.args.emplace_back(std::bit_cast<float>(c.be32())); break;
      case 'd': msg.args.emplace_back(std::bit_cast<double>(c.be64())); break;
      case 's': msg.args.emplace_back(std::string(c.string("string argument"))); break;
      default: throw WireError(std::string("unsupported OSC type tag '") + t + "'");
    }
  }
  if (!c.done()) throw WireError("OSC packet has trailing bytes");
  return msg;
}

OscMessage float_message(std::string address, const std::vector<double>& values) {
  OscMessage m{std::move(address), {}};
  m.args.reserve(values.size());
  for (double v : values) m.args.emplace_back(static_cast<float>(v));
  return m;
}

}  // namespace mdrnn
