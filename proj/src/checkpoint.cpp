#include "mdrnn/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <zlib.h>

#include "mdrnn/errors.hpp"

namespace mdrnn {
namespace {

constexpr std::string_view kMagic = "mdrnn-checkpoint 1\n";
constexpr std::string_view kSeparator = "---\n";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large models.
  std::size_t at = 0;
  while (at < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - at, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + at), chunk);
    at += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4, "integer");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[at_ + i])) << (8 * i);
    }
    at_ += 4;
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    const auto s = bytes_.substr(at_, n);
    at_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - at_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - at_ < n) {
      throw CheckpointError(std::string("checkpoint is truncated (while reading ") + what + ")");
    }
  }

  std::string_view bytes_;
  std::size_t at_ = 0;
};

int header_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw CheckpointError("checkpoint header is missing '" + key + "'");
  long long v = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw CheckpointError("checkpoint header field '" + key + "' is not an integer: " + s);
  }
  return static_cast<int>(v);
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig& cfg = ckpt.config();
  std::ostringstream header;
  header << kMagic;
  header << "dimension = " << cfg.dimension << '\n'
         << "layers = " << cfg.layers << '\n'
         << "units = " << cfg.units << '\n'
         << "mixtures = " << cfg.mixtures << '\n'
         << "seq_len = " << cfg.seq_len << '\n'
         << "param_count = " << param_count(cfg) << '\n'
         << "epochs_run = " << ckpt.meta.epochs_run << '\n'
         << "best_val_loss = " << format_double(ckpt.meta.best_val_loss) << '\n'
         << "rng_seed = " << ckpt.meta.rng_seed << '\n'
         << kSeparator;

  std::string out = header.str();
  ckpt.weights.visit([&](const std::string& name, std::span<const float> data,
                         const std::vector<int>& shape) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  });
  put_u32(out, crc_of(out));
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (!bytes.starts_with(kMagic)) throw CheckpointError("not a checkpoint file (bad magic line)");
  if (bytes.size() < 4) throw CheckpointError("checkpoint is truncated");

  const auto sep = bytes.find(std::string("\n") + std::string(kSeparator));
  if (sep == std::string_view::npos) throw CheckpointError("checkpoint is truncated (no header end)");
  const std::string_view header = bytes.substr(kMagic.size(), sep + 1 - kMagic.size());
  std::map<std::string, std::string> kv;
  std::size_t at = 0;
  while (at < header.size()) {
    const auto nl = header.find('\n', at);
    const auto line = header.substr(at, nl - at);
    at = nl + 1;
    const auto eq = line.find(" = ");
    if (eq == std::string_view::npos) {
      throw CheckpointError("malformed checkpoint header line: " + std::string(line));
    }
    kv.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 3)));
  }

  ModelConfig cfg;
  cfg.dimension = header_int(kv, "dimension");
  cfg.layers = header_int(kv, "layers");
  cfg.units = header_int(kv, "units");
  cfg.mixtures = header_int(kv, "mixtures");
  cfg.seq_len = header_int(kv, "seq_len");
  try {
    cfg.validate();
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("checkpoint config is invalid: ") + e.what());
  }
  if (static_cast<std::size_t>(header_int(kv, "param_count")) != param_count(cfg)) {
    throw CheckpointError("checkpoint param_count does not match its architecture");
  }

  // The CRC covers everything before the final four bytes.
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  Reader tail(bytes.substr(bytes.size() - 4));
  const std::size_t binary_start = sep + 1 + kSeparator.size();

  Checkpoint ckpt;
  ckpt.weights = Weights<float>::zeros(cfg);
  ckpt.meta.epochs_run = header_int(kv, "epochs_run");
  {
    const auto& s = kv.count("best_val_loss") ? kv.at("best_val_loss") : std::string();
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), ckpt.meta.best_val_loss);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw CheckpointError("checkpoint header field 'best_val_loss' is malformed");
    }
  }
  {
    const auto& s = kv.count("rng_seed") ? kv.at("rng_seed") : std::string();
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), ckpt.meta.rng_seed);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw CheckpointError("checkpoint header field 'rng_seed' is malformed");
    }
  }

  Reader r(bytes.size() >= binary_start + 4 ? body.substr(binary_start) : std::string_view());
  std::size_t loaded = 0;
  ckpt.weights.visit([&](const std::string& name, std::span<float> data,
                         const std::vector<int>& shape) {
    const auto got_name = r.take(r.u32(), "array name");
    if (got_name != name) {
      throw CheckpointError("checkpoint array '" + std::string(got_name) + "' found where '" +
                            name + "' was expected");
    }
    const std::uint32_t rank = r.u32();
    if (rank != shape.size()) {
      throw CheckpointError("checkpoint array '" + name + "' has rank " + std::to_string(rank) +
                            ", expected " + std::to_string(shape.size()));
    }
    std::vector<int> got(rank);
    for (auto& d : got) d = static_cast<int>(r.u32());
    if (got != shape) {
      throw CheckpointError("checkpoint array '" + name + "' has a shape that does not match the "
                            "architecture in its header");
    }
    for (float& v : data) v = std::bit_cast<float>(r.u32());
    loaded += data.size();
  });
  if (r.remaining() != 0) throw CheckpointError("checkpoint has trailing bytes after its arrays");
  if (loaded != param_count(cfg)) throw CheckpointError("checkpoint weight count mismatch");
  if (tail.u32() != crc_of(body)) throw CheckpointError("checkpoint checksum mismatch (corrupt file)");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Checkpoint ckpt = parse_checkpoint(buf.str());
  const auto& c = ckpt.config();
  // seq_len only shapes training, so it is not part of the architecture check.
  if (expected && (expected->dimension != c.dimension || expected->layers != c.layers ||
                   expected->units != c.units || expected->mixtures != c.mixtures)) {
    throw CheckpointError("checkpoint architecture (dimension " + std::to_string(c.dimension) +
                          ", " + std::to_string(c.layers) + "x" + std::to_string(c.units) +
                          " units, " + std::to_string(c.mixtures) + " mixtures) does not match the "
                          "requested configuration (dimension " +
                          std::to_string(expected->dimension) + ", " +
                          std::to_string(expected->layers) + "x" + std::to_string(expected->units) +
                          " units, " + std::to_string(expected->mixtures) + " mixtures)");
  }
  return ckpt;
}

}  // namespace mdrnn
