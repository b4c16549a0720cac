#include "add/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace add {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'D', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  const std::uint64_t hi = get_u32(is);
  return lo | (hi << 32);
}

}  // namespace

void save_checkpoint(const std::string& path, const RunConfig& cfg,
                     const StudentParams& student, ModelRole role) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 8);
  put_u32(os, kVersion);
  os.put(static_cast<char>(role));

  const std::string cfg_text = serialize_config(cfg);
  put_u32(os, static_cast<std::uint32_t>(cfg_text.size()));
  os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

  const auto named = student.named_tensors();
  put_u32(os, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, tensor] : named) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(tensor->rank()));
    for (std::size_t i = 0; i < tensor->rank(); ++i) put_u64(os, tensor->extent(i));
    for (double v : tensor->data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      put_u64(os, bits);
    }
  }
  if (!os) throw FormatError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError("bad checkpoint magic: " + path);
  }
  const std::uint32_t version = get_u32(is);
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const int role_byte = is.get();
  if (role_byte != 0 && role_byte != 1) throw FormatError("bad role byte in checkpoint");

  const std::uint32_t cfg_len = get_u32(is);
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), cfg_len);
  if (!is) throw FormatError("checkpoint truncated in config block");

  LoadedCheckpoint out;
  try {
    out.cfg = parse_config_text(cfg_text);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("embedded config invalid: ") + e.what());
  }
  out.role = static_cast<ModelRole>(role_byte);
  out.student = init_student(out.cfg.harness);

  auto named = out.student.named_tensors();
  const std::uint32_t n = get_u32(is);
  if (n != named.size()) throw FormatError("checkpoint tensor count mismatch");
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw FormatError("checkpoint truncated in tensor name");
    Tensor* target = nullptr;
    for (auto& [nm, ptr] : named) {
      if (nm == name) target = ptr;
    }
    if (!target) throw FormatError("unknown tensor in checkpoint: " + name);
    const std::uint32_t rank = get_u32(is);
    if (rank != target->rank()) throw FormatError("rank mismatch for tensor " + name);
    for (std::uint32_t d = 0; d < rank; ++d) {
      if (get_u64(is) != target->extent(d)) {
        throw FormatError("shape mismatch for tensor " + name);
      }
    }
    for (double& v : target->data()) {
      const std::uint64_t bits = get_u64(is);
      std::memcpy(&v, &bits, 8);
    }
  }
  return out;
}

}  // namespace add
