#include "prognosis/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "prognosis/error.hpp"

namespace prognosis {

namespace {

constexpr char kMagic[4] = {'M', 'I', 'L', 'W'};

template <typename U>
void put_le(std::ostream& out, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw FormatError("checkpoint truncated");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const NamedTensors& tensors) {
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, tensors.size());
  for (const auto& [name, tensor] : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (auto d : tensor.shape()) put_le<std::uint64_t>(out, d);
    for (double v : tensor.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw Error("failed writing checkpoint");
}

NamedTensors read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("not a parameter checkpoint (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<std::uint64_t>(in);
  NamedTensors out;
  for (std::uint64_t t = 0; t < count; ++t) {
    const auto len = get_le<std::uint32_t>(in);
    if (len > (1u << 16)) throw FormatError("checkpoint tensor name too long");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("checkpoint truncated");
    const auto rank = get_le<std::uint32_t>(in);
    if (rank == 0 || rank > 8) throw FormatError("checkpoint tensor '" + name + "' has bad rank");
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(get_le<std::uint64_t>(in));
      if (d == 0 || d > (1u << 26)) throw FormatError("checkpoint tensor '" + name + "' has bad dims");
      numel *= d;
    }
    if (numel > (1u << 28)) throw FormatError("checkpoint tensor '" + name + "' too large");
    std::vector<double> values(numel);
    for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
    if (!out.emplace(name, Tensor(std::move(shape), std::move(values))).second) {
      throw FormatError("duplicate tensor '" + name + "' in checkpoint");
    }
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_checkpoint(out, tensors);
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace prognosis
