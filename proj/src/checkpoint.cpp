#include "spseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace spseg {

static_assert(std::endian::native == std::endian::little, "checkpoint io assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'P', 'S', 'E', 'G', 'C', 'K', '1'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw std::runtime_error(path + ": truncated checkpoint at byte " + std::to_string(static_cast<long long>(in.gcount())));
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.cols()));
    out.write(reinterpret_cast<const char*>(t.value.data()),
              static_cast<std::streamsize>(t.value.size() * static_cast<Eigen::Index>(sizeof(double))));
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error(path + ": not a checkpoint file");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = get<std::uint32_t>(in, path);
  std::vector<NamedTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = get<std::uint32_t>(in, path);
    if (len > 4096) throw std::runtime_error(path + ": implausible tensor name length");
    t.name.resize(len);
    if (!in.read(t.name.data(), len)) throw std::runtime_error(path + ": truncated tensor name");
    const auto rows = get<std::uint64_t>(in, path);
    const auto cols = get<std::uint64_t>(in, path);
    if (rows > (1ULL << 32) || cols > (1ULL << 32)) throw std::runtime_error(path + ": implausible tensor shape");
    t.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const auto bytes = static_cast<std::streamsize>(rows * cols * sizeof(double));
    if (!in.read(reinterpret_cast<char*>(t.value.data()), bytes))
      throw std::runtime_error(path + ": truncated data for tensor " + t.name);
    tensors.push_back(std::move(t));
  }
  return tensors;
}

const RowMatrix& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw std::runtime_error("checkpoint has no tensor '" + name + "'");
}

}  // namespace spseg
