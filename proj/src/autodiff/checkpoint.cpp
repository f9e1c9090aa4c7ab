#include "deepsum/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace deepsum {
namespace {

constexpr char kMagic[8] = {'D', 'S', 'U', 'M', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw CheckpointError("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void ParameterSet::add(std::string name, Tensor tensor) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  entries_.emplace_back(std::move(name), std::move(tensor));
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

const Tensor& ParameterSet::at(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return e.second;
  }
  throw std::out_of_range("no parameter named " + name);
}

Tensor& ParameterSet::at(const std::string& name) {
  for (auto& e : entries_) {
    if (e.first == name) return e.second;
  }
  throw std::out_of_range("no parameter named " + name);
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::vector<Tensor> ParameterSet::tensors_with_prefix(const std::string& prefix) const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) {
    if (e.first.rfind(prefix, 0) == 0) out.push_back(e.second);
  }
  return out;
}

std::size_t ParameterSet::assign_from(const ParameterSet& other, const std::string& prefix) {
  std::size_t copied = 0;
  for (auto& [name, tensor] : entries_) {
    if (name.rfind(prefix, 0) != 0 || !other.contains(name)) continue;
    const Tensor& src = other.at(name);
    if (src.shape() != tensor.shape()) {
      throw CheckpointError("parameter " + name + " has shape " + shape_str(src.shape()) + ", expected " +
                            shape_str(tensor.shape()));
    }
    auto dst = tensor.mutable_values();
    std::copy(src.values().begin(), src.values().end(), dst.begin());
    ++copied;
  }
  return copied;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params.entries()) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) put_le<std::uint64_t>(os, d);
    for (double v : tensor.values()) put_le<double>(os, v);
  }
  if (!os) throw CheckpointError("failed writing checkpoint " + path.string());
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint file");
  }
  const auto version = get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(is);
  ParameterSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get_le<std::uint32_t>(is);
    if (name_len > 4096) throw CheckpointError("corrupt checkpoint entry name");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw CheckpointError("truncated checkpoint");
    const auto rank = get_le<std::uint32_t>(is);
    if (rank == 0 || rank > 8) throw CheckpointError("corrupt rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get_le<std::uint64_t>(is));
    std::vector<double> values(numel(shape));
    for (double& v : values) v = get_le<double>(is);
    params.add(std::move(name), Tensor::parameter(std::move(shape), std::move(values)));
  }
  return params;
}

}  // namespace deepsum
