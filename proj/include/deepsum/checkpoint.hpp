#pragma once

// Flat parameter container and its on-disk form.
//
// File layout (all integers little-endian):
//   magic      8 bytes  "DSUMCKPT"
//   version    u32      kCheckpointVersion
//   count      u32      number of entries
//   entries    count times:
//     name_len u32, name bytes (UTF-8, no terminator)
//     rank     u32, dims u64 x rank
//     payload  f64 x product(dims), IEEE-754 little-endian
// Entries are written in insertion order, so identical parameter sets give
// byte-identical files.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "deepsum/errors.hpp"
#include "deepsum/tensor.hpp"

namespace deepsum {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

/// Insertion-ordered map from parameter path ("sisr/conv0/kernel") to tensor.
class ParameterSet {
 public:
  void add(std::string name, Tensor tensor);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  /// Tensors whose names start with prefix.
  std::vector<Tensor> tensors_with_prefix(const std::string& prefix) const;

  /// Copies values of every entry present in both sets (shapes must match).
  /// Returns the number of entries copied.
  std::size_t assign_from(const ParameterSet& other, const std::string& prefix = "");

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
/// Loaded tensors are trainable leaves.
ParameterSet load_checkpoint(const std::filesystem::path& path);

}  // namespace deepsum
