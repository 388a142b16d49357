#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dpnse/tensor.hpp"

namespace dpnse {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Model file layout, all integers unsigned 64-bit little-endian:
///   "DPNSE01"
///   repeated until EOF: name_len, name bytes, rank, dims[rank], data[numel] as
///   IEEE-754 binary64 little-endian.
inline constexpr char kModelMagic[] = "DPNSE01";

void save_tensors(std::ostream& os, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> load_tensors(std::istream& is);

void save_tensors_file(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> load_tensors_file(const std::filesystem::path& path);

}  // namespace dpnse
