#include "dpnse/serialize.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "dpnse/errors.hpp"

namespace dpnse {

namespace {

constexpr std::size_t kMagicLen = sizeof(kModelMagic) - 1;
// Guards against reading garbage as a gigantic allocation.
constexpr std::uint64_t kMaxRank = 16;
constexpr std::uint64_t kMaxName = 4096;

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), 8);
}

bool get_u64(std::istream& is, std::uint64_t& v) {
  std::array<unsigned char, 8> b{};
  is.read(reinterpret_cast<char*>(b.data()), 8);
  if (is.gcount() != 8) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return true;
}

std::uint64_t need_u64(std::istream& is, const char* what) {
  std::uint64_t v = 0;
  if (!get_u64(is, v)) throw io_error(std::string("model file truncated reading ") + what);
  return v;
}

}  // namespace

void save_tensors(std::ostream& os, std::span<const NamedTensor> tensors) {
  os.write(kModelMagic, kMagicLen);
  for (const auto& [name, t] : tensors) {
    put_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(os, t.rank());
    for (auto d : t.shape()) put_u64(os, d);
    for (double v : t.data()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw io_error("failed writing model stream");
}

std::vector<NamedTensor> load_tensors(std::istream& is) {
  std::array<char, kMagicLen> magic{};
  is.read(magic.data(), kMagicLen);
  if (is.gcount() != static_cast<std::streamsize>(kMagicLen) ||
      std::memcmp(magic.data(), kModelMagic, kMagicLen) != 0) {
    throw io_error("not a DPNSE01 model file");
  }
  std::vector<NamedTensor> out;
  std::uint64_t name_len = 0;
  while (get_u64(is, name_len)) {
    if (name_len > kMaxName) throw io_error("model file: implausible tensor name length");
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    if (is.gcount() != static_cast<std::streamsize>(name_len))
      throw io_error("model file truncated reading name");
    const std::uint64_t rank = need_u64(is, "rank");
    if (rank > kMaxRank) throw io_error("model file: implausible rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = need_u64(is, "dims");
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = std::bit_cast<double>(need_u64(is, "data"));
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

void save_tensors_file(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path.string() + " for writing");
  save_tensors(os, tensors);
}

std::vector<NamedTensor> load_tensors_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path.string());
  return load_tensors(is);
}

}  // namespace dpnse
