#include "dpnse/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "dpnse/errors.hpp"

namespace dpnse {

void validate_image(const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw input_error("image must have 1 or 3 channels, got " + std::to_string(img.channels));
  }
  if (img.height == 0 || img.width == 0) throw input_error("image is empty");
  if (img.pixels.size() != img.height * img.width * img.channels) {
    throw input_error("image buffer does not match its dimensions");
  }
  for (double v : img.pixels) {
    if (!(v >= 0.0 && v <= 1.0)) throw input_error("image value outside [0,1]");
  }
}

namespace {

// Next header integer, skipping whitespace and '#' comments.
std::size_t read_header_int(std::istream& is, const std::filesystem::path& path) {
  int ch = is.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = is.get();
    } else if (std::isspace(ch)) {
      ch = is.get();
    } else {
      break;
    }
  }
  if (ch == EOF || !std::isdigit(ch)) throw io_error(path.string() + ": malformed PNM header");
  std::size_t v = 0;
  while (ch != EOF && std::isdigit(ch)) {
    v = v * 10 + static_cast<std::size_t>(ch - '0');
    ch = is.get();
  }
  // ch is the single whitespace byte that terminates the token
  return v;
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open image " + path.string());
  char magic[2] = {};
  is.read(magic, 2);
  if (is.gcount() != 2 || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw io_error(path.string() + ": only binary PGM (P5) and PPM (P6) are supported");
  }
  const std::size_t channels = magic[1] == '5' ? 1 : 3;
  const std::size_t width = read_header_int(is, path);
  const std::size_t height = read_header_int(is, path);
  const std::size_t maxval = read_header_int(is, path);
  if (width == 0 || height == 0) throw io_error(path.string() + ": zero-sized image");
  if (maxval == 0 || maxval > 255) {
    throw io_error(path.string() + ": unsupported maxval " + std::to_string(maxval));
  }
  std::string raw(width * height * channels, '\0');
  is.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (is.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw io_error(path.string() + ": truncated pixel data");
  }
  Image img(height, width, channels);
  const auto denom = static_cast<double>(maxval);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    img.pixels[i] = std::min(1.0, static_cast<unsigned char>(raw[i]) / denom);
  }
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw input_error("write_pnm: need 1 or 3 channels");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path.string() + " for writing");
  os << (img.channels == 1 ? "P5" : "P6") << '\n'
     << img.width << ' ' << img.height << "\n255\n";
  std::string raw(img.pixels.size(), '\0');
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 1.0);
    raw[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  os.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!os) throw io_error("failed writing " + path.string());
}

Image to_grayscale(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.height, img.width, 1);
  for (std::size_t i = 0; i < img.height * img.width; ++i) {
    const double* p = &img.pixels[i * 3];
    out.pixels[i] = std::clamp(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2], 0.0, 1.0);
  }
  return out;
}

}  // namespace dpnse
