#include "dpnse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "dpnse/errors.hpp"
#include "dpnse/rng.hpp"

namespace dpnse {

const std::vector<std::string>& canonical_classes() {
  static const std::vector<std::string> names = {"COVID-19", "Normal", "Pneumonia Bacterial",
                                                 "Pneumonia Viral"};
  return names;
}

DatasetManifest read_manifest(const std::filesystem::path& path,
                              const std::vector<std::string>& class_names) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open manifest " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  m.class_names = class_names;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw io_error(path.string() + ":" + std::to_string(line_no) +
                     ": expected `path<TAB>class`");
    }
    const std::string rel = line.substr(0, tab), name = line.substr(tab + 1);
    auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end()) {
      throw config_error(path.string() + ":" + std::to_string(line_no) + ": unknown class `" +
                         name + "`");
    }
    if (!std::filesystem::exists(m.root / rel)) {
      throw io_error(path.string() + ":" + std::to_string(line_no) + ": missing file " +
                     (m.root / rel).string());
    }
    m.entries.push_back({rel, static_cast<int>(it - class_names.begin())});
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path.string() + " for writing");
  for (const auto& e : manifest.entries) {
    os << e.path << '\t' << manifest.class_names.at(static_cast<std::size_t>(e.label)) << '\n';
  }
  if (!os) throw io_error("failed writing " + path.string());
}

std::vector<Sample> load_samples(const DatasetManifest& manifest) {
  std::vector<Sample> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) out.push_back({read_pnm(manifest.root / e.path), e.label});
  return out;
}

Split stratified_split(const DatasetManifest& manifest, double train_fraction,
                       std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw config_error("train fraction must be in (0,1]");
  }
  Split split;
  for (std::size_t c = 0; c < manifest.class_names.size(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
      if (manifest.entries[i].label == static_cast<int>(c)) members.push_back(i);
    if (members.empty()) continue;
    Rng rng = Rng::stream(seed, 0x5EED0000u + c);
    for (std::size_t i = members.size(); i > 1; --i)
      std::swap(members[i - 1], members[rng.below(i)]);
    const auto n_train = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size()))));
    for (std::size_t i = 0; i < members.size(); ++i)
      (i < n_train ? split.train : split.heldout).push_back(members[i]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.heldout.begin(), split.heldout.end());
  return split;
}

DatasetManifest subset(const DatasetManifest& manifest, std::span<const std::size_t> indices) {
  DatasetManifest out;
  out.root = manifest.root;
  out.class_names = manifest.class_names;
  for (auto i : indices) out.entries.push_back(manifest.entries.at(i));
  return out;
}

SynthSample synth_sample(int label, std::size_t size, std::uint64_t seed, std::uint64_t index) {
  if (label < 0 || label > 3) throw input_error("synth: label must be in [0,4)");
  if (size < 16) throw input_error("synth: image size must be >= 16");
  Rng rng = Rng::stream(seed, (static_cast<std::uint64_t>(label) << 32) | index);
  const double s = static_cast<double>(size);
  SynthSample out;
  out.label = label;
  out.image = Image(size, size, 1);

  const double theta = label * std::numbers::pi / 4.0;
  const double period = rng.uniform(7.0, 10.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ct = std::cos(theta), st = std::sin(theta);

  const double qy = (label / 2 == 0) ? 0.3 : 0.7;
  const double qx = (label % 2 == 0) ? 0.3 : 0.7;
  out.blob_y = qy * s + rng.uniform(-s / 16.0, s / 16.0);
  out.blob_x = qx * s + rng.uniform(-s / 16.0, s / 16.0);
  out.blob_sigma = s / 12.0;
  const double amp = rng.uniform(0.45, 0.6);

  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double fy = static_cast<double>(y), fx = static_cast<double>(x);
      const double stripe =
          0.08 * std::sin(2.0 * std::numbers::pi * (fx * ct + fy * st) / period + phase);
      const double dy = fy - out.blob_y, dx = fx - out.blob_x;
      const double blob =
          amp * std::exp(-(dx * dx + dy * dy) / (2.0 * out.blob_sigma * out.blob_sigma));
      const double v = 0.2 + stripe + blob + 0.03 * rng.normal();
      out.image.at(y, x) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

DatasetManifest write_synthetic_dataset(const std::filesystem::path& out_dir,
                                        const SynthOptions& options) {
  if (options.n_per_class == 0) throw input_error("synth: n_per_class must be >= 1");
  static const char* slugs[] = {"covid19", "normal", "pneumonia_bacterial", "pneumonia_viral"};
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create " + out_dir.string() + ": " + ec.message());
  DatasetManifest manifest;
  manifest.root = out_dir;
  for (int c = 0; c < 4; ++c) {
    std::filesystem::create_directories(out_dir / slugs[c], ec);
    if (ec) throw io_error("cannot create " + (out_dir / slugs[c]).string() + ": " + ec.message());
    for (std::size_t i = 0; i < options.n_per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%04zu.pgm", i);
      const std::string rel = std::string(slugs[c]) + "/" + name;
      write_pnm(out_dir / rel, synth_sample(c, options.size, options.seed, i).image);
      manifest.entries.push_back({rel, c});
    }
  }
  write_manifest(out_dir / "manifest.tsv", manifest);
  return manifest;
}

}  // namespace dpnse
