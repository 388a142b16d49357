#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dpnse/image.hpp"
#include "dpnse/train.hpp"

namespace dpnse {

/// Canonical class order; index 0 is the positive class for reporting.
const std::vector<std::string>& canonical_classes();

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  int label = 0;
};

/// Text form: one `relative/path<TAB>class_name` line per entry, LF endings.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> class_names = canonical_classes();
  std::vector<ManifestEntry> entries;
};

/// Class names must belong to `class_names`; every referenced file must exist.
DatasetManifest read_manifest(const std::filesystem::path& path,
                              const std::vector<std::string>& class_names = canonical_classes());
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

std::vector<Sample> load_samples(const DatasetManifest& manifest);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> heldout;
};

/// Per class, a seeded shuffle followed by round(fraction * count) training
/// entries (at least one when the class is non-empty).
Split stratified_split(const DatasetManifest& manifest, double train_fraction,
                       std::uint64_t seed);
DatasetManifest subset(const DatasetManifest& manifest, std::span<const std::size_t> indices);

struct SynthSample {
  Image image;
  int label = 0;
  double blob_y = 0.0;
  double blob_x = 0.0;
  double blob_sigma = 0.0;
};

/// Grayscale size x size image: dim noisy background, stripes oriented at
/// label * 45 degrees, and a bright Gaussian blob in a class-specific quadrant.
SynthSample synth_sample(int label, std::size_t size, std::uint64_t seed, std::uint64_t index);

struct SynthOptions {
  std::size_t n_per_class = 50;
  std::size_t size = 64;
  std::uint64_t seed = 0;
};

/// Writes PGM files under out_dir/<class slug>/ plus out_dir/manifest.tsv and
/// returns the manifest.
DatasetManifest write_synthetic_dataset(const std::filesystem::path& out_dir,
                                        const SynthOptions& options);

}  // namespace dpnse
