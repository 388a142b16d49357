#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "dpnse/augment.hpp"
#include "dpnse/lime.hpp"
#include "dpnse/net.hpp"
#include "dpnse/train.hpp"

namespace dpnse {

/// Flat `dotted.key = value` text. One entry per line, `#` starts a comment,
/// blank lines are ignored. Keys are identifiers joined by dots, each
/// optionally indexed (`model.stages[2].k`). Duplicate keys are an error.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

struct RunConfig {
  DpnSeConfig model;
  AugmentConfig augment;
  TrainSettings train;
  LimeConfig lime;
};

/// Defaults: toy model at 64x64 input, mild augmentation ranges, and the LIME
/// settings g=8, 1000 samples, sigma 0.25, lambda 1e-3, top 10.
RunConfig default_run_config();

/// Applies `model.preset` first, then every other key. Unknown keys and
/// malformed values raise config_error.
RunConfig run_config_from(const KeyValueConfig& kv);

/// Canonical text form; parsing it back yields the same RunConfig.
std::string run_config_text(const RunConfig& cfg);

}  // namespace dpnse
