#include "dpnse/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "dpnse/errors.hpp"

namespace dpnse {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

const std::regex& key_pattern() {
  static const std::regex re(R"([a-z_][a-z0-9_]*(\[[0-9]+\])?(\.[a-z_][a-z0-9_]*(\[[0-9]+\])?)*)");
  return re;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& source) {
  KeyValueConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error(where + ": expected `key = value`");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!std::regex_match(key, key_pattern())) {
      throw config_error(where + ": malformed key `" + key + "`");
    }
    if (value.empty()) throw config_error(where + ": empty value for " + key);
    if (!cfg.entries_.emplace(key, value).second) {
      throw config_error(where + ": duplicate key " + key);
    }
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.model = toy_config();
  cfg.model.input_size = 64;
  return cfg;
}

namespace {

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw config_error(key + ": expected a non-negative integer, got `" + v + "`");
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

std::size_t parse_positive(const std::string& key, const std::string& v) {
  const std::size_t n = parse_size(key, v);
  if (n == 0) throw config_error(key + " must be >= 1");
  return n;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw config_error(key + ": expected a number, got `" + v + "`");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error(key + ": expected true/false, got `" + v + "`");
}

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

RunConfig run_config_from(const KeyValueConfig& kv) {
  RunConfig cfg = default_run_config();
  if (auto preset = kv.get("model.preset")) {
    if (*preset == "toy") {
      cfg.model = toy_config();
    } else if (*preset == "dpn92") {
      cfg.model = dpn92_config();
    } else {
      throw config_error("model.preset: unknown preset `" + *preset + "` (toy, dpn92)");
    }
  }
  static const std::regex stage_key(R"(model\.stages\[([0-9]+)\]\.([a-z_]+))");
  for (const auto& [key, v] : kv.entries()) {
    auto& m = cfg.model;
    std::smatch match;
    if (key == "model.preset") {
      continue;
    } else if (key == "model.input_channels") {
      m.input_channels = parse_positive(key, v);
    } else if (key == "model.input_size") {
      m.input_size = parse_positive(key, v);
    } else if (key == "model.num_classes") {
      m.num_classes = parse_positive(key, v);
    } else if (key == "model.se_enabled") {
      m.se_enabled = parse_bool(key, v);
    } else if (key == "model.se_reduction") {
      m.se_reduction = parse_positive(key, v);
    } else if (key == "model.batch_norm") {
      m.batch_norm = parse_bool(key, v);
    } else if (key == "model.bn_eps") {
      m.bn_eps = parse_double(key, v);
    } else if (key == "model.stem.out_channels") {
      m.stem.out_channels = parse_positive(key, v);
    } else if (std::regex_match(key, match, stage_key)) {
      const std::size_t idx = parse_size(key, match[1].str());
      if (idx >= m.stages.size()) {
        throw config_error(key + ": stage index out of range (model has " +
                           std::to_string(m.stages.size()) + " stages)");
      }
      auto& st = m.stages[idx];
      const std::string field = match[2].str();
      if (field == "substages") {
        st.num_substages = parse_positive(key, v);
      } else if (field == "residual_width") {
        st.residual_width = parse_positive(key, v);
      } else if (field == "k") {
        st.dense_increment = parse_positive(key, v);
      } else if (field == "bottleneck_width") {
        st.bottleneck_width = parse_positive(key, v);
      } else if (field == "stride") {
        st.stride = parse_positive(key, v);
      } else if (field == "groups") {
        st.groups = parse_positive(key, v);
      } else {
        throw config_error("unknown key " + key);
      }
    } else if (key == "augment.target") {
      cfg.augment.target = parse_positive(key, v);
    } else if (key == "augment.flip_prob") {
      cfg.augment.flip_prob = parse_double(key, v);
    } else if (key == "augment.rotate_max_deg") {
      cfg.augment.rotate_max_deg = parse_double(key, v);
    } else if (key == "augment.scale_lo") {
      cfg.augment.scale_lo = parse_double(key, v);
    } else if (key == "augment.scale_hi") {
      cfg.augment.scale_hi = parse_double(key, v);
    } else if (key == "augment.center_crop") {
      cfg.augment.center_crop = parse_bool(key, v);
    } else if (key == "augment.seed") {
      cfg.augment.seed = parse_u64(key, v);
    } else if (key == "train.epochs") {
      cfg.train.epochs = parse_size(key, v);
    } else if (key == "train.batch_size") {
      cfg.train.batch_size = parse_positive(key, v);
    } else if (key == "train.learning_rate") {
      cfg.train.learning_rate = parse_double(key, v);
    } else if (key == "train.momentum") {
      cfg.train.momentum = parse_double(key, v);
    } else if (key == "train.lr_schedule") {
      if (v == "cosine") {
        cfg.train.schedule = LrSchedule::cosine;
      } else if (v == "constant") {
        cfg.train.schedule = LrSchedule::constant;
      } else {
        throw config_error(key + ": expected cosine or constant, got `" + v + "`");
      }
    } else if (key == "train.seed") {
      cfg.train.seed = parse_u64(key, v);
    } else if (key == "train.train_fraction") {
      cfg.train.train_fraction = parse_double(key, v);
    } else if (key == "train.augment") {
      cfg.train.augment = parse_bool(key, v);
    } else if (key == "lime.g") {
      cfg.lime.grid = parse_positive(key, v);
    } else if (key == "lime.n_samples") {
      cfg.lime.n_samples = parse_positive(key, v);
    } else if (key == "lime.sigma") {
      cfg.lime.sigma = parse_double(key, v);
    } else if (key == "lime.ridge_lambda") {
      cfg.lime.ridge_lambda = parse_double(key, v);
    } else if (key == "lime.top_k") {
      cfg.lime.top_k = parse_positive(key, v);
    } else if (key == "lime.seed") {
      cfg.lime.seed = parse_u64(key, v);
    } else {
      throw config_error("unknown key " + key);
    }
  }
  if (!(cfg.train.learning_rate > 0.0)) throw config_error("train.learning_rate must be > 0");
  if (!(cfg.train.momentum >= 0.0 && cfg.train.momentum < 1.0)) {
    throw config_error("train.momentum must be in [0,1)");
  }
  if (!(cfg.train.train_fraction > 0.0 && cfg.train.train_fraction <= 1.0)) {
    throw config_error("train.train_fraction must be in (0,1]");
  }
  if (!(cfg.lime.sigma > 0.0)) throw config_error("lime.sigma must be > 0");
  if (!(cfg.lime.ridge_lambda > 0.0)) throw config_error("lime.ridge_lambda must be > 0");
  validate_config(cfg.model);
  validate_augment_config(cfg.augment);
  return cfg;
}

std::string run_config_text(const RunConfig& cfg) {
  std::ostringstream os;
  const auto& m = cfg.model;
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "model.input_channels = " << m.input_channels << '\n'
     << "model.input_size = " << m.input_size << '\n'
     << "model.num_classes = " << m.num_classes << '\n'
     << "model.se_enabled = " << b(m.se_enabled) << '\n'
     << "model.se_reduction = " << m.se_reduction << '\n'
     << "model.batch_norm = " << b(m.batch_norm) << '\n'
     << "model.bn_eps = " << fmt_double(m.bn_eps) << '\n'
     << "model.stem.out_channels = " << m.stem.out_channels << '\n';
  for (std::size_t i = 0; i < m.stages.size(); ++i) {
    const auto& s = m.stages[i];
    const std::string p = "model.stages[" + std::to_string(i) + "].";
    os << p << "substages = " << s.num_substages << '\n'
       << p << "residual_width = " << s.residual_width << '\n'
       << p << "k = " << s.dense_increment << '\n'
       << p << "bottleneck_width = " << s.bottleneck_width << '\n'
       << p << "stride = " << s.stride << '\n'
       << p << "groups = " << s.groups << '\n';
  }
  const auto& a = cfg.augment;
  os << "augment.target = " << a.target << '\n'
     << "augment.flip_prob = " << fmt_double(a.flip_prob) << '\n'
     << "augment.rotate_max_deg = " << fmt_double(a.rotate_max_deg) << '\n'
     << "augment.scale_lo = " << fmt_double(a.scale_lo) << '\n'
     << "augment.scale_hi = " << fmt_double(a.scale_hi) << '\n'
     << "augment.center_crop = " << b(a.center_crop) << '\n'
     << "augment.seed = " << a.seed << '\n';
  const auto& t = cfg.train;
  os << "train.epochs = " << t.epochs << '\n'
     << "train.batch_size = " << t.batch_size << '\n'
     << "train.learning_rate = " << fmt_double(t.learning_rate) << '\n'
     << "train.momentum = " << fmt_double(t.momentum) << '\n'
     << "train.lr_schedule = " << (t.schedule == LrSchedule::cosine ? "cosine" : "constant")
     << '\n';
  if (t.seed) os << "train.seed = " << *t.seed << '\n';
  os << "train.train_fraction = " << fmt_double(t.train_fraction) << '\n'
     << "train.augment = " << b(t.augment) << '\n';
  const auto& l = cfg.lime;
  os << "lime.g = " << l.grid << '\n'
     << "lime.n_samples = " << l.n_samples << '\n'
     << "lime.sigma = " << fmt_double(l.sigma) << '\n'
     << "lime.ridge_lambda = " << fmt_double(l.ridge_lambda) << '\n'
     << "lime.top_k = " << l.top_k << '\n'
     << "lime.seed = " << l.seed << '\n';
  return os.str();
}

}  // namespace dpnse
