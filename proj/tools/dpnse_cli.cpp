// dpnse: synthetic data, training, evaluation, LIME explanations and
// augmentation previews from the command line.
//
// Exit codes: 0 success, 1 input/config/IO error, 2 numerical failure.

#include <omp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "dpnse/augment.hpp"
#include "dpnse/config.hpp"
#include "dpnse/dataset.hpp"
#include "dpnse/errors.hpp"
#include "dpnse/lime.hpp"
#include "dpnse/metrics.hpp"
#include "dpnse/net.hpp"
#include "dpnse/serialize.hpp"
#include "dpnse/train.hpp"

namespace fs = std::filesystem;
using namespace dpnse;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
  std::string manifest;
  std::string model;
  std::string image;
  std::optional<std::size_t> target_class;
  std::size_t n = 1;
  std::size_t n_per_class = 50;
  std::size_t size = 64;
};

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return run_config_from(KeyValueConfig{});
  return run_config_from(KeyValueConfig::load(path));
}

fs::path sidecar_config(const fs::path& model) { return fs::path(model.string() + ".cfg"); }

// The model file stores tensors only; the architecture comes from --config
// or from the sidecar written next to the model by `train`.
RunConfig config_for_model(const Options& o) {
  if (!o.config.empty()) return load_run_config(o.config);
  const fs::path side = sidecar_config(o.model);
  if (fs::exists(side)) return load_run_config(side.string());
  throw config_error("no --config given and " + side.string() + " does not exist");
}

Model load_model(const Options& o, const DpnSeConfig& cfg) {
  Model model(cfg, 0);
  model.load_state(load_tensors_file(o.model));
  return model;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw io_error("failed writing " + path.string());
}

// Split manifests live next to the model, so their paths are re-expressed
// relative to that directory.
void write_split_manifest(const fs::path& path, const DatasetManifest& m) {
  const fs::path dir = fs::absolute(path).parent_path();
  DatasetManifest out;
  out.root = dir;
  out.class_names = m.class_names;
  for (const auto& e : m.entries) {
    const fs::path abs = fs::absolute(m.root / e.path).lexically_normal();
    out.entries.push_back({abs.lexically_relative(dir).generic_string(), e.label});
  }
  write_manifest(path, out);
}

int cmd_synth(const Options& o) {
  if (!o.seed) throw config_error("synth: --seed is required");
  if (o.out.empty()) throw config_error("synth: --out is required");
  SynthOptions opts;
  opts.n_per_class = o.n_per_class;
  opts.size = o.size;
  opts.seed = *o.seed;
  const DatasetManifest m = write_synthetic_dataset(o.out, opts);
  std::cerr << "wrote " << m.entries.size() << " images and "
            << (fs::path(o.out) / "manifest.tsv").string() << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  if (o.manifest.empty() || o.out.empty()) {
    throw config_error("train: --manifest and --out are required");
  }
  RunConfig rc = load_run_config(o.config);
  if (o.seed) rc.train.seed = *o.seed;
  if (!rc.train.seed) throw config_error("train: a seed is required (train.seed or --seed)");

  const DatasetManifest manifest = read_manifest(o.manifest);
  if (manifest.class_names.size() != rc.model.num_classes) {
    throw config_error("manifest has " + std::to_string(manifest.class_names.size()) +
                       " classes but model.num_classes is " +
                       std::to_string(rc.model.num_classes));
  }
  const Split split = stratified_split(manifest, rc.train.train_fraction, *rc.train.seed);
  const DatasetManifest train_set = subset(manifest, split.train);
  const std::vector<Sample> samples = load_samples(train_set);

  Model model(rc.model, *rc.train.seed);
  std::printf("epoch,loss,acc\n");
  std::fflush(stdout);
  const auto log = train_model(model, samples, rc.train, rc.train.augment ? &rc.augment : nullptr,
                               [](const EpochLog& e) {
                                 std::printf("%zu,%.10f,%.6f\n", e.epoch, e.loss, e.accuracy);
                                 std::fflush(stdout);
                               });

  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_tensors_file(out, model.state());
  write_text(sidecar_config(out), run_config_text(rc));
  write_split_manifest(out.string() + ".train.tsv", train_set);
  write_split_manifest(out.string() + ".heldout.tsv", subset(manifest, split.heldout));
  std::cerr << "trained " << log.size() << " epochs on " << samples.size() << " images ("
            << model.parameter_count() << " parameters); model written to " << out.string()
            << '\n';
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.manifest.empty() || o.model.empty()) {
    throw config_error("eval: --model and --manifest are required");
  }
  const RunConfig rc = config_for_model(o);
  const DatasetManifest manifest = read_manifest(o.manifest);
  if (manifest.class_names.size() != rc.model.num_classes) {
    throw config_error("model predicts " + std::to_string(rc.model.num_classes) +
                       " classes, manifest has " + std::to_string(manifest.class_names.size()));
  }
  const Model model = load_model(o, rc.model);
  const std::vector<Sample> samples = load_samples(manifest);
  std::vector<int> truth;
  for (const auto& s : samples) truth.push_back(s.label);
  const std::vector<int> pred = predict_labels(model, samples);
  const MetricsReport report =
      make_report(confusion(truth, pred, rc.model.num_classes, manifest.class_names));
  std::cout << report_table(report);
  const std::string json = report_json(report);
  if (o.out.empty()) {
    std::cout << '\n' << json << '\n';
  } else {
    write_text(o.out, json + "\n");
  }
  return 0;
}

int cmd_explain(const Options& o) {
  if (o.image.empty() || o.model.empty() || o.out.empty()) {
    throw config_error("explain: --model, --image and --out are required");
  }
  RunConfig rc = config_for_model(o);
  if (o.seed) rc.lime.seed = *o.seed;
  rc.lime.jobs = o.jobs;
  const Model model = load_model(o, rc.model);
  const Image input = prepare_image(read_pnm(o.image), rc.model);

  const std::vector<double> probs = predict(model, input);
  std::size_t target = 0;
  if (o.target_class) {
    target = *o.target_class;
    if (target >= probs.size()) {
      throw input_error("--class " + std::to_string(target) + " is outside the model's " +
                        std::to_string(probs.size()) + " classes");
    }
  } else {
    for (std::size_t c = 1; c < probs.size(); ++c)
      if (probs[c] > probs[target]) target = c;
  }

  const ModelFn fn = [&model](const Image& img) { return predict(model, img); };
  const Explanation expl = explain(fn, input, target, rc.lime);
  const SuperpixelMap segments = segment_grid(input, rc.lime.grid);
  write_pnm(o.out + ".ppm", render_overlay(input, segments, expl));
  write_text(o.out + ".json", explanation_json(expl) + "\n");

  std::printf("class %zu (p = %.4f), intercept %.6f, r2 %.4f%s\n", target, probs[target],
              expl.intercept, expl.fit_r2, expl.degenerate ? ", degenerate" : "");
  for (std::size_t rank = 0; rank < expl.top_k.size(); ++rank) {
    const std::size_t id = expl.top_k[rank];
    std::printf("%2zu. segment %3zu (row %zu, col %zu) %+.6f\n", rank + 1, id, id / rc.lime.grid,
                id % rc.lime.grid, expl.coefficients[id]);
  }
  return 0;
}

int cmd_augment_preview(const Options& o) {
  if (o.image.empty() || o.out.empty()) {
    throw config_error("augment-preview: --image and --out are required");
  }
  RunConfig rc = load_run_config(o.config);
  if (o.seed) rc.augment.seed = *o.seed;
  validate_augment_config(rc.augment);
  const Image src = to_grayscale(read_pnm(o.image));
  fs::create_directories(o.out);
  const auto n = static_cast<long long>(o.n);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, o.jobs)) if (o.jobs > 1)
  for (long long i = 0; i < n; ++i) {
    try {
      char name[48];
      std::snprintf(name, sizeof name, "aug_%06lld.pgm", i);
      write_pnm(fs::path(o.out) / name, augment(src, rc.augment, static_cast<std::uint64_t>(i)));
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::cerr << "wrote " << o.n << " images to " << o.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DPN-SE chest X-ray classifier toolkit"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value configuration file");
    sub->add_option("--seed", o.seed, "seed (overrides the config)");
    sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  };

  auto* synth = app.add_subcommand("synth", "write the 4-class synthetic dataset");
  common(synth);
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_option("--n-per-class", o.n_per_class, "images per class")
      ->check(CLI::PositiveNumber);
  synth->add_option("--size", o.size, "image side length")->check(CLI::Range(16, 4096));

  auto* train = app.add_subcommand("train", "train a model; CSV log on stdout");
  common(train);
  train->add_option("--manifest", o.manifest, "dataset manifest")->required();
  train->add_option("--out", o.out, "model file to write")->required();

  auto* eval = app.add_subcommand("eval", "confusion matrix and per-class metrics");
  common(eval);
  eval->add_option("--model", o.model, "model file")->required();
  eval->add_option("--manifest", o.manifest, "dataset manifest")->required();
  eval->add_option("--out", o.out, "write the JSON report here instead of stdout");

  auto* expl = app.add_subcommand("explain", "LIME overlay and coefficients for one image");
  common(expl);
  expl->add_option("--model", o.model, "model file")->required();
  expl->add_option("--image", o.image, "PGM/PPM image")->required();
  expl->add_option("--out", o.out, "output prefix (PREFIX.ppm, PREFIX.json)")->required();
  expl->add_option("--class", o.target_class, "class to explain (default: predicted)");

  auto* preview = app.add_subcommand("augment-preview", "write augmented draws of one image");
  common(preview);
  preview->add_option("--image", o.image, "PGM/PPM image")->required();
  preview->add_option("--out", o.out, "output directory")->required();
  preview->add_option("--n", o.n, "number of draws")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  omp_set_num_threads(o.jobs);
  try {
    if (*synth) return cmd_synth(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*expl) return cmd_explain(o);
    if (*preview) return cmd_augment_preview(o);
  } catch (const numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
