#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "clr/adapter.hpp"
#include "clr/report.hpp"
#include "clr/tasks.hpp"

// Experiment configuration. Every field has a default except out_dir, and
// unknown keys anywhere in the document are a hard error naming the full key
// path, so a typo cannot silently fall back to a default.

namespace clr {

// Where a dataset comes from: an IDX pair on disk, a manifest directory, or
// one of the built-in synthetic generators (materialized into `dir` on
// demand, then loaded like any IDX data).
struct DataSource {
  std::string kind = "idx";  // idx | manifest | synth-digits | synth-clothing
  std::string train_images, train_labels;
  std::string test_images, test_labels;
  std::string dir;  // manifest root, or synth output directory
  int synth_train = 5000, synth_test = 1000;
  std::uint64_t synth_seed = 7;
  int channels = 1, height = 28, width = 28;  // manifest target geometry
};

struct BackboneConfig {
  std::string arch = "tinynet";
  DataSource dataset;
  int num_classes = 10;
  int epochs = 5;
  float lr = 0.05f;
  float momentum = 0.9f;
  int batch_size = 64;
  std::uint64_t seed = 1;
  std::string import_path;  // when set, load this checkpoint instead of pretraining
};

struct ClrConfig {
  ClrVariant variant = ClrVariant::Standard;
  bool train_norm_affine = false;
  bool train_clr = true;  // false runs the head-only ablation
};

struct TasksConfig {
  DataSource base;
  TaskGenerator generator;
  int train_per_task = 0;
  int test_per_task = 0;
  int base_classes = 0;
};

struct TrainConfig {
  int epochs = 10;
  float lr = 0.01f;
  float momentum = 0.9f;
  int batch_size = 32;
};

struct ReportConfig {
  std::vector<int> bootstrap_t_values;
  int bootstrap_n_resamples = 50000;
  bool bootstrap_with_replacement = true;
};

struct ExperimentConfig {
  BackboneConfig backbone;
  ClrConfig clr;
  TasksConfig tasks;
  TrainConfig train;
  ReportConfig report;
  std::string out_dir;  // required
  std::uint64_t global_seed = 0;
  bool deterministic = true;
};

namespace detail {

// Tracks which keys of one JSON object were consumed; leftovers are fatal.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config field " + path_ + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config field " + path_ + "." + key + " has the wrong type");
    }
  }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key))
        throw ConfigError("unknown config key: " + path_ + "." + key);
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline DataSource parse_data_source(const nlohmann::json& j, const std::string& path) {
  StrictObject o(j, path);
  DataSource d;
  d.kind = o.get<std::string>("kind", d.kind);
  if (d.kind != "idx" && d.kind != "manifest" && d.kind != "synth-digits" &&
      d.kind != "synth-clothing")
    throw ConfigError("config field " + path + ".kind has unknown value `" + d.kind + "`");
  d.train_images = o.get<std::string>("train_images", "");
  d.train_labels = o.get<std::string>("train_labels", "");
  d.test_images = o.get<std::string>("test_images", "");
  d.test_labels = o.get<std::string>("test_labels", "");
  d.dir = o.get<std::string>("dir", "");
  d.synth_train = o.get<int>("synth_train", d.synth_train);
  d.synth_test = o.get<int>("synth_test", d.synth_test);
  d.synth_seed = o.get<std::uint64_t>("synth_seed", d.synth_seed);
  d.channels = o.get<int>("channels", d.channels);
  d.height = o.get<int>("height", d.height);
  d.width = o.get<int>("width", d.width);
  o.finish();
  return d;
}

inline TaskGenerator parse_generator(const nlohmann::json& j, const std::string& path) {
  StrictObject o(j, path);
  TaskGenerator g;
  const std::string kind = o.get<std::string>("kind", "");
  if (kind == "class-split") {
    g.kind = TaskGenerator::Kind::ClassSplit;
    g.groups = o.get<std::vector<std::vector<int>>>("groups", {});
    std::set<int> seen;
    for (const auto& group : g.groups)
      for (int cls : group)
        if (!seen.insert(cls).second)
          throw ConfigError("config field " + path + ".groups lists class " +
                            std::to_string(cls) + " twice");
  } else if (kind == "pixel-permute") {
    g.kind = TaskGenerator::Kind::PixelPermute;
    g.n_tasks = o.get<int>("n_tasks", 0);
    g.perm_seed = o.get<std::uint64_t>("perm_seed", 0);
  } else if (kind == "rotate") {
    g.kind = TaskGenerator::Kind::Rotate;
    g.angles = o.get<std::vector<double>>("angles", {});
    std::set<double> seen(g.angles.begin(), g.angles.end());
    if (seen.size() != g.angles.size())
      throw ConfigError("config field " + path + ".angles lists the same task twice");
  } else if (kind == "compose") {
    g.kind = TaskGenerator::Kind::Compose;
    if (o.has("parts")) {
      const auto& parts = o.raw("parts");
      if (!parts.is_array()) throw ConfigError("config field " + path + ".parts must be a list");
      for (std::size_t i = 0; i < parts.size(); ++i)
        g.parts.push_back(parse_generator(parts[i], path + ".parts[" + std::to_string(i) + "]"));
    }
  } else {
    throw ConfigError("config field " + path + ".kind must be one of "
                      "class-split/pixel-permute/rotate/compose, got `" + kind + "`");
  }
  o.finish();
  return g;
}

}  // namespace detail

// `require_out_dir = false` lets the CLI defer the check until the --out flag
// and CLR_OUT_DIR have had their chance to supply it.
inline ExperimentConfig parse_config(const nlohmann::json& j, bool require_out_dir = true) {
  detail::StrictObject o(j, "config");
  ExperimentConfig c;
  if (o.has("backbone")) {
    detail::StrictObject b(o.raw("backbone"), "config.backbone");
    c.backbone.arch = b.get<std::string>("arch", c.backbone.arch);
    if (b.has("dataset"))
      c.backbone.dataset = detail::parse_data_source(b.raw("dataset"), "config.backbone.dataset");
    c.backbone.num_classes = b.get<int>("num_classes", c.backbone.num_classes);
    c.backbone.epochs = b.get<int>("epochs", c.backbone.epochs);
    c.backbone.lr = b.get<float>("lr", c.backbone.lr);
    c.backbone.momentum = b.get<float>("momentum", c.backbone.momentum);
    c.backbone.batch_size = b.get<int>("batch_size", c.backbone.batch_size);
    c.backbone.seed = b.get<std::uint64_t>("seed", c.backbone.seed);
    c.backbone.import_path = b.get<std::string>("import_path", "");
    b.finish();
  }
  if (o.has("clr")) {
    detail::StrictObject cl(o.raw("clr"), "config.clr");
    c.clr.variant = variant_from_name(cl.get<std::string>("variant", "standard"));
    c.clr.train_norm_affine = cl.get<bool>("train_norm_affine", false);
    c.clr.train_clr = cl.get<bool>("train_clr", true);
    cl.finish();
  }
  if (o.has("tasks")) {
    detail::StrictObject t(o.raw("tasks"), "config.tasks");
    if (t.has("base"))
      c.tasks.base = detail::parse_data_source(t.raw("base"), "config.tasks.base");
    if (t.has("generator"))
      c.tasks.generator = detail::parse_generator(t.raw("generator"), "config.tasks.generator");
    c.tasks.train_per_task = t.get<int>("train_per_task", 0);
    c.tasks.test_per_task = t.get<int>("test_per_task", 0);
    c.tasks.base_classes = t.get<int>("base_classes", 0);
    t.finish();
  }
  if (o.has("train")) {
    detail::StrictObject t(o.raw("train"), "config.train");
    c.train.epochs = t.get<int>("epochs", c.train.epochs);
    c.train.lr = t.get<float>("lr", c.train.lr);
    c.train.momentum = t.get<float>("momentum", c.train.momentum);
    c.train.batch_size = t.get<int>("batch_size", c.train.batch_size);
    t.finish();
  }
  if (o.has("report")) {
    detail::StrictObject r(o.raw("report"), "config.report");
    if (r.has("bootstrap")) {
      detail::StrictObject bs(r.raw("bootstrap"), "config.report.bootstrap");
      c.report.bootstrap_t_values = bs.get<std::vector<int>>("t_values", {});
      c.report.bootstrap_n_resamples = bs.get<int>("n_resamples", 50000);
      c.report.bootstrap_with_replacement = bs.get<bool>("with_replacement", true);
      bs.finish();
    }
    r.finish();
  }
  c.out_dir = o.get<std::string>("out_dir", "");
  c.global_seed = o.get<std::uint64_t>("global_seed", 0);
  c.deterministic = o.get<bool>("deterministic", true);
  o.finish();
  if (require_out_dir && c.out_dir.empty())
    throw ConfigError("config field out_dir is required");
  return c;
}

inline ExperimentConfig load_config(const std::string& path, bool require_out_dir = true) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid json: " + e.what());
  }
  return parse_config(j, require_out_dir);
}

}  // namespace clr
