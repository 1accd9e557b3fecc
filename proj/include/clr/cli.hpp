#pragma once

#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "clr/checkpoint.hpp"
#include "clr/config.hpp"
#include "clr/continual.hpp"
#include "clr/report.hpp"
#include "clr/synth.hpp"

// Subcommand implementations as plain functions, so tests can drive the full
// CLI surface in-process. The binary in tools/ is a thin argument parser over
// these.
//
// Exit codes: 0 success, 2 config/usage, 3 state/compatibility, 4 data/format.

namespace clr {

struct CliOverrides {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<bool> deterministic;
};

namespace detail {

inline std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  // stoull would accept a leading minus and wrap, so gate on digits first.
  if (!s.empty() && s.find_first_not_of("0123456789") == std::string::npos) {
    try {
      return std::stoull(s);
    } catch (const std::out_of_range&) {
    }
  }
  throw ConfigError(what + " must be an unsigned integer, got `" + s + "`");
}

inline bool process_alive(long pid) {
  return ::kill(static_cast<pid_t>(pid), 0) == 0 || errno == EPERM;
}

inline std::string adapter_filename(int task_id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "task%03d.adapter", task_id);
  return buf;
}

}  // namespace detail

// Precedence: explicit flag > environment > config file.
inline void apply_overrides(ExperimentConfig& c, const CliOverrides& o) {
  if (const char* e = std::getenv("CLR_OUT_DIR"); e && *e) c.out_dir = e;
  if (const char* e = std::getenv("CLR_SEED"); e && *e)
    c.global_seed = detail::parse_u64(e, "CLR_SEED");
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.seed) c.global_seed = *o.seed;
  if (o.deterministic) c.deterministic = *o.deterministic;
  if (c.out_dir.empty())
    throw ConfigError("out_dir is required (config field out_dir, --out, or CLR_OUT_DIR)");
}

// One CLI invocation owns its run directory: a pid lock file, stolen only
// when the recorded process is gone.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
    std::filesystem::create_directories(dir);
    if (std::filesystem::exists(path_)) {
      std::ifstream f(path_);
      long pid = 0;
      f >> pid;
      if (pid > 0 && pid != static_cast<long>(::getpid()) && detail::process_alive(pid))
        throw StateError("run directory " + dir.string() + " is locked by running pid " +
                         std::to_string(pid));
    }
    std::ofstream f(path_, std::ios::trunc);
    f << ::getpid() << "\n";
    if (!f) throw StateError("cannot write lock file " + path_.string());
    owned_ = true;
  }
  ~RunLock() {
    if (owned_) {
      std::error_code ec;
      std::filesystem::remove(path_, ec);
    }
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
  bool owned_ = false;
};

// Arch field accepts a preset name or a path to an ArchSpec json file.
inline ArchSpec resolve_arch(const std::string& name, int num_classes) {
  if (name.size() > 5 && name.compare(name.size() - 5, 5, ".json") == 0) {
    std::ifstream f(name);
    if (!f) throw ConfigError("cannot open arch file: " + name);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("arch file " + name + " is not valid json: " + e.what());
    }
    return arch_from_json(j);
  }
  try {
    return arch_preset(name, num_classes);
  } catch (const SpecError&) {
    throw ConfigError("config field backbone.arch names no preset: `" + name +
                      "` (tinynet, resnet18-lite, resnet50-shape, or a .json arch file)");
  }
}

// Materializes a DataSource into (train, test). Test-split normalization
// reuses the train split's statistics. `field` names the config location for
// error messages.
inline std::pair<Dataset, Dataset> load_source(const DataSource& d, const std::string& field) {
  const auto need = [&](const std::string& v, const char* name) -> const std::string& {
    if (v.empty()) throw ConfigError("missing dataset path: " + field + "." + name);
    return v;
  };
  if (d.kind == "idx") {
    const std::string& ti = need(d.train_images, "train_images");
    const std::string& tl = need(d.train_labels, "train_labels");
    const std::string& vi = need(d.test_images, "test_images");
    const std::string& vl = need(d.test_labels, "test_labels");
    Dataset train = load_idx(ti, tl);
    Dataset test = load_idx(vi, vl, &train.norm_mean, &train.norm_std);
    return {std::move(train), std::move(test)};
  }
  if (d.kind == "manifest") {
    const std::string& dir = need(d.dir, "dir");
    Dataset train = load_manifest(dir + "/train", d.channels, d.height, d.width);
    Dataset test = load_manifest(dir + "/test", d.channels, d.height, d.width, &train.norm_mean,
                                 &train.norm_std);
    return {std::move(train), std::move(test)};
  }
  // synth-digits / synth-clothing: generate once into dir, then load as IDX.
  namespace fs = std::filesystem;
  const std::string& dir = need(d.dir, "dir");
  const std::string stem = d.kind == "synth-digits" ? "digits" : "clothing";
  const fs::path root(dir);
  const fs::path ti = root / (stem + "-train-images.idx"), tl = root / (stem + "-train-labels.idx");
  const fs::path vi = root / (stem + "-test-images.idx"), vl = root / (stem + "-test-labels.idx");
  if (!(fs::exists(ti) && fs::exists(tl) && fs::exists(vi) && fs::exists(vl))) {
    if (d.kind == "synth-digits")
      make_digits_idx(dir, d.synth_train, d.synth_test, d.synth_seed);
    else
      make_clothing_idx(dir, d.synth_train, d.synth_test, d.synth_seed);
  }
  Dataset train = load_idx(ti.string(), tl.string());
  Dataset test = load_idx(vi.string(), vl.string(), &train.norm_mean, &train.norm_std);
  return {std::move(train), std::move(test)};
}

namespace detail {

inline void write_run_meta(const std::filesystem::path& root, const std::string& command,
                           const ExperimentConfig& c, const ArchSpec& arch,
                           const std::vector<TaskSpec>* tasks) {
  nlohmann::json j;
  j["command"] = command;
  j["arch"] = arch_to_json(arch);
  j["variant"] = variant_name(c.clr.variant);
  j["global_seed"] = c.global_seed;
  j["deterministic"] = c.deterministic;
  j["train"] = {{"epochs", c.train.epochs},
                {"lr", c.train.lr},
                {"momentum", c.train.momentum},
                {"batch_size", c.train.batch_size}};
  j["clr"] = {{"train_norm_affine", c.clr.train_norm_affine}, {"train_clr", c.clr.train_clr}};
  j["bootstrap"] = {{"t_values", c.report.bootstrap_t_values},
                    {"n_resamples", c.report.bootstrap_n_resamples},
                    {"with_replacement", c.report.bootstrap_with_replacement}};
  if (tasks) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : *tasks)
      arr.push_back({{"task_id", t.task_id}, {"name", t.name}, {"num_classes", t.num_classes}});
    j["tasks"] = arr;
  }
  write_file_atomic(root / "run_meta.json", j.dump(2) + "\n");
}

inline void write_pretrain_log(const std::filesystem::path& path,
                               const std::vector<EpochLogRow>& log) {
  std::string s = "epoch,loss,train_acc,val_acc\n";
  for (const auto& r : log)
    s += std::to_string(r.epoch) + "," + fmt_fixed(r.loss) + "," + fmt_fixed(r.train_acc) + "," +
         fmt_fixed(r.val_acc) + "\n";
  write_file_atomic(path, s);
}

// A fresh (non-resume) learn must not inherit sequence outputs from an
// earlier run of a possibly different config.
inline void clean_run_outputs(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::exists(root)) return;
  for (const auto& entry : fs::directory_iterator(root)) {
    const std::string name = entry.path().filename().string();
    const bool adapter = name.rfind("task", 0) == 0 && name.size() > 8 &&
                         name.compare(name.size() - 8, 8, ".adapter") == 0;
    const bool csv = name == "accuracy_matrix.csv" || name == "avg_curve.csv" ||
                     name == "per_task_final.csv" || name == "forgetting.csv" ||
                     name == "ledger.csv" || name == "bootstrap.csv" || name == "summary.txt";
    if (adapter || csv) {
      std::error_code ec;
      fs::remove(entry.path(), ec);
    }
  }
}

}  // namespace detail

inline int cmd_pretrain(const ExperimentConfig& c, std::ostream& out = std::cout) {
  RunLock lock(c.out_dir);
  const std::filesystem::path root(c.out_dir);
  BackboneState s;
  if (!c.backbone.import_path.empty()) {
    s = load_backbone(c.backbone.import_path);
    if (s.provenance.origin.empty()) s.provenance.origin = "import";
    if (!s.frozen) freeze(s);
  } else {
    auto [train, val] = load_source(c.backbone.dataset, "config.backbone.dataset");
    s = build_network(resolve_arch(c.backbone.arch, c.backbone.num_classes), c.backbone.seed);
    PretrainHyper h;
    h.epochs = c.backbone.epochs;
    h.lr = c.backbone.lr;
    h.momentum = c.backbone.momentum;
    h.batch_size = c.backbone.batch_size;
    h.seed = c.backbone.seed;
    pretrain(s, train, val, h);
    freeze(s);
  }
  save_backbone((root / "backbone.clrk").string(), s);
  detail::write_pretrain_log(root / "pretrain_log.csv", s.pretrain_log);
  detail::write_run_meta(root, "pretrain", c, s.arch, nullptr);
  out << "backbone " << s.arch.name << " frozen (val_acc " << fmt_fixed(s.provenance.final_val_acc)
      << "), checkpoint " << (root / "backbone.clrk").string() << "\n";
  return 0;
}

inline int cmd_learn(const ExperimentConfig& c, bool resume = false, int max_tasks = -1,
                     std::ostream& out = std::cout) {
  namespace fs = std::filesystem;
  RunLock lock(c.out_dir);
  const fs::path root(c.out_dir);

  BackboneState backbone;
  if (fs::exists(root / "backbone.clrk")) {
    backbone = load_backbone((root / "backbone.clrk").string());
  } else if (!c.backbone.import_path.empty()) {
    backbone = load_backbone(c.backbone.import_path);
    if (!backbone.frozen) freeze(backbone);
    save_backbone((root / "backbone.clrk").string(), backbone);
  } else {
    throw StateError("no backbone checkpoint in " + c.out_dir +
                     "; run pretrain first or set config.backbone.import_path");
  }
  if (!backbone.frozen) freeze(backbone);

  auto [base_train, base_test] = load_source(c.tasks.base, "config.tasks.base");
  TaskSequenceSpec seq;
  seq.generator = c.tasks.generator;
  seq.train_per_task = c.tasks.train_per_task;
  seq.test_per_task = c.tasks.test_per_task;
  seq.base_classes = c.tasks.base_classes;
  auto tasks = make_tasks(seq, base_train, base_test, c.global_seed);
  if (max_tasks >= 0 && static_cast<int>(tasks.size()) > max_tasks)
    tasks.resize(static_cast<std::size_t>(max_tasks));

  TaskLibrary lib;
  lib.backbone = std::move(backbone);
  lib.variant = c.clr.variant;

  AccuracyMatrix prior;
  if (resume && fs::exists(root / "accuracy_matrix.csv")) {
    prior = read_accuracy_matrix_csv(root / "accuracy_matrix.csv");
    if (prior.learned() > static_cast<int>(tasks.size()))
      throw StateError("resume matrix has more rows than the configured task sequence");
    for (int i = 0; i < prior.learned(); ++i) {
      const int id = prior.task_ids[static_cast<std::size_t>(i)];
      const TaskSpec& t = tasks[static_cast<std::size_t>(i)];
      if (id != t.task_id)
        throw StateError("resume matrix row " + std::to_string(i + 1) + " is task " +
                         std::to_string(id) + " but the config sequence has task " +
                         std::to_string(t.task_id) + " there");
      const fs::path ap = root / detail::adapter_filename(id);
      if (!fs::exists(ap))
        throw StateError("resume: missing adapter checkpoint " + ap.string());
      TaskAdapter a = load_adapter(ap.string());
      if (a.task_id != id)
        throw StateError("adapter " + ap.string() + " holds task " + std::to_string(a.task_id));
      if (!(a.arch == lib.backbone.arch))
        throw SpecError("adapter " + ap.string() + " was built for arch `" + a.arch.name +
                        "`, run uses `" + lib.backbone.arch.name + "`");
      if (a.variant != lib.variant)
        throw StateError("adapter " + ap.string() + " uses variant " +
                         std::string(variant_name(a.variant)) + ", run uses " +
                         variant_name(lib.variant));
      lib.adapters.emplace(id, std::move(a));
      lib.tasks.emplace(id, t);
    }
  } else {
    detail::clean_run_outputs(root);
  }

  detail::write_run_meta(root, "learn", c, lib.backbone.arch, &tasks);

  TrainTaskHyper hyper;
  hyper.epochs = c.train.epochs;
  hyper.lr = c.train.lr;
  hyper.momentum = c.train.momentum;
  hyper.batch_size = c.train.batch_size;
  hyper.seed = c.global_seed;
  hyper.train_norm_affine = c.clr.train_norm_affine;
  hyper.train_clr = c.clr.train_clr;

  SequenceHooks hooks;
  hooks.after_task = [&root, &out](const TaskLibrary& l, const AccuracyMatrix& m, int pos) {
    const int id = m.task_ids[static_cast<std::size_t>(pos)];
    save_adapter((root / detail::adapter_filename(id)).string(), l.adapters.at(id));
    write_accuracy_matrix_csv(root / "accuracy_matrix.csv", m);
    out << "[" << pos + 1 << "/" << m.task_ids.size() << "] task " << id << " ("
        << m.task_names[static_cast<std::size_t>(pos)] << "): acc "
        << fmt_fixed(m.at(pos, pos).value()) << "\n";
  };

  auto mat = run_sequence(lib, tasks, hyper, std::move(prior), &hooks);

  BootstrapSpec bs;
  bs.t_values = c.report.bootstrap_t_values;
  bs.n_resamples = c.report.bootstrap_n_resamples;
  bs.with_replacement = c.report.bootstrap_with_replacement;
  bs.seed = c.global_seed;
  emit_report(lib, mat, c.out_dir, bs.t_values.empty() ? nullptr : &bs);
  if (mat.learned() > 0)
    out << "learned " << mat.learned() << " tasks, final avg accuracy "
        << fmt_fixed(average_accuracy_curve(mat).back()) << "\n";
  return 0;
}

// Evaluates one stored adapter against one IDX-format test set and prints
// `correct total accuracy`. Normalization statistics are derived from the
// given data, matching how a standalone split is loaded.
inline int cmd_eval(const std::string& backbone_path, const std::string& adapter_path,
                    const std::string& images_path, const std::string& labels_path,
                    int task_id = -1, std::ostream& out = std::cout) {
  BackboneState backbone = load_backbone(backbone_path);
  if (!backbone.frozen) freeze(backbone);
  TaskAdapter adapter = load_adapter(adapter_path);
  if (task_id >= 0 && adapter.task_id != task_id)
    throw StateError("adapter holds task " + std::to_string(adapter.task_id) +
                     ", --task-id asked for " + std::to_string(task_id));
  Dataset data = load_idx(images_path, labels_path);
  if (data.num_classes() > adapter.num_classes)
    throw DataError("data has labels up to " + std::to_string(data.num_classes() - 1) +
                    " but the adapter head has " + std::to_string(adapter.num_classes) +
                    " classes");
  std::int64_t correct = 0;
  constexpr int kBatch = 256;
  for (int start = 0; start < data.size(); start += kBatch) {
    std::vector<int> idxs;
    for (int i = start; i < std::min(data.size(), start + kBatch); ++i) idxs.push_back(i);
    auto logits = reprogrammed_forward(backbone, adapter, data.batch(idxs));
    const auto pred = argmax_rows(*logits);
    const auto labels = data.batch_labels(idxs);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (pred[i] == labels[i]) ++correct;
  }
  const double acc = data.size() ? static_cast<double>(correct) / data.size() : 0.0;
  out << correct << " " << data.size() << " " << fmt_fixed(acc) << "\n";
  return 0;
}

// Rebuilds the derived report files from a run directory's accuracy matrix
// and recorded metadata.
inline int cmd_report(const std::string& run_dir, std::ostream& out = std::cout) {
  namespace fs = std::filesystem;
  const fs::path root(run_dir);
  if (!fs::exists(root / "accuracy_matrix.csv"))
    throw StateError("no accuracy_matrix.csv in " + run_dir + "; run learn first");
  if (!fs::exists(root / "run_meta.json"))
    throw StateError("no run_meta.json in " + run_dir + "; run learn first");
  RunLock lock(root);

  AccuracyMatrix a = read_accuracy_matrix_csv(root / "accuracy_matrix.csv");

  std::ifstream f(root / "run_meta.json");
  nlohmann::json meta;
  try {
    f >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("run_meta.json is not valid json: " + std::string(e.what()));
  }
  ArchSpec arch;
  ClrVariant variant = ClrVariant::Standard;
  BootstrapSpec bs;
  try {
    arch = arch_from_json(meta.at("arch"));
    variant = variant_from_name(meta.at("variant").get<std::string>());
    bs.seed = meta.value("global_seed", std::uint64_t{0});
    if (meta.contains("bootstrap")) {
      const auto& b = meta.at("bootstrap");
      bs.t_values = b.value("t_values", std::vector<int>{});
      bs.n_resamples = b.value("n_resamples", 50000);
      bs.with_replacement = b.value("with_replacement", true);
    }
    for (std::size_t j = 0; j < a.task_ids.size(); ++j) {
      a.task_names[j] = "task" + std::to_string(a.task_ids[j]);
      if (meta.contains("tasks"))
        for (const auto& t : meta.at("tasks"))
          if (t.value("task_id", -1) == a.task_ids[j])
            a.task_names[j] = t.value("name", a.task_names[j]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("run_meta.json is missing report fields: " + std::string(e.what()));
  }

  emit_report(arch, variant, a, run_dir, bs.t_values.empty() ? nullptr : &bs);
  out << "report for " << a.learned() << " tasks written to " << run_dir << "\n";
  return 0;
}

// Maps the library's error taxonomy onto process exit codes.
template <class F>
int run_guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const RangeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const InvariantViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace clr
