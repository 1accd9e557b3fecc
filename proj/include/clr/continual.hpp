#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "clr/adapter.hpp"
#include "clr/backbone.hpp"
#include "clr/tasks.hpp"

// The sequential protocol: one frozen backbone, one freshly trained adapter
// per task, a task oracle at evaluation time, and an accuracy matrix kept as
// exact integer counts so the zero-forgetting claim is checked with equality
// rather than float tolerance.

namespace clr {

struct TrainTaskHyper {
  int epochs = 10;
  float lr = 0.01f;
  float momentum = 0.9f;
  int batch_size = 32;
  std::uint64_t seed = 0;  // global seed; each task trains with seed ^ task_id
  bool train_norm_affine = false;
  bool train_clr = true;  // false: head-only ablation, CLR kernels stay identity
};

struct TaskLibrary {
  BackboneState backbone;
  ClrVariant variant = ClrVariant::Standard;
  std::map<int, TaskAdapter> adapters;
  std::map<int, TaskSpec> tasks;
  std::map<int, TrainTaskHyper> hyper_log;
};

struct AccuracyCell {
  std::int64_t correct = 0;
  std::int64_t total = 0;
  double value() const {
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }
  bool operator==(const AccuracyCell&) const = default;
};

// rows[i][j] (j <= i): accuracy on the test set of the j-th learned task
// after learning tasks 0..i, by learning position. task_ids/names map a
// position back to the task.
struct AccuracyMatrix {
  std::vector<std::vector<AccuracyCell>> rows;
  std::vector<int> task_ids;
  std::vector<std::string> task_names;

  int learned() const { return static_cast<int>(rows.size()); }
  const AccuracyCell& at(int i, int j) const {
    if (i < 0 || i >= learned() || j < 0 || j > i)
      throw RangeError("accuracy matrix index (" + std::to_string(i) + "," +
                       std::to_string(j) + ") out of range");
    return rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  bool operator==(const AccuracyMatrix&) const = default;
};

enum class Split { Val, Test };

inline std::pair<std::int64_t, std::int64_t> evaluate(TaskLibrary& lib, int task_id,
                                                      Split split) {
  const auto ait = lib.adapters.find(task_id);
  if (ait == lib.adapters.end())
    throw StateError("no adapter for task " + std::to_string(task_id));
  const auto tit = lib.tasks.find(task_id);
  if (tit == lib.tasks.end())
    throw StateError("no task data for task " + std::to_string(task_id));
  const Dataset& ds = split == Split::Val ? tit->second.val : tit->second.test;
  const int batch = 256;
  std::int64_t correct = 0;
  std::vector<int> idxs;
  for (int start = 0; start < ds.size(); start += batch) {
    const int stop = std::min(ds.size(), start + batch);
    idxs.clear();
    for (int i = start; i < stop; ++i) idxs.push_back(i);
    auto logits = reprogrammed_forward(lib.backbone, ait->second, ds.batch(idxs));
    const auto pred = argmax_rows(*logits);
    for (int i = 0; i < stop - start; ++i)
      if (pred[static_cast<std::size_t>(i)] == ds.labels[static_cast<std::size_t>(idxs[i])])
        ++correct;
  }
  return {correct, ds.size()};
}

// Trains a fresh adapter for one task. Only adapter tensors are stepped; the
// backbone is hash-checked before and after, and any drift is fatal.
inline TaskAdapter& train_task(TaskLibrary& lib, const TaskSpec& task,
                               const TrainTaskHyper& hyper) {
  if (lib.adapters.count(task.task_id))
    throw StateError("task " + std::to_string(task.task_id) + " already in library");
  if (!lib.backbone.frozen) throw StateError("train_task requires a frozen backbone");
  if (hyper.epochs < 0) throw RangeError("train_task epochs must be >= 0");
  if (hyper.batch_size < 1) throw RangeError("train_task batch_size must be positive");
  task.train.check();
  task.test.check();

  const std::uint64_t task_seed = hyper.seed ^ static_cast<std::uint64_t>(task.task_id);
  const std::uint64_t before = backbone_hash(lib.backbone);

  TaskAdapter adapter = make_adapter(lib.backbone, lib.variant, task.num_classes, task_seed);
  adapter.task_id = task.task_id;
  if (hyper.train_norm_affine) enable_norm_affine(adapter, lib.backbone);
  auto params = adapter_params(adapter, hyper.train_clr);
  SgdState opt(hyper.lr, hyper.momentum);
  Rng rng(task_seed);
  std::vector<int> order(static_cast<std::size_t>(task.train.size()));
  for (int i = 0; i < task.train.size(); ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_acc = 0.0;
    int correct = 0, batches = 0;
    for (int start = 0; start < task.train.size(); start += hyper.batch_size) {
      const int stop = std::min(task.train.size(), start + hyper.batch_size);
      const std::vector<int> idxs(order.begin() + start, order.begin() + stop);
      Graph g;
      auto logits = reprogrammed_forward(lib.backbone, adapter, g, task.train.batch(idxs));
      const auto labels = task.train.batch_labels(idxs);
      auto loss = softmax_cross_entropy(g, logits, labels);
      g.backward(loss);
      sgd_step(opt, params);
      loss_acc += loss->data[0];
      ++batches;
      const auto pred = argmax_rows(*logits);
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (pred[i] == labels[i]) ++correct;
    }
    EpochLogRow row;
    row.epoch = epoch;
    row.loss = batches ? loss_acc / batches : 0.0;
    row.train_acc = task.train.size() ? static_cast<double>(correct) / task.train.size() : 0.0;
    adapter.training_log.push_back(row);
  }

  if (backbone_hash(lib.backbone) != before)
    throw InvariantViolation("backbone mutated while training task " +
                             std::to_string(task.task_id));

  lib.tasks.emplace(task.task_id, task);
  lib.hyper_log.emplace(task.task_id, hyper);
  auto [it, ok] = lib.adapters.emplace(task.task_id, std::move(adapter));
  return it->second;
}

struct SequenceHooks {
  // Invoked after each task's training + evaluation sweep, with the matrix
  // extended by that task's row. Used for incremental persistence.
  std::function<void(const TaskLibrary&, const AccuracyMatrix&, int)> after_task;
};

// Resumable core: positions [0, resume.learned()) must already be present in
// the library (their matrix rows come from `resume`); the remaining tasks are
// trained and evaluated in order.
inline AccuracyMatrix run_sequence(TaskLibrary& lib, const std::vector<TaskSpec>& tasks,
                                   const TrainTaskHyper& hyper, AccuracyMatrix resume = {},
                                   const SequenceHooks* hooks = nullptr) {
  AccuracyMatrix mat = std::move(resume);
  if (mat.learned() > static_cast<int>(tasks.size()))
    throw StateError("resume matrix has more rows than there are tasks");
  mat.task_ids.clear();
  mat.task_names.clear();
  for (const auto& t : tasks) {
    mat.task_ids.push_back(t.task_id);
    mat.task_names.push_back(t.name);
  }
  for (int i = 0; i < mat.learned(); ++i)
    if (!lib.adapters.count(tasks[static_cast<std::size_t>(i)].task_id))
      throw StateError("resume expects an adapter for task " +
                       std::to_string(tasks[static_cast<std::size_t>(i)].task_id));

  for (int pos = mat.learned(); pos < static_cast<int>(tasks.size()); ++pos) {
    train_task(lib, tasks[static_cast<std::size_t>(pos)], hyper);
    std::vector<AccuracyCell> row;
    for (int j = 0; j <= pos; ++j) {
      const auto [c, t] = evaluate(lib, tasks[static_cast<std::size_t>(j)].task_id, Split::Test);
      row.push_back({c, t});
    }
    mat.rows.push_back(std::move(row));
    if (hooks && hooks->after_task) hooks->after_task(lib, mat, pos);
  }
  return mat;
}

/// Fresh full run: freeze-checked backbone in, (library, matrix) out.
inline std::pair<TaskLibrary, AccuracyMatrix> run_sequence(BackboneState backbone,
                                                           const std::vector<TaskSpec>& tasks,
                                                           ClrVariant variant,
                                                           const TrainTaskHyper& hyper) {
  TaskLibrary lib;
  lib.backbone = std::move(backbone);
  lib.variant = variant;
  auto mat = run_sequence(lib, tasks, hyper);
  return {std::move(lib), std::move(mat)};
}

/// avg[i] = unweighted mean over tasks learned so far of A[i][j].
inline std::vector<double> average_accuracy_curve(const AccuracyMatrix& a) {
  std::vector<double> out;
  for (int i = 0; i < a.learned(); ++i) {
    double acc = 0.0;
    for (int j = 0; j <= i; ++j) acc += a.at(i, j).value();
    out.push_back(acc / (i + 1));
  }
  return out;
}

/// f[j] = max_i A[i][j] - A[N-1][j]; identically zero for CLR runs.
inline std::vector<double> forgetting(const AccuracyMatrix& a) {
  std::vector<double> out;
  const int n = a.learned();
  if (n == 0) return out;
  for (int j = 0; j < n; ++j) {
    double peak = 0.0;
    for (int i = j; i < n; ++i) peak = std::max(peak, a.at(i, j).value());
    out.push_back(peak - a.at(n - 1, j).value());
  }
  return out;
}

// Resampled mean/std of the per-resample average accuracy. Resample sums run
// in ascending index order, so without replacement at t = N every resample
// reduces to the identical float sum.
inline std::pair<double, double> bootstrap_summary(const std::vector<double>& final_accs,
                                                   int t, int n_resamples,
                                                   bool with_replacement, std::uint64_t seed) {
  const int n = static_cast<int>(final_accs.size());
  if (n == 0) throw RangeError("bootstrap over an empty accuracy list");
  if (t < 1) throw RangeError("bootstrap t must be >= 1");
  if (!with_replacement && t > n)
    throw RangeError("bootstrap without replacement cannot draw " + std::to_string(t) +
                     " from " + std::to_string(n) + " tasks");
  if (n_resamples < 1) throw RangeError("bootstrap needs at least one resample");

  Rng rng(seed);
  std::vector<double> means(static_cast<std::size_t>(n_resamples));
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int r = 0; r < n_resamples; ++r) {
    double acc = 0.0;
    if (with_replacement) {
      std::vector<int> picks(static_cast<std::size_t>(t));
      for (int i = 0; i < t; ++i)
        picks[static_cast<std::size_t>(i)] =
            static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
      std::sort(picks.begin(), picks.end());
      for (int p : picks) acc += final_accs[static_cast<std::size_t>(p)];
    } else {
      for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
      for (int i = 0; i < t; ++i) {
        const int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
      }
      std::sort(idx.begin(), idx.begin() + t);
      for (int i = 0; i < t; ++i) acc += final_accs[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
    }
    means[static_cast<std::size_t>(r)] = acc / t;
  }

  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= n_resamples;
  const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
  if (*lo == *hi) return {*lo, 0.0};  // constant resamples: std is exactly zero
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean);
  var /= n_resamples;
  return {mean, std::sqrt(var)};
}

}  // namespace clr
