#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "clr/dataset.hpp"
#include "clr/errors.hpp"
#include "clr/rng.hpp"

// Desk-scale task sequences carved out of a base dataset. Construction is a
// pure function of (spec, base splits, seed): rerunning yields bitwise
// identical task data.

namespace clr {

struct TaskSpec {
  int task_id = -1;
  std::string name;
  Dataset train, val, test;  // val aliases test data unless provided separately
  int num_classes = 0;
};

struct TaskGenerator {
  enum class Kind { ClassSplit, PixelPermute, Rotate, Compose };
  Kind kind = Kind::ClassSplit;
  std::vector<std::vector<int>> groups;  // ClassSplit: class ids per task
  int n_tasks = 0;                       // PixelPermute
  std::uint64_t perm_seed = 0;           // PixelPermute
  std::vector<double> angles;            // Rotate, degrees
  std::vector<TaskGenerator> parts;      // Compose
};

struct TaskSequenceSpec {
  TaskGenerator generator;
  int train_per_task = 0;  // 0 keeps every available sample
  int test_per_task = 0;
  int base_classes = 0;  // expected class count of the base set; 0 derives it
};

namespace detail {

// Equal per-class counts; when target does not divide evenly the remainder
// goes to the lowest class ids. Returns ascending sample indices.
inline std::vector<int> stratified_indices(const Dataset& ds, int target, Rng& rng) {
  std::vector<int> keep;
  if (target <= 0 || target >= ds.size()) {
    keep.resize(static_cast<std::size_t>(ds.size()));
    for (int i = 0; i < ds.size(); ++i) keep[static_cast<std::size_t>(i)] = i;
    return keep;
  }
  const int k = ds.num_classes();
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(k));
  for (int i = 0; i < ds.size(); ++i)
    by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
  const int per = target / k, extra = target % k;
  for (int c = 0; c < k; ++c) {
    auto& pool = by_class[static_cast<std::size_t>(c)];
    const int want = per + (c < extra ? 1 : 0);
    if (want > static_cast<int>(pool.size()))
      throw DataError("stratified subsample wants " + std::to_string(want) +
                      " samples of class " + std::to_string(c) + " but only " +
                      std::to_string(pool.size()) + " exist");
    rng.shuffle(pool);
    keep.insert(keep.end(), pool.begin(), pool.begin() + want);
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

inline Dataset take(const Dataset& ds, const std::vector<int>& idxs) {
  Dataset out;
  out.name = ds.name;
  out.channels = ds.channels;
  out.height = ds.height;
  out.width = ds.width;
  out.class_names = ds.class_names;
  out.norm_mean = ds.norm_mean;
  out.norm_std = ds.norm_std;
  const std::int64_t e = ds.image_elems();
  out.images.reserve(idxs.size() * static_cast<std::size_t>(e));
  for (int i : idxs) {
    out.images.insert(out.images.end(), ds.image(i), ds.image(i) + e);
    out.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
  }
  return out;
}

// Keeps only the listed classes and relabels them 0..k-1 in list order.
inline Dataset class_filter(const Dataset& ds, const std::vector<int>& classes) {
  std::vector<int> remap(static_cast<std::size_t>(ds.num_classes()), -1);
  for (std::size_t i = 0; i < classes.size(); ++i)
    remap[static_cast<std::size_t>(classes[i])] = static_cast<int>(i);
  std::vector<int> idxs;
  for (int i = 0; i < ds.size(); ++i)
    if (remap[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])] >= 0)
      idxs.push_back(i);
  Dataset out = take(ds, idxs);
  for (auto& l : out.labels) l = remap[static_cast<std::size_t>(l)];
  out.class_names.clear();
  for (int c : classes) out.class_names.push_back(ds.class_names[static_cast<std::size_t>(c)]);
  return out;
}

// Applies one spatial permutation (of the h*w positions, same for every
// channel) to every image.
inline Dataset permute_pixels(const Dataset& ds, const std::vector<int>& perm) {
  Dataset out = ds;
  const std::int64_t plane = static_cast<std::int64_t>(ds.height) * ds.width;
  for (int i = 0; i < ds.size(); ++i) {
    for (int ch = 0; ch < ds.channels; ++ch) {
      const float* src = ds.image(i) + static_cast<std::int64_t>(ch) * plane;
      float* dst =
          out.images.data() + i * ds.image_elems() + static_cast<std::int64_t>(ch) * plane;
      for (std::int64_t p = 0; p < plane; ++p) dst[p] = src[perm[static_cast<std::size_t>(p)]];
    }
  }
  return out;
}

// Nearest-neighbor rotation about the image center; uncovered pixels get 0
// (the post-normalization mean level). 0 degrees is a bitwise copy.
inline Dataset rotate_images(const Dataset& ds, double degrees) {
  if (degrees == 0.0) return ds;
  Dataset out = ds;
  const double rad = degrees * 3.14159265358979323846 / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cy = (ds.height - 1) / 2.0, cx = (ds.width - 1) / 2.0;
  const std::int64_t plane = static_cast<std::int64_t>(ds.height) * ds.width;
  for (int i = 0; i < ds.size(); ++i) {
    for (int ch = 0; ch < ds.channels; ++ch) {
      const float* src = ds.image(i) + static_cast<std::int64_t>(ch) * plane;
      float* dst =
          out.images.data() + i * ds.image_elems() + static_cast<std::int64_t>(ch) * plane;
      for (int y = 0; y < ds.height; ++y) {
        for (int x = 0; x < ds.width; ++x) {
          // inverse map: rotate the output coordinate back by -degrees
          const double sy = cy + (y - cy) * c - (x - cx) * s;
          const double sx = cx + (y - cy) * s + (x - cx) * c;
          const int iy = static_cast<int>(std::lround(sy));
          const int ix = static_cast<int>(std::lround(sx));
          dst[static_cast<std::int64_t>(y) * ds.width + x] =
              (iy >= 0 && iy < ds.height && ix >= 0 && ix < ds.width)
                  ? src[static_cast<std::int64_t>(iy) * ds.width + ix]
                  : 0.0f;
        }
      }
    }
  }
  return out;
}

inline void build_tasks(const TaskGenerator& gen, const Dataset& base_train,
                        const Dataset& base_test, const TaskSequenceSpec& spec, Rng& rng,
                        std::vector<TaskSpec>& out) {
  auto finish = [&](TaskSpec&& t) {
    Rng tr = rng.fork(2 * static_cast<std::uint64_t>(out.size()));
    Rng te = rng.fork(2 * static_cast<std::uint64_t>(out.size()) + 1);
    t.train = take(t.train, stratified_indices(t.train, spec.train_per_task, tr));
    t.test = take(t.test, stratified_indices(t.test, spec.test_per_task, te));
    t.val = t.test;
    t.task_id = static_cast<int>(out.size());
    t.num_classes = t.train.num_classes();
    out.push_back(std::move(t));
  };

  switch (gen.kind) {
    case TaskGenerator::Kind::ClassSplit: {
      if (gen.groups.empty()) throw SpecError("ClassSplit needs at least one group");
      std::set<int> seen;
      for (const auto& group : gen.groups) {
        if (group.empty()) throw SpecError("ClassSplit group is empty");
        for (int c : group) {
          if (c < 0 || c >= base_train.num_classes())
            throw SpecError("ClassSplit class " + std::to_string(c) +
                            " outside base class range");
          if (!seen.insert(c).second)
            throw SpecError("ClassSplit groups overlap on class " + std::to_string(c));
        }
      }
      for (std::size_t gi = 0; gi < gen.groups.size(); ++gi) {
        TaskSpec t;
        t.name = "split" + std::to_string(gi);
        t.train = class_filter(base_train, gen.groups[gi]);
        t.test = class_filter(base_test, gen.groups[gi]);
        finish(std::move(t));
      }
      break;
    }
    case TaskGenerator::Kind::PixelPermute: {
      if (gen.n_tasks < 1) throw SpecError("PixelPermute needs n_tasks >= 1");
      const std::int64_t plane = static_cast<std::int64_t>(base_train.height) * base_train.width;
      Rng proot(gen.perm_seed);
      for (int ti = 0; ti < gen.n_tasks; ++ti) {
        std::vector<int> perm(static_cast<std::size_t>(plane));
        for (std::int64_t p = 0; p < plane; ++p) perm[static_cast<std::size_t>(p)] = static_cast<int>(p);
        if (ti > 0) {
          Rng pr = proot.fork(static_cast<std::uint64_t>(ti));
          pr.shuffle(perm);
        }
        TaskSpec t;
        t.name = "perm" + std::to_string(ti);
        t.train = permute_pixels(base_train, perm);
        t.test = permute_pixels(base_test, perm);
        finish(std::move(t));
      }
      break;
    }
    case TaskGenerator::Kind::Rotate: {
      if (gen.angles.empty()) throw SpecError("Rotate needs at least one angle");
      std::set<double> distinct(gen.angles.begin(), gen.angles.end());
      if (distinct.size() != gen.angles.size())
        throw SpecError("Rotate angles must be distinct");
      for (double a : gen.angles) {
        TaskSpec t;
        t.name = "rot" + std::to_string(static_cast<int>(std::lround(a)));
        t.train = rotate_images(base_train, a);
        t.test = rotate_images(base_test, a);
        finish(std::move(t));
      }
      break;
    }
    case TaskGenerator::Kind::Compose: {
      if (gen.parts.empty()) throw SpecError("Compose needs at least one part");
      for (const auto& part : gen.parts) build_tasks(part, base_train, base_test, spec, rng, out);
      break;
    }
  }
}

}  // namespace detail

// Expands a sequence spec against base train/test splits. Per-task
// subsampling streams are forked off `seed` by task position, so a task's
// data does not depend on what other tasks exist before it in the list
// beyond its position.
inline std::vector<TaskSpec> make_tasks(const TaskSequenceSpec& spec, const Dataset& base_train,
                                        const Dataset& base_test, std::uint64_t seed) {
  base_train.check();
  base_test.check();
  if (base_train.channels != base_test.channels || base_train.height != base_test.height ||
      base_train.width != base_test.width)
    throw DataError("base train/test geometry mismatch");
  if (spec.base_classes > 0) {
    for (const Dataset* ds : {&base_train, &base_test})
      for (int l : ds->labels)
        if (l >= spec.base_classes)
          throw DataError("base label " + std::to_string(l) + " outside declared " +
                          std::to_string(spec.base_classes) + "-class set");
  }
  Rng rng(seed);
  std::vector<TaskSpec> out;
  detail::build_tasks(spec.generator, base_train, base_test, spec, rng, out);
  if (out.empty()) throw SpecError("task generator produced no tasks");
  return out;
}

}  // namespace clr
