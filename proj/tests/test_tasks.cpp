#include <algorithm>
#include <vector>

#include <gtest/gtest.h>

#include "clr/tasks.hpp"

using namespace clr;

namespace {

// 10 classes, `per` samples each; every image is unique and channel 1 tracks
// channel 0 at a +100 offset so per-channel transform checks are easy.
Dataset grid_base(int per, int channels = 1, int side = 6) {
  Dataset ds;
  ds.name = "grid";
  ds.channels = channels;
  ds.height = side;
  ds.width = side;
  for (int c = 0; c < 10; ++c) ds.class_names.push_back("c" + std::to_string(c));
  const int plane = side * side;
  int sample = 0;
  for (int c = 0; c < 10; ++c) {
    for (int i = 0; i < per; ++i, ++sample) {
      ds.labels.push_back(c);
      for (int ch = 0; ch < channels; ++ch)
        for (int p = 0; p < plane; ++p)
          ds.images.push_back(static_cast<float>(sample * 1000 + p + ch * 100));
    }
  }
  ds.check();
  return ds;
}

TaskSequenceSpec permute_spec(int n_tasks, int train_per_task = 0) {
  TaskSequenceSpec s;
  s.generator.kind = TaskGenerator::Kind::PixelPermute;
  s.generator.n_tasks = n_tasks;
  s.generator.perm_seed = 5;
  s.train_per_task = train_per_task;
  return s;
}

std::vector<float> sorted_copy(const float* p, std::int64_t n) {
  std::vector<float> v(p, p + n);
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(ClassSplit, RelabelsInGroupOrderAndConservesSamples) {
  const auto base = grid_base(4);
  TaskSequenceSpec spec;
  spec.generator.kind = TaskGenerator::Kind::ClassSplit;
  spec.generator.groups = {{3, 7}, {1, 2, 9}};
  const auto tasks = make_tasks(spec, base, base, 0);
  ASSERT_EQ(tasks.size(), 2u);

  EXPECT_EQ(tasks[0].task_id, 0);
  EXPECT_EQ(tasks[0].name, "split0");
  EXPECT_EQ(tasks[0].num_classes, 2);
  EXPECT_EQ(tasks[0].train.class_names, (std::vector<std::string>{"c3", "c7"}));
  EXPECT_EQ(tasks[0].train.size(), 8);
  for (int l : tasks[0].train.labels) EXPECT_TRUE(l == 0 || l == 1);

  EXPECT_EQ(tasks[1].num_classes, 3);
  EXPECT_EQ(tasks[1].train.size(), 12);

  // Relabeled class 0 of task 0 carries class-3 pixel content from the base.
  const auto t0 = tasks[0].train;
  int first_c0 = -1;
  for (int i = 0; i < t0.size(); ++i)
    if (t0.labels[static_cast<std::size_t>(i)] == 0) { first_c0 = i; break; }
  ASSERT_GE(first_c0, 0);
  const float* img = t0.image(first_c0);
  const float* base_img = base.image(3 * 4);  // first sample of class 3
  for (std::int64_t p = 0; p < base.image_elems(); ++p) EXPECT_EQ(img[p], base_img[p]);
}

TEST(ClassSplit, RejectsOverlapAndBadClasses) {
  const auto base = grid_base(2);
  TaskSequenceSpec spec;
  spec.generator.kind = TaskGenerator::Kind::ClassSplit;
  spec.generator.groups = {{1, 2}, {2, 3}};
  EXPECT_THROW(make_tasks(spec, base, base, 0), SpecError);

  spec.generator.groups = {{1, 1}};
  EXPECT_THROW(make_tasks(spec, base, base, 0), SpecError);

  spec.generator.groups = {{0}, {}};
  EXPECT_THROW(make_tasks(spec, base, base, 0), SpecError);

  spec.generator.groups = {{10}};
  EXPECT_THROW(make_tasks(spec, base, base, 0), SpecError);

  spec.generator.groups.clear();
  EXPECT_THROW(make_tasks(spec, base, base, 0), SpecError);
}

TEST(MakeTasks, DeclaredBaseClassCountIsEnforced) {
  const auto base = grid_base(2);
  auto spec = permute_spec(1);
  spec.base_classes = 5;  // base has labels up to 9
  EXPECT_THROW(make_tasks(spec, base, base, 0), DataError);
  spec.base_classes = 10;
  EXPECT_NO_THROW(make_tasks(spec, base, base, 0));
}

TEST(PixelPermute, FirstTaskIsTheIdentity) {
  const auto base = grid_base(2);
  const auto tasks = make_tasks(permute_spec(3), base, base, 0);
  ASSERT_EQ(tasks.size(), 3u);
  EXPECT_EQ(tasks[0].name, "perm0");
  EXPECT_EQ(tasks[0].train.images, base.images);
  EXPECT_EQ(tasks[0].test.images, base.images);
  EXPECT_EQ(tasks[0].train.labels, base.labels);
}

TEST(PixelPermute, LaterTasksPermuteWithoutLosingPixels) {
  const auto base = grid_base(2);
  const auto tasks = make_tasks(permute_spec(3), base, base, 0);
  const std::int64_t e = base.image_elems();
  for (int ti = 1; ti < 3; ++ti) {
    const auto& tr = tasks[static_cast<std::size_t>(ti)].train;
    bool any_moved = false;
    for (int i = 0; i < base.size(); ++i) {
      EXPECT_EQ(sorted_copy(tr.image(i), e), sorted_copy(base.image(i), e));
      for (std::int64_t p = 0; p < e; ++p) any_moved |= tr.image(i)[p] != base.image(i)[p];
    }
    EXPECT_TRUE(any_moved) << "task " << ti;
  }
  // Distinct permutations across tasks.
  EXPECT_NE(tasks[1].train.images, tasks[2].train.images);
}

TEST(PixelPermute, SamePermutationOnEveryChannel) {
  const auto base = grid_base(2, /*channels=*/2);
  const auto tasks = make_tasks(permute_spec(2), base, base, 0);
  const auto& tr = tasks[1].train;
  const std::int64_t plane = static_cast<std::int64_t>(base.height) * base.width;
  for (int i = 0; i < tr.size(); ++i) {
    const float* ch0 = tr.image(i);
    const float* ch1 = tr.image(i) + plane;
    for (std::int64_t p = 0; p < plane; ++p) EXPECT_EQ(ch1[p], ch0[p] + 100.0f);
  }
}

TEST(PixelPermute, ConstructionIsDeterministic) {
  const auto base = grid_base(3);
  const auto a = make_tasks(permute_spec(3, 20), base, base, 4);
  const auto b = make_tasks(permute_spec(3, 20), base, base, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].train.images, b[i].train.images);
    EXPECT_EQ(a[i].train.labels, b[i].train.labels);
    EXPECT_EQ(a[i].test.images, b[i].test.images);
  }
  const auto c = make_tasks(permute_spec(3, 20), base, base, 5);
  EXPECT_NE(a[0].train.images, c[0].train.images);  // subsample seed moved
}

TEST(Rotate, ZeroDegreesIsBitwiseAndPairsInvert) {
  const auto base = grid_base(2);
  TaskSequenceSpec spec;
  spec.generator.kind = TaskGenerator::Kind::Rotate;
  spec.generator.angles = {0.0, 90.0, 180.0};
  const auto tasks = make_tasks(spec, base, base, 0);
  ASSERT_EQ(tasks.size(), 3u);
  EXPECT_EQ(tasks[0].name, "rot0");
  EXPECT_EQ(tasks[1].name, "rot90");
  EXPECT_EQ(tasks[0].train.images, base.images);
  EXPECT_NE(tasks[2].train.images, base.images);

  // 180 degrees is an exact point reflection, so applying it twice round-trips.
  const auto once = detail::rotate_images(base, 180.0);
  const auto twice = detail::rotate_images(once, 180.0);
  EXPECT_EQ(twice.images, base.images);
}

TEST(Rotate, DuplicateAnglesAreRejected) {
  const auto base = grid_base(1);
  TaskSequenceSpec spec;
  spec.generator.kind = TaskGenerator::Kind::Rotate;
  spec.generator.angles = {0.0, 90.0, 0.0};
  EXPECT_THROW(make_tasks(spec, base, base, 0), SpecError);
  spec.generator.angles.clear();
  EXPECT_THROW(make_tasks(spec, base, base, 0), SpecError);
}

TEST(Compose, ConcatenatesPartsInOrder) {
  const auto base = grid_base(2);
  TaskGenerator split;
  split.kind = TaskGenerator::Kind::ClassSplit;
  split.groups = {{0, 1}};
  TaskGenerator rot;
  rot.kind = TaskGenerator::Kind::Rotate;
  rot.angles = {0.0, 90.0};
  TaskSequenceSpec spec;
  spec.generator.kind = TaskGenerator::Kind::Compose;
  spec.generator.parts = {split, rot};
  const auto tasks = make_tasks(spec, base, base, 0);
  ASSERT_EQ(tasks.size(), 3u);
  EXPECT_EQ(tasks[0].name, "split0");
  EXPECT_EQ(tasks[1].name, "rot0");
  EXPECT_EQ(tasks[2].name, "rot90");
  for (std::size_t i = 0; i < tasks.size(); ++i)
    EXPECT_EQ(tasks[i].task_id, static_cast<int>(i));

  TaskGenerator empty;
  empty.kind = TaskGenerator::Kind::Compose;
  TaskSequenceSpec bad;
  bad.generator = empty;
  EXPECT_THROW(make_tasks(bad, base, base, 0), SpecError);
}

TEST(Subsample, StratifiedWithRemainderToLowestClasses) {
  const auto base = grid_base(10);  // 100 samples
  auto spec = permute_spec(1, /*train_per_task=*/25);
  spec.test_per_task = 10;
  const auto tasks = make_tasks(spec, base, base, 3);
  const auto& tr = tasks[0].train;
  EXPECT_EQ(tr.size(), 25);
  std::vector<int> counts(10, 0);
  for (int l : tr.labels) counts[static_cast<std::size_t>(l)]++;
  for (int c = 0; c < 10; ++c) EXPECT_EQ(counts[static_cast<std::size_t>(c)], c < 5 ? 3 : 2) << c;
  EXPECT_EQ(tasks[0].test.size(), 10);

  // val aliases the test split
  EXPECT_EQ(tasks[0].val.images, tasks[0].test.images);
  EXPECT_EQ(tasks[0].val.labels, tasks[0].test.labels);
}

TEST(Subsample, ZeroKeepsEverythingAndOverdraftFails) {
  const auto base = grid_base(3);
  const auto all = make_tasks(permute_spec(1, 0), base, base, 0);
  EXPECT_EQ(all[0].train.size(), base.size());

  // A target at or above the dataset size keeps everything.
  const auto big = make_tasks(permute_spec(1, base.size() + 1), base, base, 0);
  EXPECT_EQ(big[0].train.size(), base.size());

  // Starve class 0 down to one sample; a stratified draw of 25 needs three.
  Dataset lopsided = base;
  const int plane = lopsided.height * lopsided.width;
  lopsided.labels.erase(lopsided.labels.begin(), lopsided.labels.begin() + 2);
  lopsided.images.erase(lopsided.images.begin(), lopsided.images.begin() + 2 * plane);
  lopsided.check();
  EXPECT_THROW(make_tasks(permute_spec(1, 25), lopsided, lopsided, 0), DataError);
}

TEST(MakeTasks, BaseGeometryMustAgree) {
  const auto base = grid_base(2);
  auto other = grid_base(2, 1, 8);
  EXPECT_THROW(make_tasks(permute_spec(1), base, other, 0), DataError);
}
