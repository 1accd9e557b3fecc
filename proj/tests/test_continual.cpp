#include <gtest/gtest.h>

#include "clr/continual.hpp"

using namespace clr;

namespace {

// Two trivially separable classes: dark images and bright images.
Dataset blobs(int n, std::uint64_t seed) {
  Dataset ds;
  ds.name = "blobs";
  ds.channels = 1;
  ds.height = 28;
  ds.width = 28;
  ds.class_names = {"dark", "bright"};
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    ds.labels.push_back(i % 2);
    const float base = (i % 2) ? 0.5f : -0.5f;
    for (int p = 0; p < 28 * 28; ++p)
      ds.images.push_back(base + static_cast<float>(rng.uniform(-0.1, 0.1)));
  }
  return ds;
}

BackboneState frozen_backbone() {
  auto s = build_network(arch_preset("tinynet", 2), 3);
  const auto train = blobs(16, 1);
  PretrainHyper hp;
  hp.epochs = 1;
  hp.batch_size = 8;
  pretrain(s, train, train, hp);
  freeze(s);
  return s;
}

std::vector<TaskSpec> permute_tasks(int n_tasks) {
  TaskSequenceSpec spec;
  spec.generator.kind = TaskGenerator::Kind::PixelPermute;
  spec.generator.n_tasks = n_tasks;
  spec.generator.perm_seed = 11;
  return make_tasks(spec, blobs(24, 2), blobs(20, 3), 0);
}

TrainTaskHyper quick_hyper(int epochs = 2) {
  TrainTaskHyper h;
  h.epochs = epochs;
  h.lr = 0.05f;
  h.batch_size = 8;
  h.seed = 7;
  return h;
}

}  // namespace

TEST(AccuracyMatrixShape, IndexingIsLowerTriangular) {
  AccuracyMatrix m;
  m.rows = {{{1, 2}}, {{1, 2}, {3, 4}}};
  m.task_ids = {0, 1};
  m.task_names = {"a", "b"};
  EXPECT_EQ(m.learned(), 2);
  EXPECT_EQ(m.at(1, 0).correct, 1);
  EXPECT_DOUBLE_EQ(m.at(1, 1).value(), 0.75);
  EXPECT_THROW(m.at(0, 1), RangeError);
  EXPECT_THROW(m.at(2, 0), RangeError);
  EXPECT_THROW(m.at(-1, 0), RangeError);
  EXPECT_DOUBLE_EQ(AccuracyCell{}.value(), 0.0);
}

TEST(TrainTask, GuardsAndZeroEpochBehaviour) {
  auto tasks = permute_tasks(1);
  TaskLibrary lib;
  lib.backbone = build_network(arch_preset("tinynet", 2), 3);
  EXPECT_THROW(train_task(lib, tasks[0], quick_hyper()), StateError);  // unfrozen

  lib.backbone = frozen_backbone();
  auto bad = quick_hyper();
  bad.epochs = -1;
  EXPECT_THROW(train_task(lib, tasks[0], bad), RangeError);
  bad = quick_hyper();
  bad.batch_size = 0;
  EXPECT_THROW(train_task(lib, tasks[0], bad), RangeError);

  const auto& a = train_task(lib, tasks[0], quick_hyper(0));
  EXPECT_TRUE(a.training_log.empty());
  for (const auto& [path, layer] : a.layers)
    for (std::size_t i = 0; i < layer.kernels->data.size(); ++i)
      EXPECT_EQ(layer.kernels->data[i], (i % 9 == 4) ? 1.0f : 0.0f);

  EXPECT_THROW(train_task(lib, tasks[0], quick_hyper()), StateError);  // duplicate
}

TEST(Evaluate, ZeroedHeadPredictsClassZeroEverywhere) {
  auto tasks = permute_tasks(1);
  TaskLibrary lib;
  lib.backbone = frozen_backbone();
  train_task(lib, tasks[0], quick_hyper(0));
  auto& a = lib.adapters.at(0);
  std::fill(a.head_w->data.begin(), a.head_w->data.end(), 0.0f);
  std::fill(a.head_b->data.begin(), a.head_b->data.end(), 0.0f);

  const auto [correct, total] = evaluate(lib, 0, Split::Test);
  std::int64_t zeros = 0;
  for (int l : tasks[0].test.labels) zeros += l == 0 ? 1 : 0;
  EXPECT_EQ(total, tasks[0].test.size());
  EXPECT_EQ(correct, zeros);

  EXPECT_THROW(evaluate(lib, 5, Split::Test), StateError);
}

TEST(TrainTask, SeparableToyTaskReachesPerfectAccuracy) {
  auto tasks = permute_tasks(1);
  TaskLibrary lib;
  lib.backbone = frozen_backbone();
  auto h = quick_hyper(20);
  train_task(lib, tasks[0], h);
  const auto [correct, total] = evaluate(lib, 0, Split::Test);
  EXPECT_EQ(correct, total);
}

TEST(RunSequence, SingleTaskGivesOneByOneMatrix) {
  auto [lib, mat] = run_sequence(frozen_backbone(), permute_tasks(1), ClrVariant::Standard,
                                 quick_hyper());
  EXPECT_EQ(mat.learned(), 1);
  ASSERT_EQ(mat.rows.size(), 1u);
  ASSERT_EQ(mat.rows[0].size(), 1u);
  EXPECT_EQ(mat.task_ids, (std::vector<int>{0}));
  EXPECT_EQ(mat.rows[0][0].total, 20);
}

TEST(RunSequence, EarlierTasksNeverMoveOnceLearned) {
  const auto tasks = permute_tasks(3);
  auto backbone = frozen_backbone();
  const auto h0 = backbone_hash(backbone);
  auto [lib, mat] = run_sequence(std::move(backbone), tasks, ClrVariant::Standard, quick_hyper());
  ASSERT_EQ(mat.learned(), 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= i; ++j) {
      EXPECT_EQ(mat.at(i, j).correct, mat.at(j, j).correct) << i << "," << j;
      EXPECT_EQ(mat.at(i, j).total, mat.at(j, j).total);
    }
  EXPECT_EQ(backbone_hash(lib.backbone), h0);
  for (double f : forgetting(mat)) EXPECT_EQ(f, 0.0);
}

TEST(RunSequence, TaskOrderDoesNotChangeDiagonalCells) {
  const auto tasks = permute_tasks(3);
  std::vector<TaskSpec> reordered = {tasks[2], tasks[0], tasks[1]};
  auto [lib_a, mat_a] =
      run_sequence(frozen_backbone(), tasks, ClrVariant::Standard, quick_hyper());
  auto [lib_b, mat_b] =
      run_sequence(frozen_backbone(), reordered, ClrVariant::Standard, quick_hyper());
  std::map<int, AccuracyCell> diag_a, diag_b;
  for (int p = 0; p < 3; ++p) {
    diag_a[mat_a.task_ids[static_cast<std::size_t>(p)]] = mat_a.at(p, p);
    diag_b[mat_b.task_ids[static_cast<std::size_t>(p)]] = mat_b.at(p, p);
  }
  EXPECT_EQ(diag_a, diag_b);
}

TEST(RunSequence, ResumeContinuationMatchesOneShotRun) {
  const auto tasks = permute_tasks(3);
  const auto hyper = quick_hyper();
  auto [lib_full, mat_full] =
      run_sequence(frozen_backbone(), tasks, ClrVariant::Standard, hyper);

  const std::vector<TaskSpec> first_two = {tasks[0], tasks[1]};
  auto [lib_part, mat_part] =
      run_sequence(frozen_backbone(), first_two, ClrVariant::Standard, hyper);
  const auto mat_resumed = run_sequence(lib_part, tasks, hyper, mat_part);

  EXPECT_EQ(mat_resumed, mat_full);
  EXPECT_EQ(lib_part.adapters.size(), 3u);
}

TEST(RunSequence, ResumeValidation) {
  const auto tasks = permute_tasks(2);
  TaskLibrary lib;
  lib.backbone = frozen_backbone();

  AccuracyMatrix too_long;
  too_long.rows = {{{1, 1}}, {{1, 1}, {1, 1}}, {{1, 1}, {1, 1}, {1, 1}}};
  EXPECT_THROW(run_sequence(lib, tasks, quick_hyper(), too_long), StateError);

  AccuracyMatrix one_row;
  one_row.rows = {{{1, 1}}};
  EXPECT_THROW(run_sequence(lib, tasks, quick_hyper(), one_row), StateError);  // no adapter
}

TEST(Reductions, CurveAndForgettingMatchHandValues) {
  AccuracyMatrix m;
  m.rows = {{{8, 10}}, {{7, 10}, {8, 10}}};
  m.task_ids = {0, 1};
  m.task_names = {"a", "b"};
  const auto curve = average_accuracy_curve(m);
  ASSERT_EQ(curve.size(), 2u);
  EXPECT_DOUBLE_EQ(curve[0], 0.8);
  EXPECT_DOUBLE_EQ(curve[1], 0.75);

  AccuracyMatrix f;
  f.rows = {{{9, 10}}, {{7, 10}, {6, 10}}};
  const auto fg = forgetting(f);
  ASSERT_EQ(fg.size(), 2u);
  EXPECT_DOUBLE_EQ(fg[0], 0.2);  // peak 0.9 then 0.7
  EXPECT_DOUBLE_EQ(fg[1], 0.0);

  EXPECT_TRUE(forgetting(AccuracyMatrix{}).empty());
  EXPECT_TRUE(average_accuracy_curve(AccuracyMatrix{}).empty());
}

TEST(Reductions, AgreeWithBruteForceOnRandomMatrix) {
  Rng rng(31);
  AccuracyMatrix m;
  const int n = 6;
  for (int i = 0; i < n; ++i) {
    std::vector<AccuracyCell> row;
    for (int j = 0; j <= i; ++j)
      row.push_back({static_cast<std::int64_t>(rng.next_below(51)), 50});
    m.rows.push_back(row);
    m.task_ids.push_back(i);
    m.task_names.push_back("t");
  }
  const auto curve = average_accuracy_curve(m);
  const auto fg = forgetting(m);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j <= i; ++j)
      s += static_cast<double>(m.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].correct) / 50.0;
    EXPECT_DOUBLE_EQ(curve[static_cast<std::size_t>(i)], s / (i + 1));
  }
  for (int j = 0; j < n; ++j) {
    double peak = 0.0;
    for (int i = j; i < n; ++i)
      peak = std::max(peak, m.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].value());
    EXPECT_DOUBLE_EQ(fg[static_cast<std::size_t>(j)],
                     peak - m.rows[n - 1][static_cast<std::size_t>(j)].value());
  }
}

TEST(Bootstrap, SingleValueAndDegenerateCases) {
  const auto [mean, stdev] = bootstrap_summary({0.8}, 1, 100, true, 0);
  EXPECT_DOUBLE_EQ(mean, 0.8);
  EXPECT_DOUBLE_EQ(stdev, 0.0);

  // Drawing all N without replacement: every resample is the same set.
  const auto [m2, s2] = bootstrap_summary({0.2, 0.4, 0.9}, 3, 1000, false, 5);
  EXPECT_DOUBLE_EQ(m2, (0.2 + 0.4 + 0.9) / 3.0);
  EXPECT_EQ(s2, 0.0);
}

TEST(Bootstrap, CoinFlipMomentsConverge) {
  const int n_res = 20000;
  const auto [mean, stdev] = bootstrap_summary({0.0, 1.0}, 1, n_res, true, 9);
  EXPECT_NEAR(mean, 0.5, 3.0 * 0.5 / std::sqrt(static_cast<double>(n_res)) + 1e-12);
  EXPECT_NEAR(stdev, 0.5, 0.02);
}

TEST(Bootstrap, Determinism) {
  const std::vector<double> accs = {0.1, 0.5, 0.9, 0.7};
  const auto a = bootstrap_summary(accs, 3, 500, true, 42);
  const auto b = bootstrap_summary(accs, 3, 500, true, 42);
  EXPECT_EQ(a, b);
  const auto c = bootstrap_summary(accs, 3, 500, true, 43);
  EXPECT_NE(a, c);
}

TEST(Bootstrap, RangeValidation) {
  EXPECT_THROW(bootstrap_summary({}, 1, 10, true, 0), RangeError);
  EXPECT_THROW(bootstrap_summary({0.5}, 0, 10, true, 0), RangeError);
  EXPECT_THROW(bootstrap_summary({0.5, 0.6}, 3, 10, false, 0), RangeError);
  EXPECT_THROW(bootstrap_summary({0.5}, 1, 0, true, 0), RangeError);
  EXPECT_NO_THROW(bootstrap_summary({0.5, 0.6}, 5, 10, true, 0));  // with replacement
}
