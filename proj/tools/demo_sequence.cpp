// Minimal end-to-end library walkthrough: pretrain a tiny backbone on one
// synthetic dataset, freeze it, learn a short pixel-permutation sequence on
// another, and print the accuracy matrix. Runs in about a minute on one core.

#include <iostream>

#include "clr/clr.hpp"

int main() {
  return clr::run_guarded([]() -> int {
    const std::string dir = "demo_data";
    clr::make_clothing_idx(dir, 2000, 500, 7);
    clr::make_digits_idx(dir, 2000, 1000, 9);

    auto pre_train = clr::load_idx(dir + "/clothing-train-images.idx",
                                   dir + "/clothing-train-labels.idx");
    auto pre_test = clr::load_idx(dir + "/clothing-test-images.idx",
                                  dir + "/clothing-test-labels.idx", &pre_train.norm_mean,
                                  &pre_train.norm_std);

    auto backbone = clr::build_network(clr::arch_preset("tinynet", 10), 1);
    clr::PretrainHyper pre_hyper;
    pre_hyper.epochs = 2;
    clr::pretrain(backbone, pre_train, pre_test, pre_hyper);
    clr::freeze(backbone);
    std::cout << "backbone val acc: " << backbone.provenance.final_val_acc << "\n";

    auto base_train =
        clr::load_idx(dir + "/digits-train-images.idx", dir + "/digits-train-labels.idx");
    auto base_test = clr::load_idx(dir + "/digits-test-images.idx",
                                   dir + "/digits-test-labels.idx", &base_train.norm_mean,
                                   &base_train.norm_std);

    clr::TaskSequenceSpec seq;
    seq.generator.kind = clr::TaskGenerator::Kind::PixelPermute;
    seq.generator.n_tasks = 3;
    seq.generator.perm_seed = 3;
    auto tasks = clr::make_tasks(seq, base_train, base_test, 0);

    clr::TrainTaskHyper hyper;
    hyper.epochs = 4;
    auto [lib, matrix] = clr::run_sequence(std::move(backbone), tasks,
                                           clr::ClrVariant::Standard, hyper);

    for (int i = 0; i < matrix.learned(); ++i) {
      std::cout << "after task " << i << ":";
      for (int j = 0; j <= i; ++j) std::cout << " " << matrix.at(i, j).value();
      std::cout << "\n";
    }
    const auto f = clr::forgetting(matrix);
    for (std::size_t j = 0; j < f.size(); ++j)
      std::cout << "forgetting[" << j << "] = " << f[j] << "\n";
    return 0;
  });
}
