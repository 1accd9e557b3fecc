// Renders the built-in synthetic datasets to IDX files, for use as pretrain
// or task data without any external downloads.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "clr/cli.hpp"
#include "clr/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"write a synthetic IDX dataset"};
  std::string kind, out_dir;
  int n_train = 5000, n_test = 1000;
  std::uint64_t seed = 7;
  app.add_option("kind", kind, "digits or clothing")->required();
  app.add_option("out_dir", out_dir, "output directory")->required();
  app.add_option("--train", n_train, "training images (multiple of 10)");
  app.add_option("--test", n_test, "test images (multiple of 10)");
  app.add_option("--seed", seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  return clr::run_guarded([&]() -> int {
    if (kind == "digits")
      clr::make_digits_idx(out_dir, n_train, n_test, seed);
    else if (kind == "clothing")
      clr::make_clothing_idx(out_dir, n_train, n_test, seed);
    else
      throw clr::ConfigError("kind must be digits or clothing, got `" + kind + "`");
    std::cout << "wrote " << kind << "-{train,test}-{images,labels}.idx to " << out_dir << "\n";
    return 0;
  });
}
