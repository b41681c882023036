// Generates a synthetic crack dataset: PNG image/mask pairs plus a manifest
// with train/val/test assignments. Useful for smoke-testing the training and
// evaluation pipelines without real imagery.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "crackclf/synthetic.hpp"

using namespace crackclf;

int main(int argc, char** argv) {
    CLI::App app{"generate a synthetic crack dataset with a manifest"};
    std::string out_dir;
    int count = 8;
    uint64_t seed = 0;
    SyntheticConfig syn;
    SplitFractions fractions{0.5, 0.25, 0.25};

    app.add_option("--out", out_dir, "output directory")->required();
    app.add_option("--count", count, "number of image/mask pairs")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--height", syn.height, "image height");
    app.add_option("--width", syn.width, "image width");
    app.add_option("--train", fractions.train, "train fraction");
    app.add_option("--val", fractions.val, "val fraction");
    app.add_option("--test", fractions.test, "test fraction");
    CLI11_PARSE(app, argc, argv);

    try {
        const std::string manifest = write_synthetic_dataset(out_dir, count, seed, syn, fractions);
        std::cout << manifest << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
