#pragma once

#include "adq/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace adq {

/// Labeled images, [N, C, H, W].
struct Dataset {
    Tensor images;
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
};

struct DataSplit {
    Dataset train;
    Dataset test;
};

/// Gaussian class prototypes plus per-sample Gaussian noise.
struct SyntheticSpec {
    std::array<int, 3> shape{1, 8, 8};
    int num_classes = 10;
    int train_per_class = 100;
    int test_per_class = 40;
    double noise = 1.0;
    std::uint64_t seed = 0;
};

DataSplit make_synthetic(const SyntheticSpec& spec);

/// Reads `dir/<label>/*.f64` or `*.f32` raw little-endian images of the given
/// shape. Labels are the integer subdirectory names; files load in sorted order.
Dataset load_image_directory(const std::string& dir, std::array<int, 3> shape);

/// `root/train` and `root/test` via load_image_directory.
DataSplit load_image_split(const std::string& root, std::array<int, 3> shape);

} // namespace adq
