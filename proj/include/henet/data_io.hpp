#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "henet/tensor.hpp"

namespace henet {

// Images stay as raw bytes; normalization (x/255, then per-channel mean
// subtraction with means from the training split) happens on access.
struct LabeledDataset {
  Index count = 0;
  int class_count = 10;
  Index image_size = 32;                // square, 3 channels, channel-major
  std::vector<std::uint8_t> pixels;     // count * 3 * size * size
  std::vector<int> labels;
  std::array<float, 3> channel_means{0.0f, 0.0f, 0.0f};

  Index bytes_per_image() const { return 3 * image_size * image_size; }

  // Writes sample i as (3, size, size) floats into dst.
  void copy_normalized(Index i, float* dst) const;
  Tensor<float> normalized_image(Index i) const;  // (1, 3, size, size)

  // First n samples; keeps the normalization means.
  LabeledDataset head(Index n) const;
};

std::array<float, 3> compute_channel_means(const LabeledDataset& ds);

struct DatasetPair {
  LabeledDataset train, test;
};

// Standard binary batches: data_batch_1..5.bin + test_batch.bin, one record =
// 1 label byte + 3072 image bytes (R, G, B planes). Means come from train.
DatasetPair load_cifar10(const std::string& dir);

// train.bin/test.bin with records of 1 coarse + 1 fine label byte + 3072
// image bytes; the fine label is kept, the coarse one discarded.
DatasetPair load_cifar100(const std::string& dir);

// Deterministic images with class-dependent planted channel means (adjacent
// classes differ by at least 20/255) so small models can overfit; labels are
// balanced round-robin.
LabeledDataset synth_dataset(Index n, int classes, std::uint64_t seed);

// Writes ds in the CIFAR-10 binary batch layout (single file).
void write_cifar10_batch(const LabeledDataset& ds, const std::string& path);

}  // namespace henet
