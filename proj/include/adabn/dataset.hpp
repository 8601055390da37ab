#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adabn/tensor.hpp"

namespace adabn {

struct LabeledDataset {
  TensorF images;           // [N x C x H x W], values in [0,1]
  std::vector<int> labels;  // class ids in [0, class_count)
  int class_count = 0;
  std::string name;

  int count() const { return images.rank() == 4 ? images.dim(0) : 0; }
  int channels() const { return images.dim(1); }
  int height() const { return images.dim(2); }
  int width() const { return images.dim(3); }

  // Copy of image i as [C x H x W].
  TensorF image(int i) const;
};

// IDX container pair (big-endian magic + dims, unsigned byte payload).
// Pixels are scaled to [0,1] by dividing by 255; channel count is 1.
LabeledDataset read_idx_pair(const std::string& images_path, const std::string& labels_path);

// Re-serializes a dataset to the IDX pair layout. Pixel values must be
// multiples of 1/255 (as produced by read_idx_pair) so the round trip is
// byte-exact.
void write_idx_pair(const LabeledDataset& data, const std::string& images_path,
                    const std::string& labels_path);

enum class CifarVariant { kCifar10, kCifar100 };

// CIFAR binary records: 1 label byte (kCifar10) or coarse+fine label bytes
// (kCifar100, fine kept) followed by 3072 pixel bytes in R,G,B planes of
// 32x32. Multiple files concatenate.
LabeledDataset read_cifar_bin(const std::vector<std::string>& paths, CifarVariant variant);

void write_cifar_bin(const LabeledDataset& data, const std::string& path, CifarVariant variant);

struct BatchPlan {
  std::uint64_t seed = 0;
  int batch_size = 0;
  std::vector<std::vector<int>> batches;  // concatenation is a permutation of [0,n)
};

// Seeded uniform shuffle of [0,n) partitioned into consecutive batches; the
// final partial batch is kept. The shuffle depends only on (n, seed), never
// on batch_size, so plans at different sizes nest.
BatchPlan make_batches(int n, int batch_size, std::uint64_t seed);

struct FoldSplit {
  struct Fold {
    std::vector<int> train;
    std::vector<int> validation;
  };
  std::vector<Fold> folds;
};

// Seeded shuffle, then K contiguous validation slices of size floor(n/K) or
// ceil(n/K); training indices are the complement in shuffled order.
FoldSplit kfold_split(int n, int k, std::uint64_t seed);

// Deterministic procedural 10-class digit dataset: seven-segment glyphs with
// jittered position, stroke intensity and background noise, quantized to the
// byte grid so IDX round trips are exact. Labels cycle 0..9.
LabeledDataset make_synthetic_digits(int n, std::uint64_t seed);

}  // namespace adabn
