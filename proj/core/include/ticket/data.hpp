#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ticket/tensor.hpp"

namespace ticket {

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Labelled image set. Pixels live in [0,1]; no mean/std normalization, so
/// attack radii stay in raw pixel units.
struct Dataset {
  Tensor images;  // (N, C, H, W)
  std::vector<int> labels;
  int classes = 10;
  std::string split;  // train | val | test

  int size() const { return static_cast<int>(labels.size()); }
  Shape sample_shape() const;  // (C, H, W)

  Dataset take(int begin, int count, const std::string& new_split) const;
};

/// Parses a big-endian IDX image/label file pair (magic 0x803 / 0x801) and
/// scales pixels by 1/255. Image and label counts are cross-checked.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

/// CIFAR-10 binary batches: one label byte followed by 3072 pixel bytes per
/// record, channel-planar RGB.
Dataset load_cifar10(const std::vector<std::filesystem::path>& batch_files);

/// Deterministic Gaussian blobs with pairwise class-mean separation >= margin
/// (sigma = 0.05), clamped to [0,1]. Images shaped (N, 1, 1, dim).
Dataset synth_blobs(int k, int n_per_class, int dim, double margin, std::uint64_t seed);

/// Deterministic train/holdout split: every val_fraction-th slot goes to the
/// holdout, permuted by seed.
std::pair<Dataset, Dataset> split_train_val(const Dataset& d, double val_fraction,
                                            std::uint64_t seed);

/// Batch index order for one epoch: a permutation of [0, N) chunked into
/// batches, derived deterministically from (shuffle_seed, epoch). The last
/// partial batch is kept.
std::vector<std::vector<int>> batches(const Dataset& d, int batch_size,
                                      std::uint64_t shuffle_seed, int epoch);

Tensor gather_images(const Dataset& d, const std::vector<int>& idx);
std::vector<int> gather_labels(const Dataset& d, const std::vector<int>& idx);

/// Augmentation hook: random pad-and-crop plus optional horizontal flip.
/// MNIST recipes leave it disabled (flips break digit labels).
struct Augment {
  int pad_crop = 0;
  bool hflip = false;
  bool enabled() const { return pad_crop > 0 || hflip; }
};

Tensor augment_batch(const Tensor& images, const Augment& aug, std::uint64_t seed);

}  // namespace ticket
