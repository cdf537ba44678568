#pragma once

#include <span>
#include <string>
#include <vector>

#include "sharppath/graph.hpp"
#include "sharppath/rng.hpp"

namespace sharppath {

/// Immutable after load. inputs is (N, H, W, C) for image data or
/// (N, features) for flat data; labels has length N.
struct Dataset {
  Tensor inputs;
  std::vector<int> labels;
  std::string split = "train";
  std::string normalization = "scale01"; // bytes mapped to [0,1]
  int n() const { return inputs.shape.empty() ? 0 : inputs.shape[0]; }
};

struct AugmentConfig {
  int pad = 0;
  bool random_crop = false;
  bool hflip = false;
};

// CIFAR-10 binary layout: records of 1 label byte + 3072 pixel bytes
// (R, G, B planes of a 32x32 image). Pixels land in [0,1].
Dataset load_cifar10_bin(const std::vector<std::string>& paths);
void write_cifar10_bin(const std::string& path, const Dataset& data);

// IDX (magic 0x803 images / 0x801 labels, big-endian dims).
Dataset load_idx(const std::string& image_path, const std::string& label_path);
void write_idx(const std::string& image_path, const std::string& label_path,
               const Dataset& data);

/// Class-conditional Gaussians: class means drawn N(0, separation²) per
/// coordinate, unit within-class noise. Deterministic per seed.
Dataset synth_gaussian(int classes, int n, int dim, double separation,
                       uint64_t seed);

/// Image-like class-conditional data: each class mean is a smooth random
/// field (a few low-frequency cosine modes) of amplitude `separation`
/// around mid-gray, with smooth per-image distortion plus pixel noise.
/// Values stay in the [0,1]-ish range of byte images. Deterministic.
Dataset synth_images(int classes, int n, int h, int w, int c,
                     double separation, uint64_t seed);

/// Reinterpret flat features as images; h*w*c must equal the feature count.
Dataset reshape_images(Dataset data, int h, int w, int c);

/// First n examples in file order.
Dataset subsample_first_n(const Dataset& data, int n);
/// Half-open range [begin, end).
Dataset take_range(const Dataset& data, int begin, int end);
/// Random subset of the given size, drawn without replacement.
Dataset subsample_random(const Dataset& data, int n, SeededRng& rng);

Batch gather_batch(const Dataset& data, std::span<const int> idx);
Batch gather_range(const Dataset& data, int begin, int end);

/// Zero-pad, random-crop back to the original extent, coin-flip horizontal
/// mirror. Labels pass through untouched.
Batch augment(const Batch& batch, const AugmentConfig& cfg, SeededRng& rng);
/// Unconditional mirror, exposed for tests.
Tensor hflip_images(const Tensor& images);

/// Deterministic epoch batching: a permutation seeded by (seed, epoch) cut
/// into batches of s, keeping the final short batch.
std::vector<std::vector<int>> epoch_batches(int n, int s, uint64_t seed,
                                            int epoch, bool shuffle);

} // namespace sharppath
