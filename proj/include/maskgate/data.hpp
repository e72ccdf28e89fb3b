#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "maskgate/tensor.hpp"

namespace maskgate {

struct Dataset {
  Tensor inputs;            // [N, ...]
  std::vector<int> labels;  // length N, each in [0, classes)
  std::string name;
  int classes = 0;

  int size() const { return inputs.defined() ? inputs.dim(0) : 0; }
};

/// Two ring-distributed classes that project onto the same xy distribution and
/// separate only along the third axis.
struct SyntheticSpec {
  int samples_per_class = 200;
  double sigma = 0.1;
  double delta = 2.0;
  std::uint64_t seed = 1;
};

Dataset generate_synthetic_3d(const SyntheticSpec& spec);

/// IDX image/label pair (big-endian, magic 0x00000803 / 0x00000801). Pixels
/// are scaled to [0,1]; images come out as [N,1,H,W].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// CSV rows: label followed by width*height*channels pixel values, taken as
/// written. A non-numeric first field on the first row marks a header.
Dataset load_csv(const std::string& path, int width, int height, int channels);

/// Seeded permutation split: the first k permuted rows form the holdout.
std::pair<Dataset, Dataset> split_holdout(const Dataset& d, int k, std::uint64_t seed);

/// Rows `indices` of the dataset as one batch.
std::pair<Tensor, std::vector<int>> gather_batch(const Dataset& d,
                                                 const std::vector<int>& indices);

/// Writes an image/label pair in IDX format (test fixtures and generated
/// corpora). Values are clamped to [0,1] and stored as bytes.
void write_idx(const std::string& images_path, const std::string& labels_path,
               const Dataset& d);

}  // namespace maskgate
