#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maskgate/layers.hpp"
#include "maskgate/mask_module.hpp"
#include "maskgate/tensor.hpp"

namespace maskgate {

enum class ModelKind { mlp_m, convnet_m };

/// Architecture description. For mlp-m, `widths` lists the input width followed
/// by one width per block. For convnet-m, `widths` lists output channels per
/// block and the input plane is `in_channels` x `in_h` x `in_w` with 3x3
/// convolutions, padding 1, and 2x2 max-pooling between blocks.
struct ModelConfig {
  ModelKind kind = ModelKind::convnet_m;
  std::vector<int> widths;
  int in_channels = 1;
  int in_h = 0;
  int in_w = 0;
  std::vector<int> mask_placement;  // block indices, strictly increasing
  bool use_residual = false;
  int classes = 10;
  std::vector<int> branch_dims;  // per placement; empty selects the gated width
  std::vector<int> mask_hidden;  // per placement; empty selects max(c/4, 4)
  double tau = 0.0;
  SteSign ste = SteSign::paper;

  int block_count() const;
  int block_width(int i) const;   // output width/channels of block i
  int block_input(int i) const;   // input width/channels of block i
  int branch_dim(int j) const;    // resolved width of branch j
  int hidden_of(int j) const;     // resolved gate hidden width of placement j
  int classifier_input() const;   // sum of branch dims plus final block width
  void validate() const;          // throws ConfigError
};

ModelConfig default_config(ModelKind kind);

/// Current binary state of one mask module.
struct MaskState {
  int block = 0;
  int c = 0;
  std::vector<double> z;      // empty when the mask is frozen
  std::vector<double> mask1;  // 0/1 entries
  double p_nonlinear = 0.0;
};

struct CollectResult {
  Tensor logits;
  std::vector<MaskPair> masks;
  std::vector<double> proportions;
};

/// Backbone blocks interleaved with mask modules and affine branch heads,
/// closed by a classifier over the concatenated features. After pruning the
/// same structure carries frozen masks and per-block channel selections.
struct MaskedNetwork {
  ModelConfig cfg;
  std::vector<FcLayer> fc_blocks;
  std::vector<ConvBlock> conv_blocks;
  std::vector<MaskModuleParams> masks;
  std::vector<LinearBranchHead> branches;
  FcLayer classifier;
  bool masks_frozen = false;
  std::vector<std::vector<double>> frozen_mask1;  // per placement when frozen
  std::vector<std::optional<std::vector<int>>> select_after;  // per block

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> backbone_parameters(bool include_branches = true) const;
  std::vector<Tensor> mask_parameters() const;
  std::vector<MaskState> mask_states() const;
  MaskedNetwork clone() const;
};

MaskedNetwork build(const ModelConfig& cfg, std::uint64_t seed);

Tensor model_forward(Graph& g, const MaskedNetwork& net, const Tensor& x);

CollectResult forward_collect(Graph& g, const MaskedNetwork& net, const Tensor& x);

std::int64_t count_params(const MaskedNetwork& net);

}  // namespace maskgate
