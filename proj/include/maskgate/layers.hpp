#pragma once

#include "maskgate/tensor.hpp"

namespace maskgate {

/// Fully-connected layer y = x . W^T + b with W stored [out, in].
struct FcLayer {
  Tensor w;  // [out, in]
  Tensor b;  // [out]
};

/// Per-channel learnable scale and shift (stands in for batch normalization
/// inside residual blocks; no running statistics).
struct ChannelAffine {
  Tensor g;  // [c], scale
  Tensor b;  // [c], shift
};

/// One backbone convolution block. Plain form is a single biased 3x3 conv.
/// Residual form is conv -> affine -> relu -> conv -> affine plus an identity
/// skip from the first activation; both return the pre-activation map.
struct ConvBlock {
  bool residual = false;
  Tensor w1;  // [c_out, c_in, k, k]
  Tensor b1;  // [c_out]
  // residual-only second conv and the two affine layers
  Tensor w2;  // [c_out, c_out, k, k]
  Tensor b2;  // [c_out]
  ChannelAffine ca1;
  ChannelAffine ca2;
  int stride = 1;
  int padding = 1;
};

/// Affine-only head for a linear feature map: global average pool (skipped for
/// rank-2 input) followed by one fully-connected map to width d.
struct LinearBranchHead {
  Tensor w;  // [d, c]
  Tensor b;  // [d]
};

Tensor fc_forward(Graph& g, const FcLayer& layer, const Tensor& x);

Tensor channel_affine_forward(Graph& g, const ChannelAffine& layer, const Tensor& x);

/// Pre-activation output F of the block; the caller applies the activation so
/// a mask module can intercept it.
Tensor conv_block_forward(Graph& g, const ConvBlock& block, const Tensor& x);

Tensor linear_branch_forward(Graph& g, const LinearBranchHead& head,
                             const Tensor& f_linear);

}  // namespace maskgate
