#include "maskgate/layers.hpp"

namespace maskgate {

Tensor fc_forward(Graph& g, const FcLayer& layer, const Tensor& x) {
  return add_bias(g, matmul(g, x, transpose(g, layer.w)), layer.b);
}

Tensor channel_affine_forward(Graph& g, const ChannelAffine& layer, const Tensor& x) {
  return add_bias(g, mul_elementwise(g, x, layer.g), layer.b);
}

Tensor conv_block_forward(Graph& g, const ConvBlock& block, const Tensor& x) {
  Tensor h1 = add_bias(g, conv2d(g, x, block.w1, block.stride, block.padding), block.b1);
  if (!block.residual) return h1;
  Tensor a = relu(g, channel_affine_forward(g, block.ca1, h1));
  Tensor h2 = add_bias(g, conv2d(g, a, block.w2, 1, block.padding), block.b2);
  return add(g, channel_affine_forward(g, block.ca2, h2), a);
}

Tensor linear_branch_forward(Graph& g, const LinearBranchHead& head,
                             const Tensor& f_linear) {
  Tensor pooled = f_linear.rank() == 2 ? f_linear : global_avg_pool(g, f_linear);
  if (pooled.rank() != 2 || pooled.dim(1) != head.w.dim(1)) {
    throw DimensionError("linear branch expects " + std::to_string(head.w.dim(1)) +
                         " channels, got " + f_linear.shape_str());
  }
  FcLayer affine{head.w, head.b};
  return fc_forward(g, affine, pooled);
}

}  // namespace maskgate
