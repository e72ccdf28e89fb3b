#pragma once

#include <cstdint>
#include <vector>

#include "maskgate/rng.hpp"
#include "maskgate/tensor.hpp"

namespace maskgate {

/// Gradient convention at the binarization node. `paper` passes the upstream
/// gradients of both masks through with factor +1; `chain` negates the
/// complement-mask path (mask2 = 1 - mask1 would chain-rule to -1).
enum class SteSign { paper, chain };

/// Learnable state of one mask module: free vector m and the two affine maps
/// of the gate function, plus the binarization threshold.
struct MaskModuleParams {
  Tensor m;   // [c]
  Tensor w1;  // [h, c]
  Tensor b1;  // [h]
  Tensor w2;  // [c, h]
  Tensor b2;  // [c]
  double tau = 0.0;
  int c = 0;
  int hidden = 0;
};

/// Complementary binary channel selectors. Entries are 0.0 or 1.0 and
/// mask1 + mask2 is the all-ones vector.
struct MaskPair {
  Tensor mask1;  // [c], non-linear selector
  Tensor mask2;  // [c], linear selector
};

/// Channel-wise split of a feature map into its non-linear and linear parts.
struct FeatureSplit {
  Tensor nonlinear;
  Tensor linear;
};

/// Default hidden width of the gate: max(c/4, 4).
int default_hidden(int c);

/// z = tanh(W2 . relu(W1 . m + b1) + b2), recorded on the graph. Rank-1 [c].
Tensor gate_logits(Graph& g, const MaskModuleParams& params);

/// Threshold z at tau: mask1[i] = 1 iff z[i] > tau, mask2 = 1 - mask1.
/// Value-level only; no graph recording.
MaskPair binarize(const Tensor& z, double tau);

/// binarize plus a recorded straight-through backward: the gradient arriving
/// at z is mask1.grad + s * mask2.grad with s = +1 (paper) or -1 (chain).
MaskPair ste_binarize(Graph& g, const Tensor& z, double tau,
                      SteSign sign = SteSign::paper);

/// Channel-wise split of F [N,C,...] by the mask pair, recorded on the graph.
FeatureSplit split_features(Graph& g, const Tensor& f, const MaskPair& masks);

/// Fresh parameters whose gate output is strictly positive in every entry, so
/// every channel starts non-linear. b2 starts at +1; if the random affine
/// terms still push some pre-tanh logit below 0.1, b2 is shifted up uniformly
/// until the minimum is exactly 0.1.
MaskModuleParams init_positive(int c, int hidden, double tau, std::uint64_t seed,
                               const std::string& stream_prefix);

/// Fraction of channels marked non-linear: sum(mask1) / c.
double proportion_nonlinear(const Tensor& mask1);
double proportion_nonlinear(const std::vector<double>& mask1);

}  // namespace maskgate
