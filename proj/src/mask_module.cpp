#include "maskgate/mask_module.hpp"

#include <algorithm>
#include <cmath>

namespace maskgate {

int default_hidden(int c) { return std::max(c / 4, 4); }

Tensor gate_logits(Graph& g, const MaskModuleParams& params) {
  Tensor m_row = reshape(g, params.m, {1, params.c});
  Tensor a = relu(g, add_bias(g, matmul(g, m_row, transpose(g, params.w1)), params.b1));
  Tensor z_row = tanh(g, add_bias(g, matmul(g, a, transpose(g, params.w2)), params.b2));
  return reshape(g, z_row, {params.c});
}

MaskPair binarize(const Tensor& z, double tau) {
  const auto& zv = z.values();
  std::vector<double> m1(zv.size()), m2(zv.size());
  for (std::size_t i = 0; i < zv.size(); ++i) {
    m1[i] = zv[i] > tau ? 1.0 : 0.0;
    m2[i] = 1.0 - m1[i];
  }
  const int c = static_cast<int>(zv.size());
  return MaskPair{Tensor({c}, std::move(m1)), Tensor({c}, std::move(m2))};
}

MaskPair ste_binarize(Graph& g, const Tensor& z, double tau, SteSign sign) {
  MaskPair masks = binarize(z, tau);
  const double s = sign == SteSign::paper ? 1.0 : -1.0;
  Tensor m1 = masks.mask1, m2 = masks.mask2;
  g.record([z, m1, m2, s]() {
    const auto& g1 = m1.grad();
    const auto& g2 = m2.grad();
    auto& gz = z.grad();
    for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += g1[i] + s * g2[i];
  });
  return masks;
}

FeatureSplit split_features(Graph& g, const Tensor& f, const MaskPair& masks) {
  if (f.rank() < 2 || f.dim(1) != masks.mask1.dim(0)) {
    throw DimensionError("split_features: feature " + f.shape_str() +
                         " does not carry " + std::to_string(masks.mask1.dim(0)) +
                         " channels");
  }
  return FeatureSplit{mul_elementwise(g, f, masks.mask1),
                      mul_elementwise(g, f, masks.mask2)};
}

MaskModuleParams init_positive(int c, int hidden, double tau, std::uint64_t seed,
                               const std::string& stream_prefix) {
  if (c < 1 || hidden < 1) {
    throw ConfigError("mask module needs c >= 1 and hidden >= 1");
  }
  MaskModuleParams p;
  p.c = c;
  p.hidden = hidden;
  p.tau = tau;
  p.m = Tensor({c});
  p.w1 = Tensor({hidden, c});
  p.b1 = Tensor({hidden});
  p.w2 = Tensor({c, hidden});
  p.b2 = Tensor::full({c}, 1.0);
  {
    Rng r(seed, stream_prefix + "/m");
    for (double& v : p.m.values()) v = r.normal();
  }
  {
    Rng r(seed, stream_prefix + "/w1");
    for (double& v : p.w1.values()) v = r.fan_in_uniform(c);
  }
  {
    Rng r(seed, stream_prefix + "/w2");
    for (double& v : p.w2.values()) v = r.fan_in_uniform(hidden);
  }

  if (!(tau > -1.0 && tau < 1.0)) {
    throw ConfigError("mask threshold must lie in (-1,1), got " + std::to_string(tau));
  }

  // Pre-tanh logits with the current draw; lift b2 until all of them clear the
  // threshold's preimage with margin 0.1, so every channel starts non-linear.
  std::vector<double> a(hidden);
  for (int j = 0; j < hidden; ++j) {
    double acc = 0.0;
    for (int i = 0; i < c; ++i) acc += p.w1.values()[j * c + i] * p.m.values()[i];
    a[j] = std::max(acc, 0.0);
  }
  double min_t = 0.0;
  for (int i = 0; i < c; ++i) {
    double acc = p.b2.values()[i];
    for (int j = 0; j < hidden; ++j) acc += p.w2.values()[i * hidden + j] * a[j];
    min_t = i == 0 ? acc : std::min(min_t, acc);
  }
  const double target = std::atanh(tau) + 0.1;
  if (min_t < target) {
    const double lift = target - min_t;
    for (double& v : p.b2.values()) v += lift;
  }
  return p;
}

double proportion_nonlinear(const Tensor& mask1) {
  return proportion_nonlinear(mask1.values());
}

double proportion_nonlinear(const std::vector<double>& mask1) {
  if (mask1.empty()) throw UsageError("proportion of an empty mask");
  double s = 0.0;
  for (double v : mask1) s += v;
  return s / static_cast<double>(mask1.size());
}

}  // namespace maskgate
