#include "maskgate/model.hpp"

#include <algorithm>
#include <cmath>

#include "maskgate/rng.hpp"

namespace maskgate {

int ModelConfig::block_count() const {
  return kind == ModelKind::mlp_m ? static_cast<int>(widths.size()) - 1
                                  : static_cast<int>(widths.size());
}

int ModelConfig::block_width(int i) const {
  return kind == ModelKind::mlp_m ? widths.at(static_cast<std::size_t>(i) + 1)
                                  : widths.at(static_cast<std::size_t>(i));
}

int ModelConfig::block_input(int i) const {
  if (kind == ModelKind::mlp_m) return widths.at(static_cast<std::size_t>(i));
  return i == 0 ? in_channels : widths.at(static_cast<std::size_t>(i) - 1);
}

int ModelConfig::branch_dim(int j) const {
  if (!branch_dims.empty()) return branch_dims.at(static_cast<std::size_t>(j));
  return block_width(mask_placement.at(static_cast<std::size_t>(j)));
}

int ModelConfig::hidden_of(int j) const {
  if (!mask_hidden.empty()) return mask_hidden.at(static_cast<std::size_t>(j));
  return default_hidden(block_width(mask_placement.at(static_cast<std::size_t>(j))));
}

int ModelConfig::classifier_input() const {
  int width = block_width(block_count() - 1);
  for (std::size_t j = 0; j < mask_placement.size(); ++j) {
    width += branch_dim(static_cast<int>(j));
  }
  return width;
}

void ModelConfig::validate() const {
  if (kind == ModelKind::mlp_m) {
    if (widths.size() < 2) {
      throw ConfigError("mlp-m needs an input width plus at least one block width");
    }
    if (use_residual) throw ConfigError("residual blocks apply to convnet-m only");
  } else {
    if (widths.empty()) throw ConfigError("convnet-m needs at least one channel count");
    if (in_channels < 1 || in_h < 1 || in_w < 1) {
      throw ConfigError("convnet-m input plane must have positive dimensions");
    }
  }
  for (int w : widths) {
    if (w < 1) throw ConfigError("layer widths must be >= 1");
  }
  if (classes < 2) throw ConfigError("classifier needs at least 2 classes");
  if (!(tau > -1.0 && tau < 1.0)) {
    throw ConfigError("mask threshold must lie in (-1,1)");
  }
  const int blocks = block_count();
  int prev = -1;
  for (int p : mask_placement) {
    if (p <= prev) throw ConfigError("mask placement indices must be strictly increasing");
    if (p < 0 || p >= blocks) {
      throw ConfigError("mask placement index " + std::to_string(p) +
                        " outside the " + std::to_string(blocks) + "-block backbone");
    }
    prev = p;
  }
  if (!mask_placement.empty() && mask_placement.back() >= blocks - 1) {
    throw ConfigError("at least one block must follow the last mask module");
  }
  if (!branch_dims.empty() && branch_dims.size() != mask_placement.size()) {
    throw ConfigError("branch_dims must match the number of mask placements");
  }
  for (int d : branch_dims) {
    if (d < 1) throw ConfigError("branch widths must be >= 1");
  }
  if (!mask_hidden.empty() && mask_hidden.size() != mask_placement.size()) {
    throw ConfigError("mask_hidden must match the number of mask placements");
  }
  for (int h : mask_hidden) {
    if (h < 1) throw ConfigError("mask hidden widths must be >= 1");
  }
}

ModelConfig default_config(ModelKind kind) {
  ModelConfig cfg;
  cfg.kind = kind;
  if (kind == ModelKind::convnet_m) {
    cfg.widths = {16, 32, 64};
    cfg.in_channels = 1;
    cfg.in_h = 28;
    cfg.in_w = 28;
    cfg.mask_placement = {0, 1};
    cfg.classes = 10;
  } else {
    cfg.widths = {3, 16, 16};
    cfg.mask_placement = {0};
    cfg.classes = 2;
  }
  return cfg;
}

namespace {

Tensor draw(std::uint64_t seed, const std::string& stream, std::vector<int> shape,
            int fan_in) {
  Tensor t(std::move(shape));
  Rng r(seed, stream);
  for (double& v : t.values()) v = r.fan_in_uniform(fan_in);
  return t;
}

}  // namespace

MaskedNetwork build(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  MaskedNetwork net;
  net.cfg = cfg;
  const int blocks = cfg.block_count();
  net.select_after.assign(static_cast<std::size_t>(blocks), std::nullopt);

  for (int i = 0; i < blocks; ++i) {
    const std::string prefix = "init/block" + std::to_string(i);
    const int in = cfg.block_input(i);
    const int out = cfg.block_width(i);
    if (cfg.kind == ModelKind::mlp_m) {
      FcLayer fc;
      fc.w = draw(seed, prefix + "/w", {out, in}, in);
      fc.b = Tensor({out});
      net.fc_blocks.push_back(fc);
    } else {
      ConvBlock cb;
      cb.residual = cfg.use_residual;
      cb.w1 = draw(seed, prefix + "/w", {out, in, 3, 3}, in * 9);
      cb.b1 = Tensor({out});
      if (cb.residual) {
        cb.w2 = draw(seed, prefix + "/w2", {out, out, 3, 3}, out * 9);
        cb.b2 = Tensor({out});
        cb.ca1 = ChannelAffine{Tensor::full({out}, 1.0), Tensor({out})};
        cb.ca2 = ChannelAffine{Tensor::full({out}, 1.0), Tensor({out})};
      }
      net.conv_blocks.push_back(cb);
    }
  }

  for (std::size_t j = 0; j < cfg.mask_placement.size(); ++j) {
    const int p = cfg.mask_placement[j];
    const int c = cfg.block_width(p);
    net.masks.push_back(init_positive(c, cfg.hidden_of(static_cast<int>(j)), cfg.tau,
                                      seed, "init/mask" + std::to_string(p)));
    const int d = cfg.branch_dim(static_cast<int>(j));
    LinearBranchHead head;
    head.w = draw(seed, "init/branch" + std::to_string(p) + "/w", {d, c}, c);
    head.b = Tensor({d});
    net.branches.push_back(head);
  }

  const int k = cfg.classes;
  const int width = cfg.classifier_input();
  const int final_width = cfg.block_width(blocks - 1);
  net.classifier.w = Tensor({k, width});
  net.classifier.b = Tensor({k});
  auto& cw = net.classifier.w.values();
  int offset = 0;
  for (std::size_t j = 0; j < cfg.mask_placement.size(); ++j) {
    const int d = cfg.branch_dim(static_cast<int>(j));
    Rng r(seed, "init/classifier/w/branch" + std::to_string(cfg.mask_placement[j]));
    for (int row = 0; row < k; ++row) {
      for (int t = 0; t < d; ++t) {
        cw[static_cast<std::size_t>(row) * width + offset + t] = r.fan_in_uniform(d);
      }
    }
    offset += d;
  }
  {
    Rng r(seed, "init/classifier/w/final");
    for (int row = 0; row < k; ++row) {
      for (int t = 0; t < final_width; ++t) {
        cw[static_cast<std::size_t>(row) * width + offset + t] =
            r.fan_in_uniform(final_width);
      }
    }
  }
  return net;
}

namespace {

struct ForwardOut {
  Tensor logits;
  std::vector<MaskPair> masks;
  std::vector<double> proportions;
};

MaskPair frozen_pair(const std::vector<double>& bits) {
  const int c = static_cast<int>(bits.size());
  std::vector<double> m2(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) m2[i] = 1.0 - bits[i];
  return MaskPair{Tensor({c}, bits), Tensor({c}, std::move(m2))};
}

ForwardOut forward_impl(Graph& g, const MaskedNetwork& net, const Tensor& x,
                        bool collect) {
  const ModelConfig& cfg = net.cfg;
  const int blocks = cfg.block_count();
  if (cfg.kind == ModelKind::mlp_m) {
    if (x.rank() != 2 || x.dim(1) != cfg.widths[0]) {
      throw DimensionError("mlp-m expects input [N," + std::to_string(cfg.widths[0]) +
                           "], got " + x.shape_str());
    }
  } else {
    if (x.rank() != 4 || x.dim(1) != cfg.in_channels || x.dim(2) != cfg.in_h ||
        x.dim(3) != cfg.in_w) {
      throw DimensionError("convnet-m expects input [N," + std::to_string(cfg.in_channels) +
                           "," + std::to_string(cfg.in_h) + "," + std::to_string(cfg.in_w) +
                           "], got " + x.shape_str());
    }
  }

  ForwardOut out;
  std::vector<Tensor> branch_outs(cfg.mask_placement.size());
  Tensor cur = x;
  for (int i = 0; i < blocks; ++i) {
    Tensor f = cfg.kind == ModelKind::mlp_m
                   ? fc_forward(g, net.fc_blocks[static_cast<std::size_t>(i)], cur)
                   : conv_block_forward(g, net.conv_blocks[static_cast<std::size_t>(i)], cur);
    const auto it = std::find(cfg.mask_placement.begin(), cfg.mask_placement.end(), i);
    if (it != cfg.mask_placement.end()) {
      const std::size_t j =
          static_cast<std::size_t>(it - cfg.mask_placement.begin());
      MaskPair mp;
      if (net.masks_frozen) {
        mp = frozen_pair(net.frozen_mask1[j]);
      } else {
        Tensor z = gate_logits(g, net.masks[j]);
        mp = ste_binarize(g, z, cfg.tau, cfg.ste);
      }
      FeatureSplit split = split_features(g, f, mp);
      branch_outs[j] = linear_branch_forward(g, net.branches[j], split.linear);
      cur = relu(g, split.nonlinear);
      if (collect) {
        out.masks.push_back(mp);
        out.proportions.push_back(proportion_nonlinear(mp.mask1));
      }
    } else {
      cur = relu(g, f);
    }
    if (cfg.kind == ModelKind::convnet_m && i < blocks - 1) {
      cur = maxpool2d(g, cur, 2, 2);
    }
    if (net.select_after[static_cast<std::size_t>(i)]) {
      cur = select_channels(g, cur, *net.select_after[static_cast<std::size_t>(i)]);
    }
  }
  Tensor final_features = cfg.kind == ModelKind::convnet_m ? global_avg_pool(g, cur) : cur;
  Tensor cat;
  if (branch_outs.empty()) {
    cat = final_features;
  } else {
    std::vector<Tensor> parts = branch_outs;
    parts.push_back(final_features);
    cat = concat(g, parts, 1);
  }
  out.logits = fc_forward(g, net.classifier, cat);
  return out;
}

}  // namespace

Tensor model_forward(Graph& g, const MaskedNetwork& net, const Tensor& x) {
  return forward_impl(g, net, x, false).logits;
}

CollectResult forward_collect(Graph& g, const MaskedNetwork& net, const Tensor& x) {
  ForwardOut out = forward_impl(g, net, x, true);
  return CollectResult{out.logits, std::move(out.masks), std::move(out.proportions)};
}

std::vector<std::pair<std::string, Tensor>> MaskedNetwork::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> named;
  const int blocks = cfg.block_count();
  for (int i = 0; i < blocks; ++i) {
    const std::string prefix = "block" + std::to_string(i);
    if (cfg.kind == ModelKind::mlp_m) {
      const FcLayer& fc = fc_blocks[static_cast<std::size_t>(i)];
      named.emplace_back(prefix + "/w", fc.w);
      named.emplace_back(prefix + "/b", fc.b);
    } else {
      const ConvBlock& cb = conv_blocks[static_cast<std::size_t>(i)];
      named.emplace_back(prefix + "/w", cb.w1);
      named.emplace_back(prefix + "/b", cb.b1);
      if (cb.residual) {
        named.emplace_back(prefix + "/ca1/g", cb.ca1.g);
        named.emplace_back(prefix + "/ca1/b", cb.ca1.b);
        named.emplace_back(prefix + "/w2", cb.w2);
        named.emplace_back(prefix + "/b2", cb.b2);
        named.emplace_back(prefix + "/ca2/g", cb.ca2.g);
        named.emplace_back(prefix + "/ca2/b", cb.ca2.b);
      }
    }
  }
  for (std::size_t j = 0; j < cfg.mask_placement.size(); ++j) {
    const std::string prefix = "mask_b" + std::to_string(cfg.mask_placement[j]);
    if (!masks_frozen) {
      const MaskModuleParams& mm = masks[j];
      named.emplace_back(prefix + "/m", mm.m);
      named.emplace_back(prefix + "/w1", mm.w1);
      named.emplace_back(prefix + "/b1", mm.b1);
      named.emplace_back(prefix + "/w2", mm.w2);
      named.emplace_back(prefix + "/b2", mm.b2);
    }
  }
  for (std::size_t j = 0; j < cfg.mask_placement.size(); ++j) {
    const std::string prefix = "branch_b" + std::to_string(cfg.mask_placement[j]);
    named.emplace_back(prefix + "/w", branches[j].w);
    named.emplace_back(prefix + "/b", branches[j].b);
  }
  named.emplace_back("classifier/w", classifier.w);
  named.emplace_back("classifier/b", classifier.b);
  return named;
}

std::vector<Tensor> MaskedNetwork::backbone_parameters(bool include_branches) const {
  std::vector<Tensor> params;
  for (const auto& [name, t] : named_parameters()) {
    const bool is_mask = name.rfind("mask_b", 0) == 0;
    const bool is_branch = name.rfind("branch_b", 0) == 0;
    if (is_mask) continue;
    if (is_branch && !include_branches) continue;
    params.push_back(t);
  }
  return params;
}

std::vector<Tensor> MaskedNetwork::mask_parameters() const {
  std::vector<Tensor> params;
  if (masks_frozen) return params;
  for (const MaskModuleParams& mm : masks) {
    params.push_back(mm.m);
    params.push_back(mm.w1);
    params.push_back(mm.b1);
    params.push_back(mm.w2);
    params.push_back(mm.b2);
  }
  return params;
}

std::vector<MaskState> MaskedNetwork::mask_states() const {
  std::vector<MaskState> states;
  for (std::size_t j = 0; j < cfg.mask_placement.size(); ++j) {
    MaskState st;
    st.block = cfg.mask_placement[j];
    if (masks_frozen) {
      st.mask1 = frozen_mask1[j];
      st.c = static_cast<int>(st.mask1.size());
    } else {
      Graph scratch;
      Tensor z = gate_logits(scratch, masks[j]);
      st.z = z.values();
      st.mask1 = binarize(z, cfg.tau).mask1.values();
      st.c = masks[j].c;
    }
    st.p_nonlinear = proportion_nonlinear(st.mask1);
    states.push_back(std::move(st));
  }
  return states;
}

MaskedNetwork MaskedNetwork::clone() const {
  MaskedNetwork copy;
  copy.cfg = cfg;
  copy.masks_frozen = masks_frozen;
  copy.frozen_mask1 = frozen_mask1;
  copy.select_after = select_after;
  for (const FcLayer& fc : fc_blocks) {
    copy.fc_blocks.push_back(FcLayer{fc.w.clone(), fc.b.clone()});
  }
  for (const ConvBlock& cb : conv_blocks) {
    ConvBlock nb;
    nb.residual = cb.residual;
    nb.stride = cb.stride;
    nb.padding = cb.padding;
    nb.w1 = cb.w1.clone();
    nb.b1 = cb.b1.clone();
    if (cb.residual) {
      nb.w2 = cb.w2.clone();
      nb.b2 = cb.b2.clone();
      nb.ca1 = ChannelAffine{cb.ca1.g.clone(), cb.ca1.b.clone()};
      nb.ca2 = ChannelAffine{cb.ca2.g.clone(), cb.ca2.b.clone()};
    }
    copy.conv_blocks.push_back(nb);
  }
  for (const MaskModuleParams& mm : masks) {
    MaskModuleParams nm;
    nm.m = mm.m.clone();
    nm.w1 = mm.w1.clone();
    nm.b1 = mm.b1.clone();
    nm.w2 = mm.w2.clone();
    nm.b2 = mm.b2.clone();
    nm.tau = mm.tau;
    nm.c = mm.c;
    nm.hidden = mm.hidden;
    copy.masks.push_back(nm);
  }
  for (const LinearBranchHead& head : branches) {
    copy.branches.push_back(LinearBranchHead{head.w.clone(), head.b.clone()});
  }
  copy.classifier = FcLayer{classifier.w.clone(), classifier.b.clone()};
  return copy;
}

std::int64_t count_params(const MaskedNetwork& net) {
  std::int64_t total = 0;
  for (const auto& [name, t] : net.named_parameters()) {
    (void)name;
    total += static_cast<std::int64_t>(t.size());
  }
  return total;
}

}  // namespace maskgate
