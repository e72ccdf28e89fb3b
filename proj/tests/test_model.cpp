#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "maskgate/model.hpp"
#include "maskgate/tensor.hpp"
#include "testutil.hpp"

using namespace maskgate;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

ModelConfig small_mlp() {
  ModelConfig cfg = default_config(ModelKind::mlp_m);
  cfg.widths = {3, 4, 4};
  cfg.mask_placement = {0};
  return cfg;
}

ModelConfig small_conv() {
  ModelConfig cfg = default_config(ModelKind::convnet_m);
  cfg.widths = {2, 3};
  cfg.in_channels = 1;
  cfg.in_h = 8;
  cfg.in_w = 8;
  cfg.mask_placement = {0};
  cfg.classes = 4;
  return cfg;
}

}  // namespace

TEST_SUITE("model-zoo") {

TEST_CASE("config arithmetic") {
  ModelConfig mlp = default_config(ModelKind::mlp_m);
  CHECK(mlp.widths == std::vector<int>{3, 16, 16});
  CHECK(mlp.block_count() == 2);
  CHECK(mlp.block_input(0) == 3);
  CHECK(mlp.block_width(0) == 16);
  CHECK(mlp.branch_dim(0) == 16);
  CHECK(mlp.classifier_input() == 32);

  ModelConfig conv = default_config(ModelKind::convnet_m);
  CHECK(conv.block_count() == 3);
  CHECK(conv.block_input(0) == 1);
  CHECK(conv.block_input(2) == 32);
  CHECK(conv.mask_placement == std::vector<int>{0, 1});
  CHECK(conv.classifier_input() == 64 + 16 + 32);

  conv.branch_dims = {8, 8};
  CHECK(conv.classifier_input() == 64 + 16);
  conv.branch_dims.clear();

  conv.mask_placement.clear();
  CHECK(conv.classifier_input() == 64);
}

TEST_CASE("config validation") {
  ModelConfig cfg = default_config(ModelKind::convnet_m);
  cfg.validate();

  ModelConfig bad = cfg;
  bad.mask_placement = {0, 2};
  CHECK_THROWS_WITH_AS(bad.validate(), "at least one block must follow the last mask module",
                       ConfigError);
  bad.mask_placement = {1, 0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.mask_placement = {-1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.mask_placement = {5};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.classes = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.tau = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.branch_dims = {4};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.widths = {};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  ModelConfig mlp = default_config(ModelKind::mlp_m);
  mlp.use_residual = true;
  CHECK_THROWS_AS(mlp.validate(), ConfigError);
  mlp = default_config(ModelKind::mlp_m);
  mlp.widths = {3};
  CHECK_THROWS_AS(mlp.validate(), ConfigError);
}

TEST_CASE("build is deterministic per seed") {
  ModelConfig cfg = small_conv();
  MaskedNetwork a = build(cfg, 5);
  MaskedNetwork b = build(cfg, 5);
  MaskedNetwork c = build(cfg, 6);
  auto na = a.named_parameters();
  auto nb = b.named_parameters();
  auto nc = c.named_parameters();
  REQUIRE(na.size() == nb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < na.size(); ++i) {
    CHECK(na[i].first == nb[i].first);
    CHECK(na[i].second.values() == nb[i].second.values());
    if (na[i].second.values() != nc[i].second.values()) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("post-init masks are all ones") {
  MaskedNetwork net = build(small_conv(), 3);
  Graph g;
  CollectResult r = forward_collect(g, net, random_tensor({2, 1, 8, 8}, 9));
  REQUIRE(r.masks.size() == 1);
  REQUIRE(r.proportions.size() == 1);
  CHECK(r.proportions[0] == 1.0);
  for (double v : r.masks[0].mask1.values()) CHECK(v == 1.0);
  CHECK(proportion_nonlinear(r.masks[0].mask1) == r.proportions[0]);

  MaskedNetwork two = build(default_config(ModelKind::convnet_m), 3);
  Graph g2;
  CollectResult r2 = forward_collect(g2, two, random_tensor({1, 1, 28, 28}, 10));
  CHECK(r2.masks.size() == 2);
  CHECK(r2.proportions == std::vector<double>{1.0, 1.0});
}

TEST_CASE("with all-ones masks the branches see only zeros") {
  MaskedNetwork net = build(small_conv(), 11);
  Tensor x = random_tensor({3, 1, 8, 8}, 12);
  Graph g;
  Tensor logits = model_forward(g, net, x);

  // Branch weights are irrelevant while f_linear is identically zero.
  for (double& v : net.branches[0].w.values()) v = 123.456;
  Graph g2;
  Tensor scrambled = model_forward(g2, net, x);
  CHECK(logits.values() == scrambled.values());
}

TEST_CASE("mlp forward matches a hand-composed chain") {
  ModelConfig cfg = small_mlp();
  MaskedNetwork net = build(cfg, 21);
  Tensor x = random_tensor({2, 3}, 22);

  Graph g;
  Tensor logits = model_forward(g, net, x);

  Graph h;
  Tensor f0 = fc_forward(h, net.fc_blocks[0], x);
  Tensor z = gate_logits(h, net.masks[0]);
  MaskPair mp = binarize(z, cfg.tau);
  FeatureSplit split = split_features(h, f0, mp);
  Tensor branch = linear_branch_forward(h, net.branches[0], split.linear);
  Tensor cur = relu(h, split.nonlinear);
  Tensor f1 = fc_forward(h, net.fc_blocks[1], cur);
  cur = relu(h, f1);
  Tensor cat = concat(h, {branch, cur}, 1);
  Tensor want = fc_forward(h, net.classifier, cat);
  CHECK(logits.values() == want.values());
}

TEST_CASE("convnet forward matches a hand-composed chain") {
  ModelConfig cfg = small_conv();
  MaskedNetwork net = build(cfg, 31);
  Tensor x = random_tensor({2, 1, 8, 8}, 32);

  Graph g;
  Tensor logits = model_forward(g, net, x);

  Graph h;
  Tensor f0 = conv_block_forward(h, net.conv_blocks[0], x);
  MaskPair mp = binarize(gate_logits(h, net.masks[0]), cfg.tau);
  FeatureSplit split = split_features(h, f0, mp);
  Tensor branch = linear_branch_forward(h, net.branches[0], split.linear);
  Tensor cur = maxpool2d(h, relu(h, split.nonlinear), 2, 2);
  Tensor f1 = conv_block_forward(h, net.conv_blocks[1], cur);
  cur = relu(h, f1);
  Tensor cat = concat(h, {branch, global_avg_pool(h, cur)}, 1);
  Tensor want = fc_forward(h, net.classifier, cat);
  CHECK(logits.values() == want.values());
}

TEST_CASE("zero input and zero biases give zero logits") {
  MaskedNetwork net = build(small_conv(), 41);
  Graph g;
  Tensor logits = model_forward(g, net, Tensor::zeros({1, 1, 8, 8}));
  for (double v : logits.values()) CHECK(v == 0.0);
}

TEST_CASE("input shape mismatches are rejected") {
  MaskedNetwork net = build(small_conv(), 51);
  Graph g;
  CHECK_THROWS_AS(model_forward(g, net, random_tensor({1, 2, 8, 8}, 52)), DimensionError);
  CHECK_THROWS_AS(model_forward(g, net, random_tensor({1, 3}, 53)), DimensionError);
  MaskedNetwork mlp = build(small_mlp(), 54);
  CHECK_THROWS_AS(model_forward(g, mlp, random_tensor({1, 4}, 55)), DimensionError);
}

TEST_CASE("masked net with silenced branches equals the bare baseline") {
  ModelConfig cfg = small_conv();
  MaskedNetwork masked = build(cfg, 61);

  ModelConfig bare_cfg = cfg;
  bare_cfg.mask_placement.clear();
  MaskedNetwork bare = build(bare_cfg, 61);

  // Identical init streams give identical backbones either way.
  CHECK(masked.conv_blocks[0].w1.values() == bare.conv_blocks[0].w1.values());
  CHECK(masked.conv_blocks[1].w1.values() == bare.conv_blocks[1].w1.values());

  for (double& v : masked.branches[0].w.values()) v = 0.0;
  for (double& v : masked.branches[0].b.values()) v = 0.0;
  const int width = cfg.classifier_input();
  const int d0 = cfg.branch_dim(0);
  for (int row = 0; row < cfg.classes; ++row) {
    for (int col = 0; col < d0; ++col) {
      masked.classifier.w.values()[row * width + col] = 0.0;
    }
  }

  Tensor x = random_tensor({3, 1, 8, 8}, 62);
  Graph g1, g2;
  Tensor a = model_forward(g1, masked, x);
  Tensor b = model_forward(g2, bare, x);
  CHECK(a.values() == b.values());
}

TEST_CASE("residual convnet builds and runs") {
  ModelConfig cfg = small_conv();
  cfg.use_residual = true;
  MaskedNetwork net = build(cfg, 71);
  bool has_w2 = false;
  for (const auto& [name, t] : net.named_parameters()) {
    if (name == "block0/w2") has_w2 = true;
  }
  CHECK(has_w2);
  Graph g;
  Tensor logits = model_forward(g, net, random_tensor({2, 1, 8, 8}, 72));
  CHECK(logits.shape() == std::vector<int>{2, 4});
}

TEST_CASE("mask parameters stay below five percent of the backbone") {
  MaskedNetwork net = build(default_config(ModelKind::convnet_m), 81);
  std::int64_t mask_count = 0;
  std::int64_t backbone_count = 0;
  for (const auto& [name, t] : net.named_parameters()) {
    if (name.rfind("mask_b", 0) == 0) {
      mask_count += static_cast<std::int64_t>(t.size());
    } else {
      backbone_count += static_cast<std::int64_t>(t.size());
    }
  }
  CHECK(mask_count > 0);
  CHECK(static_cast<double>(mask_count) < 0.05 * static_cast<double>(backbone_count));
}

TEST_CASE("count_params sums every trainable scalar") {
  FcLayer fc{Tensor::zeros({2, 3}), Tensor::zeros({2})};
  CHECK(fc.w.size() + fc.b.size() == 8);

  ModelConfig cfg = small_mlp();
  MaskedNetwork net = build(cfg, 91);
  // blocks 3->4 and 4->4, mask (m 4, w1 4x4, b1 4, w2 4x4, b2 4), branch 4->4,
  // classifier 8->2.
  const std::int64_t want = (4 * 3 + 4) + (4 * 4 + 4) + (4 + 16 + 4 + 16 + 4) +
                            (4 * 4 + 4) + (2 * 8 + 2);
  CHECK(count_params(net) == want);
}

TEST_CASE("clone is deep") {
  MaskedNetwork net = build(small_conv(), 101);
  MaskedNetwork copy = net.clone();
  Tensor x = random_tensor({1, 1, 8, 8}, 102);
  Graph g1, g2;
  CHECK(model_forward(g1, net, x).values() == model_forward(g2, copy, x).values());
  copy.conv_blocks[0].w1.values()[0] += 1.0;
  CHECK(net.conv_blocks[0].w1.values()[0] != copy.conv_blocks[0].w1.values()[0]);
}

TEST_CASE("mask_states reports current binarization") {
  MaskedNetwork net = build(small_conv(), 111);
  auto states = net.mask_states();
  REQUIRE(states.size() == 1);
  CHECK(states[0].block == 0);
  CHECK(states[0].c == 2);
  CHECK(states[0].z.size() == 2);
  CHECK(states[0].p_nonlinear == 1.0);

  net.masks_frozen = true;
  net.frozen_mask1 = {{1.0, 0.0}};
  auto frozen = net.mask_states();
  CHECK(frozen[0].z.empty());
  CHECK(frozen[0].p_nonlinear == 0.5);
  bool saw_mask_param = false;
  for (const auto& [name, t] : net.named_parameters()) {
    if (name.rfind("mask_b", 0) == 0) saw_mask_param = true;
  }
  CHECK(!saw_mask_param);
}

}  // TEST_SUITE
