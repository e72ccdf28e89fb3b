#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "doctest.h"
#include "maskgate/checkpoint.hpp"
#include "maskgate/model.hpp"
#include "maskgate/prune.hpp"
#include "testutil.hpp"

using namespace maskgate;
using testutil::max_abs_diff;
using testutil::random_tensor;
using testutil::read_file;
using testutil::TempDir;

namespace {

ModelConfig small_mlp(std::vector<int> placement) {
  ModelConfig cfg = default_config(ModelKind::mlp_m);
  cfg.widths = {3, 6, 6, 6};
  cfg.mask_placement = std::move(placement);
  cfg.classes = 2;
  return cfg;
}

ModelConfig small_conv(bool residual) {
  ModelConfig cfg = default_config(ModelKind::convnet_m);
  cfg.widths = {2, 4, 3};
  cfg.in_channels = 1;
  cfg.in_h = 8;
  cfg.in_w = 8;
  cfg.mask_placement = {0, 1};
  cfg.use_residual = residual;
  cfg.classes = 2;
  return cfg;
}

void write_bytes(const std::string& path, const std::string& bytes) {
  FILE* f = std::fopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
}

void u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

using Entries = std::vector<std::pair<std::string, Tensor>>;

Entries without(Entries entries, const std::string& name) {
  Entries out;
  for (auto& e : entries) {
    if (e.first != name) out.push_back(std::move(e));
  }
  return out;
}

Entries replaced(Entries entries, const std::string& name, Tensor t) {
  for (auto& e : entries) {
    if (e.first == name) e.second = t;
  }
  return entries;
}

Tensor run(const MaskedNetwork& net, const Tensor& x) {
  Graph g;
  return model_forward(g, net, x);
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("a checkpoint round trips bit for bit") {
  MaskedNetwork net = build(small_mlp({0, 1}), 7);
  TempDir tmp;
  const std::string path = tmp.file("net.mgk");
  save_checkpoint(path, net);

  MaskedNetwork loaded = load_checkpoint(path);
  CHECK(loaded.cfg.kind == ModelKind::mlp_m);
  CHECK(loaded.cfg.widths == net.cfg.widths);
  CHECK(loaded.cfg.classes == 2);
  CHECK(loaded.cfg.mask_placement == std::vector<int>{0, 1});
  CHECK(loaded.cfg.tau == net.cfg.tau);
  CHECK(!loaded.masks_frozen);

  auto a = net.named_parameters();
  auto b = loaded.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second.values() == b[i].second.values());
    CHECK(a[i].second.shape() == b[i].second.shape());
  }

  Tensor x = random_tensor({4, 3}, 31);
  CHECK(max_abs_diff(run(net, x), run(loaded, x)) == 0.0);

  const std::string again = tmp.file("again.mgk");
  save_checkpoint(again, loaded);
  const std::string bytes_a = read_file(path);
  CHECK(!bytes_a.empty());
  CHECK(bytes_a == read_file(again));
  CHECK(bytes_a.rfind("MGK1", 0) == 0);
}

TEST_CASE("conv networks round trip") {
  for (bool residual : {false, true}) {
    CAPTURE(residual);
    MaskedNetwork net = build(small_conv(residual), 11);
    TempDir tmp;
    const std::string path = tmp.file("conv.mgk");
    save_checkpoint(path, net);
    MaskedNetwork loaded = load_checkpoint(path);
    CHECK(loaded.cfg.use_residual == residual);
    CHECK(loaded.cfg.in_h == 8);
    Tensor x = random_tensor({2, 1, 8, 8}, 33);
    CHECK(max_abs_diff(run(net, x), run(loaded, x)) == 0.0);
  }
}

TEST_CASE("a pruned network round trips with its structure") {
  MaskedNetwork net = build(small_mlp({0, 1}), 13);
  // Pin block 1 to keep channels 0, 2, 4 and block 0 to keep 0..4.
  for (const auto& [name, t] : net.named_parameters()) {
    if (name == "mask_b1/w2" || name == "mask_b0/w2") {
      std::fill(t.values().begin(), t.values().end(), 0.0);
    }
    if (name == "mask_b1/b2") t.values() = {1, -1, 1, -1, 1, -1};
    if (name == "mask_b0/b2") t.values() = {1, 1, 1, 1, 1, -1};
  }
  MaskedNetwork pruned = rebuild_pruned(net, derive_keep_plan(net));

  TempDir tmp;
  const std::string path = tmp.file("pruned.mgk");
  save_checkpoint(path, pruned);
  MaskedNetwork loaded = load_checkpoint(path);

  CHECK(loaded.masks_frozen);
  CHECK(loaded.frozen_mask1 == pruned.frozen_mask1);
  REQUIRE(loaded.select_after.size() == pruned.select_after.size());
  for (std::size_t i = 0; i < loaded.select_after.size(); ++i) {
    CHECK(loaded.select_after[i] == pruned.select_after[i]);
  }
  CHECK(count_params(loaded) == count_params(pruned));
  Tensor x = random_tensor({4, 3}, 35);
  CHECK(max_abs_diff(run(pruned, x), run(loaded, x)) == 0.0);
}

TEST_CASE("loading rejects files that are not checkpoints") {
  TempDir tmp;
  CHECK_THROWS_AS(load_checkpoint(tmp.file("absent.mgk")), IoError);

  const std::string bad_magic = tmp.file("bad-magic.mgk");
  write_bytes(bad_magic, "XGK1 whatever follows");
  try {
    load_checkpoint(bad_magic);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("is not an MGK1 checkpoint") != std::string::npos);
  }

  std::string zero_name = "MGK1";
  u32le(zero_name, 0);
  const std::string zero_path = tmp.file("zero-name.mgk");
  write_bytes(zero_path, zero_name);
  CHECK_THROWS_AS(load_checkpoint_entries(zero_path), FormatError);

  std::string big_name = "MGK1";
  u32le(big_name, 100000);
  const std::string big_path = tmp.file("big-name.mgk");
  write_bytes(big_path, big_name);
  CHECK_THROWS_AS(load_checkpoint_entries(big_path), FormatError);

  std::string bad_rank = "MGK1";
  u32le(bad_rank, 1);
  bad_rank += 'a';
  u32le(bad_rank, 9);
  const std::string rank_path = tmp.file("bad-rank.mgk");
  write_bytes(rank_path, bad_rank);
  CHECK_THROWS_AS(load_checkpoint_entries(rank_path), FormatError);

  std::string zero_dim = "MGK1";
  u32le(zero_dim, 1);
  zero_dim += 'a';
  u32le(zero_dim, 1);
  u32le(zero_dim, 0);
  const std::string dim_path = tmp.file("zero-dim.mgk");
  write_bytes(dim_path, zero_dim);
  CHECK_THROWS_AS(load_checkpoint_entries(dim_path), FormatError);

  std::string short_name = "MGK1";
  u32le(short_name, 4);
  short_name += "ab";
  const std::string short_path = tmp.file("short-name.mgk");
  write_bytes(short_path, short_name);
  CHECK_THROWS_AS(load_checkpoint_entries(short_path), FormatError);
}

TEST_CASE("truncated checkpoints are reported") {
  MaskedNetwork net = build(small_mlp({0}), 17);
  TempDir tmp;
  const std::string path = tmp.file("full.mgk");
  save_checkpoint(path, net);
  const std::string bytes = read_file(path);
  REQUIRE(bytes.size() > 64);

  const std::string cut_values = tmp.file("cut-values.mgk");
  write_bytes(cut_values, bytes.substr(0, bytes.size() - 4));
  try {
    load_checkpoint_entries(cut_values);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("truncated inside the values") !=
          std::string::npos);
  }

  const std::string cut_header = tmp.file("cut-header.mgk");
  write_bytes(cut_header, bytes.substr(0, 6));
  CHECK_THROWS_AS(load_checkpoint_entries(cut_header), FormatError);

  // Magic alone parses to zero entries, which fails reconstruction.
  const std::string magic_only = tmp.file("magic-only.mgk");
  write_bytes(magic_only, bytes.substr(0, 4));
  CHECK(load_checkpoint_entries(magic_only).empty());
  CHECK_THROWS_WITH_AS(net_from_checkpoint({}),
                       "checkpoint is missing entry structure/version", FormatError);
}

TEST_CASE("reconstruction validates the entry table") {
  MaskedNetwork net = build(small_mlp({0}), 19);
  TempDir tmp;
  const std::string path = tmp.file("net.mgk");
  save_checkpoint(path, net);
  const Entries entries = load_checkpoint_entries(path);

  Entries repeated = entries;
  repeated.push_back(entries[0]);
  CHECK_THROWS_WITH_AS(net_from_checkpoint(repeated),
                       "checkpoint repeats entry structure/version", FormatError);

  CHECK_THROWS_WITH_AS(net_from_checkpoint(without(entries, "classifier/b")),
                       "checkpoint is missing entry classifier/b", FormatError);

  Entries extra = entries;
  extra.emplace_back("extra/x", Tensor::scalar(1.0));
  CHECK_THROWS_WITH_AS(net_from_checkpoint(extra),
                       "checkpoint carries unexpected entry extra/x", FormatError);

  CHECK_THROWS_WITH_AS(
      net_from_checkpoint(replaced(entries, "structure/version", Tensor::scalar(2.0))),
      "unsupported checkpoint version", FormatError);

  CHECK_THROWS_WITH_AS(
      net_from_checkpoint(
          replaced(entries, "structure/mask_placement", Tensor({2}, {5.0, 0.0}))),
      "checkpoint entry structure/mask_placement has a bad length prefix",
      FormatError);

  CHECK_THROWS_AS(
      net_from_checkpoint(replaced(entries, "structure/widths", Tensor({1}, {3.0}))),
      ConfigError);
}

}  // TEST_SUITE
