#include "maskgate/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

namespace maskgate {

namespace {

constexpr char kMagic[4] = {'M', 'G', 'K', '1'};
constexpr std::uint32_t kMaxNameLen = 4096;

void put_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 4);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char buf[4];
  if (!is.read(reinterpret_cast<char*>(buf), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return true;
}

bool get_f64(std::istream& is, double& v) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) return false;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  std::memcpy(&v, &bits, 8);
  return true;
}

void write_entry(std::ostream& os, const std::string& name, const Tensor& t) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put_u32(os, static_cast<std::uint32_t>(t.dim(i)));
  for (double v : t.values()) put_f64(os, v);
}

Tensor vec_tensor(const std::vector<double>& v) {
  return Tensor({static_cast<int>(v.size())}, v);
}

std::vector<double> counted(const std::vector<int>& v) {
  std::vector<double> out;
  out.push_back(static_cast<double>(v.size()));
  for (int x : v) out.push_back(static_cast<double>(x));
  return out;
}

std::vector<int> uncounted(const Tensor& t, const std::string& name) {
  const auto& v = t.values();
  if (v.empty()) throw FormatError("checkpoint entry " + name + " is empty");
  const int n = static_cast<int>(v[0]);
  if (n < 0 || static_cast<std::size_t>(n) + 1 != v.size()) {
    throw FormatError("checkpoint entry " + name + " has a bad length prefix");
  }
  std::vector<int> out;
  for (int i = 0; i < n; ++i) out.push_back(static_cast<int>(v[static_cast<std::size_t>(i) + 1]));
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const MaskedNetwork& net) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kMagic, 4);

  const ModelConfig& cfg = net.cfg;
  write_entry(os, "structure/version", Tensor::scalar(1.0));
  write_entry(os, "structure/kind",
              Tensor::scalar(cfg.kind == ModelKind::mlp_m ? 0.0 : 1.0));
  {
    std::vector<double> w(cfg.widths.begin(), cfg.widths.end());
    write_entry(os, "structure/widths", vec_tensor(w));
  }
  if (cfg.kind == ModelKind::mlp_m) {
    write_entry(os, "structure/input", vec_tensor({static_cast<double>(cfg.widths[0])}));
  } else {
    write_entry(os, "structure/input",
                vec_tensor({static_cast<double>(cfg.in_channels),
                            static_cast<double>(cfg.in_h),
                            static_cast<double>(cfg.in_w)}));
  }
  write_entry(os, "structure/classes", Tensor::scalar(cfg.classes));
  write_entry(os, "structure/use_residual", Tensor::scalar(cfg.use_residual ? 1.0 : 0.0));
  write_entry(os, "structure/tau", Tensor::scalar(cfg.tau));
  write_entry(os, "structure/ste", Tensor::scalar(cfg.ste == SteSign::paper ? 0.0 : 1.0));
  write_entry(os, "structure/mask_placement", vec_tensor(counted(cfg.mask_placement)));
  {
    std::vector<int> dims, hidden;
    for (std::size_t j = 0; j < cfg.mask_placement.size(); ++j) {
      dims.push_back(cfg.branch_dim(static_cast<int>(j)));
      hidden.push_back(cfg.hidden_of(static_cast<int>(j)));
    }
    write_entry(os, "structure/branch_dims", vec_tensor(counted(dims)));
    write_entry(os, "structure/mask_hidden", vec_tensor(counted(hidden)));
  }
  write_entry(os, "structure/masks_frozen", Tensor::scalar(net.masks_frozen ? 1.0 : 0.0));
  if (net.masks_frozen) {
    for (std::size_t j = 0; j < cfg.mask_placement.size(); ++j) {
      write_entry(os, "structure/frozen_mask_b" + std::to_string(cfg.mask_placement[j]),
                  vec_tensor(net.frozen_mask1[j]));
    }
  }
  for (std::size_t i = 0; i < net.select_after.size(); ++i) {
    if (!net.select_after[i]) continue;
    std::vector<double> keep;
    for (int idx : *net.select_after[i]) keep.push_back(static_cast<double>(idx));
    write_entry(os, "structure/select_b" + std::to_string(i), vec_tensor(keep));
  }
  for (const auto& [name, t] : net.named_parameters()) write_entry(os, name, t);
  os.flush();
  if (!os) throw IoError("failed while writing " + path);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint_entries(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path + " is not an MGK1 checkpoint");
  }
  std::vector<std::pair<std::string, Tensor>> entries;
  while (true) {
    std::uint32_t name_len;
    if (!get_u32(is, name_len)) {
      if (is.eof() && is.gcount() == 0) break;
      throw FormatError(path + " is truncated mid-entry");
    }
    if (name_len == 0 || name_len > kMaxNameLen) {
      throw FormatError(path + " declares an invalid name length");
    }
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw FormatError(path + " is truncated mid-entry");
    std::uint32_t rank;
    if (!get_u32(is, rank)) throw FormatError(path + " is truncated mid-entry");
    if (rank > 8) throw FormatError(path + " declares an invalid rank for " + name);
    std::vector<int> shape;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint32_t d;
      if (!get_u32(is, d)) throw FormatError(path + " is truncated mid-entry");
      if (d == 0 || d > (1u << 28) || count > (1u << 28) / d) {
        throw FormatError(path + " declares an invalid shape for " + name);
      }
      shape.push_back(static_cast<int>(d));
      count *= d;
    }
    if (rank == 0) {
      shape = {1};
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (!get_f64(is, values[i])) {
        throw FormatError(path + " is truncated inside the values of " + name);
      }
    }
    entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return entries;
}

MaskedNetwork net_from_checkpoint(
    const std::vector<std::pair<std::string, Tensor>>& entries) {
  std::map<std::string, Tensor> table;
  for (const auto& [name, t] : entries) {
    if (!table.emplace(name, t).second) {
      throw FormatError("checkpoint repeats entry " + name);
    }
  }
  std::map<std::string, bool> used;
  auto take = [&](const std::string& name) -> Tensor {
    auto it = table.find(name);
    if (it == table.end()) throw FormatError("checkpoint is missing entry " + name);
    used[name] = true;
    return it->second;
  };
  auto take_scalar = [&](const std::string& name) { return take(name).item(); };

  if (static_cast<int>(take_scalar("structure/version")) != 1) {
    throw FormatError("unsupported checkpoint version");
  }
  ModelConfig cfg;
  cfg.kind = take_scalar("structure/kind") == 0.0 ? ModelKind::mlp_m : ModelKind::convnet_m;
  {
    const auto& w = take("structure/widths").values();
    cfg.widths.assign(w.size(), 0);
    for (std::size_t i = 0; i < w.size(); ++i) cfg.widths[i] = static_cast<int>(w[i]);
  }
  {
    const auto& in = take("structure/input").values();
    if (cfg.kind == ModelKind::convnet_m) {
      if (in.size() != 3) throw FormatError("checkpoint input descriptor is malformed");
      cfg.in_channels = static_cast<int>(in[0]);
      cfg.in_h = static_cast<int>(in[1]);
      cfg.in_w = static_cast<int>(in[2]);
    }
  }
  cfg.classes = static_cast<int>(take_scalar("structure/classes"));
  cfg.use_residual = take_scalar("structure/use_residual") != 0.0;
  cfg.tau = take_scalar("structure/tau");
  cfg.ste = take_scalar("structure/ste") == 0.0 ? SteSign::paper : SteSign::chain;
  cfg.mask_placement = uncounted(take("structure/mask_placement"), "structure/mask_placement");
  cfg.branch_dims = uncounted(take("structure/branch_dims"), "structure/branch_dims");
  cfg.mask_hidden = uncounted(take("structure/mask_hidden"), "structure/mask_hidden");
  cfg.validate();

  MaskedNetwork net;
  net.cfg = cfg;
  net.masks_frozen = take_scalar("structure/masks_frozen") != 0.0;
  net.select_after.assign(static_cast<std::size_t>(cfg.block_count()), std::nullopt);
  for (int i = 0; i < cfg.block_count(); ++i) {
    const std::string name = "structure/select_b" + std::to_string(i);
    if (table.count(name)) {
      std::vector<int> keep;
      for (double v : take(name).values()) keep.push_back(static_cast<int>(v));
      net.select_after[static_cast<std::size_t>(i)] = std::move(keep);
    }
  }
  if (net.masks_frozen) {
    for (int p : cfg.mask_placement) {
      net.frozen_mask1.push_back(take("structure/frozen_mask_b" + std::to_string(p)).values());
    }
  }

  for (int i = 0; i < cfg.block_count(); ++i) {
    const std::string prefix = "block" + std::to_string(i);
    if (cfg.kind == ModelKind::mlp_m) {
      net.fc_blocks.push_back(FcLayer{take(prefix + "/w"), take(prefix + "/b")});
    } else {
      ConvBlock cb;
      cb.residual = cfg.use_residual;
      cb.w1 = take(prefix + "/w");
      cb.b1 = take(prefix + "/b");
      if (cb.residual) {
        cb.ca1 = ChannelAffine{take(prefix + "/ca1/g"), take(prefix + "/ca1/b")};
        cb.w2 = take(prefix + "/w2");
        cb.b2 = take(prefix + "/b2");
        cb.ca2 = ChannelAffine{take(prefix + "/ca2/g"), take(prefix + "/ca2/b")};
      }
      net.conv_blocks.push_back(cb);
    }
  }
  for (std::size_t j = 0; j < cfg.mask_placement.size(); ++j) {
    const int p = cfg.mask_placement[j];
    if (!net.masks_frozen) {
      MaskModuleParams mm;
      const std::string prefix = "mask_b" + std::to_string(p);
      mm.m = take(prefix + "/m");
      mm.w1 = take(prefix + "/w1");
      mm.b1 = take(prefix + "/b1");
      mm.w2 = take(prefix + "/w2");
      mm.b2 = take(prefix + "/b2");
      mm.tau = cfg.tau;
      mm.c = mm.m.dim(0);
      mm.hidden = mm.b1.dim(0);
      net.masks.push_back(mm);
    }
    const std::string bprefix = "branch_b" + std::to_string(p);
    net.branches.push_back(LinearBranchHead{take(bprefix + "/w"), take(bprefix + "/b")});
  }
  net.classifier = FcLayer{take("classifier/w"), take("classifier/b")};

  for (const auto& [name, t] : table) {
    (void)t;
    if (!used.count(name)) throw FormatError("checkpoint carries unexpected entry " + name);
  }
  return net;
}

MaskedNetwork load_checkpoint(const std::string& path) {
  return net_from_checkpoint(load_checkpoint_entries(path));
}

}  // namespace maskgate
