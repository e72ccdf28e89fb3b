#include "maskgate/prune.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace maskgate {

double PruneReport::params_reduction() const {
  if (params_before <= 0) return 0.0;
  return 1.0 - static_cast<double>(params_after) / static_cast<double>(params_before);
}

double PruneReport::acc_drop() const { return accuracy_before - accuracy_after_finetune; }

KeepPlan derive_keep_plan(const MaskedNetwork& net) {
  if (net.cfg.mask_placement.empty()) {
    throw PlanError("the network carries no mask modules to prune by");
  }
  if (net.masks_frozen) {
    throw PlanError("masks are already frozen; the network was pruned before");
  }
  KeepPlan plan;
  const auto states = net.mask_states();
  for (std::size_t j = 0; j < states.size(); ++j) {
    KeepEntry entry;
    entry.block = states[j].block;
    entry.mask1 = states[j].mask1;
    entry.fast_track = j == 0;
    for (std::size_t i = 0; i < entry.mask1.size(); ++i) {
      if (entry.mask1[i] > 0.5) entry.keep.push_back(static_cast<int>(i));
    }
    if (entry.keep.empty()) {
      throw PlanError("mask module at block " + std::to_string(entry.block) +
                      " marks every channel linear; no non-linear path would remain");
    }
    plan.entries.push_back(std::move(entry));
  }
  return plan;
}

namespace {

void validate_plan(const MaskedNetwork& net, const KeepPlan& plan) {
  const auto& placement = net.cfg.mask_placement;
  if (plan.entries.size() != placement.size()) {
    throw PlanError("plan covers " + std::to_string(plan.entries.size()) +
                    " blocks but the network has " + std::to_string(placement.size()) +
                    " mask modules");
  }
  for (std::size_t j = 0; j < plan.entries.size(); ++j) {
    const KeepEntry& e = plan.entries[j];
    if (e.block != placement[j]) {
      throw PlanError("plan entry " + std::to_string(j) + " targets block " +
                      std::to_string(e.block) + ", expected block " +
                      std::to_string(placement[j]));
    }
    if (e.fast_track != (j == 0)) {
      throw PlanError("exactly the earliest masked block must be the fast track");
    }
    const int c = net.cfg.block_width(e.block);
    if (static_cast<int>(e.mask1.size()) != c) {
      throw PlanError("plan entry for block " + std::to_string(e.block) +
                      " has a mask of length " + std::to_string(e.mask1.size()) +
                      ", expected " + std::to_string(c));
    }
    std::vector<int> expected;
    for (int i = 0; i < c; ++i) {
      const double b = e.mask1[static_cast<std::size_t>(i)];
      if (b != 0.0 && b != 1.0) {
        throw PlanError("plan mask for block " + std::to_string(e.block) +
                        " is not binary");
      }
      if (b == 1.0) expected.push_back(i);
    }
    if (expected.empty()) {
      throw PlanError("plan keeps no channels at block " + std::to_string(e.block));
    }
    if (e.keep != expected) {
      throw PlanError("plan keep list for block " + std::to_string(e.block) +
                      " disagrees with its mask");
    }
  }
}

Tensor slice_rows(const Tensor& t, const std::vector<int>& rows) {
  std::vector<int> shape = t.shape();
  shape[0] = static_cast<int>(rows.size());
  const std::size_t stride = t.size() / static_cast<std::size_t>(t.dim(0));
  Tensor out(shape);
  const auto& src = t.values();
  auto& dst = out.values();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(rows[r] * stride),
              src.begin() + static_cast<std::ptrdiff_t>((rows[r] + 1) * stride),
              dst.begin() + static_cast<std::ptrdiff_t>(r * stride));
  }
  return out;
}

Tensor slice_dim1(const Tensor& t, const std::vector<int>& cols) {
  std::vector<int> shape = t.shape();
  shape[1] = static_cast<int>(cols.size());
  std::size_t inner = 1;
  for (int d = 2; d < t.rank(); ++d) inner *= static_cast<std::size_t>(t.dim(d));
  Tensor out(shape);
  const auto& src = t.values();
  auto& dst = out.values();
  const std::size_t src_row = static_cast<std::size_t>(t.dim(1)) * inner;
  const std::size_t dst_row = cols.size() * inner;
  for (int r = 0; r < t.dim(0); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::size_t s = static_cast<std::size_t>(r) * src_row +
                            static_cast<std::size_t>(cols[c]) * inner;
      const std::size_t d = static_cast<std::size_t>(r) * dst_row + c * inner;
      std::copy(src.begin() + static_cast<std::ptrdiff_t>(s),
                src.begin() + static_cast<std::ptrdiff_t>(s + inner),
                dst.begin() + static_cast<std::ptrdiff_t>(d));
    }
  }
  return out;
}

std::vector<int> full_range(int n) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

MaskedNetwork rebuild_pruned(const MaskedNetwork& net, const KeepPlan& plan) {
  validate_plan(net, plan);
  const ModelConfig& old = net.cfg;
  const int blocks = old.block_count();

  // Plan entry by block index.
  std::vector<const KeepEntry*> at_block(static_cast<std::size_t>(blocks), nullptr);
  for (const KeepEntry& e : plan.entries) at_block[static_cast<std::size_t>(e.block)] = &e;

  auto shrinks_physically = [&](const KeepEntry& e) {
    return !e.fast_track && !old.use_residual;
  };

  ModelConfig cfg = old;
  cfg.mask_placement = {plan.entries[0].block};
  cfg.branch_dims = {old.branch_dim(0)};
  cfg.mask_hidden = {old.hidden_of(0)};
  for (const KeepEntry& e : plan.entries) {
    if (shrinks_physically(e)) {
      const std::size_t w = static_cast<std::size_t>(
          old.kind == ModelKind::mlp_m ? e.block + 1 : e.block);
      cfg.widths[w] = static_cast<int>(e.keep.size());
    }
  }

  MaskedNetwork out;
  out.cfg = cfg;
  out.masks_frozen = true;
  out.frozen_mask1 = {plan.entries[0].mask1};
  out.select_after.assign(static_cast<std::size_t>(blocks), std::nullopt);
  for (const KeepEntry& e : plan.entries) {
    if (!shrinks_physically(e) &&
        e.keep.size() < static_cast<std::size_t>(old.block_width(e.block))) {
      out.select_after[static_cast<std::size_t>(e.block)] = e.keep;
    }
  }

  for (int i = 0; i < blocks; ++i) {
    const KeepEntry* prev = i > 0 ? at_block[static_cast<std::size_t>(i - 1)] : nullptr;
    const std::vector<int> in_sel =
        prev ? prev->keep : full_range(old.block_input(i));
    const KeepEntry* own = at_block[static_cast<std::size_t>(i)];
    const bool shrink_out = own && shrinks_physically(*own);
    const std::vector<int> out_sel =
        shrink_out ? own->keep : full_range(old.block_width(i));

    if (old.kind == ModelKind::mlp_m) {
      const FcLayer& fc = net.fc_blocks[static_cast<std::size_t>(i)];
      FcLayer nfc;
      nfc.w = slice_dim1(slice_rows(fc.w, out_sel), in_sel);
      nfc.b = slice_rows(fc.b, out_sel);
      out.fc_blocks.push_back(nfc);
    } else {
      const ConvBlock& cb = net.conv_blocks[static_cast<std::size_t>(i)];
      ConvBlock nb;
      nb.residual = cb.residual;
      nb.stride = cb.stride;
      nb.padding = cb.padding;
      nb.w1 = slice_dim1(slice_rows(cb.w1, out_sel), in_sel);
      nb.b1 = slice_rows(cb.b1, out_sel);
      if (cb.residual) {
        nb.w2 = cb.w2.clone();
        nb.b2 = cb.b2.clone();
        nb.ca1 = ChannelAffine{cb.ca1.g.clone(), cb.ca1.b.clone()};
        nb.ca2 = ChannelAffine{cb.ca2.g.clone(), cb.ca2.b.clone()};
      }
      out.conv_blocks.push_back(nb);
    }
  }

  out.branches.push_back(
      LinearBranchHead{net.branches[0].w.clone(), net.branches[0].b.clone()});

  // Classifier columns: fast branch segment, then the final-feature segment;
  // the segments of removed later branches drop out.
  const int k = old.classes;
  const int final_width = old.block_width(blocks - 1);
  std::vector<int> kept_cols;
  int offset = 0;
  for (std::size_t j = 0; j < old.mask_placement.size(); ++j) {
    const int d = old.branch_dim(static_cast<int>(j));
    if (j == 0) {
      for (int t = 0; t < d; ++t) kept_cols.push_back(offset + t);
    }
    offset += d;
  }
  for (int t = 0; t < final_width; ++t) kept_cols.push_back(offset + t);
  const auto& cw = net.classifier.w.values();
  const int old_width = net.classifier.w.dim(1);
  Tensor nw({k, static_cast<int>(kept_cols.size())});
  auto& nv = nw.values();
  for (int row = 0; row < k; ++row) {
    for (std::size_t c = 0; c < kept_cols.size(); ++c) {
      nv[static_cast<std::size_t>(row) * kept_cols.size() + c] =
          cw[static_cast<std::size_t>(row) * old_width + kept_cols[c]];
    }
  }
  out.classifier = FcLayer{nw, net.classifier.b.clone()};
  return out;
}

TrainResult finetune(MaskedNetwork& net, const Dataset& data, const FinetuneConfig& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch = cfg.batch;
  tc.sgd = SgdConfig{cfg.lr, cfg.momentum, cfg.weight_decay};
  tc.adam.lr = 0.0;  // masks stay constant even if the network was never pruned
  tc.adam.weight_decay = 0.0;
  tc.schedule = cfg.schedule;
  tc.seed = cfg.seed;
  return train(net, data, tc);
}

PruneReport make_report(std::string model, std::int64_t params_before,
                        std::int64_t params_after, double acc_before,
                        double acc_after_prune, double acc_after_finetune) {
  PruneReport r;
  r.model = std::move(model);
  r.params_before = params_before;
  r.params_after = params_after;
  r.accuracy_before = acc_before;
  r.accuracy_after_prune = acc_after_prune;
  r.accuracy_after_finetune = acc_after_finetune;
  return r;
}

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

std::string format_report_csv(const PruneReport& r) {
  std::ostringstream os;
  os << "model,params_before,params_after,params_reduction_pct,acc_before,"
        "acc_after_prune,acc_after_finetune,acc_drop\n";
  os << r.model << ',' << r.params_before << ',' << r.params_after << ','
     << fmt("%.1f", r.params_reduction() * 100.0) << ','
     << fmt("%.6f", r.accuracy_before) << ',' << fmt("%.6f", r.accuracy_after_prune)
     << ',' << fmt("%.6f", r.accuracy_after_finetune) << ','
     << fmt("%.6f", r.acc_drop()) << "\n";
  return os.str();
}

std::string format_report_text(const PruneReport& r) {
  std::ostringstream os;
  os << "model: " << r.model << "\n";
  os << "parameters: " << r.params_before << " -> " << r.params_after << " ("
     << fmt("%.1f", r.params_reduction() * 100.0) << "% reduction)\n";
  os << "accuracy before pruning:     " << fmt("%.4f", r.accuracy_before) << "\n";
  os << "accuracy after pruning:      " << fmt("%.4f", r.accuracy_after_prune) << "\n";
  os << "accuracy after fine-tuning:  " << fmt("%.4f", r.accuracy_after_finetune) << "\n";
  os << "accuracy drop:               " << fmt("%.4f", r.acc_drop()) << "\n";
  return os.str();
}

}  // namespace maskgate
