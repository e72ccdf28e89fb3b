#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskgate/model.hpp"
#include "maskgate/train.hpp"

namespace maskgate {

/// Channels each masked block keeps (its current mask1 support). The earliest
/// masked block is the fast track: it keeps its branch head and full width.
struct KeepEntry {
  int block = 0;
  std::vector<int> keep;       // sorted unique indices into [0, c)
  bool fast_track = false;
  std::vector<double> mask1;   // the 0/1 mask the entry was derived from
};

struct KeepPlan {
  std::vector<KeepEntry> entries;
};

struct PruneReport {
  std::string model;
  std::int64_t params_before = 0;
  std::int64_t params_after = 0;
  double accuracy_before = 0.0;
  double accuracy_after_prune = 0.0;
  double accuracy_after_finetune = 0.0;

  double params_reduction() const;
  double acc_drop() const;
};

struct FinetuneConfig {
  int epochs = 40;
  double lr = 0.001;
  std::vector<SchedulePoint> schedule = {{10, 0.1}, {20, 0.01}};
  int batch = 32;
  std::uint64_t seed = 1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// Reads the current masks: per masked block the retained channel set, with
/// the earliest block flagged fast-track. A later block whose mask marks every
/// channel linear aborts with a plan error before anything is mutated.
KeepPlan derive_keep_plan(const MaskedNetwork& net);

/// Compact copy of the network: later masked blocks lose the filters of their
/// linear channels (runtime channel selection instead where filters must stay,
/// i.e. residual blocks and the fast-track block), following layers lose the
/// matching input slices, later mask modules and branch heads disappear, and
/// the fast-track mask is frozen into constants. Retained weights are copied
/// exactly; the original network is left untouched.
MaskedNetwork rebuild_pruned(const MaskedNetwork& net, const KeepPlan& plan);

/// SGD fine-tuning pass for pruned networks: constant masks, branch heads and
/// backbone training at `cfg.lr` with the staged decay in `cfg.schedule`.
TrainResult finetune(MaskedNetwork& net, const Dataset& data, const FinetuneConfig& cfg);

PruneReport make_report(std::string model, std::int64_t params_before,
                        std::int64_t params_after, double acc_before,
                        double acc_after_prune, double acc_after_finetune);

std::string format_report_csv(const PruneReport& report);
std::string format_report_text(const PruneReport& report);

}  // namespace maskgate
