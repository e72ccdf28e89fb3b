#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "maskgate/data.hpp"
#include "maskgate/model.hpp"

namespace maskgate {

struct SgdConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// From `epoch` onward the base learning rates are scaled by `multiplier`
/// (absolute, not cumulative).
struct SchedulePoint {
  int epoch = 0;
  double multiplier = 1.0;
};

struct TrainConfig {
  int epochs = 10;
  int batch = 32;
  SgdConfig sgd;        // backbone
  AdamConfig adam;      // mask modules
  std::vector<SchedulePoint> schedule;
  std::uint64_t seed = 1;
  bool freeze_branches = false;
};

/// Scale factor at 50% and 75% of the run: x0.1 then x0.01.
std::vector<SchedulePoint> default_schedule(int epochs);

double schedule_multiplier(const std::vector<SchedulePoint>& schedule, int epoch);

/// SGD with momentum; weight decay enters as an additive lambda*w term on the
/// gradient before the velocity update.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor> params, double momentum, double weight_decay);
  void zero_grad();
  void step(double lr);

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double momentum_;
  double weight_decay_;
};

/// Bias-corrected Adam; weight decay enters the gradient the same way.
class Adam {
 public:
  Adam(std::vector<Tensor> params, const AdamConfig& cfg);
  void zero_grad();
  void step(double lr);

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamConfig cfg_;
  int t_ = 0;
};

struct TraceRow {
  int epoch = 0;
  std::vector<double> p;  // per module, placement order
};

struct ProportionTrace {
  int modules = 0;
  std::vector<TraceRow> rows;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double top1 = 0.0;
  double backbone_lr = 0.0;
  double mask_lr = 0.0;
  double eval_loss = -1.0;  // negative when no eval split ran
  double eval_top1 = -1.0;
};

struct TrainResult {
  ProportionTrace trace;
  std::vector<EpochStats> history;
  std::string mask_state_log;
};

/// Dual-optimizer loop: SGD momentum over blocks, branch heads, and the
/// classifier; Adam over mask parameters. Records the mask state before
/// training (epoch 0) and after every completed epoch except the last, giving
/// one trace row per epoch index 0..epochs-1. `eval_data`, when given, is
/// scored after each epoch. Aborts with a numeric error on a non-finite loss.
TrainResult train(MaskedNetwork& net, const Dataset& data, const TrainConfig& cfg,
                  const Dataset* eval_data = nullptr);

/// Mean loss and top-1 accuracy; argmax ties resolve to the lowest class.
std::pair<double, double> evaluate(const MaskedNetwork& net, const Dataset& data,
                                   int batch = 256);
double evaluate_top1(const MaskedNetwork& net, const Dataset& data);

std::string format_trace(const ProportionTrace& trace);
ProportionTrace parse_trace(const std::string& text);
void export_trace(const ProportionTrace& trace, const std::string& path);

/// Rebuilds the canonical trace CSV from a mask-state log.
ProportionTrace trace_from_mask_state_log(const std::string& text);

std::string format_train_log(const std::vector<EpochStats>& history);
void write_train_log(const std::string& path, const std::vector<EpochStats>& history);

/// (epoch, backbone lr) pairs parsed from the `# lr` lines of a training log.
std::vector<std::pair<int, double>> parse_train_log_lrs(const std::string& text);

}  // namespace maskgate
