#include "maskgate/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "maskgate/rng.hpp"

namespace maskgate {

std::vector<SchedulePoint> default_schedule(int epochs) {
  return {SchedulePoint{epochs / 2, 0.1}, SchedulePoint{epochs * 3 / 4, 0.01}};
}

double schedule_multiplier(const std::vector<SchedulePoint>& schedule, int epoch) {
  double mult = 1.0;
  int best = -1;
  for (const SchedulePoint& p : schedule) {
    if (p.epoch <= epoch && p.epoch > best) {
      best = p.epoch;
      mult = p.multiplier;
    }
  }
  return mult;
}

SgdMomentum::SgdMomentum(std::vector<Tensor> params, double momentum,
                         double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (const Tensor& p : params_) velocity_.emplace_back(p.size(), 0.0);
}

void SgdMomentum::zero_grad() {
  for (const Tensor& p : params_) p.zero_grad();
}

void SgdMomentum::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& p = params_[i];
    if (!p.has_grad()) {
      throw UsageError("sgd step without a gradient on a parameter of size " +
                       std::to_string(p.size()));
    }
    auto& w = p.values();
    const auto& g = p.grad();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double grad = g[j] + weight_decay_ * w[j];
      v[j] = momentum_ * v[j] + grad;
      w[j] -= lr * v[j];
    }
  }
}

Adam::Adam(std::vector<Tensor> params, const AdamConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (const Tensor& p : params_) p.zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& p = params_[i];
    if (!p.has_grad()) {
      throw UsageError("adam step without a gradient on a parameter of size " +
                       std::to_string(p.size()));
    }
    auto& w = p.values();
    const auto& g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double grad = g[j] + cfg_.weight_decay * w[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * grad;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * grad * grad;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string mask_state_record(int epoch, const std::vector<MaskState>& states) {
  std::ostringstream os;
  os << "epoch=" << epoch << "\n";
  for (std::size_t j = 0; j < states.size(); ++j) {
    const MaskState& st = states[j];
    os << "module=" << j << " block=" << st.block << " c=" << st.c << " z=";
    if (st.z.empty()) {
      os << "-";
    } else {
      for (std::size_t i = 0; i < st.z.size(); ++i) {
        if (i) os << ',';
        os << fmt("%.6f", st.z[i]);
      }
    }
    os << " mask1=";
    for (double b : st.mask1) os << (b > 0.5 ? '1' : '0');
    os << "\n";
  }
  return os.str();
}

int count_correct(const Tensor& logits, const std::vector<int>& labels) {
  const int n = logits.dim(0), k = logits.dim(1);
  const auto& v = logits.values();
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const double* row = v.data() + static_cast<std::size_t>(i) * k;
    int arg = 0;
    for (int j = 1; j < k; ++j) {
      if (row[j] > row[arg]) arg = j;
    }
    if (arg == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return correct;
}

void check_labels(const MaskedNetwork& net, const Dataset& data) {
  for (int l : data.labels) {
    if (l < 0 || l >= net.cfg.classes) {
      throw DataError("label " + std::to_string(l) + " outside the " +
                      std::to_string(net.cfg.classes) + "-class network");
    }
  }
}

}  // namespace

TrainResult train(MaskedNetwork& net, const Dataset& data, const TrainConfig& cfg,
                  const Dataset* eval_data) {
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.batch < 1) throw ConfigError("batch size must be >= 1");
  if (data.size() < 1) throw DataError("training set is empty");
  check_labels(net, data);

  TrainResult result;
  result.trace.modules = static_cast<int>(net.cfg.mask_placement.size());
  auto record = [&](int epoch) {
    const auto states = net.mask_states();
    TraceRow row;
    row.epoch = epoch;
    for (const MaskState& st : states) row.p.push_back(st.p_nonlinear);
    result.trace.rows.push_back(std::move(row));
    result.mask_state_log += mask_state_record(epoch, states);
  };
  record(0);

  SgdMomentum backbone(net.backbone_parameters(!cfg.freeze_branches), cfg.sgd.momentum,
                       cfg.sgd.weight_decay);
  Adam mask_opt(net.mask_parameters(), cfg.adam);
  Rng shuffle_rng(cfg.seed, "shuffle");

  const int n = data.size();
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int e = 0; e < cfg.epochs; ++e) {
    const double mult = schedule_multiplier(cfg.schedule, e);
    const double backbone_lr = cfg.sgd.lr * mult;
    const double mask_lr = cfg.adam.lr * mult;
    std::iota(perm.begin(), perm.end(), 0);
    shuffle_rng.shuffle(perm);

    double loss_sum = 0.0;
    int correct = 0;
    int batch_index = 0;
    for (int start = 0; start < n; start += cfg.batch, ++batch_index) {
      const int end = std::min(n, start + cfg.batch);
      std::vector<int> indices(perm.begin() + start, perm.begin() + end);
      auto [x, labels] = gather_batch(data, indices);
      Graph g;
      Tensor logits = model_forward(g, net, x);
      Tensor loss = softmax_cross_entropy(g, logits, labels);
      if (!std::isfinite(loss.item())) {
        throw NumericError("non-finite loss at epoch " + std::to_string(e) + " batch " +
                           std::to_string(batch_index));
      }
      backbone.zero_grad();
      mask_opt.zero_grad();
      g.backward(loss);
      backbone.step(backbone_lr);
      mask_opt.step(mask_lr);
      loss_sum += loss.item() * static_cast<double>(end - start);
      correct += count_correct(logits, labels);
    }

    EpochStats stats;
    stats.epoch = e;
    stats.loss = loss_sum / n;
    stats.top1 = static_cast<double>(correct) / n;
    stats.backbone_lr = backbone_lr;
    stats.mask_lr = mask_lr;
    if (eval_data && eval_data->size() > 0) {
      auto [el, et] = evaluate(net, *eval_data);
      stats.eval_loss = el;
      stats.eval_top1 = et;
    }
    result.history.push_back(stats);
    if (e + 1 < cfg.epochs) record(e + 1);
  }
  return result;
}

std::pair<double, double> evaluate(const MaskedNetwork& net, const Dataset& data,
                                   int batch) {
  if (data.size() < 1) throw DataError("evaluation set is empty");
  if (batch < 1) throw ConfigError("batch size must be >= 1");
  check_labels(net, data);
  const int n = data.size();
  double loss_sum = 0.0;
  int correct = 0;
  for (int start = 0; start < n; start += batch) {
    const int end = std::min(n, start + batch);
    std::vector<int> indices(static_cast<std::size_t>(end - start));
    std::iota(indices.begin(), indices.end(), start);
    auto [x, labels] = gather_batch(data, indices);
    Graph g;
    Tensor logits = model_forward(g, net, x);
    Tensor loss = softmax_cross_entropy(g, logits, labels);
    loss_sum += loss.item() * static_cast<double>(end - start);
    correct += count_correct(logits, labels);
  }
  return {loss_sum / n, static_cast<double>(correct) / n};
}

double evaluate_top1(const MaskedNetwork& net, const Dataset& data) {
  return evaluate(net, data).second;
}

std::string format_trace(const ProportionTrace& trace) {
  std::ostringstream os;
  os << "epoch";
  for (int j = 0; j < trace.modules; ++j) os << ",module_" << j;
  os << "\n";
  for (const TraceRow& row : trace.rows) {
    if (static_cast<int>(row.p.size()) != trace.modules) {
      throw UsageError("trace row width disagrees with the module count");
    }
    os << row.epoch;
    for (double p : row.p) os << ',' << fmt("%.6f", p);
    os << "\n";
  }
  return os.str();
}

ProportionTrace parse_trace(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw FormatError("trace is empty");
  ProportionTrace trace;
  {
    std::stringstream header(line);
    std::string field;
    bool first = true;
    int j = 0;
    while (std::getline(header, field, ',')) {
      if (first) {
        if (field != "epoch") throw FormatError("trace header must start with 'epoch'");
        first = false;
      } else {
        if (field != "module_" + std::to_string(j)) {
          throw FormatError("trace header names module columns module_0, module_1, ...");
        }
        ++j;
      }
    }
    if (first) throw FormatError("trace header must start with 'epoch'");
    trace.modules = j;
  }
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream row_stream(line);
    std::string field;
    TraceRow row;
    int col = 0;
    while (std::getline(row_stream, field, ',')) {
      try {
        if (col == 0) {
          row.epoch = std::stoi(field);
        } else {
          row.p.push_back(std::stod(field));
        }
      } catch (const std::exception&) {
        throw FormatError("trace line " + std::to_string(line_no) +
                          " has a non-numeric field");
      }
      ++col;
    }
    if (col != trace.modules + 1) {
      throw FormatError("trace line " + std::to_string(line_no) + " has " +
                        std::to_string(col) + " fields, expected " +
                        std::to_string(trace.modules + 1));
    }
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

void export_trace(const ProportionTrace& trace, const std::string& path) {
  if (trace.rows.empty()) throw UsageError("refusing to export an empty trace");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << format_trace(trace);
  os.flush();
  if (!os) throw IoError("failed while writing " + path);
}

ProportionTrace trace_from_mask_state_log(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  ProportionTrace trace;
  bool saw_epoch = false;
  int modules_seen = 0;
  int line_no = 0;
  auto close_row = [&]() {
    if (!saw_epoch) return;
    if (trace.rows.size() == 1) {
      trace.modules = modules_seen;
    } else if (modules_seen != trace.modules) {
      throw FormatError("mask-state log changes module count mid-stream");
    }
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("epoch=", 0) == 0) {
      close_row();
      TraceRow row;
      try {
        row.epoch = std::stoi(line.substr(6));
      } catch (const std::exception&) {
        throw FormatError("mask-state log line " + std::to_string(line_no) +
                          " has a bad epoch");
      }
      trace.rows.push_back(std::move(row));
      saw_epoch = true;
      modules_seen = 0;
      continue;
    }
    if (line.rfind("module=", 0) == 0) {
      if (!saw_epoch) {
        throw FormatError("mask-state log line " + std::to_string(line_no) +
                          " appears before any epoch marker");
      }
      const auto pos = line.find(" mask1=");
      if (pos == std::string::npos) {
        throw FormatError("mask-state log line " + std::to_string(line_no) +
                          " lacks a mask1 field");
      }
      const std::string bits = line.substr(pos + 7);
      if (bits.empty()) {
        throw FormatError("mask-state log line " + std::to_string(line_no) +
                          " has an empty mask");
      }
      double ones = 0.0;
      for (char ch : bits) {
        if (ch == '1') {
          ones += 1.0;
        } else if (ch != '0') {
          throw FormatError("mask-state log line " + std::to_string(line_no) +
                            " has a non-binary mask");
        }
      }
      trace.rows.back().p.push_back(ones / static_cast<double>(bits.size()));
      ++modules_seen;
      continue;
    }
    throw FormatError("mask-state log line " + std::to_string(line_no) +
                      " is not an epoch or module record");
  }
  close_row();
  if (trace.rows.empty()) throw FormatError("mask-state log holds no epochs");
  return trace;
}

std::string format_train_log(const std::vector<EpochStats>& history) {
  std::ostringstream os;
  for (const EpochStats& s : history) {
    os << "# lr epoch=" << s.epoch << " backbone=" << fmt("%.8f", s.backbone_lr)
       << " mask=" << fmt("%.8f", s.mask_lr) << "\n";
    os << s.epoch << ",train," << fmt("%.6f", s.loss) << ',' << fmt("%.6f", s.top1)
       << "\n";
    if (s.eval_top1 >= 0.0) {
      os << s.epoch << ",holdout," << fmt("%.6f", s.eval_loss) << ','
         << fmt("%.6f", s.eval_top1) << "\n";
    }
  }
  return os.str();
}

void write_train_log(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << format_train_log(history);
  os.flush();
  if (!os) throw IoError("failed while writing " + path);
}

std::vector<std::pair<int, double>> parse_train_log_lrs(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::pair<int, double>> out;
  while (std::getline(is, line)) {
    if (line.rfind("# lr epoch=", 0) != 0) continue;
    std::istringstream ls(line);
    std::string hash, lr_word, epoch_field, backbone_field;
    ls >> hash >> lr_word >> epoch_field >> backbone_field;
    if (epoch_field.rfind("epoch=", 0) != 0 || backbone_field.rfind("backbone=", 0) != 0) {
      throw FormatError("malformed lr line: " + line);
    }
    try {
      out.emplace_back(std::stoi(epoch_field.substr(6)),
                       std::stod(backbone_field.substr(9)));
    } catch (const std::exception&) {
      throw FormatError("malformed lr line: " + line);
    }
  }
  return out;
}

}  // namespace maskgate
