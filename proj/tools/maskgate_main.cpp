#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "maskgate/checkpoint.hpp"
#include "maskgate/config.hpp"
#include "maskgate/data.hpp"
#include "maskgate/error.hpp"
#include "maskgate/model.hpp"
#include "maskgate/prune.hpp"
#include "maskgate/train.hpp"

namespace fs = std::filesystem;
using namespace maskgate;

namespace {

struct Options {
  std::string config_path;
  std::string dataset;
  std::string model;
  std::string out;
  std::string mask_placement;
  std::string ste;
  std::string checkpoint_name = "checkpoint.mgk";
  std::vector<std::string> overrides;
  int epochs = -1;
  long long seed = -1;
  bool force = false;
  bool freeze_branches = false;
};

ConfigFile assemble_config(const Options& opt) {
  ConfigFile cfg;
  if (!opt.config_path.empty()) cfg = ConfigFile::parse_file(opt.config_path);
  for (const std::string& item : opt.overrides) {
    std::size_t eq = item.find('=');
    std::size_t dot = item.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("--set expects section.key=value, got '" + item + "'");
    }
    cfg.set(item.substr(0, dot), item.substr(dot + 1, eq - dot - 1),
            item.substr(eq + 1));
  }
  if (!opt.model.empty()) cfg.set("model", "kind", opt.model);
  if (opt.epochs >= 0) cfg.set("train", "epochs", std::to_string(opt.epochs));
  if (!opt.mask_placement.empty()) cfg.set("model", "mask_placement", opt.mask_placement);
  if (!opt.ste.empty()) cfg.set("model", "ste_sign_convention", opt.ste);
  if (opt.freeze_branches) cfg.set("train", "freeze_branches", "true");
  return cfg;
}

std::uint64_t resolve_seed(const Options& opt, const ConfigFile& cfg) {
  if (opt.seed >= 0) return static_cast<std::uint64_t>(opt.seed);
  return static_cast<std::uint64_t>(cfg.get_int("train", "seed", 1));
}

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

int csv_feature_count(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields = split_on(line, ',');
    if (first) {
      first = false;
      try {
        std::size_t pos = 0;
        std::stod(fields.at(0), &pos);
        if (pos != fields.at(0).size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        continue;  // header row
      }
    }
    return static_cast<int>(fields.size()) - 1;
  }
  throw DataError(path + " holds no samples");
}

Dataset flatten(Dataset d) {
  const int n = d.inputs.dim(0);
  const int per = static_cast<int>(d.inputs.size()) / n;
  d.inputs = Tensor({n, per}, d.inputs.values());
  return d;
}

Dataset load_csv_selector(const std::string& path, const ConfigFile& cfg) {
  if (cfg.has("model", "input")) {
    std::vector<std::string> dims = split_on(cfg.get("model", "input", ""), 'x');
    if (dims.size() == 3) {
      std::vector<int> v = parse_int_list(dims[0] + "," + dims[1] + "," + dims[2]);
      return load_csv(path, v[2], v[1], v[0]);
    }
    if (dims.size() == 1) {
      int d = parse_int_list(dims[0]).at(0);
      return flatten(load_csv(path, d, 1, 1));
    }
    throw ConfigError("model.input must be D or CxHxW");
  }
  return flatten(load_csv(path, csv_feature_count(path), 1, 1));
}

Dataset load_dataset(const std::string& selector, const ConfigFile& cfg,
                     std::uint64_t seed) {
  if (selector == "synthetic" || selector.rfind("synthetic:", 0) == 0) {
    SyntheticSpec spec;
    spec.seed = seed;
    if (selector.size() > 10) {
      for (const std::string& item : split_on(selector.substr(10), ',')) {
        std::size_t eq = item.find('=');
        if (eq == std::string::npos) {
          throw ConfigError("synthetic option '" + item + "' is not key=value");
        }
        std::string key = item.substr(0, eq);
        std::string value = item.substr(eq + 1);
        if (key == "n") {
          spec.samples_per_class = std::stoi(value);
        } else if (key == "sigma") {
          spec.sigma = std::stod(value);
        } else if (key == "delta") {
          spec.delta = std::stod(value);
        } else {
          throw ConfigError("unknown synthetic option '" + key + "'");
        }
      }
    }
    return generate_synthetic_3d(spec);
  }
  if (selector.rfind("idx:", 0) == 0) {
    std::vector<std::string> parts = split_on(selector.substr(4), ',');
    if (parts.size() != 2) {
      throw ConfigError("idx selector needs idx:<images>,<labels>");
    }
    return load_idx(parts[0], parts[1]);
  }
  if (selector.rfind("csv:", 0) == 0) {
    return load_csv_selector(selector.substr(4), cfg);
  }
  throw ConfigError("unknown dataset selector '" + selector +
                    "'; use synthetic, idx:<img>,<lbl>, or csv:<path>");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << text;
  if (!os) throw IoError("failed writing " + path);
}

void refuse_existing(const fs::path& ckpt, bool force) {
  if (fs::exists(ckpt) && !force) {
    throw ConfigError(ckpt.string() + " already exists; pass --force to overwrite");
  }
}

std::string kind_name(ModelKind kind) {
  return kind == ModelKind::mlp_m ? "mlp-m" : "convnet-m";
}

int cmd_train(const Options& opt) {
  ConfigFile cfg = assemble_config(opt);
  std::uint64_t seed = resolve_seed(opt, cfg);
  Dataset data = load_dataset(opt.dataset, cfg, seed);
  ModelConfig mc = resolve_model_config(cfg, data);
  TrainConfig tc = resolve_train_config(cfg, seed);

  Dataset train_data = data;
  Dataset holdout;
  const int k = holdout_size(cfg);
  if (k > 0) {
    auto parts = split_holdout(data, k, seed);
    train_data = std::move(parts.first);
    holdout = std::move(parts.second);
  }

  fs::create_directories(opt.out);
  fs::path ckpt = fs::path(opt.out) / opt.checkpoint_name;
  refuse_existing(ckpt, opt.force);

  MaskedNetwork net = build(mc, seed);
  TrainResult result = train(net, train_data, tc, k > 0 ? &holdout : nullptr);

  save_checkpoint(ckpt.string(), net);
  export_trace(result.trace, (fs::path(opt.out) / "trace.csv").string());
  write_train_log((fs::path(opt.out) / "train.log").string(), result.history);
  write_text((fs::path(opt.out) / "mask_state.log").string(), result.mask_state_log);

  if (!result.history.empty()) {
    const EpochStats& last = result.history.back();
    std::printf("train top1=%.6f loss=%.6f\n", last.top1, last.loss);
    if (last.eval_top1 >= 0) std::printf("holdout top1=%.6f\n", last.eval_top1);
  }
  std::printf("wrote %s\n", ckpt.string().c_str());
  return 0;
}

int cmd_eval(const Options& opt) {
  ConfigFile cfg = assemble_config(opt);
  std::uint64_t seed = resolve_seed(opt, cfg);
  fs::path ckpt = fs::path(opt.out) / opt.checkpoint_name;
  MaskedNetwork net = load_checkpoint(ckpt.string());
  Dataset data = load_dataset(opt.dataset, cfg, seed);
  std::printf("top1=%.6f\n", evaluate_top1(net, data));
  return 0;
}

int cmd_trace(const Options& opt) {
  fs::path log = fs::path(opt.out) / "mask_state.log";
  std::ifstream is(log, std::ios::binary);
  if (!is) throw IoError("cannot open " + log.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  std::fputs(format_trace(trace_from_mask_state_log(buf.str())).c_str(), stdout);
  return 0;
}

int cmd_prune(const Options& opt) {
  ConfigFile cfg = assemble_config(opt);
  std::uint64_t seed = resolve_seed(opt, cfg);
  fs::path ckpt = fs::path(opt.out) / opt.checkpoint_name;
  MaskedNetwork net = load_checkpoint(ckpt.string());
  Dataset data = load_dataset(opt.dataset, cfg, seed);

  Dataset finetune_data = data;
  Dataset eval_data = data;
  const int k = holdout_size(cfg);
  if (k > 0) {
    auto parts = split_holdout(data, k, seed);
    finetune_data = std::move(parts.first);
    eval_data = std::move(parts.second);
  }

  fs::path pruned_path = fs::path(opt.out) / "pruned.mgk";
  refuse_existing(pruned_path, opt.force);

  const double acc_before = evaluate_top1(net, eval_data);
  KeepPlan plan = derive_keep_plan(net);
  MaskedNetwork pruned = rebuild_pruned(net, plan);
  const double acc_after_prune = evaluate_top1(pruned, eval_data);

  FinetuneConfig fc = resolve_finetune_config(cfg, seed);
  TrainResult ft = finetune(pruned, finetune_data, fc);
  const double acc_after_finetune = evaluate_top1(pruned, eval_data);

  PruneReport report =
      make_report(kind_name(net.cfg.kind), count_params(net), count_params(pruned),
                  acc_before, acc_after_prune, acc_after_finetune);

  save_checkpoint(pruned_path.string(), pruned);
  write_text((fs::path(opt.out) / "prune_report.csv").string(),
             format_report_csv(report));
  write_text((fs::path(opt.out) / "prune_report.txt").string(),
             format_report_text(report));
  write_train_log((fs::path(opt.out) / "finetune.log").string(), ft.history);

  std::fputs(format_report_text(report).c_str(), stdout);
  std::printf("wrote %s\n", pruned_path.string().c_str());
  return 0;
}

void add_common(CLI::App* sub, Options& opt, bool needs_dataset) {
  sub->add_option("--config", opt.config_path, "settings file ([model]/[train]/[prune])");
  auto* ds = sub->add_option("--dataset", opt.dataset,
                             "synthetic[:k=v,...] | idx:<images>,<labels> | csv:<path>");
  if (needs_dataset) ds->required();
  sub->add_option("--seed", opt.seed, "run seed (overrides train.seed)");
  sub->add_option("--out", opt.out, "output directory")->required();
  sub->add_option("--set", opt.overrides, "override a setting, section.key=value")
      ->take_all();
  sub->add_option("--checkpoint", opt.checkpoint_name,
                  "checkpoint file name inside --out");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mask-guided feature disentanglement: train, evaluate, trace, prune"};
  app.require_subcommand(1);

  Options opt;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write artifacts");
  add_common(train_cmd, opt, true);
  train_cmd->add_option("--model", opt.model, "mlp-m or convnet-m");
  train_cmd->add_option("--epochs", opt.epochs, "training epochs");
  train_cmd->add_flag("--force", opt.force, "overwrite an existing checkpoint");
  train_cmd->add_flag("--freeze-branches", opt.freeze_branches,
                      "keep branch heads at their initial values");
  train_cmd->add_option("--mask-placement", opt.mask_placement,
                        "comma list of masked block indices, or none");
  train_cmd->add_option("--ste-sign-convention", opt.ste, "paper or chain")
      ->check(CLI::IsMember({"paper", "chain"}));

  CLI::App* eval_cmd = app.add_subcommand("eval", "print top-1 accuracy of a checkpoint");
  add_common(eval_cmd, opt, true);

  CLI::App* trace_cmd = app.add_subcommand("trace", "re-emit the proportion trace CSV");
  add_common(trace_cmd, opt, false);

  CLI::App* prune_cmd = app.add_subcommand("prune", "prune a checkpoint and fine-tune");
  add_common(prune_cmd, opt, true);
  prune_cmd->add_flag("--force", opt.force, "overwrite an existing pruned checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(opt);
    if (eval_cmd->parsed()) return cmd_eval(opt);
    if (trace_cmd->parsed()) return cmd_trace(opt);
    return cmd_prune(opt);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  }
}
