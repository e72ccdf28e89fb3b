#include "maskgate/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "maskgate/error.hpp"

namespace maskgate {

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"model",
       {"kind", "widths", "input", "classes", "mask_placement", "use_residual",
        "branch_dims", "mask_hidden", "tau", "ste_sign_convention"}},
      {"train",
       {"epochs", "batch", "lr", "momentum", "weight_decay", "mask_lr",
        "mask_weight_decay", "adam_beta1", "adam_beta2", "adam_eps", "schedule",
        "seed", "holdout", "freeze_branches"}},
      {"prune",
       {"finetune_epochs", "finetune_lr", "finetune_schedule", "finetune_batch",
        "finetune_momentum", "finetune_weight_decay"}},
  };
  return keys;
}

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

void check_known(const std::string& section, const std::string& key,
                 const std::string& where) {
  auto it = known_keys().find(section);
  if (it == known_keys().end()) {
    throw ConfigError(where + ": unknown config section [" + section + "]");
  }
  if (!key.empty() && it->second.count(key) == 0) {
    throw ConfigError(where + ": unknown key '" + key + "' in section [" + section + "]");
  }
}

double to_double(const std::string& section, const std::string& key,
                 const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(section + "." + key + ": '" + value + "' is not a number");
  }
}

int to_int(const std::string& section, const std::string& key,
           const std::string& value) {
  double v = to_double(section, key, value);
  int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw ConfigError(section + "." + key + ": '" + value + "' is not an integer");
  }
  return i;
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::string where = "config line " + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(where + ": unterminated section header '" + line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      check_known(section, "", where);
      out.sections_[section];
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected key = value, got '" + line + "'");
    }
    if (section.empty()) {
      throw ConfigError(where + ": key outside of any [section]");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    check_known(section, key, where);
    if (out.sections_[section].count(key) != 0) {
      throw ConfigError(where + ": duplicate key '" + key + "' in [" + section + "]");
    }
    out.sections_[section][key] = value;
  }
  return out;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void ConfigFile::set(const std::string& section, const std::string& key,
                     const std::string& value) {
  check_known(section, key, "config override");
  sections_[section][key] = value;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) != 0;
}

std::string ConfigFile::get(const std::string& section, const std::string& key,
                            const std::string& fallback) const {
  auto it = sections_.find(section);
  if (it == sections_.end()) return fallback;
  auto kt = it->second.find(key);
  return kt == it->second.end() ? fallback : kt->second;
}

int ConfigFile::get_int(const std::string& section, const std::string& key,
                        int fallback) const {
  if (!has(section, key)) return fallback;
  return to_int(section, key, get(section, key, ""));
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  if (!has(section, key)) return fallback;
  return to_double(section, key, get(section, key, ""));
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string v = get(section, key, "");
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError(section + "." + key + ": '" + v + "' is not a boolean");
}

std::vector<int> ConfigFile::get_int_list(const std::string& section,
                                          const std::string& key,
                                          const std::vector<int>& fallback) const {
  if (!has(section, key)) return fallback;
  std::string v = get(section, key, "");
  try {
    return parse_int_list(v);
  } catch (const Error& e) {
    throw ConfigError(section + "." + key + ": " + e.what());
  }
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::string t = trim(text);
  if (t.empty() || t == "none") return out;
  std::istringstream in(t);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    out.push_back(to_int("list", "item", item));
  }
  return out;
}

std::vector<SchedulePoint> parse_schedule(const std::string& text) {
  std::vector<SchedulePoint> out;
  std::string t = trim(text);
  if (t.empty() || t == "none") return out;
  std::istringstream in(t);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    std::size_t colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("schedule entry '" + item + "' is not epoch:multiplier");
    }
    SchedulePoint p;
    p.epoch = to_int("schedule", "epoch", trim(item.substr(0, colon)));
    p.multiplier = to_double("schedule", "multiplier", trim(item.substr(colon + 1)));
    out.push_back(p);
  }
  return out;
}

ModelConfig resolve_model_config(const ConfigFile& cfg, const Dataset& data) {
  if (!data.inputs.defined() || data.inputs.rank() < 2) {
    throw UsageError("resolve_model_config needs a loaded dataset");
  }
  std::string kind_name;
  if (cfg.has("model", "kind")) {
    kind_name = cfg.get("model", "kind", "");
  } else {
    kind_name = data.inputs.rank() == 4 ? "convnet-m" : "mlp-m";
  }
  ModelKind kind;
  if (kind_name == "mlp-m") {
    kind = ModelKind::mlp_m;
  } else if (kind_name == "convnet-m") {
    kind = ModelKind::convnet_m;
  } else {
    throw ConfigError("model.kind: '" + kind_name + "' is not mlp-m or convnet-m");
  }

  ModelConfig out = default_config(kind);
  if (kind == ModelKind::mlp_m) {
    if (data.inputs.rank() != 2) {
      throw ConfigError("mlp-m expects flat inputs, dataset has rank " +
                        std::to_string(data.inputs.rank()));
    }
    std::vector<int> widths = cfg.get_int_list("model", "widths", {});
    if (widths.empty()) {
      widths = out.widths;
      widths[0] = data.inputs.dim(1);
    } else {
      widths.insert(widths.begin(), data.inputs.dim(1));
    }
    out.widths = widths;
  } else {
    if (data.inputs.rank() != 4) {
      throw ConfigError("convnet-m expects image inputs, dataset has rank " +
                        std::to_string(data.inputs.rank()));
    }
    out.widths = cfg.get_int_list("model", "widths", out.widths);
    out.in_channels = data.inputs.dim(1);
    out.in_h = data.inputs.dim(2);
    out.in_w = data.inputs.dim(3);
  }
  out.classes = cfg.get_int(
      "model", "classes", data.classes > 0 ? data.classes : out.classes);
  if (cfg.has("model", "mask_placement")) {
    out.mask_placement = cfg.get_int_list("model", "mask_placement", {});
  } else if (kind == ModelKind::mlp_m) {
    out.mask_placement = {0};
  } else {
    int blocks = static_cast<int>(out.widths.size());
    out.mask_placement.clear();
    for (int j = 0; j + 1 < blocks && j < 2; ++j) out.mask_placement.push_back(j);
  }
  out.use_residual = cfg.get_bool("model", "use_residual", out.use_residual);
  out.branch_dims = cfg.get_int_list("model", "branch_dims", {});
  out.mask_hidden = cfg.get_int_list("model", "mask_hidden", {});
  out.tau = cfg.get_double("model", "tau", out.tau);
  std::string ste = cfg.get("model", "ste_sign_convention", "paper");
  if (ste == "paper") {
    out.ste = SteSign::paper;
  } else if (ste == "chain") {
    out.ste = SteSign::chain;
  } else {
    throw ConfigError("model.ste_sign_convention: '" + ste + "' is not paper or chain");
  }
  out.validate();
  return out;
}

TrainConfig resolve_train_config(const ConfigFile& cfg, std::uint64_t seed) {
  TrainConfig out;
  out.epochs = cfg.get_int("train", "epochs", 30);
  out.batch = cfg.get_int("train", "batch", 32);
  out.sgd.lr = cfg.get_double("train", "lr", out.sgd.lr);
  out.sgd.momentum = cfg.get_double("train", "momentum", out.sgd.momentum);
  out.sgd.weight_decay = cfg.get_double("train", "weight_decay", out.sgd.weight_decay);
  out.adam.lr = cfg.get_double("train", "mask_lr", out.adam.lr);
  out.adam.weight_decay =
      cfg.get_double("train", "mask_weight_decay", out.adam.weight_decay);
  out.adam.beta1 = cfg.get_double("train", "adam_beta1", out.adam.beta1);
  out.adam.beta2 = cfg.get_double("train", "adam_beta2", out.adam.beta2);
  out.adam.eps = cfg.get_double("train", "adam_eps", out.adam.eps);
  if (cfg.has("train", "schedule")) {
    out.schedule = parse_schedule(cfg.get("train", "schedule", ""));
  } else {
    out.schedule = default_schedule(out.epochs);
  }
  out.seed = seed;
  out.freeze_branches = cfg.get_bool("train", "freeze_branches", false);
  return out;
}

FinetuneConfig resolve_finetune_config(const ConfigFile& cfg, std::uint64_t seed) {
  FinetuneConfig out;
  out.epochs = cfg.get_int("prune", "finetune_epochs", out.epochs);
  out.lr = cfg.get_double("prune", "finetune_lr", out.lr);
  if (cfg.has("prune", "finetune_schedule")) {
    out.schedule = parse_schedule(cfg.get("prune", "finetune_schedule", ""));
  }
  out.batch = cfg.get_int("prune", "finetune_batch", out.batch);
  out.momentum = cfg.get_double("prune", "finetune_momentum", out.momentum);
  out.weight_decay = cfg.get_double("prune", "finetune_weight_decay", out.weight_decay);
  out.seed = seed;
  return out;
}

int holdout_size(const ConfigFile& cfg) { return cfg.get_int("train", "holdout", 0); }

}  // namespace maskgate
