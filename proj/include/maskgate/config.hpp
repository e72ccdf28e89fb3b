#pragma once

#include <map>
#include <string>
#include <vector>

#include "maskgate/data.hpp"
#include "maskgate/model.hpp"
#include "maskgate/prune.hpp"
#include "maskgate/train.hpp"

namespace maskgate {

/// Flat INI-style settings: `[section]` headers over `key = value` lines, with
/// `#`/`;` comments. Sections and keys are checked against the known set so
/// typos fail loudly. Command-line overrides land through `set` before
/// resolution.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text);
  static ConfigFile parse_file(const std::string& path);

  void set(const std::string& section, const std::string& key, const std::string& value);
  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& section, const std::string& key,
                                const std::vector<int>& fallback) const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return sections_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

std::vector<int> parse_int_list(const std::string& text);
std::vector<SchedulePoint> parse_schedule(const std::string& text);

/// [model] settings resolved against what the dataset looks like.
ModelConfig resolve_model_config(const ConfigFile& cfg, const Dataset& data);

/// [train] settings; the decay schedule defaults to x0.1 / x0.01 at 50% / 75%.
TrainConfig resolve_train_config(const ConfigFile& cfg, std::uint64_t seed);

/// [prune] settings for the post-prune fine-tuning pass.
FinetuneConfig resolve_finetune_config(const ConfigFile& cfg, std::uint64_t seed);

int holdout_size(const ConfigFile& cfg);

}  // namespace maskgate
