#pragma once

#include <string>

#include "prrl/model.hpp"
#include "prrl/rl.hpp"
#include "prrl/text_data.hpp"

namespace prrl {

// One experiment: a Table-3-style mode plus everything needed to run it.
// Modes stack cumulatively: augment adds augmentation noise to baseline,
// gpt adds frozen-generator data on top of augment, rl adds the generator
// updates on top of gpt.
struct RunConfig {
  int schema_version = 1;
  std::string mode = "baseline";  // baseline | augment | gpt | rl

  struct Paths {
    std::string train, dev, test, seed_pool, vocab, out_dir;
    bool operator==(const Paths&) const = default;
  } paths;

  ModelConfig tagger;
  ModelConfig generator;
  AugmentationConfig augmentation;
  RLConfig rl;
  int core_size = 64;
  int context = 20;
  uint32_t rng_seed = 1;
  int epochs = 3;  // supervised modes
  int checkpoint_interval = 0;
  int pretrain_pr = 0;
  int pretrain_gen = 0;

  bool uses_generator() const { return mode == "gpt" || mode == "rl"; }
  void validate(bool check_paths) const;
  bool operator==(const RunConfig&) const = default;
};

RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);

// Loading validates the schema and that every referenced input path exists.
RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace prrl
