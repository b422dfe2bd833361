#pragma once

#include <optional>
#include <string>

#include "prrl/text_data.hpp"

namespace prrl::cli {

struct PrepareOptions {
  std::string input;
  std::string output;
  std::string vocab_out;  // optional
  std::optional<AugmentationConfig> augment;
  uint32_t seed = 1;
};

struct SynthOptions {
  std::string spec_path;  // optional; defaults baked in
  std::string out_dir;
  uint32_t seed = 1;
};

struct TrainOptions {
  std::string config_path;
  int pretrain_pr = -1;   // -1: take from config
  int pretrain_gen = -1;
};

struct EvalOptions {
  std::string ckpt;
  std::string data;
  std::string vocab;
  std::string report;
  int core_size = 64;
  int context = 20;
};

struct GenerateOptions {
  std::string gen_ckpt;
  std::string seed_file;
  std::string vocab;
  int n = 4;
  int len = 64;
  int seed_len = 64;
  double temperature = 1.0;
  uint32_t seed = 1;
};

int cmd_prepare(const PrepareOptions& opt);
int cmd_synth(const SynthOptions& opt);
int cmd_train(const TrainOptions& opt);
int cmd_eval(const EvalOptions& opt);
int cmd_generate(const GenerateOptions& opt);

}  // namespace prrl::cli
