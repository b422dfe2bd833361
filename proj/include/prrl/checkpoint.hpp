#pragma once

#include <cstdint>
#include <string>

#include "prrl/model.hpp"

namespace prrl {

// Binary checkpoint: "PRRL" magic, u32 LE format version, u32 LE metadata
// length, UTF-8 JSON metadata, then all parameters as contiguous LE f32 in
// canonical order.
constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string kind;  // "tagger" or "generator"
  ModelConfig config;
  uint64_t vocab_hash = 0;
  uint64_t layout_id = 0;
  int64_t step = 0;
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamSetT<float>& params);

CheckpointMeta read_checkpoint_meta(const std::string& path);

// Loads parameter values into an already-constructed model; the layout id
// recorded in the file must match the model's.
void load_checkpoint_params(const std::string& path, ParamSetT<float>& params);

}  // namespace prrl
