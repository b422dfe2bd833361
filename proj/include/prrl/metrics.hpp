#pragma once

#include <string>
#include <vector>

#include "prrl/model.hpp"
#include "prrl/text_data.hpp"

namespace prrl {

struct ClassCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Per-mark counts plus the micro scores pooled over the three punctuation
// classes; NONE never enters the pool.
struct Metrics {
  ClassCounts per_class[3];  // indexed by PunctLabel - 1
  ClassCounts overall;

  const ClassCounts& comma() const { return per_class[0]; }
  const ClassCounts& period() const { return per_class[1]; }
  const ClassCounts& question() const { return per_class[2]; }
};

Metrics score(const std::vector<PunctLabel>& gold, const std::vector<PunctLabel>& pred);

// Counts without the derived ratios, so callers can pool across sequences.
void accumulate_counts(const std::vector<PunctLabel>& gold,
                       const std::vector<PunctLabel>& pred, Metrics& m);
void finalize_metrics(Metrics& m);

// Chunks, runs the tagger, takes the per-position argmax on core positions
// (ties break toward the lowest class index) and reassembles a full-length
// prediction.
std::vector<PunctLabel> predict_sequence(Tagger& tagger, const LabeledSequence& seq,
                                         int core_size, int context);

Metrics score_dataset(Tagger& tagger, const std::vector<LabeledSequence>& data,
                      int core_size, int context);

std::string metrics_to_json(const Metrics& m);
void write_metrics_report(const std::string& path, const Metrics& m);

}  // namespace prrl
