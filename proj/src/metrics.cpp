#include "prrl/metrics.hpp"

#include <fstream>

#include <json.hpp>

namespace prrl {

namespace {

void ratios(ClassCounts& c) {
  c.precision = (c.tp + c.fp) > 0 ? (double)c.tp / (double)(c.tp + c.fp) : 0.0;
  c.recall = (c.tp + c.fn) > 0 ? (double)c.tp / (double)(c.tp + c.fn) : 0.0;
  c.f1 = (c.precision + c.recall) > 0.0
             ? 2.0 * c.precision * c.recall / (c.precision + c.recall)
             : 0.0;
}

}  // namespace

void accumulate_counts(const std::vector<PunctLabel>& gold,
                       const std::vector<PunctLabel>& pred, Metrics& m) {
  if (gold.size() != pred.size())
    throw data_error("score: gold and prediction lengths differ (" +
                     std::to_string(gold.size()) + " vs " + std::to_string(pred.size()) +
                     ")");
  for (size_t i = 0; i < gold.size(); ++i) {
    const PunctLabel g = gold[i], p = pred[i];
    if (g == p) {
      if (g != PunctLabel::None) ++m.per_class[(int)g - 1].tp;
      continue;
    }
    if (g != PunctLabel::None) ++m.per_class[(int)g - 1].fn;
    if (p != PunctLabel::None) ++m.per_class[(int)p - 1].fp;
  }
}

void finalize_metrics(Metrics& m) {
  m.overall = ClassCounts{};
  for (ClassCounts& c : m.per_class) {
    ratios(c);
    m.overall.tp += c.tp;
    m.overall.fp += c.fp;
    m.overall.fn += c.fn;
  }
  ratios(m.overall);
}

Metrics score(const std::vector<PunctLabel>& gold, const std::vector<PunctLabel>& pred) {
  Metrics m;
  accumulate_counts(gold, pred, m);
  finalize_metrics(m);
  return m;
}

std::vector<PunctLabel> predict_sequence(Tagger& tagger, const LabeledSequence& seq,
                                         int core_size, int context) {
  auto chunks = chunk_sequence(seq, "eval", core_size, context);
  PaddedBatch batch = pad_chunks(chunks);
  GraphT<float> g;
  Val<float> logits = tagger.forward(g, batch, /*train=*/false);
  const Tensor& t = logits.value();  // [B x L x 4]

  std::vector<PunctLabel> out;
  out.reserve(seq.size());
  for (int b = 0; b < batch.batch; ++b)
    for (int i = 0; i < batch.len; ++i) {
      const size_t at = (size_t)b * batch.len + i;
      if (!batch.attend[at] || !batch.predict[at]) continue;
      const float* row = t.data.data() + at * kNumLabels;
      int best = 0;
      for (int j = 1; j < kNumLabels; ++j)
        if (row[j] > row[best]) best = j;  // ties keep the lowest index
      out.push_back((PunctLabel)best);
    }
  if (out.size() != seq.size())
    throw data_error("predict_sequence: reassembled " + std::to_string(out.size()) +
                     " labels for a sequence of " + std::to_string(seq.size()));
  return out;
}

Metrics score_dataset(Tagger& tagger, const std::vector<LabeledSequence>& data,
                      int core_size, int context) {
  Metrics m;
  for (const auto& seq : data)
    accumulate_counts(seq.labels, predict_sequence(tagger, seq, core_size, context), m);
  finalize_metrics(m);
  return m;
}

namespace {

nlohmann::json counts_to_json(const ClassCounts& c) {
  return nlohmann::json{{"tp", c.tp},
                        {"fp", c.fp},
                        {"fn", c.fn},
                        {"precision", c.precision},
                        {"recall", c.recall},
                        {"f1", c.f1}};
}

}  // namespace

std::string metrics_to_json(const Metrics& m) {
  nlohmann::json j{{"comma", counts_to_json(m.comma())},
                   {"period", counts_to_json(m.period())},
                   {"question", counts_to_json(m.question())},
                   {"overall", counts_to_json(m.overall)}};
  return j.dump(2);
}

void write_metrics_report(const std::string& path, const Metrics& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("metrics: cannot write " + path);
  out << metrics_to_json(m) << '\n';
}

}  // namespace prrl
