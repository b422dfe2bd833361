#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "prrl/vocab.hpp"

namespace prrl {

enum class PunctLabel : uint8_t { None = 0, Comma = 1, Period = 2, Question = 3 };
constexpr int kNumLabels = 4;

const char* label_name(PunctLabel l);
std::optional<PunctLabel> parse_label(const std::string& s);

// Word-id sequence with one punctuation label per word; the label at
// position i is the mark immediately following word i.
struct LabeledSequence {
  std::vector<int> word_ids;
  std::vector<PunctLabel> labels;

  size_t size() const { return word_ids.size(); }
  bool operator==(const LabeledSequence&) const = default;
};

struct AugmentationConfig {
  double alpha_dup = 0.05;
  double alpha_sub = 0.05;
  double alpha_del = 0.05;

  void validate() const;
  bool operator==(const AugmentationConfig&) const = default;
};

struct ChunkOrigin {
  std::string sequence_id;
  int core_begin = 0;
  int core_end = 0;
};

// Fixed-window training example: a core span plus up to C context words on
// each side. Loss is only taken on core positions.
struct Chunk {
  std::vector<int> token_ids;
  std::vector<PunctLabel> labels;
  std::vector<uint8_t> loss_mask;  // true exactly on core positions
  ChunkOrigin origin;

  size_t size() const { return token_ids.size(); }
};

// Tokenization without a vocabulary: lowercases, splits on whitespace,
// detaches {, . ? ! ;} and turns them into labels on the preceding word.
std::pair<std::vector<std::string>, std::vector<PunctLabel>> parse_text(
    const std::string& text);

LabeledSequence ingest(const std::string& text, const Vocab& vocab);

// Inverse of ingest up to unknown words: words joined by spaces with each
// label's mark attached to its word.
std::string render(const LabeledSequence& seq, const Vocab& vocab);

struct AugmentCounts {
  int64_t words = 0;
  int64_t dup = 0;
  int64_t sub = 0;
  int64_t del = 0;
};

// Per word, at most one of duplication / substitution / deletion fires,
// tested in that order on disjoint probability mass.
LabeledSequence augment(const LabeledSequence& seq, const AugmentationConfig& cfg,
                        std::mt19937& rng, const Vocab& vocab,
                        AugmentCounts* counts = nullptr);

// Same noise process over raw words; substitutions draw from the vocabulary.
std::pair<std::vector<std::string>, std::vector<PunctLabel>> augment_words(
    const std::vector<std::string>& words, const std::vector<PunctLabel>& labels,
    const AugmentationConfig& cfg, std::mt19937& rng, const Vocab& vocab,
    AugmentCounts* counts = nullptr);

// Tiles the sequence into cores of core_size (last may be short), each with
// up to C context words per side, clipped at the sequence boundaries.
std::vector<Chunk> chunk_sequence(const LabeledSequence& seq, const std::string& seq_id,
                                  int core_size, int context);

// Uniform draw over all eligible (sequence, start) pairs.
std::vector<int> sample_seed(const std::vector<LabeledSequence>& pool, int seed_len,
                             std::mt19937& rng);

// Dataset files are TSV: one "word<TAB>LABEL" line per word, blank line
// between sequences.
void write_dataset(const std::string& path, const std::vector<LabeledSequence>& seqs,
                   const Vocab& vocab);
std::vector<LabeledSequence> read_dataset(const std::string& path, const Vocab& vocab);

// Generator token streams: the generation vocabulary is the word vocabulary
// extended with literal punctuation tokens and indexed past its end.
struct GenVocab {
  const Vocab* base;

  int size() const { return base->size() + 3; }
  int comma_id() const { return base->size(); }
  int period_id() const { return base->size() + 1; }
  int question_id() const { return base->size() + 2; }
  bool is_punct(int id) const { return id >= base->size() && id < size(); }
  std::string token(int id) const;
};

std::vector<int> to_generator_stream(const LabeledSequence& seq, const GenVocab& gv);
std::string generator_tokens_to_text(const std::vector<int>& ids, const GenVocab& gv);

}  // namespace prrl
