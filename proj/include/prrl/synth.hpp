#pragma once

#include <random>
#include <string>
#include <vector>

#include "prrl/text_data.hpp"

namespace prrl {

// Synthetic clause grammar. Statements are chains of fixed-shape clauses
// joined by connectors; commas sit between clauses, a period ends the
// sentence. Questions are single clauses opened by a question word and end
// with a question mark. The labeling rule is deterministic given the word
// classes, so the task is learnable and deviations are meaningful.
struct GrammarSpec {
  std::vector<std::pair<int, double>> clause_length_probs = {{5, 0.5}, {6, 0.3}, {7, 0.2}};
  double p_question = 0.15;
  double p_extra_clause = 0.35;
  int max_clauses = 3;
  int min_sentences = 4;
  int max_sentences = 7;
  int pool_min_sentences = 10;
  int pool_max_sentences = 14;
  int n_train = 300;
  int n_dev = 60;
  int n_test = 80;
  int n_pool = 80;
  int nouns = 40;
  int verbs = 30;
  int adjectives = 20;
  AugmentationConfig noise{0.05, 0.05, 0.05};  // applied to dev and test only

  void validate() const;
  static GrammarSpec from_json_file(const std::string& path);
};

struct WordSeq {
  std::vector<std::string> words;
  std::vector<PunctLabel> labels;

  bool operator==(const WordSeq&) const = default;
};

struct SynthCorpus {
  std::vector<WordSeq> train;      // clean, REF-like
  std::vector<WordSeq> dev;        // noise applied, ASR-like
  std::vector<WordSeq> test;       // noise applied
  std::vector<WordSeq> test_clean; // same sequences as test, before noise
  std::vector<WordSeq> pool;       // clean, long paragraphs for seeding
};

// Deterministic for a fixed seed; the splits are pairwise disjoint at the
// sequence level.
SynthCorpus synth_corpus(const GrammarSpec& spec, std::mt19937& rng);

struct LabelRates {
  double comma = 0;
  double period = 0;
  double question = 0;
};

// Closed-form per-word label probabilities implied by the grammar constants.
LabelRates expected_label_rates(const GrammarSpec& spec);

void write_word_dataset(const std::string& path, const std::vector<WordSeq>& seqs);

}  // namespace prrl
