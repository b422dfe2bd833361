#pragma once

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "prrl/model.hpp"
#include "prrl/text_data.hpp"

namespace prrl {

// Eq.-style reward variants: raw gradient dot product, or the cosine of the
// two gradients (bounded, the default).
enum class RewardMode { Dot, Cosine };

// Whether reward gradients are taken at the tagger before or after this
// iteration's update.
enum class GradEvalPoint { PreUpdate, PostUpdate };

struct RLConfig {
  int max_iterations = 50;
  int gen_batch = 8;
  int train_batch = 16;
  int dev_subset = 16;
  int seed_len = 64;
  int max_new = 96;
  double temperature = 1.0;
  RewardMode reward_mode = RewardMode::Cosine;
  bool reward_baseline = false;
  bool per_sample_rewards = true;
  GradEvalPoint grad_eval_point = GradEvalPoint::PostUpdate;
  double lr_tagger = 1e-3;
  double lr_generator = 1e-3;

  void validate() const;
  bool operator==(const RLConfig&) const = default;
};

struct IterationRecord {
  int iteration = 0;
  double tagger_loss = 0.0;
  double dev_loss = 0.0;
  bool has_rewards = false;
  std::vector<double> rewards;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  double generator_loss = 0.0;
  int generated_words = 0;
  std::optional<double> dev_f1;
  std::vector<std::string> warnings;
};

std::string record_to_json_line(const IterationRecord& r);

struct GeneratedSample {
  std::vector<int> token_ids;  // generation vocabulary, seed prefix included
  int seed_len = 0;
  LabeledSequence sequence;  // ingested continuation
  std::vector<Chunk> chunks;
};

// Draws seeds, samples continuations, renders them to text and ingests the
// result. Continuations with fewer than 4 words are resampled up to 5 times,
// then kept short; empty ones are dropped with a warning.
using SampleFn =
    std::function<std::vector<int>(const std::vector<int>& seed, std::mt19937& rng)>;

std::vector<GeneratedSample> generate_batch(const SampleFn& sampler,
                                            const std::vector<LabeledSequence>& pool,
                                            const GenVocab& gv, const RLConfig& cfg,
                                            int core_size, int context, std::mt19937& rng,
                                            std::vector<std::string>* warnings);

// Gradient-alignment reward between a generated sample's tagger gradient and
// the averaged dev gradient. 64-bit accumulation throughout; cosine returns 0
// when either norm vanishes.
double sample_reward(const GradientVector& grad_gen, const GradientVector& grad_dev,
                     RewardMode mode);

// Average of per-chunk loss gradients, dropout disabled.
GradientVector chunks_gradient(Tagger& tagger, const std::vector<const Chunk*>& chunks);

// Same, over a uniform subset of the dev chunks.
GradientVector dev_gradient(Tagger& tagger, const std::vector<Chunk>& dev_chunks,
                            int subset_size, std::mt19937& rng);

double dev_loss_estimate(Tagger& tagger, const std::vector<Chunk>& dev_chunks,
                         int subset_size, std::mt19937& rng);

// One cross-entropy backward and Adam step over the union batch; generated
// and real chunks carry identical weight. Returns the batch loss.
double tagger_update(Tagger& tagger, AdamStateT<float>& opt,
                     const std::vector<const Chunk*>& batch, std::mt19937& rng);

// REINFORCE step on the generator: minimizes -sum_i r_i log P(sample_i) with
// rewards treated as constants. All-zero rewards leave the generator
// untouched. Returns the loss value.
double generator_update(Generator& gen, AdamStateT<float>& opt,
                        const std::vector<GeneratedSample>& samples,
                        const std::vector<double>& rewards, const RLConfig& cfg);

// Shuffled queue over augmented-and-chunked training sequences; refills with
// fresh augmentation noise whenever it runs dry.
class TrainChunkSource {
 public:
  TrainChunkSource(const std::vector<LabeledSequence>* train,
                   const AugmentationConfig* aug, const Vocab* vocab, int core_size,
                   int context);

  std::vector<Chunk> next(int n, std::mt19937& rng);

 private:
  void refill(std::mt19937& rng);

  const std::vector<LabeledSequence>* train_;
  const AugmentationConfig* aug_;
  const Vocab* vocab_;
  int core_size_, context_;
  std::vector<Chunk> queue_;
  size_t at_ = 0;
};

struct RLHooks {
  std::function<void(const IterationRecord&)> on_record;
  std::function<void(int iteration)> on_checkpoint;
  std::function<double()> dev_f1;
  int checkpoint_interval = 0;  // 0 disables periodic checkpoints
  bool update_generator = true;  // false: frozen generator (data only)
  bool compute_rewards = true;   // false: skip reward bookkeeping entirely
};

// Algorithm-1 driver: per iteration, generate a batch from seeds, update the
// tagger on generated-plus-real data, compute gradient-alignment rewards at
// the configured evaluation point, and update the generator.
std::vector<IterationRecord> rl_run(Tagger& tagger, AdamStateT<float>& tagger_opt,
                                    Generator& gen, AdamStateT<float>& gen_opt,
                                    const std::vector<LabeledSequence>& train,
                                    const std::vector<Chunk>& dev_chunks,
                                    const std::vector<LabeledSequence>& seed_pool,
                                    const GenVocab& gv, const RLConfig& cfg,
                                    int core_size, int context,
                                    const AugmentationConfig* augment_cfg,
                                    std::mt19937& rng, const RLHooks& hooks);

// Plain supervised training over epochs; one record per epoch.
std::vector<IterationRecord> supervised_run(Tagger& tagger, AdamStateT<float>& opt,
                                            const std::vector<LabeledSequence>& train,
                                            const std::vector<Chunk>& dev_chunks,
                                            const AugmentationConfig* augment_cfg,
                                            const Vocab& vocab, int epochs,
                                            int batch_size, int dev_subset,
                                            int core_size, int context,
                                            std::mt19937& rng, const RLHooks& hooks);

// Next-token pretraining of the generator on rendered sequences. Returns the
// final epoch's mean loss.
double generator_pretrain(Generator& gen, AdamStateT<float>& opt,
                          const std::vector<LabeledSequence>& text, const GenVocab& gv,
                          int epochs, int batch_size, std::mt19937& rng);

}  // namespace prrl
