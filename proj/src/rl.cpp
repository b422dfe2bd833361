#include "prrl/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "prrl/kernels.hpp"

namespace prrl {

void RLConfig::validate() const {
  if (max_iterations < 0) throw config_error("rl: max_iterations must be >= 0");
  if (gen_batch < 1 || train_batch < 1 || dev_subset < 1 || seed_len < 1 || max_new < 1)
    throw config_error("rl: batch sizes, seed_len and max_new must be >= 1");
  if (!(temperature > 0.0)) throw config_error("rl: temperature must be positive");
  if (lr_tagger <= 0.0 || lr_generator <= 0.0)
    throw config_error("rl: learning rates must be positive");
}

std::string record_to_json_line(const IterationRecord& r) {
  nlohmann::json j;
  j["iteration"] = r.iteration;
  j["tagger_loss"] = r.tagger_loss;
  j["dev_loss"] = r.dev_loss;
  if (r.has_rewards) {
    j["rewards"] = r.rewards;
    j["reward_mean"] = r.reward_mean;
    j["reward_std"] = r.reward_std;
    j["generator_loss"] = r.generator_loss;
    j["generated_words"] = r.generated_words;
  }
  if (r.dev_f1) j["dev_f1"] = *r.dev_f1;
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  return j.dump();
}

std::vector<GeneratedSample> generate_batch(const SampleFn& sampler,
                                            const std::vector<LabeledSequence>& pool,
                                            const GenVocab& gv, const RLConfig& cfg,
                                            int core_size, int context, std::mt19937& rng,
                                            std::vector<std::string>* warnings) {
  std::vector<GeneratedSample> out;
  int dropped = 0;
  for (int i = 0; i < cfg.gen_batch; ++i) {
    GeneratedSample best;
    bool have = false;
    for (int attempt = 0; attempt <= 5; ++attempt) {
      std::vector<int> seed = sample_seed(pool, cfg.seed_len, rng);
      std::vector<int> ids = sampler(seed, rng);
      std::vector<int> cont(ids.begin() + cfg.seed_len, ids.end());
      if (cont.empty()) continue;
      const std::string text = generator_tokens_to_text(cont, gv);
      LabeledSequence seq;
      try {
        seq = ingest(text, *gv.base);
      } catch (const Error&) {
        continue;  // punctuation-only continuation
      }
      GeneratedSample s;
      s.token_ids = std::move(ids);
      s.seed_len = cfg.seed_len;
      s.sequence = std::move(seq);
      if (!have || s.sequence.size() > best.sequence.size()) {
        best = std::move(s);
        have = true;
      }
      if (best.sequence.size() >= 4) break;  // short ones get resampled
    }
    if (!have) {
      ++dropped;
      continue;
    }
    best.chunks = chunk_sequence(best.sequence,
                                 "gen:" + std::to_string(out.size()), core_size, context);
    out.push_back(std::move(best));
  }
  if (dropped > 0 && warnings)
    warnings->push_back("degenerate_generator: dropped " + std::to_string(dropped) +
                        " empty generations");
  return out;
}

double sample_reward(const GradientVector& grad_gen, const GradientVector& grad_dev,
                     RewardMode mode) {
  if (grad_gen.layout_id != grad_dev.layout_id)
    throw data_error("sample_reward: gradient layout mismatch");
  if (grad_gen.values.size() != grad_dev.values.size())
    throw data_error("sample_reward: gradient length mismatch");
  const double dot = dot64(grad_gen.values, grad_dev.values);
  if (mode == RewardMode::Dot) return dot;
  const double ng = norm64(grad_gen.values);
  const double nd = norm64(grad_dev.values);
  if (ng < 1e-12 || nd < 1e-12) return 0.0;
  return dot / (ng * nd);
}

namespace {

// Average of per-chunk mean losses as a single tape, one backward pass.
Val<float> chunk_set_loss(Tagger& tagger, GraphT<float>& g,
                          const std::vector<const Chunk*>& chunks) {
  if (chunks.empty()) throw data_error("chunk gradient: empty chunk set");
  Val<float> total{};
  for (size_t i = 0; i < chunks.size(); ++i) {
    Val<float> li = tagger.loss(g, pad_chunks(std::vector<const Chunk*>{chunks[i]}));
    li = scale(li, 1.0 / (double)chunks.size());
    total = i == 0 ? li : add(total, li);
  }
  return total;
}

std::vector<const Chunk*> pointers(const std::vector<Chunk>& chunks) {
  std::vector<const Chunk*> out;
  out.reserve(chunks.size());
  for (const auto& c : chunks) out.push_back(&c);
  return out;
}

}  // namespace

GradientVector chunks_gradient(Tagger& tagger, const std::vector<const Chunk*>& chunks) {
  tagger.params().zero_grad();
  GraphT<float> g;
  Val<float> loss = chunk_set_loss(tagger, g, chunks);
  g.backward(loss);
  return tagger.params().flatten_gradients();
}

namespace {

std::vector<const Chunk*> sample_chunk_subset(const std::vector<Chunk>& chunks,
                                              int subset_size, std::mt19937& rng) {
  if (chunks.empty()) throw config_error("dev set is empty");
  if ((int)chunks.size() < subset_size)
    throw config_error("dev set has " + std::to_string(chunks.size()) +
                       " chunks, need at least " + std::to_string(subset_size));
  std::vector<int> idx(chunks.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<const Chunk*> out;
  out.reserve(subset_size);
  for (int i = 0; i < subset_size; ++i) out.push_back(&chunks[idx[i]]);
  return out;
}

}  // namespace

GradientVector dev_gradient(Tagger& tagger, const std::vector<Chunk>& dev_chunks,
                            int subset_size, std::mt19937& rng) {
  return chunks_gradient(tagger, sample_chunk_subset(dev_chunks, subset_size, rng));
}

double dev_loss_estimate(Tagger& tagger, const std::vector<Chunk>& dev_chunks,
                         int subset_size, std::mt19937& rng) {
  subset_size = std::min<int>(subset_size, (int)dev_chunks.size());
  auto subset = sample_chunk_subset(dev_chunks, subset_size, rng);
  GraphT<float> g;
  return (double)tagger.loss(g, pad_chunks(subset)).scalar();
}

double tagger_update(Tagger& tagger, AdamStateT<float>& opt,
                     const std::vector<const Chunk*>& batch, std::mt19937& rng) {
  for (const Chunk* c : batch)
    if (c->origin.sequence_id.rfind("dev", 0) == 0)
      throw data_error("tagger_update: dev chunk leaked into a training batch");
  tagger.params().zero_grad();
  GraphT<float> g;
  Val<float> loss = tagger.loss(g, pad_chunks(batch), /*train=*/true, &rng);
  const double value = (double)loss.scalar();
  g.backward(loss);
  clip_global_norm(tagger.params(), 1.0);
  adam_step(tagger.params(), opt);
  return value;
}

double generator_update(Generator& gen, AdamStateT<float>& opt,
                        const std::vector<GeneratedSample>& samples,
                        const std::vector<double>& rewards, const RLConfig& cfg) {
  if (samples.size() != rewards.size())
    throw data_error("generator_update: one reward per retained sample required");
  if (samples.empty()) return 0.0;

  std::vector<double> r = rewards;
  if (cfg.reward_baseline) {
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / (double)r.size();
    for (double& v : r) v -= mean;
  }
  if (std::all_of(r.begin(), r.end(), [](double v) { return v == 0.0; }))
    return 0.0;  // exactly zero gradient: no update

  gen.params().zero_grad();
  GraphT<float> g;
  Val<float> loss{};
  for (size_t i = 0; i < samples.size(); ++i) {
    Val<float> lp = gen.log_prob(g, samples[i].token_ids, samples[i].seed_len);
    Val<float> term = scale(lp, -r[i]);
    loss = i == 0 ? term : add(loss, term);
  }
  const double value = (double)loss.scalar();
  g.backward(loss);
  clip_global_norm(gen.params(), 1.0);
  adam_step(gen.params(), opt);
  return value;
}

TrainChunkSource::TrainChunkSource(const std::vector<LabeledSequence>* train,
                                   const AugmentationConfig* aug, const Vocab* vocab,
                                   int core_size, int context)
    : train_(train), aug_(aug), vocab_(vocab), core_size_(core_size), context_(context) {
  if (train_->empty()) throw data_error("training set is empty");
}

void TrainChunkSource::refill(std::mt19937& rng) {
  queue_.clear();
  at_ = 0;
  for (size_t s = 0; s < train_->size(); ++s) {
    const LabeledSequence* seq = &(*train_)[s];
    LabeledSequence noisy;
    if (aug_) {
      noisy = augment(*seq, *aug_, rng, *vocab_);
      if (noisy.size() == 0) continue;
      seq = &noisy;
    }
    auto chunks = chunk_sequence(*seq, "train:" + std::to_string(s), core_size_, context_);
    for (auto& c : chunks) queue_.push_back(std::move(c));
  }
  std::shuffle(queue_.begin(), queue_.end(), rng);
  if (queue_.empty()) throw data_error("training set produced no chunks");
}

std::vector<Chunk> TrainChunkSource::next(int n, std::mt19937& rng) {
  std::vector<Chunk> out;
  out.reserve(n);
  while ((int)out.size() < n) {
    if (at_ >= queue_.size()) refill(rng);
    out.push_back(queue_[at_++]);
  }
  return out;
}

namespace {

void reward_stats(IterationRecord& rec) {
  if (rec.rewards.empty()) return;
  double mean = 0;
  for (double r : rec.rewards) mean += r;
  mean /= (double)rec.rewards.size();
  double var = 0;
  for (double r : rec.rewards) var += (r - mean) * (r - mean);
  rec.reward_mean = mean;
  rec.reward_std = std::sqrt(var / (double)rec.rewards.size());
}

}  // namespace

std::vector<IterationRecord> rl_run(Tagger& tagger, AdamStateT<float>& tagger_opt,
                                    Generator& gen, AdamStateT<float>& gen_opt,
                                    const std::vector<LabeledSequence>& train,
                                    const std::vector<Chunk>& dev_chunks,
                                    const std::vector<LabeledSequence>& seed_pool,
                                    const GenVocab& gv, const RLConfig& cfg,
                                    int core_size, int context,
                                    const AugmentationConfig* augment_cfg,
                                    std::mt19937& rng, const RLHooks& hooks) {
  cfg.validate();
  tagger_opt.lr = cfg.lr_tagger;
  gen_opt.lr = cfg.lr_generator;
  TrainChunkSource source(&train, augment_cfg, gv.base, core_size, context);

  SampleFn sampler = [&gen, &cfg](const std::vector<int>& seed, std::mt19937& r) {
    return gen.sample(seed, cfg.max_new, cfg.temperature, r);
  };

  std::vector<IterationRecord> records;
  for (int t = 0; t < cfg.max_iterations; ++t) {
    IterationRecord rec;
    rec.iteration = t;

    auto samples = generate_batch(sampler, seed_pool, gv, cfg, core_size, context, rng,
                                  &rec.warnings);
    for (const auto& s : samples) rec.generated_words += (int)s.sequence.size();

    std::vector<Chunk> btrain = source.next(cfg.train_batch, rng);
    std::vector<const Chunk*> union_batch;
    for (const auto& s : samples)
      for (const auto& c : s.chunks) union_batch.push_back(&c);
    for (const auto& c : btrain) union_batch.push_back(&c);

    const bool want_rewards = hooks.compute_rewards && !samples.empty();
    GradientVector grad_dev;
    std::vector<GradientVector> grad_gen;
    auto compute_reward_grads = [&] {
      grad_dev = dev_gradient(tagger, dev_chunks, cfg.dev_subset, rng);
      grad_gen.clear();
      if (cfg.per_sample_rewards) {
        for (const auto& s : samples) grad_gen.push_back(chunks_gradient(tagger, pointers(s.chunks)));
      } else {
        std::vector<const Chunk*> all;
        for (const auto& s : samples)
          for (const auto& c : s.chunks) all.push_back(&c);
        grad_gen.push_back(chunks_gradient(tagger, all));
      }
    };

    if (want_rewards && cfg.grad_eval_point == GradEvalPoint::PreUpdate)
      compute_reward_grads();

    rec.tagger_loss = tagger_update(tagger, tagger_opt, union_batch, rng);

    if (want_rewards && cfg.grad_eval_point == GradEvalPoint::PostUpdate)
      compute_reward_grads();

    if (want_rewards) {
      rec.has_rewards = true;
      if (cfg.per_sample_rewards) {
        for (const auto& gg : grad_gen)
          rec.rewards.push_back(sample_reward(gg, grad_dev, cfg.reward_mode));
      } else {
        const double r = sample_reward(grad_gen[0], grad_dev, cfg.reward_mode);
        rec.rewards.assign(samples.size(), r);
      }
      reward_stats(rec);
      if (hooks.update_generator)
        rec.generator_loss = generator_update(gen, gen_opt, samples, rec.rewards, cfg);
    }

    rec.dev_loss = dev_loss_estimate(tagger, dev_chunks, cfg.dev_subset, rng);

    if (hooks.checkpoint_interval > 0 && (t + 1) % hooks.checkpoint_interval == 0) {
      if (hooks.dev_f1) rec.dev_f1 = hooks.dev_f1();
      if (hooks.on_checkpoint) hooks.on_checkpoint(t + 1);
    }
    if (hooks.on_record) hooks.on_record(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<IterationRecord> supervised_run(Tagger& tagger, AdamStateT<float>& opt,
                                            const std::vector<LabeledSequence>& train,
                                            const std::vector<Chunk>& dev_chunks,
                                            const AugmentationConfig* augment_cfg,
                                            const Vocab& vocab, int epochs,
                                            int batch_size, int dev_subset,
                                            int core_size, int context,
                                            std::mt19937& rng, const RLHooks& hooks) {
  if (epochs < 0) throw config_error("train: epochs must be >= 0");
  if (batch_size < 1) throw config_error("train: batch_size must be >= 1");
  std::vector<IterationRecord> records;
  for (int e = 0; e < epochs; ++e) {
    // fresh augmentation noise per epoch
    std::vector<Chunk> chunks;
    for (size_t s = 0; s < train.size(); ++s) {
      const LabeledSequence* seq = &train[s];
      LabeledSequence noisy;
      if (augment_cfg) {
        noisy = augment(*seq, *augment_cfg, rng, vocab);
        if (noisy.size() == 0) continue;
        seq = &noisy;
      }
      for (auto& c : chunk_sequence(*seq, "train:" + std::to_string(s), core_size, context))
        chunks.push_back(std::move(c));
    }
    std::shuffle(chunks.begin(), chunks.end(), rng);

    IterationRecord rec;
    rec.iteration = e;
    double loss_sum = 0.0;
    int steps = 0;
    for (size_t at = 0; at < chunks.size(); at += batch_size) {
      std::vector<const Chunk*> batch;
      for (size_t i = at; i < std::min(chunks.size(), at + batch_size); ++i)
        batch.push_back(&chunks[i]);
      loss_sum += tagger_update(tagger, opt, batch, rng);
      ++steps;
    }
    rec.tagger_loss = steps ? loss_sum / steps : 0.0;
    rec.dev_loss = dev_loss_estimate(tagger, dev_chunks, dev_subset, rng);
    if (hooks.checkpoint_interval > 0 && (e + 1) % hooks.checkpoint_interval == 0) {
      if (hooks.dev_f1) rec.dev_f1 = hooks.dev_f1();
      if (hooks.on_checkpoint) hooks.on_checkpoint(e + 1);
    }
    if (hooks.on_record) hooks.on_record(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

double generator_pretrain(Generator& gen, AdamStateT<float>& opt,
                          const std::vector<LabeledSequence>& text, const GenVocab& gv,
                          int epochs, int batch_size, std::mt19937& rng) {
  if (epochs < 1) return 0.0;
  const int max_len = gen.config().max_len;
  std::vector<std::vector<int>> streams;
  for (const auto& seq : text) {
    std::vector<int> ids = {Vocab::kBos};
    for (int v : to_generator_stream(seq, gv)) ids.push_back(v);
    for (size_t at = 0; at + 1 < ids.size(); at += max_len - 1) {
      std::vector<int> window(ids.begin() + at,
                              ids.begin() + std::min(ids.size(), at + max_len));
      if (window.size() >= 2) streams.push_back(std::move(window));
    }
  }
  if (streams.empty()) throw data_error("generator pretraining: no usable text");

  double last_epoch_loss = 0.0;
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(streams.begin(), streams.end(), rng);
    double loss_sum = 0.0;
    int steps = 0;
    for (size_t at = 0; at < streams.size(); at += batch_size) {
      std::vector<std::vector<int>> batch(
          streams.begin() + at,
          streams.begin() + std::min(streams.size(), at + batch_size));
      gen.params().zero_grad();
      GraphT<float> g;
      Val<float> loss = gen.lm_loss(g, batch, /*train=*/true, &rng);
      loss_sum += (double)loss.scalar();
      g.backward(loss);
      clip_global_norm(gen.params(), 1.0);
      adam_step(gen.params(), opt);
      ++steps;
    }
    last_epoch_loss = steps ? loss_sum / steps : 0.0;
  }
  return last_epoch_loss;
}

}  // namespace prrl
