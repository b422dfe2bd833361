#include "prrl/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "prrl/checkpoint.hpp"
#include "prrl/metrics.hpp"
#include "prrl/rl.hpp"
#include "prrl/run_config.hpp"
#include "prrl/synth.hpp"

namespace prrl::cli {

namespace fs = std::filesystem;

namespace {

std::vector<Chunk> chunk_dataset(const std::vector<LabeledSequence>& seqs,
                                 const std::string& prefix, int core, int ctx) {
  std::vector<Chunk> out;
  for (size_t i = 0; i < seqs.size(); ++i)
    for (auto& c :
         chunk_sequence(seqs[i], prefix + ":" + std::to_string(i), core, ctx))
      out.push_back(std::move(c));
  return out;
}

void print_label_histogram(const std::vector<WordSeq>& seqs) {
  int64_t words = 0, counts[4] = {0, 0, 0, 0};
  for (const auto& s : seqs) {
    words += (int64_t)s.words.size();
    for (PunctLabel l : s.labels) ++counts[(int)l];
  }
  std::printf("sequences=%zu words=%lld NONE=%lld COMMA=%lld PERIOD=%lld QUESTION=%lld\n",
              seqs.size(), (long long)words, (long long)counts[0], (long long)counts[1],
              (long long)counts[2], (long long)counts[3]);
}

}  // namespace

int cmd_prepare(const PrepareOptions& opt) {
  std::ifstream in(opt.input, std::ios::binary);
  if (!in) throw data_error("prepare: cannot read " + opt.input);

  std::vector<WordSeq> seqs;
  std::string line;
  while (std::getline(in, line)) {
    auto [words, labels] = parse_text(line);
    if (words.empty()) continue;  // blank or punctuation-only line
    seqs.push_back(WordSeq{std::move(words), std::move(labels)});
  }
  if (seqs.empty()) throw data_error("prepare: no usable text lines in " + opt.input);

  std::vector<std::vector<std::string>> all_words;
  for (const auto& s : seqs) all_words.push_back(s.words);
  Vocab vocab = Vocab::build(all_words, 2, 2000);

  if (opt.augment) {
    std::mt19937 rng(opt.seed);
    for (auto& s : seqs) {
      auto [w, l] = augment_words(s.words, s.labels, *opt.augment, rng, vocab);
      if (!w.empty()) s = WordSeq{std::move(w), std::move(l)};
    }
  }

  write_word_dataset(opt.output, seqs);
  if (!opt.vocab_out.empty()) vocab.write_file(opt.vocab_out);
  print_label_histogram(seqs);
  return 0;
}

int cmd_synth(const SynthOptions& opt) {
  GrammarSpec spec;
  if (!opt.spec_path.empty()) spec = GrammarSpec::from_json_file(opt.spec_path);
  spec.validate();

  fs::create_directories(opt.out_dir);
  std::mt19937 rng(opt.seed);
  SynthCorpus corpus = synth_corpus(spec, rng);

  const fs::path dir(opt.out_dir);
  write_word_dataset((dir / "train.tsv").string(), corpus.train);
  write_word_dataset((dir / "dev.tsv").string(), corpus.dev);
  write_word_dataset((dir / "test.tsv").string(), corpus.test);
  write_word_dataset((dir / "test_clean.tsv").string(), corpus.test_clean);
  write_word_dataset((dir / "seed_pool.tsv").string(), corpus.pool);

  std::vector<std::vector<std::string>> train_words;
  for (const auto& s : corpus.train) train_words.push_back(s.words);
  Vocab vocab = Vocab::build(train_words, 2, 2000);
  vocab.write_file((dir / "vocab.tsv").string());

  std::printf("train: ");
  print_label_histogram(corpus.train);
  std::printf("dev:   ");
  print_label_histogram(corpus.dev);
  std::printf("test:  ");
  print_label_histogram(corpus.test);
  std::printf("pool:  ");
  print_label_histogram(corpus.pool);
  std::printf("vocab: %d types -> %s\n", vocab.size(), (dir / "vocab.tsv").c_str());
  return 0;
}

int cmd_train(const TrainOptions& opt) {
  RunConfig cfg = load_run_config(opt.config_path);
  if (opt.pretrain_pr >= 0) cfg.pretrain_pr = opt.pretrain_pr;
  if (opt.pretrain_gen >= 0) cfg.pretrain_gen = opt.pretrain_gen;

  Vocab vocab = Vocab::read_file(cfg.paths.vocab);
  cfg.tagger.vocab_size = vocab.size();
  cfg.generator.vocab_size = vocab.size() + 3;  // literal , . ? tokens
  cfg.tagger.validate();
  if (cfg.uses_generator()) cfg.generator.validate();

  fs::create_directories(cfg.paths.out_dir);
  const fs::path out(cfg.paths.out_dir);
  save_run_config((out / "effective_config.json").string(), cfg);

  auto train = read_dataset(cfg.paths.train, vocab);
  auto dev = read_dataset(cfg.paths.dev, vocab);
  if (train.empty()) throw data_error("train: empty training set");
  if (dev.empty()) throw data_error("train: empty dev set");
  auto dev_chunks = chunk_dataset(dev, "dev", cfg.core_size, cfg.context);

  std::mt19937 rng(cfg.rng_seed);
  Tagger tagger(cfg.tagger, rng);
  std::optional<Generator> gen;
  std::vector<LabeledSequence> pool;
  if (cfg.uses_generator()) {
    gen.emplace(cfg.generator, rng);
    pool = read_dataset(cfg.paths.seed_pool, vocab);
    if (pool.empty()) throw data_error("train: empty seed pool");
  }
  GenVocab gv{&vocab};

  std::ofstream telemetry((out / "telemetry.jsonl").string(), std::ios::binary);
  if (!telemetry) throw data_error("train: cannot write telemetry in " + cfg.paths.out_dir);

  AdamStateT<float> topt, gopt;
  topt.lr = cfg.rl.lr_tagger;
  gopt.lr = cfg.rl.lr_generator;

  auto save_models = [&] {
    save_checkpoint((out / "tagger.ckpt").string(),
                    {"tagger", cfg.tagger, vocab.content_hash(),
                     tagger.params().layout_id(), topt.step},
                    tagger.params());
    if (gen)
      save_checkpoint((out / "generator.ckpt").string(),
                      {"generator", cfg.generator, vocab.content_hash(),
                       gen->params().layout_id(), gopt.step},
                      gen->params());
  };

  RLHooks hooks;
  hooks.checkpoint_interval = cfg.checkpoint_interval;
  hooks.on_checkpoint = [&](int) { save_models(); };
  hooks.dev_f1 = [&] { return score_dataset(tagger, dev, cfg.core_size, cfg.context).overall.f1; };
  hooks.on_record = [&](const IterationRecord& r) {
    telemetry << record_to_json_line(r) << '\n';
    telemetry.flush();
  };
  hooks.update_generator = cfg.mode == "rl";
  hooks.compute_rewards = cfg.mode == "rl";

  const bool augmented = cfg.mode != "baseline";
  const AugmentationConfig* aug = augmented ? &cfg.augmentation : nullptr;

  try {
    if (gen && cfg.pretrain_gen > 0) {
      const double lm_loss =
          generator_pretrain(*gen, gopt, train, gv, cfg.pretrain_gen, 8, rng);
      std::printf("generator pretraining: %d epochs, final lm loss %.4f\n",
                  cfg.pretrain_gen, lm_loss);
    }
    if (cfg.pretrain_pr > 0)
      supervised_run(tagger, topt, train, dev_chunks, aug, vocab, cfg.pretrain_pr,
                     cfg.rl.train_batch, cfg.rl.dev_subset, cfg.core_size, cfg.context,
                     rng, hooks);

    if (cfg.mode == "baseline" || cfg.mode == "augment") {
      supervised_run(tagger, topt, train, dev_chunks, aug, vocab, cfg.epochs,
                     cfg.rl.train_batch, cfg.rl.dev_subset, cfg.core_size, cfg.context,
                     rng, hooks);
    } else {
      rl_run(tagger, topt, *gen, gopt, train, dev_chunks, pool, gv, cfg.rl,
             cfg.core_size, cfg.context, aug, rng, hooks);
    }
  } catch (const Error&) {
    // periodic checkpoints stay on disk for post-mortem use
    throw;
  }

  save_models();
  const double dev_f1 = score_dataset(tagger, dev, cfg.core_size, cfg.context).overall.f1;
  std::printf("done: mode=%s steps=%lld dev_f1=%.4f out=%s\n", cfg.mode.c_str(),
              (long long)topt.step, dev_f1, cfg.paths.out_dir.c_str());
  return 0;
}

int cmd_eval(const EvalOptions& opt) {
  CheckpointMeta meta = read_checkpoint_meta(opt.ckpt);
  if (meta.kind != "tagger")
    throw data_error("eval: " + opt.ckpt + " is a " + meta.kind + " checkpoint");
  Vocab vocab = Vocab::read_file(opt.vocab);
  if (meta.vocab_hash != vocab.content_hash())
    throw data_error("eval: vocabulary hash mismatch between checkpoint and " +
                     opt.vocab);

  std::mt19937 rng(0);
  Tagger tagger(meta.config, rng);
  load_checkpoint_params(opt.ckpt, tagger.params());

  auto data = read_dataset(opt.data, vocab);
  if (data.empty()) throw data_error("eval: empty dataset " + opt.data);
  Metrics m = score_dataset(tagger, data, opt.core_size, opt.context);
  if (!opt.report.empty()) write_metrics_report(opt.report, m);
  std::printf("overall precision=%.4f recall=%.4f f1=%.4f (tp=%lld fp=%lld fn=%lld)\n",
              m.overall.precision, m.overall.recall, m.overall.f1,
              (long long)m.overall.tp, (long long)m.overall.fp,
              (long long)m.overall.fn);
  return 0;
}

int cmd_generate(const GenerateOptions& opt) {
  CheckpointMeta meta = read_checkpoint_meta(opt.gen_ckpt);
  if (meta.kind != "generator")
    throw data_error("generate: " + opt.gen_ckpt + " is a " + meta.kind + " checkpoint");
  Vocab vocab = Vocab::read_file(opt.vocab);
  if (meta.vocab_hash != vocab.content_hash())
    throw data_error("generate: vocabulary hash mismatch between checkpoint and " +
                     opt.vocab);
  if (opt.n < 1 || opt.len < 1 || opt.seed_len < 1)
    throw config_error("generate: n, len and seed-len must be >= 1");

  std::mt19937 rng(0);
  Generator gen(meta.config, rng);
  load_checkpoint_params(opt.gen_ckpt, gen.params());

  auto pool = read_dataset(opt.seed_file, vocab);
  if (pool.empty()) throw data_error("generate: empty seed file " + opt.seed_file);
  GenVocab gv{&vocab};

  std::mt19937 sample_rng(opt.seed);
  for (int i = 0; i < opt.n; ++i) {
    std::vector<int> seed = sample_seed(pool, opt.seed_len, sample_rng);
    std::vector<int> ids = gen.sample(seed, opt.len, opt.temperature, sample_rng);
    const std::string text = render(ingest(generator_tokens_to_text(ids, gv), vocab), vocab);
    std::printf("%s\n", text.c_str());
  }
  return 0;
}

}  // namespace prrl::cli
