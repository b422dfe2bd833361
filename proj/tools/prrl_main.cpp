#include <cstdio>
#include <exception>

#include <CLI11.hpp>

#include "prrl/cli.hpp"
#include "prrl/errors.hpp"

using namespace prrl;

int main(int argc, char** argv) {
  CLI::App app{"punctuation restoration trained on RL-generated data"};
  app.require_subcommand(1);

  cli::PrepareOptions prep;
  std::vector<double> prep_alphas;
  auto* prepare = app.add_subcommand("prepare", "ingest raw punctuated text into a dataset");
  prepare->add_option("--input", prep.input, "raw text, one sequence per line")->required();
  prepare->add_option("--output", prep.output, "dataset TSV to write")->required();
  prepare->add_option("--vocab", prep.vocab_out, "vocabulary file to write");
  prepare->add_option("--augment", prep_alphas, "duplication/alternation/deletion ratios")
      ->expected(3);
  prepare->add_option("--seed", prep.seed, "rng seed for augmentation");

  cli::SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic benchmark corpus");
  synth_cmd->add_option("--out-dir", synth.out_dir, "output directory")->required();
  synth_cmd->add_option("--spec", synth.spec_path, "grammar spec json (defaults built in)");
  synth_cmd->add_option("--seed", synth.seed, "rng seed");

  cli::TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "train a tagger per the run config");
  train_cmd->add_option("--config", train.config_path, "run config json")->required();
  train_cmd->add_option("--pretrain-pr", train.pretrain_pr,
                        "supervised tagger epochs before the main stage");
  train_cmd->add_option("--pretrain-gen", train.pretrain_gen,
                        "language-model epochs for the generator before the main stage");

  cli::EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "score a tagger checkpoint on a dataset");
  eval_cmd->add_option("--ckpt", eval.ckpt, "tagger checkpoint")->required();
  eval_cmd->add_option("--data", eval.data, "dataset TSV")->required();
  eval_cmd->add_option("--vocab", eval.vocab, "vocabulary file")->required();
  eval_cmd->add_option("--report", eval.report, "metrics json to write");
  eval_cmd->add_option("--core-size", eval.core_size, "chunk core size");
  eval_cmd->add_option("--context", eval.context, "context words per side");

  cli::GenerateOptions gen;
  auto* gen_cmd = app.add_subcommand("generate", "sample punctuated text from a generator");
  gen_cmd->add_option("--gen-ckpt", gen.gen_ckpt, "generator checkpoint")->required();
  gen_cmd->add_option("--seed-file", gen.seed_file, "dataset TSV to draw seeds from")->required();
  gen_cmd->add_option("--vocab", gen.vocab, "vocabulary file")->required();
  gen_cmd->add_option("--n", gen.n, "number of samples");
  gen_cmd->add_option("--len", gen.len, "max new tokens per sample");
  gen_cmd->add_option("--seed-len", gen.seed_len, "seed words per sample");
  gen_cmd->add_option("--temperature", gen.temperature, "sampling temperature");
  gen_cmd->add_option("--seed", gen.seed, "rng seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) {
      if (!prep_alphas.empty())
        prep.augment = AugmentationConfig{prep_alphas[0], prep_alphas[1], prep_alphas[2]};
      return cli::cmd_prepare(prep);
    }
    if (synth_cmd->parsed()) return cli::cmd_synth(synth);
    if (train_cmd->parsed()) return cli::cmd_train(train);
    if (eval_cmd->parsed()) return cli::cmd_eval(eval);
    if (gen_cmd->parsed()) return cli::cmd_generate(gen);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    switch (e.kind()) {
      case ErrorKind::Config: return 1;
      case ErrorKind::Data: return 2;
      case ErrorKind::Numeric: return 3;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 3;
  }
  return 1;
}
