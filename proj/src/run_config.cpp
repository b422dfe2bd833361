#include "prrl/run_config.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace prrl {

namespace {

using nlohmann::json;

json model_to_json(const ModelConfig& c) {
  return json{{"d_model", c.d_model},   {"n_layers", c.n_layers},
              {"n_heads", c.n_heads},   {"max_len", c.max_len},
              {"vocab_size", c.vocab_size}, {"dropout", c.dropout}};
}

void model_from_json(const json& j, ModelConfig& c) {
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.max_len = j.value("max_len", c.max_len);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.dropout = j.value("dropout", c.dropout);
}

const char* reward_mode_name(RewardMode m) {
  return m == RewardMode::Dot ? "dot" : "cosine";
}

RewardMode reward_mode_from(const std::string& s) {
  if (s == "dot") return RewardMode::Dot;
  if (s == "cosine") return RewardMode::Cosine;
  throw config_error("config: unknown reward_mode '" + s + "'");
}

const char* eval_point_name(GradEvalPoint p) {
  return p == GradEvalPoint::PreUpdate ? "pre_update" : "post_update";
}

GradEvalPoint eval_point_from(const std::string& s) {
  if (s == "pre_update") return GradEvalPoint::PreUpdate;
  if (s == "post_update") return GradEvalPoint::PostUpdate;
  throw config_error("config: unknown grad_eval_point '" + s + "'");
}

}  // namespace

void RunConfig::validate(bool check_paths) const {
  if (schema_version != 1)
    throw config_error("config: unsupported schema_version " +
                       std::to_string(schema_version));
  if (mode != "baseline" && mode != "augment" && mode != "gpt" && mode != "rl")
    throw config_error("config: unknown mode '" + mode + "'");
  if (core_size < 1 || context < 0)
    throw config_error("config: core_size must be >= 1 and context >= 0");
  if (tagger.max_len < core_size + 2 * context)
    throw config_error("config: tagger max_len must cover core_size + 2*context");
  if (epochs < 0) throw config_error("config: epochs must be >= 0");
  if (pretrain_pr < 0 || pretrain_gen < 0)
    throw config_error("config: pretrain epochs must be >= 0");
  augmentation.validate();
  rl.validate();

  auto need = [&](const std::string& p, const char* name) {
    if (p.empty()) throw config_error(std::string("config: paths.") + name + " is required");
    if (check_paths && !std::filesystem::exists(p))
      throw config_error(std::string("config: paths.") + name + " does not exist: " + p);
  };
  need(paths.train, "train");
  need(paths.dev, "dev");
  need(paths.vocab, "vocab");
  if (paths.out_dir.empty()) throw config_error("config: paths.out_dir is required");
  if (uses_generator()) need(paths.seed_pool, "seed_pool");
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw config_error(std::string("config: bad json: ") + e.what());
  }
  RunConfig c;
  try {
    c.schema_version = j.value("schema_version", 1);
    c.mode = j.value("mode", c.mode);
    if (j.contains("paths")) {
      const json& p = j["paths"];
      c.paths.train = p.value("train", "");
      c.paths.dev = p.value("dev", "");
      c.paths.test = p.value("test", "");
      c.paths.seed_pool = p.value("seed_pool", "");
      c.paths.vocab = p.value("vocab", "");
      c.paths.out_dir = p.value("out_dir", "");
    }
    if (j.contains("tagger")) model_from_json(j["tagger"], c.tagger);
    if (j.contains("generator")) model_from_json(j["generator"], c.generator);
    if (j.contains("augmentation")) {
      const json& a = j["augmentation"];
      c.augmentation.alpha_dup = a.value("alpha_dup", c.augmentation.alpha_dup);
      c.augmentation.alpha_sub = a.value("alpha_sub", c.augmentation.alpha_sub);
      c.augmentation.alpha_del = a.value("alpha_del", c.augmentation.alpha_del);
    }
    if (j.contains("rl")) {
      const json& r = j["rl"];
      c.rl.max_iterations = r.value("max_iterations", c.rl.max_iterations);
      c.rl.gen_batch = r.value("gen_batch", c.rl.gen_batch);
      c.rl.train_batch = r.value("train_batch", c.rl.train_batch);
      c.rl.dev_subset = r.value("dev_subset", c.rl.dev_subset);
      c.rl.seed_len = r.value("seed_len", c.rl.seed_len);
      c.rl.max_new = r.value("max_new", c.rl.max_new);
      c.rl.temperature = r.value("temperature", c.rl.temperature);
      if (r.contains("reward_mode"))
        c.rl.reward_mode = reward_mode_from(r["reward_mode"].get<std::string>());
      c.rl.reward_baseline = r.value("reward_baseline", c.rl.reward_baseline);
      c.rl.per_sample_rewards = r.value("per_sample_rewards", c.rl.per_sample_rewards);
      if (r.contains("grad_eval_point"))
        c.rl.grad_eval_point = eval_point_from(r["grad_eval_point"].get<std::string>());
      c.rl.lr_tagger = r.value("lr_tagger", c.rl.lr_tagger);
      c.rl.lr_generator = r.value("lr_generator", c.rl.lr_generator);
    }
    c.core_size = j.value("core_size", c.core_size);
    c.context = j.value("context", c.context);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.epochs = j.value("epochs", c.epochs);
    c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
    c.pretrain_pr = j.value("pretrain_pr", c.pretrain_pr);
    c.pretrain_gen = j.value("pretrain_gen", c.pretrain_gen);
  } catch (const json::exception& e) {
    throw config_error(std::string("config: bad field: ") + e.what());
  }
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["mode"] = c.mode;
  j["paths"] = json{{"train", c.paths.train},     {"dev", c.paths.dev},
                    {"test", c.paths.test},       {"seed_pool", c.paths.seed_pool},
                    {"vocab", c.paths.vocab},     {"out_dir", c.paths.out_dir}};
  j["tagger"] = model_to_json(c.tagger);
  j["generator"] = model_to_json(c.generator);
  j["augmentation"] = json{{"alpha_dup", c.augmentation.alpha_dup},
                           {"alpha_sub", c.augmentation.alpha_sub},
                           {"alpha_del", c.augmentation.alpha_del}};
  j["rl"] = json{{"max_iterations", c.rl.max_iterations},
                 {"gen_batch", c.rl.gen_batch},
                 {"train_batch", c.rl.train_batch},
                 {"dev_subset", c.rl.dev_subset},
                 {"seed_len", c.rl.seed_len},
                 {"max_new", c.rl.max_new},
                 {"temperature", c.rl.temperature},
                 {"reward_mode", reward_mode_name(c.rl.reward_mode)},
                 {"reward_baseline", c.rl.reward_baseline},
                 {"per_sample_rewards", c.rl.per_sample_rewards},
                 {"grad_eval_point", eval_point_name(c.rl.grad_eval_point)},
                 {"lr_tagger", c.rl.lr_tagger},
                 {"lr_generator", c.rl.lr_generator}};
  j["core_size"] = c.core_size;
  j["context"] = c.context;
  j["rng_seed"] = c.rng_seed;
  j["epochs"] = c.epochs;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["pretrain_pr"] = c.pretrain_pr;
  j["pretrain_gen"] = c.pretrain_gen;
  return j.dump(2);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  RunConfig c = run_config_from_json(text);
  c.validate(/*check_paths=*/true);
  return c;
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("config: cannot write " + path);
  out << run_config_to_json(cfg) << '\n';
}

}  // namespace prrl
