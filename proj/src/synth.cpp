#include "prrl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "prrl/errors.hpp"

namespace prrl {

namespace {

const char* kDeterminers[] = {"the", "a", "my", "this", "that", "his", "her", "our"};
const char* kConnectors[] = {"and", "but", "so", "then", "because", "while"};
const char* kQuestionWords[] = {"what", "why", "how", "when", "who", "where"};
const char* kAdjectives[] = {"big",   "small", "old",  "new",   "red",   "blue", "dark",
                             "light", "warm",  "cold", "fast",  "slow",  "loud", "quiet",
                             "soft",  "hard",  "clean", "dirty", "tall",  "short"};
const char* kNouns[] = {"cat",    "dog",     "bird",   "fish",    "tree",    "house",
                        "road",   "river",   "stone",  "cloud",   "book",    "door",
                        "window", "garden",  "horse",  "table",   "chair",   "lamp",
                        "boat",   "train",   "field",  "hill",    "storm",   "wind",
                        "paper",  "letter",  "song",   "dance",   "dream",   "story",
                        "friend", "teacher", "doctor", "farmer",  "child",   "mother",
                        "father", "sister",  "brother", "neighbor"};
const char* kVerbs[] = {"sees",   "finds", "takes", "makes", "holds",  "keeps",
                        "gives",  "brings", "moves", "calls", "hears",  "knows",
                        "shows",  "tells", "asks",  "helps", "leads",  "leaves",
                        "meets",  "needs", "opens", "plays", "pulls",  "pushes",
                        "reads",  "sends", "sets",  "turns", "wants",  "watches"};

std::vector<std::string> take(const char* const* base, int base_n, int want,
                              const char* stem) {
  std::vector<std::string> out;
  for (int i = 0; i < want; ++i)
    out.push_back(i < base_n ? base[i] : stem + std::to_string(i));
  return out;
}

struct WordBank {
  std::vector<std::string> det, conn, qword, adj, noun, verb;

  explicit WordBank(const GrammarSpec& s)
      : det(take(kDeterminers, 8, 8, "det")),
        conn(take(kConnectors, 6, 6, "conn")),
        qword(take(kQuestionWords, 6, 6, "qword")),
        adj(take(kAdjectives, 20, s.adjectives, "adj")),
        noun(take(kNouns, 40, s.nouns, "noun")),
        verb(take(kVerbs, 30, s.verbs, "verb")) {}

  const std::string& pick(const std::vector<std::string>& v, std::mt19937& rng) const {
    std::uniform_int_distribution<size_t> d(0, v.size() - 1);
    return v[d(rng)];
  }
};

class Grammar {
 public:
  Grammar(const GrammarSpec& spec, std::mt19937& rng)
      : spec_(spec), bank_(spec), rng_(rng) {}

  WordSeq paragraph(int min_sentences, int max_sentences) {
    std::uniform_int_distribution<int> count(min_sentences, max_sentences);
    WordSeq out;
    const int n = count(rng_);
    for (int i = 0; i < n; ++i) sentence(out);
    return out;
  }

 private:
  int clause_length() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double r = u(rng_);
    for (const auto& [len, p] : spec_.clause_length_probs) {
      if (r < p) return len;
      r -= p;
    }
    return spec_.clause_length_probs.back().first;
  }

  // Clause shapes: 5 = D N V D N, 6 = D A N V D N, 7 = D A N V D A N.
  // Every clause ends with a noun, so the boundary cue is local.
  void clause(WordSeq& out, int len) {
    auto push = [&](const std::string& w) {
      out.words.push_back(w);
      out.labels.push_back(PunctLabel::None);
    };
    push(bank_.pick(bank_.det, rng_));
    if (len >= 6) push(bank_.pick(bank_.adj, rng_));
    push(bank_.pick(bank_.noun, rng_));
    push(bank_.pick(bank_.verb, rng_));
    push(bank_.pick(bank_.det, rng_));
    if (len >= 7) push(bank_.pick(bank_.adj, rng_));
    push(bank_.pick(bank_.noun, rng_));
  }

  void sentence(WordSeq& out) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng_) < spec_.p_question) {
      out.words.push_back(bank_.pick(bank_.qword, rng_));
      out.labels.push_back(PunctLabel::None);
      clause(out, clause_length());
      out.labels.back() = PunctLabel::Question;
      return;
    }
    int clauses = 1;
    while (clauses < spec_.max_clauses && u(rng_) < spec_.p_extra_clause) ++clauses;
    for (int c = 0; c < clauses; ++c) {
      if (c > 0) {
        out.words.push_back(bank_.pick(bank_.conn, rng_));
        out.labels.push_back(PunctLabel::None);
      }
      clause(out, clause_length());
      out.labels.back() = c + 1 < clauses ? PunctLabel::Comma : PunctLabel::Period;
    }
  }

  const GrammarSpec& spec_;
  WordBank bank_;
  std::mt19937& rng_;
};

WordSeq apply_noise(const WordSeq& seq, const AugmentationConfig& noise,
                    std::mt19937& rng, const Vocab& vocab) {
  auto [w, l] = augment_words(seq.words, seq.labels, noise, rng, vocab);
  if (w.empty()) return seq;  // degenerate deletion run; keep the clean copy
  return WordSeq{std::move(w), std::move(l)};
}

}  // namespace

void GrammarSpec::validate() const {
  if (clause_length_probs.empty())
    throw config_error("synth: clause length distribution is empty");
  double total = 0;
  for (const auto& [len, p] : clause_length_probs) {
    if (len != 5 && len != 6 && len != 7)
      throw config_error("synth: clause lengths must be 5, 6 or 7");
    if (p < 0) throw config_error("synth: negative clause-length probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw config_error("synth: clause-length probabilities must sum to 1");
  if (p_question < 0 || p_question > 1 || p_extra_clause < 0 || p_extra_clause >= 1)
    throw config_error("synth: sentence probabilities out of range");
  if (max_clauses < 1) throw config_error("synth: max_clauses must be >= 1");
  if (min_sentences < 1 || max_sentences < min_sentences ||
      pool_min_sentences < 1 || pool_max_sentences < pool_min_sentences)
    throw config_error("synth: sentence count ranges are invalid");
  if (n_train < 1 || n_dev < 1 || n_test < 1 || n_pool < 1)
    throw config_error("synth: split sizes must be >= 1");
  if (nouns < 1 || verbs < 1 || adjectives < 1)
    throw config_error("synth: word class sizes must be >= 1");
  noise.validate();
}

GrammarSpec GrammarSpec::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("synth: cannot read spec " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("synth: bad spec json in " + path + ": " + e.what());
  }
  GrammarSpec s;
  try {
    if (j.contains("clause_length_probs")) {
      s.clause_length_probs.clear();
      for (auto& [k, v] : j.at("clause_length_probs").items())
        s.clause_length_probs.emplace_back(std::stoi(k), v.get<double>());
      std::sort(s.clause_length_probs.begin(), s.clause_length_probs.end());
    }
    s.p_question = j.value("p_question", s.p_question);
    s.p_extra_clause = j.value("p_extra_clause", s.p_extra_clause);
    s.max_clauses = j.value("max_clauses", s.max_clauses);
    s.min_sentences = j.value("min_sentences", s.min_sentences);
    s.max_sentences = j.value("max_sentences", s.max_sentences);
    s.pool_min_sentences = j.value("pool_min_sentences", s.pool_min_sentences);
    s.pool_max_sentences = j.value("pool_max_sentences", s.pool_max_sentences);
    s.n_train = j.value("n_train", s.n_train);
    s.n_dev = j.value("n_dev", s.n_dev);
    s.n_test = j.value("n_test", s.n_test);
    s.n_pool = j.value("n_pool", s.n_pool);
    s.nouns = j.value("nouns", s.nouns);
    s.verbs = j.value("verbs", s.verbs);
    s.adjectives = j.value("adjectives", s.adjectives);
    if (j.contains("noise")) {
      s.noise.alpha_dup = j["noise"].value("alpha_dup", s.noise.alpha_dup);
      s.noise.alpha_sub = j["noise"].value("alpha_sub", s.noise.alpha_sub);
      s.noise.alpha_del = j["noise"].value("alpha_del", s.noise.alpha_del);
    }
  } catch (const std::exception& e) {
    throw config_error("synth: bad spec in " + path + ": " + e.what());
  }
  s.validate();
  return s;
}

SynthCorpus synth_corpus(const GrammarSpec& spec, std::mt19937& rng) {
  spec.validate();
  Grammar grammar(spec, rng);

  // splits stay disjoint at the sequence level: duplicates are regenerated
  std::set<std::vector<std::string>> seen;
  auto fresh = [&](int min_s, int max_s) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      WordSeq seq = grammar.paragraph(min_s, max_s);
      if (seen.insert(seq.words).second) return seq;
    }
    throw data_error("synth: could not generate a fresh paragraph");
  };

  SynthCorpus out;
  for (int i = 0; i < spec.n_train; ++i)
    out.train.push_back(fresh(spec.min_sentences, spec.max_sentences));
  for (int i = 0; i < spec.n_dev; ++i)
    out.dev.push_back(fresh(spec.min_sentences, spec.max_sentences));
  for (int i = 0; i < spec.n_test; ++i)
    out.test_clean.push_back(fresh(spec.min_sentences, spec.max_sentences));
  for (int i = 0; i < spec.n_pool; ++i)
    out.pool.push_back(fresh(spec.pool_min_sentences, spec.pool_max_sentences));

  // the vocabulary for substitution noise comes from the clean training text
  std::vector<std::vector<std::string>> train_words;
  for (const auto& s : out.train) train_words.push_back(s.words);
  Vocab vocab = Vocab::build(train_words, 2, 2000);

  for (auto& s : out.dev) s = apply_noise(s, spec.noise, rng, vocab);
  out.test = out.test_clean;
  for (auto& s : out.test) s = apply_noise(s, spec.noise, rng, vocab);
  return out;
}

LabelRates expected_label_rates(const GrammarSpec& spec) {
  double mean_len = 0;
  for (const auto& [len, p] : spec.clause_length_probs) mean_len += len * p;
  // capped geometric clause count
  double mean_clauses = 1.0;
  double p_run = 1.0;
  for (int j = 1; j < spec.max_clauses; ++j) {
    p_run *= spec.p_extra_clause;
    mean_clauses += p_run;
  }
  const double pq = spec.p_question;
  const double words_statement = mean_clauses * mean_len + (mean_clauses - 1.0);
  const double words_question = 1.0 + mean_len;
  const double mean_words = (1 - pq) * words_statement + pq * words_question;
  LabelRates r;
  r.comma = (1 - pq) * (mean_clauses - 1.0) / mean_words;
  r.period = (1 - pq) * 1.0 / mean_words;
  r.question = pq * 1.0 / mean_words;
  return r;
}

void write_word_dataset(const std::string& path, const std::vector<WordSeq>& seqs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("dataset: cannot write " + path);
  for (size_t s = 0; s < seqs.size(); ++s) {
    if (s) out << '\n';
    for (size_t i = 0; i < seqs[s].words.size(); ++i)
      out << seqs[s].words[i] << '\t' << label_name(seqs[s].labels[i]) << '\n';
  }
}

}  // namespace prrl
