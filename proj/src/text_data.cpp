#include "prrl/text_data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "prrl/errors.hpp"

namespace prrl {

const char* label_name(PunctLabel l) {
  switch (l) {
    case PunctLabel::None: return "NONE";
    case PunctLabel::Comma: return "COMMA";
    case PunctLabel::Period: return "PERIOD";
    case PunctLabel::Question: return "QUESTION";
  }
  return "NONE";
}

std::optional<PunctLabel> parse_label(const std::string& s) {
  if (s == "NONE") return PunctLabel::None;
  if (s == "COMMA") return PunctLabel::Comma;
  if (s == "PERIOD") return PunctLabel::Period;
  if (s == "QUESTION") return PunctLabel::Question;
  return std::nullopt;
}

void AugmentationConfig::validate() const {
  for (double a : {alpha_dup, alpha_sub, alpha_del})
    if (a < 0.0 || a > 1.0)
      throw config_error("augmentation ratios must lie in [0,1]");
  if (alpha_dup + alpha_sub + alpha_del > 1.0)
    throw config_error("augmentation ratios must sum to at most 1");
}

namespace {

bool is_mark(char c) { return c == ',' || c == '.' || c == '?' || c == '!' || c == ';'; }

std::optional<PunctLabel> mark_label(char c) {
  switch (c) {
    case ',': return PunctLabel::Comma;
    case '.':
    case '!':
    case ';': return PunctLabel::Period;  // folded into PERIOD
    case '?': return PunctLabel::Question;
  }
  return std::nullopt;
}

char label_mark(PunctLabel l) {
  switch (l) {
    case PunctLabel::Comma: return ',';
    case PunctLabel::Period: return '.';
    case PunctLabel::Question: return '?';
    default: return '\0';
  }
}

}  // namespace

std::pair<std::vector<std::string>, std::vector<PunctLabel>> parse_text(
    const std::string& text) {
  std::vector<std::string> words;
  std::vector<PunctLabel> labels;

  // A mark attaches to the preceding word; consecutive marks collapse to the
  // first; marks with no preceding word are dropped.
  auto apply_mark = [&](char c) {
    auto l = mark_label(c);
    if (!l || words.empty()) return;
    if (labels.back() == PunctLabel::None) labels.back() = *l;
  };

  std::istringstream in(text);
  std::string raw;
  while (in >> raw) {
    std::string tok;
    tok.reserve(raw.size());
    for (char c : raw) tok.push_back((char)std::tolower((unsigned char)c));

    size_t begin = 0, end = tok.size();
    while (begin < end && is_mark(tok[begin])) ++begin;
    size_t lead_end = begin;
    while (end > begin && is_mark(tok[end - 1])) --end;

    for (size_t i = 0; i < lead_end; ++i) apply_mark(tok[i]);
    if (begin < end) {
      words.push_back(tok.substr(begin, end - begin));
      labels.push_back(PunctLabel::None);
    }
    for (size_t i = end; i < tok.size(); ++i) apply_mark(tok[i]);
  }
  return {std::move(words), std::move(labels)};
}

LabeledSequence ingest(const std::string& text, const Vocab& vocab) {
  auto [words, labels] = parse_text(text);
  if (words.empty()) throw data_error("ingest: no words left after normalization");
  LabeledSequence seq;
  seq.word_ids.reserve(words.size());
  for (const auto& w : words) seq.word_ids.push_back(vocab.id(w));
  seq.labels = std::move(labels);
  return seq;
}

std::string render(const LabeledSequence& seq, const Vocab& vocab) {
  std::string out;
  for (size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(seq.word_ids[i]);
    if (char m = label_mark(seq.labels[i])) out += m;
  }
  return out;
}

namespace {

// Shared noise core for the id-level and word-level paths. One uniform draw
// per word picks duplication, substitution or deletion on disjoint mass.
template <class Tok, class SubstituteFn>
void augment_impl(const std::vector<Tok>& words, const std::vector<PunctLabel>& labels,
                  const AugmentationConfig& cfg, std::mt19937& rng, bool can_sub,
                  SubstituteFn substitute, std::vector<Tok>& out_w,
                  std::vector<PunctLabel>& out_l, AugmentCounts* counts) {
  cfg.validate();
  if (words.empty()) throw data_error("augment: empty sequence");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  out_w.reserve(words.size() + 4);
  for (size_t i = 0; i < words.size(); ++i) {
    const Tok& word = words[i];
    const PunctLabel label = labels[i];
    if (counts) ++counts->words;
    const double r = u(rng);
    if (r < cfg.alpha_dup) {
      // duplicate takes NONE; the original label moves to the last copy
      out_w.push_back(word);
      out_l.push_back(PunctLabel::None);
      out_w.push_back(word);
      out_l.push_back(label);
      if (counts) ++counts->dup;
    } else if (r < cfg.alpha_dup + cfg.alpha_sub && can_sub) {
      out_w.push_back(substitute(rng));
      out_l.push_back(label);
      if (counts) ++counts->sub;
    } else if (r < cfg.alpha_dup + cfg.alpha_sub + cfg.alpha_del) {
      // the deleted word's label merges onto the previous word when that
      // word carries no mark of its own
      if (!out_l.empty() && out_l.back() == PunctLabel::None) out_l.back() = label;
      if (counts) ++counts->del;
    } else {
      out_w.push_back(word);
      out_l.push_back(label);
    }
  }
}

constexpr int kFirstRegularId = 3;  // past the reserved ids

}  // namespace

LabeledSequence augment(const LabeledSequence& seq, const AugmentationConfig& cfg,
                        std::mt19937& rng, const Vocab& vocab, AugmentCounts* counts) {
  std::uniform_int_distribution<int> pick(kFirstRegularId, vocab.size() - 1);
  LabeledSequence out;
  augment_impl(
      seq.word_ids, seq.labels, cfg, rng, vocab.size() > kFirstRegularId,
      [&](std::mt19937& r) { return pick(r); }, out.word_ids, out.labels, counts);
  return out;
}

std::pair<std::vector<std::string>, std::vector<PunctLabel>> augment_words(
    const std::vector<std::string>& words, const std::vector<PunctLabel>& labels,
    const AugmentationConfig& cfg, std::mt19937& rng, const Vocab& vocab,
    AugmentCounts* counts) {
  std::uniform_int_distribution<int> pick(kFirstRegularId, vocab.size() - 1);
  std::pair<std::vector<std::string>, std::vector<PunctLabel>> out;
  augment_impl(
      words, labels, cfg, rng, vocab.size() > kFirstRegularId,
      [&](std::mt19937& r) { return vocab.token(pick(r)); }, out.first, out.second,
      counts);
  return out;
}

std::vector<Chunk> chunk_sequence(const LabeledSequence& seq, const std::string& seq_id,
                                  int core_size, int context) {
  if (core_size < 1) throw config_error("chunk: core_size must be >= 1");
  if (context < 0) throw config_error("chunk: context must be >= 0");
  const int n = (int)seq.size();
  if (n == 0) throw data_error("chunk: empty sequence");

  std::vector<Chunk> chunks;
  for (int s = 0; s < n; s += core_size) {
    const int e = std::min(n, s + core_size);
    const int lo = std::max(0, s - context);
    const int hi = std::min(n, e + context);
    Chunk c;
    c.token_ids.assign(seq.word_ids.begin() + lo, seq.word_ids.begin() + hi);
    c.labels.assign(seq.labels.begin() + lo, seq.labels.begin() + hi);
    c.loss_mask.assign(hi - lo, 0);
    for (int i = s; i < e; ++i) c.loss_mask[i - lo] = 1;
    c.origin = {seq_id, s, e};
    chunks.push_back(std::move(c));
  }
  return chunks;
}

std::vector<int> sample_seed(const std::vector<LabeledSequence>& pool, int seed_len,
                             std::mt19937& rng) {
  if (seed_len < 1) throw config_error("sample_seed: seed_len must be >= 1");
  int64_t total = 0;
  for (const auto& s : pool)
    if ((int)s.size() >= seed_len) total += (int64_t)s.size() - seed_len + 1;
  if (total == 0)
    throw data_error("sample_seed: no sequence in the pool has length >= " +
                     std::to_string(seed_len));
  std::uniform_int_distribution<int64_t> d(0, total - 1);
  int64_t k = d(rng);
  for (const auto& s : pool) {
    if ((int)s.size() < seed_len) continue;
    const int64_t starts = (int64_t)s.size() - seed_len + 1;
    if (k < starts)
      return {s.word_ids.begin() + k, s.word_ids.begin() + k + seed_len};
    k -= starts;
  }
  throw data_error("sample_seed: internal accounting error");
}

void write_dataset(const std::string& path, const std::vector<LabeledSequence>& seqs,
                   const Vocab& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("dataset: cannot write " + path);
  for (size_t s = 0; s < seqs.size(); ++s) {
    if (s) out << '\n';
    const auto& seq = seqs[s];
    for (size_t i = 0; i < seq.size(); ++i)
      out << vocab.token(seq.word_ids[i]) << '\t' << label_name(seq.labels[i]) << '\n';
  }
}

std::vector<LabeledSequence> read_dataset(const std::string& path, const Vocab& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("dataset: cannot read " + path);
  std::vector<LabeledSequence> seqs;
  LabeledSequence cur;
  std::string line;
  int lineno = 0;
  auto flush = [&] {
    if (!cur.word_ids.empty()) {
      seqs.push_back(std::move(cur));
      cur = LabeledSequence{};
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      flush();
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw data_error("dataset: " + path + ":" + std::to_string(lineno) + ": missing tab");
    const std::string word = line.substr(0, tab);
    const std::string labstr = line.substr(tab + 1);
    auto label = parse_label(labstr);
    if (word.empty() || !label)
      throw data_error("dataset: " + path + ":" + std::to_string(lineno) +
                       ": bad line '" + line + "'");
    cur.word_ids.push_back(vocab.id(word));
    cur.labels.push_back(*label);
  }
  flush();
  return seqs;
}

std::string GenVocab::token(int id) const {
  if (id == comma_id()) return ",";
  if (id == period_id()) return ".";
  if (id == question_id()) return "?";
  return base->token(id);
}

std::vector<int> to_generator_stream(const LabeledSequence& seq, const GenVocab& gv) {
  std::vector<int> out;
  out.reserve(seq.size() * 2);
  for (size_t i = 0; i < seq.size(); ++i) {
    out.push_back(seq.word_ids[i]);
    switch (seq.labels[i]) {
      case PunctLabel::Comma: out.push_back(gv.comma_id()); break;
      case PunctLabel::Period: out.push_back(gv.period_id()); break;
      case PunctLabel::Question: out.push_back(gv.question_id()); break;
      case PunctLabel::None: break;
    }
  }
  return out;
}

std::string generator_tokens_to_text(const std::vector<int>& ids, const GenVocab& gv) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += gv.token(ids[i]);
  }
  return out;
}

}  // namespace prrl
