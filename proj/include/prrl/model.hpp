#pragma once

#include <random>
#include <string>
#include <vector>

#include "prrl/adam.hpp"
#include "prrl/graph.hpp"
#include "prrl/text_data.hpp"

namespace prrl {

struct ModelConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int max_len = 192;
  int vocab_size = 0;
  double dropout = 0.1;

  void validate() const {
    if (d_model < 1 || n_layers < 1 || n_heads < 1 || max_len < 1)
      throw config_error("model config: dimensions must be positive");
    if (d_model % n_heads != 0)
      throw config_error("model config: d_model must be divisible by n_heads");
    if (vocab_size < 1) throw config_error("model config: vocab_size unset");
    if (dropout < 0.0 || dropout >= 1.0)
      throw config_error("model config: dropout must lie in [0,1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

// Chunks padded to a common length. `attend` marks real tokens, `predict`
// marks positions the loss is taken on (core positions of real tokens).
struct PaddedBatch {
  int batch = 0;
  int len = 0;
  std::vector<int> ids;
  std::vector<int> labels;
  std::vector<uint8_t> attend;
  std::vector<uint8_t> predict;

  const int* row_ids(int b) const { return ids.data() + (size_t)b * len; }
};

inline PaddedBatch pad_chunks(const std::vector<const Chunk*>& chunks) {
  if (chunks.empty()) throw data_error("pad_chunks: empty batch");
  PaddedBatch out;
  out.batch = (int)chunks.size();
  for (const Chunk* c : chunks) out.len = std::max(out.len, (int)c->size());
  const size_t total = (size_t)out.batch * out.len;
  out.ids.assign(total, Vocab::kPad);
  out.labels.assign(total, (int)PunctLabel::None);
  out.attend.assign(total, 0);
  out.predict.assign(total, 0);
  for (int b = 0; b < out.batch; ++b) {
    const Chunk& c = *chunks[b];
    for (size_t i = 0; i < c.size(); ++i) {
      const size_t at = (size_t)b * out.len + i;
      out.ids[at] = c.token_ids[i];
      out.labels[at] = (int)c.labels[i];
      out.attend[at] = 1;
      out.predict[at] = c.loss_mask[i];
    }
  }
  return out;
}

inline PaddedBatch pad_chunks(const std::vector<Chunk>& chunks) {
  std::vector<const Chunk*> ptrs;
  ptrs.reserve(chunks.size());
  for (const auto& c : chunks) ptrs.push_back(&c);
  return pad_chunks(ptrs);
}

namespace detail {
constexpr double kMaskValue = -1e9;
}

// Pre-norm transformer stack shared by the tagger (bidirectional, padding
// masked out of the keys) and the generator (causal). Parameter registration
// order is the canonical flatten/checkpoint layout:
//   tok_emb, pos_emb,
//   per block: ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo,
//              ln2_g, ln2_b, w1, b1, w2, b2,
//   lnf_g, lnf_b, head_w, head_b.
template <class S>
class TransformerT {
 public:
  TransformerT(ModelConfig cfg, int head_out, bool causal, std::mt19937& rng)
      : cfg_(cfg), head_out_(head_out), causal_(causal) {
    cfg_.validate();
    const int d = cfg_.d_model;
    const double w_std = 0.08, head_std = 0.02;
    tok_emb_ = &params_.add("tok_emb", TensorT<S>::randn({cfg_.vocab_size, d}, w_std, rng));
    pos_emb_ = &params_.add("pos_emb", TensorT<S>::randn({cfg_.max_len, d}, w_std, rng));
    for (int l = 0; l < cfg_.n_layers; ++l) {
      const std::string p = "block" + std::to_string(l) + ".";
      Block b;
      b.ln1_g = &params_.add(p + "ln1_g", TensorT<S>::full({d}, S(1)));
      b.ln1_b = &params_.add(p + "ln1_b", TensorT<S>::zeros({d}));
      b.wq = &params_.add(p + "wq", TensorT<S>::randn({d, d}, w_std, rng));
      b.bq = &params_.add(p + "bq", TensorT<S>::zeros({d}));
      b.wk = &params_.add(p + "wk", TensorT<S>::randn({d, d}, w_std, rng));
      b.bk = &params_.add(p + "bk", TensorT<S>::zeros({d}));
      b.wv = &params_.add(p + "wv", TensorT<S>::randn({d, d}, w_std, rng));
      b.bv = &params_.add(p + "bv", TensorT<S>::zeros({d}));
      b.wo = &params_.add(p + "wo", TensorT<S>::randn({d, d}, w_std, rng));
      b.bo = &params_.add(p + "bo", TensorT<S>::zeros({d}));
      b.ln2_g = &params_.add(p + "ln2_g", TensorT<S>::full({d}, S(1)));
      b.ln2_b = &params_.add(p + "ln2_b", TensorT<S>::zeros({d}));
      b.w1 = &params_.add(p + "w1", TensorT<S>::randn({d, 4 * d}, w_std, rng));
      b.b1 = &params_.add(p + "b1", TensorT<S>::zeros({4 * d}));
      b.w2 = &params_.add(p + "w2", TensorT<S>::randn({4 * d, d}, w_std, rng));
      b.b2 = &params_.add(p + "b2", TensorT<S>::zeros({d}));
      blocks_.push_back(b);
    }
    lnf_g_ = &params_.add("lnf_g", TensorT<S>::full({d}, S(1)));
    lnf_b_ = &params_.add("lnf_b", TensorT<S>::zeros({d}));
    head_w_ = &params_.add("head_w", TensorT<S>::randn({d, head_out}, head_std, rng));
    head_b_ = &params_.add("head_b", TensorT<S>::zeros({head_out}));
  }

  const ModelConfig& config() const { return cfg_; }
  ParamSetT<S>& params() { return params_; }
  const ParamSetT<S>& params() const { return params_; }
  bool causal() const { return causal_; }

  void check_ids(const std::vector<int>& ids) const {
    if ((int)ids.size() > cfg_.max_len)
      throw data_error("sequence length " + std::to_string(ids.size()) +
                       " exceeds max_len " + std::to_string(cfg_.max_len));
    for (int i : ids)
      if (i < 0 || i >= cfg_.vocab_size)
        throw data_error("token id " + std::to_string(i) +
                         " outside vocabulary of size " + std::to_string(cfg_.vocab_size));
  }

  // Logits [T x head_out] for one sequence on the tape. key_bias, when
  // present, is added to every attention-score row (pad-key masking).
  Val<S> forward_seq(GraphT<S>& g, const std::vector<int>& ids,
                     const std::vector<uint8_t>* attend, bool train,
                     std::mt19937* rng) {
    check_ids(ids);
    const int T = (int)ids.size();
    const int d = cfg_.d_model, nh = cfg_.n_heads, hd = d / nh;
    const double inv_sqrt_hd = 1.0 / std::sqrt((double)hd);

    Val<S> tok_table = g.param(*tok_emb_);
    Val<S> pos_table = g.param(*pos_emb_);
    std::vector<int> pos(T);
    for (int i = 0; i < T; ++i) pos[i] = i;
    Val<S> h = add(embedding_lookup(tok_table, ids), embedding_lookup(pos_table, pos));
    if (train && cfg_.dropout > 0) h = dropout(h, cfg_.dropout, *rng);

    // additive masks shared across blocks
    Val<S> key_bias{};
    bool have_key_bias = false;
    if (attend) {
      TensorT<S> kb({T});
      for (int j = 0; j < T; ++j)
        kb.data[j] = (*attend)[j] ? S(0) : (S)detail::kMaskValue;
      key_bias = g.leaf(std::move(kb));
      have_key_bias = true;
    }
    Val<S> causal_bias{};
    if (causal_) {
      TensorT<S> cb({T, T});
      for (int i = 0; i < T; ++i)
        for (int j = i + 1; j < T; ++j) cb.at(i, j) = (S)detail::kMaskValue;
      causal_bias = g.leaf(std::move(cb));
    }

    for (const Block& b : blocks_) {
      Val<S> a = add_row(mul_row(layer_norm(h), g.param(*b.ln1_g)), g.param(*b.ln1_b));
      Val<S> q = add_row(matmul(a, g.param(*b.wq)), g.param(*b.bq));
      Val<S> k = add_row(matmul(a, g.param(*b.wk)), g.param(*b.bk));
      Val<S> v = add_row(matmul(a, g.param(*b.wv)), g.param(*b.bv));
      std::vector<Val<S>> heads;
      heads.reserve(nh);
      for (int hh = 0; hh < nh; ++hh) {
        Val<S> qh = slice_cols(q, hh * hd, (hh + 1) * hd);
        Val<S> kh = slice_cols(k, hh * hd, (hh + 1) * hd);
        Val<S> vh = slice_cols(v, hh * hd, (hh + 1) * hd);
        Val<S> scores = scale(matmul_nt(qh, kh), inv_sqrt_hd);
        if (causal_) scores = add(scores, causal_bias);
        if (have_key_bias) scores = add_row(scores, key_bias);
        heads.push_back(matmul(softmax(scores, 1), vh));
      }
      Val<S> o = add_row(matmul(concat(heads, 1), g.param(*b.wo)), g.param(*b.bo));
      if (train && cfg_.dropout > 0) o = dropout(o, cfg_.dropout, *rng);
      h = add(h, o);

      Val<S> m = add_row(mul_row(layer_norm(h), g.param(*b.ln2_g)), g.param(*b.ln2_b));
      m = relu(add_row(matmul(m, g.param(*b.w1)), g.param(*b.b1)));
      m = add_row(matmul(m, g.param(*b.w2)), g.param(*b.b2));
      if (train && cfg_.dropout > 0) m = dropout(m, cfg_.dropout, *rng);
      h = add(h, m);
    }
    h = add_row(mul_row(layer_norm(h), g.param(*lnf_g_)), g.param(*lnf_b_));
    return add_row(matmul(h, g.param(*head_w_)), g.param(*head_b_));
  }

  // Tape-free forward mirroring forward_seq op for op; returns the head
  // logits of the last position only. Used for sampling.
  std::vector<S> last_logits_plain(const std::vector<int>& ids) const {
    check_ids(ids);
    const int T = (int)ids.size();
    const int d = cfg_.d_model, nh = cfg_.n_heads, hd = d / nh;
    const double inv_sqrt_hd = 1.0 / std::sqrt((double)hd);

    TensorT<S> h({T, d});
    for (int i = 0; i < T; ++i)
      for (int j = 0; j < d; ++j)
        h.at(i, j) = tok_emb_->value.at(ids[i], j) + pos_emb_->value.at(i, j);

    TensorT<S> a({T, d}), q({T, d}), k({T, d}), v({T, d});
    TensorT<S> qh({T, hd}), kh({T, hd}), vh({T, hd});
    TensorT<S> scores({T, T}), probs({T, T}), att({T, d});
    TensorT<S> m1({T, 4 * d});

    auto affine_ln = [&](const TensorT<S>& x, const ParamT<S>& gp, const ParamT<S>& bp,
                         TensorT<S>& out) {
      layer_norm_lastdim(x.data.data(), out.data.data(), T, d, 1e-5);
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < d; ++j)
          out.at(i, j) = out.at(i, j) * gp.value.data[j] + bp.value.data[j];
    };
    auto linear = [&](const TensorT<S>& x, const ParamT<S>& w, const ParamT<S>& b,
                      TensorT<S>& out) {
      gemm(x, false, w.value, false, out, false);
      const int n = out.cols();
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = out.at(i, j) + b.value.data[j];
    };

    for (const Block& blk : blocks_) {
      affine_ln(h, *blk.ln1_g, *blk.ln1_b, a);
      linear(a, *blk.wq, *blk.bq, q);
      linear(a, *blk.wk, *blk.bk, k);
      linear(a, *blk.wv, *blk.bv, v);
      for (int hh = 0; hh < nh; ++hh) {
        const int c0 = hh * hd;
        for (int i = 0; i < T; ++i)
          for (int j = 0; j < hd; ++j) {
            qh.at(i, j) = q.at(i, c0 + j);
            kh.at(i, j) = k.at(i, c0 + j);
            vh.at(i, j) = v.at(i, c0 + j);
          }
        gemm(qh, false, kh, true, scores, false);
        for (int i = 0; i < T; ++i)
          for (int j = 0; j < T; ++j) {
            scores.at(i, j) = (S)((double)scores.at(i, j) * inv_sqrt_hd);
            if (causal_ && j > i) scores.at(i, j) += (S)detail::kMaskValue;
          }
        softmax_lastdim(scores.data.data(), probs.data.data(), T, T);
        TensorT<S> oh({T, hd});
        gemm(probs, false, vh, false, oh, false);
        for (int i = 0; i < T; ++i)
          for (int j = 0; j < hd; ++j) att.at(i, c0 + j) = oh.at(i, j);
      }
      TensorT<S> o({T, d});
      linear(att, *blk.wo, *blk.bo, o);
      for (int64_t i = 0; i < h.numel(); ++i) h.data[i] = h.data[i] + o.data[i];

      affine_ln(h, *blk.ln2_g, *blk.ln2_b, a);
      linear(a, *blk.w1, *blk.b1, m1);
      for (auto& x : m1.data) x = x > S(0) ? x : S(0);
      TensorT<S> m2({T, d});
      linear(m1, *blk.w2, *blk.b2, m2);
      for (int64_t i = 0; i < h.numel(); ++i) h.data[i] = h.data[i] + m2.data[i];
    }
    affine_ln(h, *lnf_g_, *lnf_b_, a);

    std::vector<S> logits(head_out_);
    const S* hrow = a.row(T - 1);
    for (int j = 0; j < head_out_; ++j) {
      double acc = 0.0;
      for (int c = 0; c < d; ++c) acc += (double)hrow[c] * (double)head_w_->value.at(c, j);
      logits[j] = (S)(acc + (double)head_b_->value.data[j]);
    }
    return logits;
  }

 private:
  struct Block {
    ParamT<S>*ln1_g, *ln1_b, *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
    ParamT<S>*ln2_g, *ln2_b, *w1, *b1, *w2, *b2;
  };

  ModelConfig cfg_;
  int head_out_;
  bool causal_;
  ParamSetT<S> params_;
  ParamT<S>*tok_emb_, *pos_emb_;
  std::vector<Block> blocks_;
  ParamT<S>*lnf_g_, *lnf_b_, *head_w_, *head_b_;
};

// Per-word 4-class punctuation classifier.
template <class S>
class TaggerT {
 public:
  TaggerT(ModelConfig cfg, std::mt19937& rng)
      : body_(cfg, kNumLabels, /*causal=*/false, rng) {}

  const ModelConfig& config() const { return body_.config(); }
  ParamSetT<S>& params() { return body_.params(); }
  const ParamSetT<S>& params() const { return body_.params(); }

  // Logits for a padded batch, shaped [B x L x 4].
  Val<S> forward(GraphT<S>& g, const PaddedBatch& batch, bool train = false,
                 std::mt19937* rng = nullptr) {
    Val<S> rows = forward_rows(g, batch, train, rng);
    return reshape(rows, {batch.batch, batch.len, kNumLabels});
  }

  // Mean cross entropy over predictable positions (core, unpadded).
  Val<S> loss(GraphT<S>& g, const PaddedBatch& batch, bool train = false,
              std::mt19937* rng = nullptr) {
    Val<S> rows = forward_rows(g, batch, train, rng);
    std::vector<uint8_t> mask(batch.ids.size());
    for (size_t i = 0; i < mask.size(); ++i)
      mask[i] = batch.attend[i] && batch.predict[i];
    return cross_entropy(rows, batch.labels, std::move(mask), Reduction::Mean);
  }

 private:
  Val<S> forward_rows(GraphT<S>& g, const PaddedBatch& batch, bool train,
                      std::mt19937* rng) {
    if (batch.batch < 1) throw data_error("tagger: empty batch");
    std::vector<Val<S>> per_seq;
    per_seq.reserve(batch.batch);
    for (int b = 0; b < batch.batch; ++b) {
      std::vector<int> ids(batch.row_ids(b), batch.row_ids(b) + batch.len);
      std::vector<uint8_t> attend(batch.attend.begin() + (size_t)b * batch.len,
                                  batch.attend.begin() + (size_t)(b + 1) * batch.len);
      per_seq.push_back(body_.forward_seq(g, ids, &attend, train, rng));
    }
    return per_seq.size() == 1 ? per_seq[0] : concat(per_seq, 0);
  }

  TransformerT<S> body_;
};

// Autoregressive language model over the generation vocabulary (words plus
// literal punctuation tokens and BOS).
template <class S>
class GeneratorT {
 public:
  GeneratorT(ModelConfig cfg, std::mt19937& rng)
      : body_(cfg, cfg.vocab_size, /*causal=*/true, rng) {}

  const ModelConfig& config() const { return body_.config(); }
  ParamSetT<S>& params() { return body_.params(); }
  const ParamSetT<S>& params() const { return body_.params(); }

  // Sum of log p(token_t | tokens_<t) over t >= cond_len, as a tape node.
  Val<S> log_prob(GraphT<S>& g, const std::vector<int>& ids, int cond_len,
                  bool train = false, std::mt19937* rng = nullptr) {
    if (cond_len < 1 || (int)ids.size() < cond_len + 1)
      throw data_error("generator log_prob: need at least one continuation token "
                       "after a nonempty condition prefix");
    for (int i : ids)
      if (i < 0 || i >= config().vocab_size)
        throw data_error("generator log_prob: token id " + std::to_string(i) +
                         " outside vocabulary of size " +
                         std::to_string(config().vocab_size));
    std::vector<int> input(ids.begin(), ids.end() - 1);
    Val<S> logits = body_.forward_seq(g, input, nullptr, train, rng);
    std::vector<int> targets(ids.begin() + 1, ids.end());
    std::vector<uint8_t> mask(targets.size(), 0);
    for (size_t t = cond_len - 1; t < targets.size(); ++t) mask[t] = 1;
    Val<S> nll = cross_entropy(logits, std::move(targets), std::move(mask), Reduction::Sum);
    return scale(nll, -1.0);
  }

  double log_prob_value(const std::vector<int>& ids, int cond_len) {
    GraphT<S> g;
    return (double)log_prob(g, ids, cond_len).scalar();
  }

  // Mean next-token cross entropy over a batch of sequences (LM pretraining).
  Val<S> lm_loss(GraphT<S>& g, const std::vector<std::vector<int>>& batch,
                 bool train = false, std::mt19937* rng = nullptr) {
    if (batch.empty()) throw data_error("generator lm_loss: empty batch");
    Val<S> total{};
    int64_t count = 0;
    bool first = true;
    for (const auto& ids : batch) {
      if (ids.size() < 2)
        throw data_error("generator lm_loss: sequences need at least two tokens");
      std::vector<int> input(ids.begin(), ids.end() - 1);
      Val<S> logits = body_.forward_seq(g, input, nullptr, train, rng);
      std::vector<int> targets(ids.begin() + 1, ids.end());
      Val<S> nll = cross_entropy(logits, std::move(targets),
                                 std::vector<uint8_t>(input.size(), 1), Reduction::Sum);
      count += (int64_t)input.size();
      total = first ? nll : add(total, nll);
      first = false;
    }
    return scale(total, 1.0 / (double)count);
  }

  // Ancestral sampling at the given temperature; the seed is returned as the
  // prefix of the sample. Generation stops at max_len.
  std::vector<int> sample(const std::vector<int>& seed, int max_new, double temperature,
                          std::mt19937& rng) const {
    if (seed.empty()) throw data_error("generator sample: empty seed");
    if ((int)seed.size() > config().max_len)
      throw data_error("generator sample: seed length " + std::to_string(seed.size()) +
                       " exceeds max_len " + std::to_string(config().max_len));
    if (!(temperature > 0.0))
      throw config_error("generator sample: temperature must be positive");
    std::vector<int> ids = seed;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int step = 0; step < max_new && (int)ids.size() < config().max_len; ++step) {
      std::vector<S> logits = body_.last_logits_plain(ids);
      // subtract-max before tempering so the T -> 0 limit is greedy argmax
      double mx = (double)logits[0];
      for (S v : logits) mx = std::max(mx, (double)v);
      std::vector<double> p(logits.size());
      double sum = 0.0;
      for (size_t j = 0; j < logits.size(); ++j) {
        p[j] = std::exp(((double)logits[j] - mx) / temperature);
        sum += p[j];
      }
      double r = u(rng) * sum, acc = 0.0;
      int pick = (int)p.size() - 1;
      for (size_t j = 0; j < p.size(); ++j) {
        acc += p[j];
        if (r < acc) {
          pick = (int)j;
          break;
        }
      }
      ids.push_back(pick);
    }
    return ids;
  }

  std::vector<S> last_logits(const std::vector<int>& ids) const {
    return body_.last_logits_plain(ids);
  }

 private:
  TransformerT<S> body_;
};

using Tagger = TaggerT<float>;
using Generator = GeneratorT<float>;

}  // namespace prrl
