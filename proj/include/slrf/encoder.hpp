#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "slrf/corpus.hpp"
#include "slrf/ops.hpp"
#include "slrf/params.hpp"
#include "slrf/rng.hpp"

namespace slrf {

struct EncoderConfig {
  int32_t num_layers = 2;
  int32_t num_heads = 8;
  int32_t hidden = 64;
  int32_t feed_forward = 0;  // 0 means 4 * hidden
  int32_t rel_clip = 8;      // relative offsets clipped to [-rel_clip, rel_clip]
  double dropout = 0.1;      // attention weights and sublayer outputs
  bool rel_values = true;    // relative embeddings on values as well as keys
  int32_t max_len = 512;     // longest supported utterance (tokens)
  int32_t token_vocab = 0;
  int32_t tag_vocab = 0;
  int32_t intent_vocab = 0;

  static EncoderConfig atis_preset() {
    EncoderConfig c;
    c.num_layers = 2;
    c.num_heads = 8;
    c.hidden = 64;
    return c;
  }

  static EncoderConfig snips_preset() {
    EncoderConfig c;
    c.num_layers = 4;
    c.num_heads = 16;
    c.hidden = 96;
    return c;
  }

  int32_t ff_size() const { return feed_forward > 0 ? feed_forward : 4 * hidden; }
  int32_t head_dim() const { return hidden / num_heads; }

  void validate() const {
    if (num_layers < 1) throw std::invalid_argument("encoder: num_layers must be >= 1");
    if (num_heads < 1) throw std::invalid_argument("encoder: num_heads must be >= 1");
    if (hidden < 1 || hidden % num_heads != 0)
      throw std::invalid_argument("encoder: hidden size must be a positive multiple of num_heads");
    if (rel_clip < 1) throw std::invalid_argument("encoder: relative clip distance must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0)
      throw std::invalid_argument("encoder: dropout must be in [0, 1)");
    if (max_len < 1) throw std::invalid_argument("encoder: max_len must be >= 1");
    if (token_vocab < 3 || tag_vocab < 1 || intent_vocab < 1)
      throw std::invalid_argument("encoder: vocabulary sizes not set");
  }
};

// Stable parameter order: embeddings, then per-layer attention / norm / feed
// forward, then the two heads. Checkpoints and leaf binding follow this list.
inline std::vector<std::pair<std::string, std::vector<int64_t>>> param_shapes(
    const EncoderConfig& cfg) {
  cfg.validate();
  int64_t h = cfg.hidden, ff = cfg.ff_size(), d = cfg.head_dim();
  int64_t buckets = 2 * int64_t(cfg.rel_clip) + 1;
  std::vector<std::pair<std::string, std::vector<int64_t>>> out;
  out.emplace_back("tok_emb", std::vector<int64_t>{cfg.token_vocab, h});
  out.emplace_back("tag_emb", std::vector<int64_t>{cfg.tag_vocab, h});
  for (int32_t l = 0; l < cfg.num_layers; ++l) {
    std::string p = "enc" + std::to_string(l) + ".";
    for (const char* wn : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
      out.emplace_back(p + wn, std::vector<int64_t>{h, h});
    for (const char* bn : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
      out.emplace_back(p + bn, std::vector<int64_t>{h});
    out.emplace_back(p + "attn.relk", std::vector<int64_t>{buckets, d});
    out.emplace_back(p + "attn.relv", std::vector<int64_t>{buckets, d});
    out.emplace_back(p + "norm1.gain", std::vector<int64_t>{h});
    out.emplace_back(p + "norm1.bias", std::vector<int64_t>{h});
    out.emplace_back(p + "ff.w1", std::vector<int64_t>{ff, h});
    out.emplace_back(p + "ff.b1", std::vector<int64_t>{ff});
    out.emplace_back(p + "ff.w2", std::vector<int64_t>{h, ff});
    out.emplace_back(p + "ff.b2", std::vector<int64_t>{h});
    out.emplace_back(p + "norm2.gain", std::vector<int64_t>{h});
    out.emplace_back(p + "norm2.bias", std::vector<int64_t>{h});
  }
  out.emplace_back("intent.w", std::vector<int64_t>{cfg.intent_vocab, h});
  out.emplace_back("intent.b", std::vector<int64_t>{cfg.intent_vocab});
  out.emplace_back("slot.w", std::vector<int64_t>{cfg.tag_vocab, 2 * h});
  out.emplace_back("slot.b", std::vector<int64_t>{cfg.tag_vocab});
  return out;
}

// Xavier for matrices and embedding tables, ones for layer-norm gains, zeros
// for every other vector (biases).
template <class Real>
ParamStore<Real> init_params(const EncoderConfig& cfg, uint64_t seed) {
  ParamStore<Real> store;
  auto shapes = param_shapes(cfg);
  for (size_t i = 0; i < shapes.size(); ++i) {
    const auto& [name, shape] = shapes[i];
    if (shape.size() >= 2) {
      store.add(name, xavier_init<Real>(shape, derive_seed(seed, "init", static_cast<uint64_t>(i))));
    } else if (name.size() >= 5 && name.compare(name.size() - 5, 5, ".gain") == 0) {
      store.add(name, Tensor<Real>::full(shape, Real(1)));
    } else {
      store.add(name, Tensor<Real>::zeros(shape));
    }
  }
  return store;
}

// A Batch re-laid as contiguous real rows (CLS + tokens per utterance, pads
// dropped). gold ids of -1 mean "no supervision at this position".
struct PackedBatch {
  Packed packed;
  std::shared_ptr<const std::vector<int32_t>> token_rows;    // [rows]
  std::shared_ptr<const std::vector<int32_t>> tag_rows;      // [rows], all O
  std::shared_ptr<const std::vector<int32_t>> gold_slots;    // [rows - batch]
  std::shared_ptr<const std::vector<int32_t>> gold_intents;  // [batch]
};

inline PackedBatch pack_batch(const Batch& b, int32_t o_tag_id) {
  PackedBatch pb;
  std::vector<int32_t> lengths(b.lengths.begin(), b.lengths.end());
  pb.packed = Packed::from_lengths(lengths);
  auto toks = std::make_shared<std::vector<int32_t>>();
  auto tags = std::make_shared<std::vector<int32_t>>();
  auto gold = std::make_shared<std::vector<int32_t>>();
  auto intents = std::make_shared<std::vector<int32_t>>(b.gold_intent_ids);
  toks->reserve(static_cast<size_t>(pb.packed.rows));
  tags->assign(static_cast<size_t>(pb.packed.rows), o_tag_id);
  gold->reserve(static_cast<size_t>(pb.packed.token_rows()));
  for (int32_t row = 0; row < b.size; ++row) {
    const int32_t* t = b.token_ids.data() + static_cast<size_t>(row) * b.width;
    const int32_t* g = b.gold_tag_ids.data() + static_cast<size_t>(row) * (b.width - 1);
    int32_t len = b.lengths[static_cast<size_t>(row)];
    for (int32_t i = 0; i <= len; ++i) toks->push_back(t[i]);
    for (int32_t i = 0; i < len; ++i) gold->push_back(g[i]);
  }
  pb.token_rows = toks;
  pb.tag_rows = tags;
  pb.gold_slots = gold;
  pb.gold_intents = intents;
  return pb;
}

template <class Real>
struct ModelOutputs {
  VarId hidden = -1;         // [rows x h]
  VarId intent_logits = -1;  // [batch x |I|]
  VarId slot_logits = -1;    // [token rows x |T|]
};

// Full forward pass: summed token+tag embeddings, num_layers post-norm blocks
// of relative-position self-attention and feed-forward, then the intent head
// on CLS and the slot head on [h_cls ; h_i] per token. Dropout only fires in
// training mode (attention weights and the two sublayer outputs).
template <class Real>
ModelOutputs<Real> model_forward(Tape<Real>& t, const BoundParams<Real>& bp,
                                 const EncoderConfig& cfg, const Packed& packed,
                                 std::shared_ptr<const std::vector<int32_t>> token_rows,
                                 std::shared_ptr<const std::vector<int32_t>> tag_rows,
                                 bool training = false, Rng* rng = nullptr) {
  Real rate = training ? Real(cfg.dropout) : Real(0);
  if (rate > Real(0) && rng == nullptr)
    throw std::logic_error("model_forward: dropout needs a random source");
  VarId x = embed_sum(t, bp["tok_emb"], bp["tag_emb"], std::move(token_rows), std::move(tag_rows));
  for (int32_t l = 0; l < cfg.num_layers; ++l) {
    std::string p = "enc" + std::to_string(l) + ".";
    VarId q = linear(t, x, bp[p + "attn.wq"], bp[p + "attn.bq"]);
    VarId k = linear(t, x, bp[p + "attn.wk"], bp[p + "attn.bk"]);
    VarId v = linear(t, x, bp[p + "attn.wv"], bp[p + "attn.bv"]);
    VarId ctx = attention_core(t, q, k, v, bp[p + "attn.relk"], bp[p + "attn.relv"], packed,
                               cfg.num_heads, cfg.rel_clip, cfg.rel_values, rate, rng);
    VarId o = linear(t, ctx, bp[p + "attn.wo"], bp[p + "attn.bo"]);
    if (rate > Real(0)) o = dropout(t, o, rate, *rng);
    x = layer_norm(t, add(t, x, o), bp[p + "norm1.gain"], bp[p + "norm1.bias"]);
    VarId f = linear(t, relu(t, linear(t, x, bp[p + "ff.w1"], bp[p + "ff.b1"])), bp[p + "ff.w2"],
                     bp[p + "ff.b2"]);
    if (rate > Real(0)) f = dropout(t, f, rate, *rng);
    x = layer_norm(t, add(t, x, f), bp[p + "norm2.gain"], bp[p + "norm2.bias"]);
  }
  ModelOutputs<Real> out;
  out.hidden = x;
  out.intent_logits = linear(t, select_cls(t, x, packed), bp["intent.w"], bp["intent.b"]);
  out.slot_logits = linear(t, concat_cls_tokens(t, x, packed), bp["slot.w"], bp["slot.b"]);
  return out;
}

// Batch objective: mean over utterances of intent CE plus the summed slot CE.
// Positions and utterances with gold id -1 contribute nothing.
template <class Real>
VarId joint_loss(Tape<Real>& t, const ModelOutputs<Real>& out,
                 std::shared_ptr<const std::vector<int32_t>> gold_intents,
                 std::shared_ptr<const std::vector<int32_t>> gold_slots, int32_t batch) {
  if (batch < 1) throw std::invalid_argument("joint_loss: empty batch");
  Real w = Real(1) / Real(batch);
  return add(t, ce_rows(t, out.intent_logits, std::move(gold_intents), w),
             ce_rows(t, out.slot_logits, std::move(gold_slots), w));
}

}  // namespace slrf
