#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "slrf/corpus.hpp"
#include "slrf/crf.hpp"
#include "slrf/encoder.hpp"
#include "slrf/iob.hpp"

namespace slrf {

// one_pass: single encode, greedy per-token tags.
// two_pass: re-encode with the first pass's begin-tags fed back as inputs.
// one_pass_crf: single encode, Viterbi decode over a learned transition matrix.
enum class RunMode { one_pass, two_pass, one_pass_crf };

inline const char* mode_name(RunMode m) {
  switch (m) {
    case RunMode::one_pass: return "one_pass";
    case RunMode::two_pass: return "two_pass";
    case RunMode::one_pass_crf: return "one_pass_crf";
  }
  throw std::logic_error("mode_name: unreachable");
}

inline RunMode parse_mode(std::string_view s) {
  if (s == "one_pass") return RunMode::one_pass;
  if (s == "two_pass") return RunMode::two_pass;
  if (s == "one_pass_crf") return RunMode::one_pass_crf;
  throw std::invalid_argument("unknown mode '" + std::string(s) +
                              "' (expected one_pass, two_pass or one_pass_crf)");
}

// Tag-id image of the string-level projection: B-* ids map to themselves,
// everything else collapses to O. Derived from btag_projection so the two
// levels cannot drift apart.
inline std::vector<int32_t> projection_table(const Vocab& vocab) {
  std::vector<int32_t> table(static_cast<size_t>(vocab.tag_count()));
  for (int32_t i = 0; i < vocab.tag_count(); ++i) {
    std::vector<std::string> one = {vocab.tag_surface(i)};
    table[static_cast<size_t>(i)] =
        btag_projection(one)[0] == one[0] ? i : vocab.o_tag_id();
  }
  return table;
}

// CRF mode carries one extra tensor next to the encoder parameters.
template <class Real>
void ensure_crf_params(ParamStore<Real>& store, const EncoderConfig& cfg) {
  if (store.has("crf.trans")) return;
  int64_t T = cfg.tag_vocab;
  store.add("crf.trans", Tensor<Real>::zeros({T + 2, T + 2}));
}

template <class Real>
struct TwoPassTrace {
  ModelOutputs<Real> pass1;
  ModelOutputs<Real> pass2;
  std::vector<int32_t> pass1_tag_ids;                    // argmax per token row
  std::shared_ptr<std::vector<int32_t>> pass2_tag_rows;  // tag inputs, CLS rows stay O
};

// Both encodes on one tape with the same bound parameters. The projected
// pass-1 tags enter pass 2 as plain ids: nothing differentiates through the
// argmax. forced_token_tags (one id per token row, -1 for "no tag") replaces
// the model's own pass-1 tags before projection when teacher forcing is on.
template <class Real>
TwoPassTrace<Real> two_pass_forward(Tape<Real>& t, const BoundParams<Real>& bp,
                                    const EncoderConfig& cfg, const PackedBatch& pb,
                                    const std::vector<int32_t>& proj_table, int32_t o_tag_id,
                                    bool training = false, Rng* rng = nullptr,
                                    const std::vector<int32_t>* forced_token_tags = nullptr) {
  TwoPassTrace<Real> tr;
  tr.pass1 = model_forward(t, bp, cfg, pb.packed, pb.token_rows, pb.tag_rows, training, rng);
  tr.pass1_tag_ids = argmax_rows(t.val(tr.pass1.slot_logits));

  const std::vector<int32_t>& fed =
      forced_token_tags ? *forced_token_tags : tr.pass1_tag_ids;
  if (static_cast<int64_t>(fed.size()) != pb.packed.token_rows())
    throw std::logic_error("two_pass_forward: pass-2 tag override has wrong length");
  auto rows = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(pb.packed.rows), o_tag_id);
  for (int32_t b = 0; b < pb.packed.batch; ++b) {
    int64_t token0 = pb.packed.off[b] - b;  // segment start in token-row space
    for (int32_t i = 0; i < pb.packed.m[b] - 1; ++i) {
      int32_t tag = fed[static_cast<size_t>(token0 + i)];
      (*rows)[static_cast<size_t>(pb.packed.off[b] + 1 + i)] =
          tag < 0 ? o_tag_id : proj_table[static_cast<size_t>(tag)];
    }
  }
  tr.pass2_tag_rows = rows;
  tr.pass2 = model_forward(t, bp, cfg, pb.packed, pb.token_rows, rows, training, rng);
  return tr;
}

struct StepLosses {
  double total = 0;
  double pass1 = 0;  // the single pass's loss in one-pass modes
  double pass2 = 0;  // zero unless two_pass
};

// One gradient computation over the batch: zeroes the stored gradients, runs
// the mode's forward, backpropagates the summed objective and accumulates it
// into the store. The caller applies exactly one optimizer step afterwards.
template <class Real>
StepLosses train_step(ParamStore<Real>& params, const EncoderConfig& cfg, const Batch& batch,
                      RunMode mode, const std::vector<int32_t>& proj_table, int32_t o_tag_id,
                      Rng* rng = nullptr, bool teacher_force = false,
                      bool pass2_loss_only = false) {
  if (batch.size < 1) throw std::invalid_argument("train_step: empty batch");
  params.zero_grads();
  Tape<Real> t;
  auto bp = BoundParams<Real>::bind(t, params);
  PackedBatch pb = pack_batch(batch, o_tag_id);
  StepLosses out;
  VarId loss;
  if (mode == RunMode::two_pass) {
    // teacher forcing feeds the gold tags instead of the model's own pass-1
    // prediction; two_pass_forward projects either one the same way
    std::vector<int32_t> forced;
    if (teacher_force) forced.assign(pb.gold_slots->begin(), pb.gold_slots->end());
    auto tr = two_pass_forward(t, bp, cfg, pb, proj_table, o_tag_id, true, rng,
                               teacher_force ? &forced : nullptr);
    VarId l1 = joint_loss(t, tr.pass1, pb.gold_intents, pb.gold_slots, batch.size);
    VarId l2 = joint_loss(t, tr.pass2, pb.gold_intents, pb.gold_slots, batch.size);
    // ablation switch: optimize the refined pass alone (pass-1 loss still
    // reported for the log, it just stops driving updates)
    loss = pass2_loss_only ? l2 : add(t, l1, l2);
    out.pass1 = static_cast<double>(t.val(l1).v[0]);
    out.pass2 = static_cast<double>(t.val(l2).v[0]);
  } else {
    auto mo = model_forward(t, bp, cfg, pb.packed, pb.token_rows, pb.tag_rows, true, rng);
    if (mode == RunMode::one_pass_crf) {
      Real w = Real(1) / Real(batch.size);
      VarId intent_ce = ce_rows(t, mo.intent_logits, pb.gold_intents, w);
      VarId slot_nll = crf_nll_rows(t, mo.slot_logits, bp["crf.trans"], pb.packed,
                                    pb.gold_slots, w);
      loss = add(t, intent_ce, slot_nll);
    } else {
      loss = joint_loss(t, mo, pb.gold_intents, pb.gold_slots, batch.size);
    }
    out.pass1 = static_cast<double>(t.val(loss).v[0]);
  }
  out.total = static_cast<double>(t.val(loss).v[0]);
  t.backward(loss);
  bp.pull_grads();
  return out;
}

struct Prediction {
  int32_t intent_id = -1;
  std::vector<int32_t> slot_tag_ids;         // final tags, one per token
  std::vector<int32_t> pass1_tag_ids;        // equals slot_tag_ids in one-pass modes
  std::vector<int32_t> pass2_input_tag_ids;  // what pass 2 was fed; empty otherwise
};

// Frozen-parameter inference over a list of utterances, in order. Works at
// any batch size down to 1 (the latency bench's case). Gold tags and intents
// in the input are ignored; only tokens matter.
template <class Real>
std::vector<Prediction> decode(const ParamStore<Real>& params, const EncoderConfig& cfg,
                               const Vocab& vocab, const std::vector<Utterance>& utts,
                               RunMode mode, int32_t batch_size = 32) {
  std::vector<Prediction> out;
  if (utts.empty()) return out;
  out.reserve(utts.size());
  std::vector<int32_t> proj = projection_table(vocab);
  int32_t o_id = vocab.o_tag_id();
  for (const Batch& b : make_batches(utts, vocab, batch_size, std::nullopt)) {
    Tape<Real> t;
    auto bp = BoundParams<Real>::bind(t, params);
    PackedBatch pb = pack_batch(b, o_id);
    std::vector<int32_t> intents, slots, pass1, fed;
    if (mode == RunMode::two_pass) {
      auto tr = two_pass_forward(t, bp, cfg, pb, proj, o_id);
      intents = argmax_rows(t.val(tr.pass2.intent_logits));
      slots = argmax_rows(t.val(tr.pass2.slot_logits));
      pass1 = tr.pass1_tag_ids;
      fed.reserve(static_cast<size_t>(pb.packed.token_rows()));
      for (int32_t seg = 0; seg < pb.packed.batch; ++seg)
        for (int32_t i = 0; i < pb.packed.m[seg] - 1; ++i)
          fed.push_back((*tr.pass2_tag_rows)[static_cast<size_t>(pb.packed.off[seg] + 1 + i)]);
    } else {
      auto mo = model_forward(t, bp, cfg, pb.packed, pb.token_rows, pb.tag_rows);
      intents = argmax_rows(t.val(mo.intent_logits));
      if (mode == RunMode::one_pass_crf) {
        const Tensor<Real>& em = t.val(mo.slot_logits);
        const Tensor<Real>& trans = params.param("crf.trans");
        slots.reserve(static_cast<size_t>(pb.packed.token_rows()));
        for (int32_t seg = 0; seg < pb.packed.batch; ++seg) {
          int64_t l = pb.packed.m[seg] - 1;
          if (l == 0) continue;
          Tensor<Real> seg_em({l, em.cols()});
          int64_t row0 = pb.packed.off[seg] - seg;
          std::copy(em.data() + row0 * em.cols(), em.data() + (row0 + l) * em.cols(),
                    seg_em.data());
          for (int32_t y : viterbi(seg_em, trans)) slots.push_back(y);
        }
      } else {
        slots = argmax_rows(t.val(mo.slot_logits));
      }
      pass1 = slots;
    }
    for (int32_t seg = 0; seg < pb.packed.batch; ++seg) {
      Prediction p;
      p.intent_id = intents[static_cast<size_t>(seg)];
      int64_t token0 = pb.packed.off[seg] - seg;
      int32_t len = pb.packed.m[seg] - 1;
      p.slot_tag_ids.assign(slots.begin() + token0, slots.begin() + token0 + len);
      p.pass1_tag_ids.assign(pass1.begin() + token0, pass1.begin() + token0 + len);
      if (!fed.empty())
        p.pass2_input_tag_ids.assign(fed.begin() + token0, fed.begin() + token0 + len);
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace slrf
