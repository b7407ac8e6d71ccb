#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace slrf {

struct Utterance {
  std::vector<std::string> tokens;     // lowercased
  std::vector<std::string> slot_tags;  // same length as tokens
  std::string intent;
  int64_t id = 0;  // ordinal index within its split
};

// Bijective string<->id maps. Token ids 0/1/2 are reserved for padding,
// unknown words, and the sentence-level CLS position.
class Vocab {
 public:
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kUnk = 1;
  static constexpr int32_t kCls = 2;

  Vocab();

  int32_t add_token(const std::string& s);
  int32_t add_tag(const std::string& s);
  int32_t add_intent(const std::string& s);

  // UNK for unseen tokens; tags and intents have no unknown fallback and throw
  int32_t token_id(const std::string& s) const;
  int32_t tag_id(const std::string& s) const;
  int32_t intent_id(const std::string& s) const;
  // -1 for labels outside the vocabulary (dev/test may hold tags the training
  // split never produced; they are unpredictable and carry no supervision)
  int32_t tag_id_or(const std::string& s, int32_t fallback) const;
  int32_t intent_id_or(const std::string& s, int32_t fallback) const;
  bool has_tag(const std::string& s) const;

  const std::string& token_surface(int32_t id) const;
  const std::string& tag_surface(int32_t id) const;
  const std::string& intent_surface(int32_t id) const;

  int32_t token_count() const { return static_cast<int32_t>(token_surfaces_.size()); }
  int32_t tag_count() const { return static_cast<int32_t>(tag_surfaces_.size()); }
  int32_t intent_count() const { return static_cast<int32_t>(intent_surfaces_.size()); }
  int32_t o_tag_id() const { return o_tag_id_; }

  // one line per entry: "<id>\t<surface>"
  std::string dump_tokens() const;
  std::string dump_tags() const;
  std::string dump_intents() const;

 private:
  std::unordered_map<std::string, int32_t> token_ids_, tag_ids_, intent_ids_;
  std::vector<std::string> token_surfaces_, tag_surfaces_, intent_surfaces_;
  int32_t o_tag_id_ = 0;
};

// Ids for one batch, padded to the batch's own max length L. Column 0 of
// token_ids is always CLS; gold_tag_ids has no CLS column. Padding rows carry
// mask=false, token kPad, and gold ids of -1 (no supervision).
struct Batch {
  int32_t size = 0;          // utterances in this batch
  int32_t width = 0;         // L+1 including the CLS column
  std::vector<int32_t> token_ids;      // [size x width]
  std::vector<int32_t> tag_input_ids;  // [size x width], O at every real position
  std::vector<int32_t> gold_tag_ids;   // [size x (width-1)]
  std::vector<int32_t> gold_intent_ids;  // [size]
  std::vector<uint8_t> mask;             // [size x width]
  std::vector<int32_t> lengths;          // [size]
  std::vector<int64_t> utterance_ids;    // [size], original corpus positions
};

// Reads seq.in / seq.out / label from dir/split (split "dev" also accepts a
// "valid" directory, the other common release name). LF or CRLF endings;
// tokens are lowercased; tag arity and grammar validated. Errors name the
// file and line.
std::vector<Utterance> load_split(const std::string& dir, const std::string& split);

// Specials + train tokens in first-seen order; tag vocab is {O} ∪ seen tags
// closed under B-t => I-t; intents in first-seen order.
Vocab build_vocab(const std::vector<Utterance>& train);

// Encode one utterance's tokens (no CLS), mapping unseen words to UNK.
std::vector<int32_t> encode_tokens(const Vocab& v, const std::vector<std::string>& tokens);

// Deterministic batching. Optional seed shuffles utterance order (the split
// order is kept when absent); each batch pads to its own longest member.
std::vector<Batch> make_batches(const std::vector<Utterance>& data, const Vocab& vocab,
                                int32_t batch_size, std::optional<uint64_t> shuffle_seed);

}  // namespace slrf
