#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace slrf {

// A maximal run of tokens labeled with one slot type. Indices are inclusive
// token positions.
struct Chunk {
  std::string slot_type;
  int32_t start = 0;
  int32_t end = 0;

  bool operator==(const Chunk&) const = default;
};

// An adjacent pair the chunk grammar forbids: an I-continuation whose
// predecessor is not the matching B-/I- tag. pos is the offending position;
// prev is empty when the violation sits at position 0.
struct CrfRuleViolation {
  int32_t pos = 0;
  std::string prev;
  std::string tag;

  bool operator==(const CrfRuleViolation&) const = default;
};

// Tag grammar: "O" | "B-<type>" | "I-<type>" with a nonempty <type>.
bool tag_well_formed(const std::string& tag);

// Throws std::invalid_argument naming the offending tag.
void require_well_formed(const std::string& tag);

// Chunk recovery with the lenient scoring convention: B-t opens, a matching
// I-t extends, anything else closes; an I-t with no open chunk of its type
// opens a new chunk. Output is ordered by start. Throws on malformed tags.
std::vector<Chunk> parse_chunks(const std::vector<std::string>& tags);

// Strict count of I-tags whose predecessor is not the same-type B or I tag.
// Position 0 holding any I-tag counts. Throws on malformed tags.
int64_t count_uncoordinated(const std::vector<std::string>& tags);

// Element-wise projection used to build second-pass tag inputs: B-* kept,
// everything else becomes O. Idempotent. Throws on malformed tags.
std::vector<std::string> btag_projection(const std::vector<std::string>& tags);

// Lists every position breaking the transition rules (O and sequence start
// may be followed only by O or B-*; B-t/I-t admit I-t but no other I-*).
// Empty result iff count_uncoordinated is zero. Throws on malformed tags.
std::vector<CrfRuleViolation> validate_crf_rules(const std::vector<std::string>& tags);

// Renders a chunk list back to canonical tags (B-t at start, I-t after, O
// elsewhere). Chunks must be sorted, in range, and non-overlapping; throws
// std::invalid_argument otherwise.
std::vector<std::string> chunks_to_tags(const std::vector<Chunk>& chunks, int32_t length);

}  // namespace slrf
