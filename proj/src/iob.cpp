#include "slrf/iob.hpp"

#include <stdexcept>

namespace slrf {
namespace {

// "B-city" -> 'B'; "O" -> 'O'. Callers validate first.
char head_of(const std::string& tag) { return tag[0]; }

// Slot type after the "B-"/"I-" prefix; empty for O.
std::string type_of(const std::string& tag) {
  return tag.size() > 2 ? tag.substr(2) : std::string{};
}

void require_all(const std::vector<std::string>& tags) {
  for (const auto& t : tags) require_well_formed(t);
}

}  // namespace

bool tag_well_formed(const std::string& tag) {
  if (tag == "O") return true;
  if (tag.size() < 3) return false;
  if (tag[0] != 'B' && tag[0] != 'I') return false;
  return tag[1] == '-';
}

void require_well_formed(const std::string& tag) {
  if (!tag_well_formed(tag))
    throw std::invalid_argument("malformed slot tag \"" + tag + "\" (expected O, B-<type> or I-<type>)");
}

std::vector<Chunk> parse_chunks(const std::vector<std::string>& tags) {
  require_all(tags);
  std::vector<Chunk> out;
  bool open = false;
  std::string open_type;
  int32_t open_start = 0;
  auto close_at = [&](int32_t end) {
    if (open) out.push_back(Chunk{open_type, open_start, end});
    open = false;
  };
  for (int32_t i = 0; i < static_cast<int32_t>(tags.size()); ++i) {
    const std::string& t = tags[static_cast<size_t>(i)];
    char h = head_of(t);
    if (h == 'O') {
      close_at(i - 1);
      continue;
    }
    std::string ty = type_of(t);
    if (h == 'B' || !open || open_type != ty) {
      // B always opens; an I with no matching open chunk also opens one
      // (lenient recovery, so malformed predictions still score).
      close_at(i - 1);
      open = true;
      open_type = std::move(ty);
      open_start = i;
    }
    // matching I: chunk stays open
  }
  close_at(static_cast<int32_t>(tags.size()) - 1);
  return out;
}

int64_t count_uncoordinated(const std::vector<std::string>& tags) {
  return static_cast<int64_t>(validate_crf_rules(tags).size());
}

std::vector<std::string> btag_projection(const std::vector<std::string>& tags) {
  require_all(tags);
  std::vector<std::string> out;
  out.reserve(tags.size());
  for (const auto& t : tags) out.push_back(head_of(t) == 'B' ? t : "O");
  return out;
}

std::vector<CrfRuleViolation> validate_crf_rules(const std::vector<std::string>& tags) {
  require_all(tags);
  std::vector<CrfRuleViolation> out;
  for (int32_t i = 0; i < static_cast<int32_t>(tags.size()); ++i) {
    const std::string& t = tags[static_cast<size_t>(i)];
    if (head_of(t) != 'I') continue;
    if (i == 0) {
      out.push_back(CrfRuleViolation{0, std::string{}, t});
      continue;
    }
    const std::string& p = tags[static_cast<size_t>(i - 1)];
    // coordinated iff the predecessor is B-t or I-t for the same type t
    if (head_of(p) != 'O' && type_of(p) == type_of(t)) continue;
    out.push_back(CrfRuleViolation{i, p, t});
  }
  return out;
}

std::vector<std::string> chunks_to_tags(const std::vector<Chunk>& chunks, int32_t length) {
  std::vector<std::string> out(static_cast<size_t>(length), "O");
  int32_t prev_end = -1;
  for (const auto& c : chunks) {
    if (c.slot_type.empty()) throw std::invalid_argument("chunk with empty slot type");
    if (c.start < 0 || c.end < c.start || c.end >= length)
      throw std::invalid_argument("chunk span out of range");
    if (c.start <= prev_end) throw std::invalid_argument("chunks overlap or are unsorted");
    out[static_cast<size_t>(c.start)] = "B-" + c.slot_type;
    for (int32_t i = c.start + 1; i <= c.end; ++i) out[static_cast<size_t>(i)] = "I-" + c.slot_type;
    prev_end = c.end;
  }
  return out;
}

}  // namespace slrf
