#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "slrf/iob.hpp"
#include "slrf/metrics.hpp"
#include "slrf/rng.hpp"

using namespace slrf;

namespace {

std::vector<std::string> tags(std::initializer_list<const char*> xs) {
  return std::vector<std::string>(xs.begin(), xs.end());
}

// random tag soup over two types; deliberately includes orphan I tags
std::vector<std::string> random_tags(Rng& rng, int64_t len) {
  static const std::vector<std::string> alphabet = {"O", "B-a", "I-a", "B-b", "I-b"};
  std::vector<std::string> out;
  for (int64_t i = 0; i < len; ++i) out.push_back(alphabet[rng.below(alphabet.size())]);
  return out;
}

}  // namespace

TEST_CASE("tag grammar accepts O and B-/I- with a type") {
  CHECK(tag_well_formed("O"));
  CHECK(tag_well_formed("B-city"));
  CHECK(tag_well_formed("I-fromloc.city_name"));
  CHECK(tag_well_formed("B--"));  // type "-" is odd but nonempty
  CHECK_FALSE(tag_well_formed(""));
  CHECK_FALSE(tag_well_formed("B-"));
  CHECK_FALSE(tag_well_formed("I"));
  CHECK_FALSE(tag_well_formed("b-city"));
  CHECK_FALSE(tag_well_formed("X-city"));
  CHECK_FALSE(tag_well_formed("BI-city"));
  CHECK_THROWS_AS(require_well_formed("B-"), std::invalid_argument);
}

TEST_CASE("parse_chunks basic and lenient recovery") {
  CHECK(parse_chunks(tags({"B-dest", "I-dest", "O"})) == std::vector<Chunk>{{"dest", 0, 1}});
  // orphan I opens its own chunk (verified against the reference scorer)
  CHECK(parse_chunks(tags({"I-x", "O", "B-x"})) ==
        std::vector<Chunk>{{"x", 0, 0}, {"x", 2, 2}});
  CHECK(parse_chunks({}) == std::vector<Chunk>{});
  CHECK(parse_chunks(tags({"O", "O"})) == std::vector<Chunk>{});
  // type switch inside a run closes and reopens (matches the reference scorer)
  CHECK(parse_chunks(tags({"B-x", "I-y", "I-y", "B-y"})) ==
        std::vector<Chunk>{{"x", 0, 0}, {"y", 1, 2}, {"y", 3, 3}});
  // adjacent B tags are separate chunks; last chunk may run to the end
  CHECK(parse_chunks(tags({"B-x", "B-x", "I-x"})) ==
        std::vector<Chunk>{{"x", 0, 0}, {"x", 1, 2}});
  CHECK_THROWS_AS(parse_chunks(tags({"B-x", "huh"})), std::invalid_argument);
}

TEST_CASE("count_uncoordinated strict predecessor rule") {
  CHECK(count_uncoordinated(tags({"O", "B-singer", "I-song", "O"})) == 1);
  CHECK(count_uncoordinated(tags({"B-x", "I-x", "I-x"})) == 0);
  CHECK(count_uncoordinated(tags({"I-x"})) == 1);
  CHECK(count_uncoordinated(tags({"O", "I-x", "I-x"})) == 1);  // only the first is orphaned
  CHECK(count_uncoordinated(tags({"I-a", "I-b"})) == 2);
  CHECK(count_uncoordinated({}) == 0);
}

TEST_CASE("btag_projection keeps B tags and erases everything else") {
  CHECK(btag_projection(tags({"B-x", "I-x", "O"})) == tags({"B-x", "O", "O"}));
  CHECK(btag_projection(tags({"O", "O"})) == tags({"O", "O"}));
  CHECK(btag_projection(tags({"I-x", "B-y"})) == tags({"O", "B-y"}));
}

TEST_CASE("validate_crf_rules lists the forbidden transitions") {
  auto v1 = validate_crf_rules(tags({"O", "I-x"}));
  REQUIRE(v1.size() == 1);
  CHECK(v1[0] == CrfRuleViolation{1, "O", "I-x"});
  auto v2 = validate_crf_rules(tags({"B-x", "I-y"}));
  REQUIRE(v2.size() == 1);
  CHECK(v2[0] == CrfRuleViolation{1, "B-x", "I-y"});
  CHECK(validate_crf_rules(tags({"B-x", "B-y", "O"})).empty());
  // sequence start behaves like O: a leading I is a violation with no prev
  auto v3 = validate_crf_rules(tags({"I-q", "I-q"}));
  REQUIRE(v3.size() == 1);
  CHECK(v3[0] == CrfRuleViolation{0, "", "I-q"});
  // I may be followed by any B (new chunk) and O
  CHECK(validate_crf_rules(tags({"B-x", "I-x", "B-y", "O"})).empty());
}

TEST_CASE("property: rule violations and uncoordinated count agree") {
  Rng rng(401);
  for (int trial = 0; trial < 600; ++trial) {
    auto t = random_tags(rng, static_cast<int64_t>(rng.below(15)));
    auto viol = validate_crf_rules(t);
    CHECK(count_uncoordinated(t) == static_cast<int64_t>(viol.size()));
    CHECK((count_uncoordinated(t) == 0) == viol.empty());
    // projection is idempotent
    auto once = btag_projection(t);
    CHECK(btag_projection(once) == once);
    // canonicalization is stable: render then reparse reproduces the chunks
    auto chunks = parse_chunks(t);
    CHECK(parse_chunks(chunks_to_tags(chunks, static_cast<int32_t>(t.size()))) == chunks);
  }
}

TEST_CASE("property: chunk lists survive render + parse") {
  Rng rng(402);
  static const std::vector<std::string> types = {"a", "b", "c"};
  for (int trial = 0; trial < 400; ++trial) {
    int32_t len = static_cast<int32_t>(1 + rng.below(16));
    std::vector<Chunk> chunks;
    int32_t pos = 0;
    while (pos < len) {
      if (rng.below(2) == 0) {  // gap
        ++pos;
        continue;
      }
      int32_t width = static_cast<int32_t>(1 + rng.below(3));
      int32_t end = std::min(pos + width - 1, len - 1);
      chunks.push_back(Chunk{types[rng.below(types.size())], pos, end});
      pos = end + 1;  // adjacent same-type chunks are allowed and exercised
    }
    CHECK(parse_chunks(chunks_to_tags(chunks, len)) == chunks);
  }
}

TEST_CASE("chunks_to_tags rejects bad chunk lists") {
  CHECK_THROWS_AS(chunks_to_tags({{"x", 0, 2}}, 2), std::invalid_argument);    // out of range
  CHECK_THROWS_AS(chunks_to_tags({{"x", 2, 1}}, 4), std::invalid_argument);    // end < start
  CHECK_THROWS_AS(chunks_to_tags({{"", 0, 0}}, 2), std::invalid_argument);     // empty type
  CHECK_THROWS_AS(chunks_to_tags({{"x", 0, 1}, {"y", 1, 1}}, 3), std::invalid_argument);  // overlap
  CHECK(chunks_to_tags({}, 3) == tags({"O", "O", "O"}));
}

TEST_CASE("evaluate: perfect predictions score ones") {
  std::vector<TaggedSample> g = {{"book", {"B-city", "I-city", "O"}}, {"play", {"O", "B-artist"}}};
  auto r = evaluate(g, g);
  CHECK(r.slot_f1 == doctest::Approx(1.0));
  CHECK(r.slot_precision == doctest::Approx(1.0));
  CHECK(r.slot_recall == doctest::Approx(1.0));
  CHECK(r.intent_accuracy == doctest::Approx(1.0));
  CHECK(r.sentence_accuracy == doctest::Approx(1.0));
  CHECK(r.uncoordinated_count == 0);
  CHECK(r.gold_chunks == 2);
  CHECK(r.pred_chunks == 2);
  CHECK(r.correct_chunks == 2);
  CHECK(r.utterances == 2);
}

TEST_CASE("evaluate: chunk credit requires the exact span") {
  std::vector<TaggedSample> g = {{"i", {"B-a", "I-a"}}};
  std::vector<TaggedSample> p = {{"i", {"B-a", "O"}}};
  auto r = evaluate(g, p);
  CHECK(r.slot_precision == doctest::Approx(0.0));
  CHECK(r.slot_recall == doctest::Approx(0.0));
  CHECK(r.slot_f1 == doctest::Approx(0.0));
  CHECK(r.sentence_accuracy == doctest::Approx(0.0));
  CHECK(r.intent_accuracy == doctest::Approx(1.0));
}

TEST_CASE("evaluate: one of two chunks right gives 0.5 everywhere") {
  // hand count: gold {(a,0,1),(b,3,3)}, pred {(a,0,1),(b,2,2)} -> 1 of 2 / 1 of 2
  std::vector<TaggedSample> g = {{"i", {"B-a", "I-a", "O", "B-b"}}};
  std::vector<TaggedSample> p = {{"i", {"B-a", "I-a", "B-b", "O"}}};
  auto r = evaluate(g, p);
  CHECK(r.slot_precision == doctest::Approx(0.5));
  CHECK(r.slot_recall == doctest::Approx(0.5));
  CHECK(r.slot_f1 == doctest::Approx(0.5));
}

TEST_CASE("evaluate: sentence accuracy compares raw tags, not chunks") {
  // the orphan I-x parses to the same chunk as B-x, but the tag strings differ
  std::vector<TaggedSample> g = {{"i", {"B-x", "I-x"}}};
  std::vector<TaggedSample> p = {{"i", {"I-x", "I-x"}}};
  auto r = evaluate(g, p);
  CHECK(r.slot_f1 == doctest::Approx(1.0));
  CHECK(r.sentence_accuracy == doctest::Approx(0.0));
  CHECK(r.intent_accuracy == doctest::Approx(1.0));
  CHECK(r.uncoordinated_count == 1);
}

TEST_CASE("evaluate: wrong intent alone sinks sentence accuracy") {
  std::vector<TaggedSample> g = {{"book", {"O"}}};
  std::vector<TaggedSample> p = {{"play", {"O"}}};
  auto r = evaluate(g, p);
  CHECK(r.intent_accuracy == doctest::Approx(0.0));
  CHECK(r.sentence_accuracy == doctest::Approx(0.0));
}

TEST_CASE("evaluate: errors name the offending utterance") {
  std::vector<TaggedSample> g = {{"i", {"O", "O"}}, {"i", {"O", "O"}}};
  std::vector<TaggedSample> p = {{"i", {"O", "O"}}, {"i", {"O"}}};
  try {
    evaluate(g, p);
    FAIL("expected a length-mismatch error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
  CHECK_THROWS_AS(evaluate(g, {}), std::invalid_argument);
}

TEST_CASE("evaluate: random inputs keep the report invariants") {
  Rng rng(403);
  std::vector<std::string> intents = {"a", "b", "c"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TaggedSample> g, p;
    int64_t n = 1 + rng.below(8);
    for (int64_t u = 0; u < n; ++u) {
      int64_t len = 1 + rng.below(10);
      g.push_back({intents[rng.below(3)], random_tags(rng, len)});
      p.push_back({intents[rng.below(3)], random_tags(rng, len)});
    }
    auto r = evaluate(g, p);
    CHECK(r.sentence_accuracy <= r.intent_accuracy + 1e-12);
    CHECK(r.slot_f1 >= 0.0);
    CHECK(r.slot_f1 <= 1.0);
    CHECK(r.correct_chunks <= std::min(r.gold_chunks, r.pred_chunks));
    double pr = r.slot_precision + r.slot_recall;
    if (pr > 0) CHECK(r.slot_f1 == doctest::Approx(2 * r.slot_precision * r.slot_recall / pr));
  }
}
