#include "slrf/metrics.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "slrf/iob.hpp"

namespace slrf {

MetricsReport evaluate(const std::vector<TaggedSample>& gold,
                       const std::vector<TaggedSample>& pred) {
  if (gold.size() != pred.size())
    throw std::invalid_argument("evaluate: " + std::to_string(gold.size()) + " gold vs " +
                                std::to_string(pred.size()) + " predicted utterances");
  MetricsReport r;
  r.utterances = static_cast<int64_t>(gold.size());
  int64_t intent_hits = 0;
  int64_t sentence_hits = 0;
  for (size_t u = 0; u < gold.size(); ++u) {
    if (gold[u].tags.size() != pred[u].tags.size())
      throw std::invalid_argument("evaluate: utterance " + std::to_string(u) + " has " +
                                  std::to_string(gold[u].tags.size()) + " gold tags but " +
                                  std::to_string(pred[u].tags.size()) + " predicted");
    auto gc = parse_chunks(gold[u].tags);
    auto pc = parse_chunks(pred[u].tags);
    r.gold_chunks += static_cast<int64_t>(gc.size());
    r.pred_chunks += static_cast<int64_t>(pc.size());
    // both lists are start-ordered and spans within a list never repeat
    for (const auto& c : pc)
      if (std::find(gc.begin(), gc.end(), c) != gc.end()) ++r.correct_chunks;
    r.uncoordinated_count += count_uncoordinated(pred[u].tags);
    bool intent_ok = gold[u].intent == pred[u].intent;
    intent_hits += intent_ok ? 1 : 0;
    // strict: the raw tag sequence must match, not just the recovered chunks
    sentence_hits += (intent_ok && gold[u].tags == pred[u].tags) ? 1 : 0;
  }
  r.slot_precision = r.pred_chunks > 0 ? double(r.correct_chunks) / double(r.pred_chunks) : 0.0;
  r.slot_recall = r.gold_chunks > 0 ? double(r.correct_chunks) / double(r.gold_chunks) : 0.0;
  double pr = r.slot_precision + r.slot_recall;
  r.slot_f1 = pr > 0 ? 2.0 * r.slot_precision * r.slot_recall / pr : 0.0;
  r.intent_accuracy = r.utterances > 0 ? double(intent_hits) / double(r.utterances) : 0.0;
  r.sentence_accuracy = r.utterances > 0 ? double(sentence_hits) / double(r.utterances) : 0.0;
  return r;
}

}  // namespace slrf
