#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace slrf {

// One utterance's labeling, gold or predicted, at the string level.
struct TaggedSample {
  std::string intent;
  std::vector<std::string> tags;
};

struct MetricsReport {
  double slot_precision = 0;
  double slot_recall = 0;
  double slot_f1 = 0;
  double intent_accuracy = 0;
  double sentence_accuracy = 0;
  int64_t uncoordinated_count = 0;
  int64_t gold_chunks = 0;
  int64_t pred_chunks = 0;
  int64_t correct_chunks = 0;
  int64_t utterances = 0;
};

// Chunk-level slot P/R/F1 (exact type+span matches), string-level intent
// accuracy, strict sentence accuracy (raw tag sequence AND intent equal), and
// the summed uncoordinated-slot count over the predictions.
// Throws std::invalid_argument naming the utterance on a length mismatch.
MetricsReport evaluate(const std::vector<TaggedSample>& gold,
                       const std::vector<TaggedSample>& pred);

}  // namespace slrf
