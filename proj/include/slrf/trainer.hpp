#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "slrf/checkpoint.hpp"
#include "slrf/config.hpp"
#include "slrf/metrics.hpp"
#include "slrf/refine.hpp"

namespace slrf {

// Non-finite loss mid-run. Distinct from plain runtime errors so callers can
// map it to its own process exit code.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EpochLog {
  int32_t epoch = 0;  // 1-based
  double train_loss = 0;
  MetricsReport dev;
  int64_t test_uncoordinated = 0;  // feeds the per-epoch curve
  double wall_seconds = 0;
};

struct RunReport {
  TrainConfig config;
  std::vector<EpochLog> epochs;
  int32_t best_epoch = 0;
  MetricsReport best_dev;
  std::string checkpoint_path;
};

struct TrainResult {
  std::string checkpoint_path;
  RunReport report;
};

// Runs max_epochs over the train split, shuffling with a per-epoch derived
// seed, evaluating on dev after every epoch, and keeping the checkpoint whose
// dev selection metric is best (earliest epoch wins ties). The run report and
// the uncoordinated-slot curve land next to the checkpoint in out_dir.
// Divergence (non-finite loss) aborts with the epoch in the message.
TrainResult train(const TrainConfig& cfg, const std::string& out_dir);

// Decode a split with a saved model and score it. mode may differ from the
// training mode (e.g. a two-pass model decoded greedily); split must be
// train, dev or test.
MetricsReport evaluate_checkpoint(const std::string& checkpoint_path, const std::string& data_dir,
                                  const std::string& split, RunMode mode);

// Predictions as strings, via the model's own vocabulary. Gold and predicted
// samples come back aligned with the input order, ready for evaluate().
std::pair<std::vector<TaggedSample>, std::vector<TaggedSample>> tagged_pairs(
    const std::vector<Utterance>& utts, const Vocab& vocab,
    const std::vector<Prediction>& preds);

// `mode,epoch,count` rows, one per epoch, no header.
std::string uncoordinated_curve_csv(const RunReport& report);

// The full experiment record: resolved config, every epoch's numbers, the
// best epoch, and the checkpoint path.
std::string run_report_json(const RunReport& report);

// MetricsReport as a JSON object (indent < 0 for single-line output).
std::string metrics_json(const MetricsReport& m, int indent = -1);

}  // namespace slrf
