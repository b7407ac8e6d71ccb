#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "slrf/checkpoint.hpp"
#include "slrf/corpus.hpp"
#include "slrf/encoder.hpp"
#include "slrf/params.hpp"
#include "slrf/refine.hpp"

namespace slrf {

// Per-utterance decode timing for one run mode. Latencies are wall-clock
// milliseconds around the decode call only; input staging happens before the
// timed region. The long bucket (token length >= 12) is reported only when at
// least ten such utterances exist, since a thinner sample says nothing.
struct LatencyReport {
  std::string mode;
  double mean_ms = 0;
  double median_ms = 0;
  double p95_ms = 0;  // nearest-rank
  int64_t count = 0;
  bool long_bucket_present = false;
  double long_mean_ms = 0;
  int64_t long_count = 0;
  std::string reference_mode;  // set by speedup_table
  double speedup = 0;          // reference mean / this mean
  std::string hardware;
};

namespace detail {

double mean_of(const std::vector<double>& xs);
double median_of(std::vector<double> xs);
double p95_of(std::vector<double> xs);

}  // namespace detail

// One line of provenance for the numbers: CPU model plus the timing setup.
std::string hardware_note();

// The timing protocol itself, decoupled from the model so a no-op probe can
// bound the harness's own overhead. decode_one(i) must decode the i-th staged
// utterance; lengths[i] is its token count (drives the long bucket). Each
// utterance is decoded `repeats` times and the repeats are averaged; `warmup`
// unrecorded decodes run first. Timing is strictly single-threaded: any
// threads value other than 1 is refused.
LatencyReport time_decoder(const std::function<void(size_t)>& decode_one,
                           const std::vector<int64_t>& lengths, const std::string& mode_label,
                           int32_t warmup, int32_t repeats, int32_t threads = 1);

// Times real decodes of `utts` (batch size forced to 1) under `mode`.
LatencyReport measure_latency(const ParamStore<float>& params, const EncoderConfig& cfg,
                              const Vocab& vocab, const std::vector<Utterance>& utts,
                              RunMode mode, int32_t warmup = 50, int32_t repeats = 5,
                              int32_t threads = 1);

// Convenience overload resolving a saved model; the mode defaults to the one
// recorded in the checkpoint metadata when `mode` is empty.
LatencyReport measure_latency(const std::string& checkpoint_path,
                              const std::vector<Utterance>& utts, const std::string& mode = "",
                              int32_t warmup = 50, int32_t repeats = 5, int32_t threads = 1);

// Annotates each report with its speedup against the named reference mode
// (reference mean / row mean, so the reference row reads 1.0). Row order is
// preserved. Throws when no report carries the reference mode.
std::vector<LatencyReport> speedup_table(const std::vector<LatencyReport>& reports,
                                         const std::string& reference_mode);

// Renderers for the annotated table: aligned text for terminals, CSV with a
// header row for machines, JSON mirroring every report field.
std::string speedup_table_text(const std::vector<LatencyReport>& rows);
std::string speedup_table_csv(const std::vector<LatencyReport>& rows);
std::string latency_json(const LatencyReport& report, int indent = -1);
std::string latency_table_json(const std::vector<LatencyReport>& rows, int indent = -1);

}  // namespace slrf
