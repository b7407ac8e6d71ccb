#pragma once

#include <cstdint>
#include <string>

#include "slrf/encoder.hpp"
#include "slrf/refine.hpp"

namespace slrf {

// Resolved run settings. File keys and command-line flags both funnel through
// apply_kv, so the two layers cannot diverge; flags win simply by being
// applied after the file.
struct TrainConfig {
  std::string data_dir;  // holds train/ dev/ test/ split directories
  std::string preset = "atis";
  RunMode mode = RunMode::two_pass;
  int32_t batch_size = 32;
  double lr = 0.001;
  int32_t max_epochs = 100;
  uint64_t seed = 1;
  std::string selection = "sentence_accuracy";  // dev metric picking the kept model
  bool teacher_force = false;   // feed projected gold tags into pass 2 while training
  bool pass2_loss_only = false;  // drop the pass-1 term from the objective
  EncoderConfig encoder;  // preset, then any explicit encoder keys on top

  TrainConfig() { encoder = EncoderConfig::atis_preset(); }

  void validate() const;
};

// One key=value assignment. Encoder keys (num_layers, num_heads, hidden,
// feed_forward, rel_clip, dropout, rel_values, max_len) write through to the
// encoder section; `preset` resets that whole section first, so overrides
// belong after it. Vocabulary sizes come from the data and are not settable.
// Unknown keys and unparseable values throw.
void apply_kv(TrainConfig& cfg, const std::string& key, const std::string& value);

// key=value lines over a base config. Blank lines and lines whose first
// non-space character is `#` are skipped; keys and values are trimmed.
TrainConfig parse_run_config(const std::string& text, TrainConfig base = TrainConfig());
TrainConfig load_run_config(const std::string& path, TrainConfig base = TrainConfig());

// Canonical key=value rendering; parse_run_config(dump_run_config(c)) == c.
std::string dump_run_config(const TrainConfig& cfg);

}  // namespace slrf
