#pragma once

#include <string>

#include "slrf/corpus.hpp"
#include "slrf/params.hpp"
#include "slrf/refine.hpp"

namespace slrf {

// Binary container: the magic bytes `SLRF1`, then one record per parameter in
// store order — name length (u32 LE), name bytes, rank (u32 LE), dims (u32 LE
// each), values (f32 LE, row-major). Byte order is explicit, so files move
// across hosts; loading a saved file reproduces every value bit for bit.
void save_checkpoint(const std::string& path, const ParamStore<float>& params);
ParamStore<float> load_checkpoint(const std::string& path);

// Everything needed to rebuild the model around the weights lives in a JSON
// sidecar next to the checkpoint.
std::string meta_path_for(const std::string& checkpoint_path);

struct CheckpointMeta {
  EncoderConfig config;
  RunMode mode = RunMode::one_pass;
  Vocab vocab;
};

void save_meta(const std::string& checkpoint_path, const CheckpointMeta& meta);
CheckpointMeta load_meta(const std::string& checkpoint_path);

// Loaded weights must carry exactly the tensors the config implies (plus the
// transition matrix in CRF mode), each with its expected shape.
void validate_params(const ParamStore<float>& params, const EncoderConfig& cfg, RunMode mode);

}  // namespace slrf
