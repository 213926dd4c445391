#pragma once

#include <string>

#include "distforge/model.hpp"

namespace distforge {

// Checkpoint container: magic "DFCKPT1\n", a little-endian u64 header length,
// a JSON header {config, dtype, tensors: name -> {shape, offset}}, then the
// float32 little-endian payload. Saves are atomic (temp file + rename).
void save_checkpoint(const std::string& path, const ParamSet<float>& params);

// errors: io (missing file), format (bad magic/version, truncated payload,
// header/config shape mismatch). Never returns a partially filled model.
ParamSet<float> load_checkpoint(const std::string& path);

}  // namespace distforge
