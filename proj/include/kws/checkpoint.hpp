#pragma once

#include <string>

#include "kws/model.hpp"
#include "kws/optimizer.hpp"

namespace kws::checkpoint {

// Single-file container: magic, a JSON manifest listing parameter name /
// shape / dtype / byte offset (plus optimizer-state entries keyed by
// parameter name), then a raw little-endian float32 payload. Writes are
// atomic (write-temp, rename).
void save(const std::string& path, model::Model<float>& m,
          const nn::Adam<float>* optimizer = nullptr);

// Restores every parameter (and optimizer moments, when present and
// requested) bit-exactly. A mismatched model configuration is an error
// listing the missing/unexpected parameter names; a truncated payload is
// an error and loads nothing.
void load(const std::string& path, model::Model<float>& m,
          nn::Adam<float>* optimizer = nullptr);

// Model configuration stored in the manifest, for constructing the model
// before load().
model::ModelConfig peek_config(const std::string& path);

}  // namespace kws::checkpoint
