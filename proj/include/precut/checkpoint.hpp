#pragma once

#include <map>
#include <string>

#include "precut/tensor.hpp"

namespace precut {

using ParamMap = std::map<std::string, Tensor>;

// JSON checkpoint: {"meta": {...}, "tensors": {name: {"shape": [...], "data": [...]}}}.
// Doubles are emitted as shortest round-trip literals, so save/load is
// bit-exact. `meta` carries the config fingerprint used for mismatch checks.
void save_checkpoint(const std::string& path, const ParamMap& params, const std::map<std::string, std::string>& meta);
ParamMap load_checkpoint(const std::string& path, std::map<std::string, std::string>* meta = nullptr);

}  // namespace precut
