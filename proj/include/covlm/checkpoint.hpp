#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "covlm/tensor.hpp"

namespace covlm {

/// Single-file checkpoint: 8-byte magic, u64 manifest length, JSON manifest
/// (names, shapes, trainable flags, byte offsets), then a little-endian
/// 32-bit float blob.
void save_checkpoint(const std::string& path, const ParamRefs<float>& params);

/// Loads by name; throws on missing parameters or shape mismatch. Trainable
/// flags stored in the file are applied to the in-memory parameters.
void load_checkpoint(const std::string& path, const ParamRefs<float>& params);

/// FNV-1a over the float32 bytes of every parameter in a partition,
/// in registration order. Used to prove freeze-mask fidelity.
uint64_t partition_checksum(const ParamRefs<float>& params,
                            const std::string& partition);

std::map<std::string, uint64_t> all_partition_checksums(
    const ParamRefs<float>& params);

}  // namespace covlm
