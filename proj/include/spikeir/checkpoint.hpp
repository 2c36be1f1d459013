#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikeir/model.hpp"

namespace spikeir {

struct CheckpointError : Error {
    using Error::Error;
};
struct CkptMagicError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CkptVersionError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CkptChecksumError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CkptManifestError : CheckpointError {
    using CheckpointError::CheckpointError;
};

// Binary layout (little-endian):
//   "SPIR" | u32 version | u32 n_params
//   per param: u32 name_len, name bytes, 4 x u32 shape
//   u32 echo_len, config echo text
//   payload: float32 values in manifest order
//   u64 FNV-1a checksum of the payload bytes
constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointData {
    struct Entry {
        std::string name;
        Shape shape;
    };
    std::vector<Entry> manifest;
    std::string config_echo;
    std::vector<float> payload;
};

void save_checkpoint(const ModelGraph& g, const std::string& path, const std::string& config_echo);

CheckpointData read_checkpoint(const std::string& path);

// Restores every parameter bit-exactly. The file manifest must match the
// graph registry entry by entry; the first offending tensor is named.
void load_checkpoint(ModelGraph& g, const std::string& path);

} // namespace spikeir
