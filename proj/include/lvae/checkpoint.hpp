#pragma once

#include <string>

#include "lvae/training.hpp"

namespace lvae {

/// Binary container: "LVAECKPT", u32 version, u64 metadata length, JSON
/// metadata (config, vocabulary and its hash, dims, cell type, parameter
/// names and shapes, RNG state, epoch), then little-endian f64 payloads in
/// declared order. Written atomically.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
/// Throws IoError, BadMagic, VersionMismatch, ShapeMismatch, VocabHashMismatch.
Checkpoint load_checkpoint(const std::string& path);

/// Throws VocabHashMismatch unless the vocabularies are identical.
void require_same_vocabulary(const Vocabulary& expected, const Vocabulary& actual);

}  // namespace lvae
