// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "foley/nn.hpp"

namespace foley {

inline constexpr const char* kCheckpointSchema = "foley.ckpt.v1";

/// Checkpoint sidecar data. `extra` carries module-specific scalars and
/// strings (latent_std, mel stats, label list, ...) as stringified values.
struct CheckpointMeta {
  std::string module;
  std::string schema = kCheckpointSchema;
  std::string config_hash;
  std::map<std::string, std::string> upstream;  // stage name -> checkpoint hash
  std::map<std::string, std::string> extra;
};

/// Writes meta.json plus one raw little-endian float32 file per parameter,
/// with a manifest of name -> shape inside meta.json.
void save_checkpoint(const std::string& dir, const ParamStore& store,
                     const CheckpointMeta& meta);

/// Fills an already-constructed store (shapes must match the manifest) and
/// returns the meta. Throws on schema mismatch, missing or truncated
/// parameter files, or shape disagreements; messages name the parameter.
CheckpointMeta load_checkpoint(const std::string& dir, ParamStore& store);

/// Reads only meta.json.
CheckpointMeta read_checkpoint_meta(const std::string& dir);

/// FNV-1a over the manifest order and raw parameter bytes; stable identity
/// for provenance checks.
std::string checkpoint_hash(const std::string& dir);

bool checkpoint_exists(const std::string& dir);

}  // namespace foley
