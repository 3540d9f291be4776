#pragma once

// Checkpoint layout (little-endian):
//   "FVCK"  u32 version  u32 backbone kind  u64 seed  u32 entry count
//   per entry: u32 name length, name bytes, u32 rank, rank x u64 dims,
//              product(dims) x f64 values
//   u64 FNV-1a of every preceding byte
// Entries cover every parameter and batch-norm buffer of the model, named as
// ModelState::parameters() reports them.

#include <filesystem>
#include <optional>

#include "fairvoice/nets/model.hpp"

namespace fairvoice::nets {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelState& model, const std::filesystem::path& path);

// Throws CheckpointError on a bad magic, version, checksum or layout, and when
// `expected` is given and the stored kind differs.
ModelState load_checkpoint(const std::filesystem::path& path, std::optional<BackboneKind> expected = std::nullopt);

// Copies every backbone.* entry of a checkpoint into `model`. Head entries in
// the file are ignored. Throws CheckpointError on missing or misshapen entries.
void load_backbone_weights(ModelState& model, const std::filesystem::path& path);

}  // namespace fairvoice::nets
